use super::{dot, Params, Real};
use crate::error::{Error, Result};

/// Activations of one LSTM step, kept for the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCache<F: Real> {
    pub x: Vec<F>,
    pub h_prev: Vec<F>,
    pub c_prev: Vec<F>,
    /// Post-activation gates `[i, f, g, o]`, each of length `H`.
    pub gates: Vec<F>,
    pub c: Vec<F>,
    pub tanh_c: Vec<F>,
    pub h: Vec<F>,
}

fn sigmoid<F: Real>(z: F) -> F {
    F::one() / (F::one() + (-z).exp())
}

/// `c = f*c_prev + i*g`, `h = o*tanh(c)`.
pub fn lstm_step<F: Real>(p: &Params<F>, x: &[F], h_prev: &[F], c_prev: &[F]) -> Result<LstmCache<F>> {
    let l = p.layout;
    let (n_in, h) = (l.input_dim, l.hidden_dim);
    if x.len() != n_in || h_prev.len() != h || c_prev.len() != h {
        return Err(Error::invalid(format!(
            "lstm step got input {}, state {}/{}; expected {n_in}, {h}",
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lstm input".into()));
    }
    let wx = p.slice(l.wx());
    let wh = p.slice(l.wh());
    let b = p.slice(l.b());
    let mut gates: Vec<F> = (0..4 * h)
        .map(|r| b[r] + dot(&wx[r * n_in..(r + 1) * n_in], x) + dot(&wh[r * h..(r + 1) * h], h_prev))
        .collect();
    for (r, z) in gates.iter_mut().enumerate() {
        *z = if (2 * h..3 * h).contains(&r) { z.tanh() } else { sigmoid(*z) };
    }
    let c: Vec<F> = (0..h).map(|k| gates[h + k] * c_prev[k] + gates[k] * gates[2 * h + k]).collect();
    let tanh_c: Vec<F> = c.iter().map(|v| v.tanh()).collect();
    let hh = (0..h).map(|k| gates[3 * h + k] * tanh_c[k]).collect();
    Ok(LstmCache { x: x.to_vec(), h_prev: h_prev.to_vec(), c_prev: c_prev.to_vec(), gates, c, tanh_c, h: hh })
}

/// Accumulates parameter gradients of one step into `grads` and returns
/// `(dh_prev, dc_prev)`.
pub fn lstm_backward<F: Real>(
    p: &Params<F>,
    cache: &LstmCache<F>,
    dh: &[F],
    dc_next: &[F],
    grads: &mut [F],
) -> (Vec<F>, Vec<F>) {
    let l = p.layout;
    let (n_in, h) = (l.input_dim, l.hidden_dim);
    let g = &cache.gates;
    let one = F::one();
    let mut da = vec![F::zero(); 4 * h];
    let mut dc_prev = vec![F::zero(); h];
    for k in 0..h {
        let (i, f, gg, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
        let t = cache.tanh_c[k];
        let dc = dh[k] * o * (one - t * t) + dc_next[k];
        da[k] = dc * gg * i * (one - i);
        da[h + k] = dc * cache.c_prev[k] * f * (one - f);
        da[2 * h + k] = dc * i * (one - gg * gg);
        da[3 * h + k] = dh[k] * t * o * (one - o);
        dc_prev[k] = dc * f;
    }
    let (wx, wh, b) = (l.wx(), l.wh(), l.b());
    let wh_vals = p.slice(wh.clone());
    let mut dh_prev = vec![F::zero(); h];
    for r in 0..4 * h {
        let d = da[r];
        if d == F::zero() {
            continue;
        }
        grads[b.start + r] += d;
        let gx = &mut grads[wx.start + r * n_in..wx.start + (r + 1) * n_in];
        for (gv, &xv) in gx.iter_mut().zip(&cache.x) {
            *gv += d * xv;
        }
        let gh = &mut grads[wh.start + r * h..wh.start + (r + 1) * h];
        for (gv, &hv) in gh.iter_mut().zip(&cache.h_prev) {
            *gv += d * hv;
        }
        for (acc, &w) in dh_prev.iter_mut().zip(&wh_vals[r * h..(r + 1) * h]) {
            *acc += d * w;
        }
    }
    (dh_prev, dc_prev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layout;

    #[test]
    fn zero_weights_give_zero_hidden() {
        let mut p: Params<f64> = Params::zeros(Layout::new(3, 4, 2).unwrap());
        p.set_forget_bias(1.0);
        let c = lstm_step(&p, &[1.0, -2.0, 7.0], &[0.0; 4], &[0.0; 4]).unwrap();
        assert!(c.h.iter().all(|&v| v == 0.0));
        assert!(c.gates[12..].iter().all(|&o| o == 0.5));
    }

    #[test]
    fn cell_decays_through_forget_gate() {
        let mut p: Params<f64> = Params::zeros(Layout::new(2, 3, 2).unwrap());
        p.set_forget_bias(1.0);
        let f = 1.0 / (1.0 + (-1.0f64).exp());
        let mut h = vec![0.0; 3];
        let mut c = vec![1.0; 3];
        for t in 1..=5 {
            let cache = lstm_step(&p, &[0.0, 0.0], &h, &c).unwrap();
            h = cache.h;
            c = cache.c;
            assert!((c[0] - f.powi(t)).abs() < 1e-15);
        }
        assert!((f - 0.731).abs() < 1e-3);
    }

    #[test]
    fn nan_input_is_rejected() {
        let p: Params<f64> = Params::zeros(Layout::new(2, 3, 2).unwrap());
        assert!(lstm_step(&p, &[f64::NAN, 0.0], &[0.0; 3], &[0.0; 3]).is_err());
        assert!(lstm_step(&p, &[0.0], &[0.0; 3], &[0.0; 3]).is_err());
    }
}
