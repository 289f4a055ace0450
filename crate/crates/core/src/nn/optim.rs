use super::Real;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// RMSProp with momentum:
/// `ms = decay*ms + (1-decay)*g^2`, `mom = momentum*mom + lr*g/sqrt(ms+eps)`,
/// `theta -= mom`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RmsProp<F: Real> {
    pub eps: f64,
    pub momentum: f64,
    pub decay: f64,
    pub ms: Vec<F>,
    pub mom: Vec<F>,
}

impl<F: Real> RmsProp<F> {
    pub fn new(n: usize) -> Self {
        Self::with_hyper(n, 1e-5, 0.9, 0.95)
    }

    pub fn with_hyper(n: usize, eps: f64, momentum: f64, decay: f64) -> Self {
        RmsProp { eps, momentum, decay, ms: vec![F::zero(); n], mom: vec![F::zero(); n] }
    }

    pub fn update(&mut self, params: &mut [F], grads: &[F], lr: f64) -> Result<()> {
        if params.len() != self.ms.len() || grads.len() != self.ms.len() {
            return Err(Error::invalid(format!(
                "optimizer holds {} slots, got {} params and {} grads",
                self.ms.len(),
                params.len(),
                grads.len()
            )));
        }
        let (decay, momentum) = (F::of(self.decay), F::of(self.momentum));
        let (eps, lr) = (F::of(self.eps), F::of(lr));
        let keep = F::one() - decay;
        for k in 0..params.len() {
            let g = grads[k];
            self.ms[k] = decay * self.ms[k] + keep * g * g;
            self.mom[k] = momentum * self.mom[k] + lr * g / (self.ms[k] + eps).sqrt();
            params[k] = params[k] - self.mom[k];
        }
        Ok(())
    }
}

pub fn global_norm<F: Real>(grads: &[F]) -> f64 {
    grads.iter().map(|g| g.f64() * g.f64()).sum::<f64>().sqrt()
}

/// Rescales `grads` to norm `max_norm` if larger; returns the norm before.
pub fn clip_global_norm<F: Real>(grads: &mut [F], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = F::of(max_norm / norm);
        for g in grads.iter_mut() {
            *g = *g * s;
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params() {
        let mut opt = RmsProp::<f64>::new(3);
        let mut p = vec![1.0, -2.0, 3.0];
        opt.update(&mut p, &[0.0; 3], 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_closed_form() {
        let mut opt = RmsProp::<f64>::new(1);
        let mut p = vec![0.0];
        opt.update(&mut p, &[1.0], 1.0).unwrap();
        assert!((p[0] + 1.0 / (0.05f64 + 1e-5).sqrt()).abs() < 1e-12);
        assert!(opt.ms[0] >= 0.0);
    }

    #[test]
    fn elementwise_independent() {
        let mut a = RmsProp::<f64>::new(2);
        let mut b = RmsProp::<f64>::new(1);
        let mut pa = vec![0.5, 0.5];
        let mut pb = vec![0.5];
        for g in [0.3, -1.2, 2.0] {
            a.update(&mut pa, &[g, 7.0 * g], 0.01).unwrap();
            b.update(&mut pb, &[g], 0.01).unwrap();
        }
        assert_eq!(pa[0], pb[0]);
    }

    #[test]
    fn clipping() {
        let mut g = vec![30.0f32, 40.0];
        assert_eq!(clip_global_norm(&mut g, 50.0), 50.0);
        assert_eq!(g, vec![30.0, 40.0]);
        let mut g = vec![300.0f64, 400.0];
        clip_global_norm(&mut g, 50.0);
        assert!((global_norm(&g) - 50.0).abs() < 1e-12);
    }
}
