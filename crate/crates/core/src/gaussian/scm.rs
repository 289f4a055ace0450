//! Structural-equation view: ancestral sampling, abduction of exogenous
//! noise, and counterfactual replay. Works for both mechanisms except the
//! Gaussian noise posterior, which needs linearity.

use super::{require_linear, structural_matrix, Intervention};
use crate::cbn::{CausalGraph, Mechanism};
use crate::error::{Error, Result};
use crate::rng::{normal, Rng};
use nalgebra::{DMatrix, DVector};

/// Per-node exogenous noise. The clamped node of an intervention has no noise
/// term; its entry is 0 and its index is recorded.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseVector {
    pub eps: Vec<f64>,
    pub clamped: Option<usize>,
}

impl NoiseVector {
    pub fn zeros(n: usize) -> Self {
        NoiseVector { eps: vec![0.0; n], clamped: None }
    }
}

/// Mechanism mean of node `i` given the values of its parents in `g`.
pub fn node_mean(g: &CausalGraph, i: usize, values: &[f64]) -> f64 {
    match g.mechanism() {
        Mechanism::Linear => g.parents(i).map(|(j, w)| f64::from(w) * values[j]).sum(),
        Mechanism::Quadratic => {
            let mut count = 0usize;
            let mut total = 0.0;
            for (j, w) in g.parents(i) {
                let x = values[j];
                total += f64::from(w) * (x + x * x);
                count += 1;
            }
            if count == 0 {
                0.0
            } else {
                total / count as f64
            }
        }
    }
}

fn forward(g: &CausalGraph, eps: &[f64], iv: Option<Intervention>) -> Vec<f64> {
    let n = g.n_nodes();
    let mut x = vec![0.0; n];
    for i in 0..n {
        x[i] = match iv {
            Some(c) if c.node == i => c.value,
            _ => node_mean(g, i, &x) + eps[i],
        };
    }
    x
}

fn surgered(g: &CausalGraph, iv: Option<Intervention>) -> CausalGraph {
    match iv {
        Some(c) => g.without_incoming(c.node),
        None => g.clone(),
    }
}

fn check_iv(g: &CausalGraph, iv: Option<Intervention>) -> Result<()> {
    match iv {
        Some(c) if c.node >= g.n_nodes() => Err(Error::invalid(format!("intervention node {} out of range", c.node))),
        _ => Ok(()),
    }
}

/// Ancestral sample in index order.
///
/// Fresh noise always consumes exactly `N` normal draws (the clamped node's
/// draw is discarded) so that streams stay aligned across interventions.
/// With `eps` supplied the pass is deterministic and equals
/// [`counterfactual_values`].
pub fn sample(
    g: &CausalGraph,
    rng: &mut Rng,
    iv: Option<Intervention>,
    eps: Option<&NoiseVector>,
) -> Result<(Vec<f64>, NoiseVector)> {
    check_iv(g, iv)?;
    let n = g.n_nodes();
    let mut noise = match eps {
        Some(e) if e.eps.len() != n => {
            return Err(Error::invalid(format!("noise vector has length {}, expected {n}", e.eps.len())))
        }
        Some(e) => e.eps.clone(),
        None => (0..n).map(|_| normal(rng, g.sigma())).collect(),
    };
    let clamped = iv.map(|c| c.node);
    if let Some(k) = clamped {
        noise[k] = 0.0;
    }
    let values = forward(&surgered(g, iv), &noise, iv);
    Ok((values, NoiseVector { eps: noise, clamped }))
}

/// Recovers the exogenous noise that produced `full_values` under `iv`.
pub fn abduct(g: &CausalGraph, full_values: &[f64], iv: Option<Intervention>) -> Result<NoiseVector> {
    let n = g.n_nodes();
    if full_values.len() != n {
        return Err(Error::invalid(format!("expected {n} values, got {}", full_values.len())));
    }
    check_iv(g, iv)?;
    let h = surgered(g, iv);
    let clamped = iv.map(|c| c.node);
    let eps =
        (0..n).map(|i| if Some(i) == clamped { 0.0 } else { full_values[i] - node_mean(&h, i, full_values) }).collect();
    Ok(NoiseVector { eps, clamped })
}

/// Forward pass of the graph surgered by `iv_new`, reusing `eps`.
pub fn counterfactual_values(g: &CausalGraph, eps: &NoiseVector, iv_new: Option<Intervention>) -> Result<Vec<f64>> {
    check_iv(g, iv_new)?;
    if eps.eps.len() != g.n_nodes() {
        return Err(Error::invalid(format!("noise vector has length {}, expected {}", eps.eps.len(), g.n_nodes())));
    }
    Ok(forward(&surgered(g, iv_new), &eps.eps, iv_new))
}

/// Gaussian posterior over the full noise vector.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePosterior {
    pub mean: NoiseVector,
    pub cov: DMatrix<f64>,
}

/// Exact posterior over all `N` noise terms given the observable values of one
/// sample drawn under `iv`.
///
/// `observed` holds the values of nodes `1..N` in order; the entry of a
/// clamped observable is ignored. Noise of the clamped node keeps its prior.
pub fn posterior_noise(g: &CausalGraph, observed: &[f64], iv: Option<Intervention>) -> Result<NoisePosterior> {
    require_linear(g, "posterior_noise")?;
    check_iv(g, iv)?;
    let n = g.n_nodes();
    if observed.len() != n - 1 {
        return Err(Error::invalid(format!("expected {} observed values, got {}", n - 1, observed.len())));
    }
    let clamped = iv.map(|c| c.node);
    let l = structural_matrix(g, clamped);
    // x = A (P eps + c) with A = (I - W'^T)^{-1}, P masking the clamped noise.
    let mut mask = DMatrix::identity(n, n);
    let mut exo = DMatrix::zeros(n, 1);
    if let Some(c) = iv {
        mask[(c.node, c.node)] = 0.0;
        exo[(c.node, 0)] = c.value;
    }
    let a_mask = l.solve_lower_triangular(&mask).expect("unit lower triangular");
    let offset = l.solve_lower_triangular(&exo).expect("unit lower triangular");
    let rows: Vec<usize> = (1..n).filter(|&i| Some(i) != clamped).collect();
    let var = g.sigma() * g.sigma();
    if rows.is_empty() {
        return Ok(NoisePosterior {
            mean: NoiseVector { eps: vec![0.0; n], clamped },
            cov: DMatrix::identity(n, n) * var,
        });
    }
    let m = DMatrix::from_fn(rows.len(), n, |r, c| a_mask[(rows[r], c)]);
    let resid = DVector::from_iterator(rows.len(), rows.iter().map(|&i| observed[i - 1] - offset[(i, 0)]));
    let s = &m * m.transpose() * var;
    let chol = s.cholesky().ok_or(Error::DegenerateConditioning { node: rows[0], variance: 0.0 })?;
    // gain = var * M^T S^{-1}
    let gain = chol.solve(&m).transpose() * var;
    let mean = &gain * resid;
    let cov = DMatrix::identity(n, n) * var - &gain * &m * var;
    let mut eps: Vec<f64> = mean.iter().copied().collect();
    if let Some(k) = clamped {
        eps[k] = 0.0;
    }
    Ok(NoisePosterior { mean: NoiseVector { eps, clamped }, cov })
}
