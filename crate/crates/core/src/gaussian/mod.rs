//! Exact inference on linear-Gaussian causal graphs.
//!
//! A linear graph is the structural model `x = W^T x + e` with
//! `e ~ N(0, sigma^2 I)`. Because `W` is strictly upper triangular,
//! `I - W^T` is unit lower triangular and every distribution here comes from
//! triangular solves against it: `x = (I - W^T)^{-1} e`.
//!
//! Interventions replace a node's equation by a constant (graph surgery); the
//! clamped value then enters the same solve as a deterministic exogenous input.

mod dsep;
mod scm;

pub use dsep::d_separated;
pub use scm::{abduct, counterfactual_values, node_mean, posterior_noise, sample, NoisePosterior, NoiseVector};

use crate::cbn::{CausalGraph, Mechanism};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Variances at or below this are treated as deterministic.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;
/// Conditioning a deterministic node must match its mean within this.
pub const DEGENERATE_MATCH: f64 = 1e-9;

/// `do(X_node = value)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intervention {
    pub node: usize,
    pub value: f64,
}

impl Intervention {
    pub fn new(node: usize, value: f64) -> Self {
        Intervention { node, value }
    }
}

/// Mean and covariance over an ordered list of nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianDist {
    pub node_ids: Vec<usize>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct DistRecord {
    node_ids: Vec<usize>,
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl Serialize for GaussianDist {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DistRecord {
            node_ids: self.node_ids.clone(),
            mean: self.mean.iter().copied().collect(),
            cov: self.cov.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
        .serialize(s)
    }
}

impl GaussianDist {
    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn index_of(&self, node: usize) -> Option<usize> {
        self.node_ids.iter().position(|&n| n == node)
    }

    pub fn mean_of(&self, node: usize) -> Option<f64> {
        self.index_of(node).map(|k| self.mean[k])
    }

    pub fn var_of(&self, node: usize) -> Option<f64> {
        self.index_of(node).map(|k| self.cov[(k, k)])
    }

    pub fn cov_of(&self, a: usize, b: usize) -> Option<f64> {
        Some(self.cov[(self.index_of(a)?, self.index_of(b)?)])
    }

    /// Restriction to `nodes`, in the given order.
    pub fn marginal(&self, nodes: &[usize]) -> Result<GaussianDist> {
        let idx = self.indices(nodes)?;
        Ok(GaussianDist {
            node_ids: nodes.to_vec(),
            mean: DVector::from_iterator(idx.len(), idx.iter().map(|&k| self.mean[k])),
            cov: DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.cov[(idx[r], idx[c])]),
        })
    }

    fn indices(&self, nodes: &[usize]) -> Result<Vec<usize>> {
        nodes
            .iter()
            .map(|&n| self.index_of(n).ok_or_else(|| Error::invalid(format!("node {n} not in distribution"))))
            .collect()
    }

    /// Largest asymmetry and most negative eigenvalue; used by PSD checks.
    pub fn psd_defects(&self) -> (f64, f64) {
        let asym = (&self.cov - self.cov.transpose()).abs().max();
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        let min_eig = if self.is_empty() { 0.0 } else { sym.symmetric_eigen().eigenvalues.min() };
        (asym, min_eig)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("distribution serializes")
    }
}

fn require_linear(g: &CausalGraph, op: &'static str) -> Result<()> {
    match g.mechanism() {
        Mechanism::Linear => Ok(()),
        Mechanism::Quadratic => Err(Error::UnsupportedMechanism(op)),
    }
}

/// `I - W'^T` for the graph with `clamped`'s incoming edges removed.
pub(crate) fn structural_matrix(g: &CausalGraph, clamped: Option<usize>) -> DMatrix<f64> {
    let n = g.n_nodes();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else if Some(i) == clamped {
            0.0
        } else {
            -f64::from(g.weight(j, i))
        }
    })
}

fn lower_solve(l: &DMatrix<f64>, rhs: &DMatrix<f64>) -> DMatrix<f64> {
    l.solve_lower_triangular(rhs).expect("unit lower triangular system is nonsingular")
}

/// Mean and covariance of all `N` nodes, with `clamp` applied if given.
fn all_node_moments(g: &CausalGraph, clamp: Option<Intervention>) -> (DVector<f64>, DMatrix<f64>) {
    let n = g.n_nodes();
    let clamped = clamp.map(|iv| iv.node);
    let l = structural_matrix(g, clamped);
    let mut exo_mean = DMatrix::zeros(n, 1);
    let mut exo_sd = DMatrix::from_diagonal_element(n, n, g.sigma());
    if let Some(iv) = clamp {
        exo_mean[(iv.node, 0)] = iv.value;
        exo_sd[(iv.node, iv.node)] = 0.0;
    }
    let mean = lower_solve(&l, &exo_mean).column(0).into_owned();
    let factor = lower_solve(&l, &exo_sd);
    let cov = &factor * factor.transpose();
    (mean, cov)
}

/// Observational joint over all nodes: mean 0, covariance `sigma^2 A A^T`
/// with `A = (I - W^T)^{-1}`.
pub fn joint(g: &CausalGraph) -> Result<GaussianDist> {
    require_linear(g, "joint")?;
    let (mean, cov) = all_node_moments(g, None);
    Ok(GaussianDist { node_ids: (0..g.n_nodes()).collect(), mean, cov })
}

/// Conditions `d` on `X_node = value`; the result covers the other nodes.
pub fn condition(d: &GaussianDist, node: usize, value: f64) -> Result<GaussianDist> {
    let k = d.index_of(node).ok_or_else(|| Error::invalid(format!("node {node} not in distribution")))?;
    let var = d.cov[(k, k)];
    let rest: Vec<usize> = (0..d.len()).filter(|&r| r != k).collect();
    let node_ids = rest.iter().map(|&r| d.node_ids[r]).collect();
    if var <= DEGENERATE_VARIANCE {
        if (value - d.mean[k]).abs() <= DEGENERATE_MATCH {
            return d.marginal(&rest.iter().map(|&r| d.node_ids[r]).collect::<Vec<_>>());
        }
        return Err(Error::DegenerateConditioning { node, variance: var });
    }
    let shift = value - d.mean[k];
    let mean = DVector::from_iterator(rest.len(), rest.iter().map(|&r| d.mean[r] + d.cov[(r, k)] / var * shift));
    let cov = DMatrix::from_fn(rest.len(), rest.len(), |a, b| {
        let (ra, rb) = (rest[a], rest[b]);
        d.cov[(ra, rb)] - d.cov[(ra, k)] * d.cov[(k, rb)] / var
    });
    Ok(GaussianDist { node_ids, mean, cov })
}

/// Conditions on several nodes at once through a Cholesky solve of their
/// covariance block.
pub fn condition_many(d: &GaussianDist, nodes: &[usize], values: &[f64]) -> Result<GaussianDist> {
    if nodes.len() != values.len() {
        return Err(Error::invalid("nodes and values differ in length"));
    }
    if nodes.is_empty() {
        return Ok(d.clone());
    }
    let given = d.indices(nodes)?;
    let rest: Vec<usize> = (0..d.len()).filter(|r| !given.contains(r)).collect();
    let block =
        |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |a, b| d.cov[(rows[a], cols[b])]);
    let s_gg = block(&given, &given);
    let chol = s_gg
        .cholesky()
        .ok_or(Error::DegenerateConditioning { node: nodes[0], variance: d.cov[(given[0], given[0])] })?;
    let s_rg = block(&rest, &given);
    let shift = DVector::from_iterator(given.len(), given.iter().zip(values).map(|(&g, &v)| v - d.mean[g]));
    let gain = chol.solve(&s_rg.transpose()).transpose();
    let rest_mean = DVector::from_iterator(rest.len(), rest.iter().map(|&r| d.mean[r]));
    let mean = rest_mean + &gain * shift;
    let cov = block(&rest, &rest) - &gain * s_rg.transpose();
    Ok(GaussianDist { node_ids: rest.iter().map(|&r| d.node_ids[r]).collect(), mean, cov })
}

/// `Cov(X_a, X_b | X_z)`.
pub fn partial_covariance(d: &GaussianDist, a: usize, b: usize, z: &[usize]) -> Result<f64> {
    let zeros = vec![0.0; z.len()];
    let c = condition_many(d, z, &zeros)?;
    c.cov_of(a, b).ok_or_else(|| Error::invalid("node missing after conditioning"))
}

/// Partial correlation of `X_a` and `X_b` given `X_z`.
pub fn partial_correlation(d: &GaussianDist, a: usize, b: usize, z: &[usize]) -> Result<f64> {
    let zeros = vec![0.0; z.len()];
    let c = condition_many(d, z, &zeros)?;
    let cab = c.cov_of(a, b).ok_or_else(|| Error::invalid("node missing after conditioning"))?;
    let va = c.var_of(a).unwrap_or(0.0);
    let vb = c.var_of(b).unwrap_or(0.0);
    Ok(cab / (va * vb).sqrt())
}

/// The surgered graph and the clamp it carries.
#[derive(Clone, Debug, PartialEq)]
pub struct Intervened {
    pub graph: CausalGraph,
    pub clamp: Intervention,
}

/// Removes every incoming edge of the intervened node.
pub fn intervene_graph(g: &CausalGraph, iv: Intervention) -> Result<Intervened> {
    if iv.node >= g.n_nodes() {
        return Err(Error::invalid(format!("intervention node {} out of range", iv.node)));
    }
    Ok(Intervened { graph: g.without_incoming(iv.node), clamp: iv })
}

/// Distribution of the non-clamped nodes in the surgered graph.
pub fn interventional(g: &CausalGraph, iv: Intervention) -> Result<GaussianDist> {
    require_linear(g, "interventional")?;
    if iv.node >= g.n_nodes() {
        return Err(Error::invalid(format!("intervention node {} out of range", iv.node)));
    }
    let (mean, cov) = all_node_moments(g, Some(iv));
    let full = GaussianDist { node_ids: (0..g.n_nodes()).collect(), mean, cov };
    let rest: Vec<usize> = (0..g.n_nodes()).filter(|&i| i != iv.node).collect();
    full.marginal(&rest)
}

/// Means of all `N` nodes under `iv` (the clamped node reports its value).
pub fn interventional_means(g: &CausalGraph, iv: Intervention) -> Result<Vec<f64>> {
    require_linear(g, "interventional")?;
    let (mean, _) = all_node_moments(g, Some(iv));
    Ok(mean.iter().copied().collect())
}
