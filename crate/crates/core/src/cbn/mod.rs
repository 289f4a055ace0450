//! Causal graphs over `N` nodes with edge weights in {-1, 0, +1}.
//!
//! Edges only run from lower to higher index (`w[j][i]` is the weight of
//! `X_j -> X_i`, nonzero only for `j < i`), so every graph is acyclic and node
//! 0 is always a root. Node 0 is the hidden confounder in every task.

mod equivalence;
mod io;
mod split;

pub use equivalence::{canonical_key, orbit, PermutationGroup};
pub use io::{parse_graph, read_graph_set, serialize_graph, write_graph_set, GraphSetHeader};
pub use split::{build_test_split, GraphPool, GraphSet, Split};

use crate::error::{Error, Result};
use crate::rng::Rng;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::hash::{Hash, Hasher};

/// Largest graph size [`enumerate_graphs`] will walk.
pub const MAX_ENUMERABLE_NODES: usize = 6;

/// Default per-node noise standard deviation.
pub const DEFAULT_SIGMA: f64 = 0.1;

/// Index of the always-hidden root.
pub const HIDDEN_NODE: usize = 0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    /// `X_i ~ N(sum_j w_ji X_j, sigma)`.
    #[default]
    Linear,
    /// `X_i ~ N((1/N_i) sum_j w_ji (X_j + X_j^2), sigma)` with `N_i` parents;
    /// parentless nodes behave like linear roots.
    Quadratic,
}

#[derive(Clone, Debug)]
pub struct CausalGraph {
    n: usize,
    /// Row-major `n x n`; entry `j * n + i` is the weight on `X_j -> X_i`.
    weights: Vec<i8>,
    sigma: f64,
    mechanism: Mechanism,
}

impl PartialEq for CausalGraph {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.weights == other.weights
            && self.sigma.to_bits() == other.sigma.to_bits()
            && self.mechanism == other.mechanism
    }
}

impl Eq for CausalGraph {}

impl Hash for CausalGraph {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.n.hash(state);
        self.weights.hash(state);
        self.sigma.to_bits().hash(state);
        self.mechanism.hash(state);
    }
}

/// Number of free weight slots (the strict upper triangle).
pub fn slot_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Number of distinct graphs on `n` nodes, `3^(n(n-1)/2)`.
pub fn graph_count(n: usize) -> u64 {
    3u64.pow(slot_count(n) as u32)
}

impl CausalGraph {
    /// Builds a graph from a full row-major `n x n` weight matrix.
    pub fn new(n: usize, weights: Vec<i8>, sigma: f64, mechanism: Mechanism) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("graph needs at least 2 nodes, got {n}")));
        }
        if weights.len() != n * n {
            return Err(Error::invalid(format!("weight matrix has {} entries, expected {}", weights.len(), n * n)));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        for j in 0..n {
            for i in 0..n {
                let w = weights[j * n + i];
                if !(-1..=1).contains(&w) {
                    return Err(Error::invalid(format!("weight w[{j}][{i}] = {w} outside {{-1,0,1}}")));
                }
                if w != 0 && j >= i {
                    return Err(Error::invalid(format!("edge {j} -> {i} is not strictly upper triangular")));
                }
            }
        }
        Ok(CausalGraph { n, weights, sigma, mechanism })
    }

    /// Builds a graph from its flattened strict upper triangle, row by row:
    /// `(0,1), (0,2), ..., (0,n-1), (1,2), ...`.
    pub fn from_slots(n: usize, slots: &[i8], mechanism: Mechanism) -> Result<Self> {
        if slots.len() != slot_count(n) {
            return Err(Error::invalid(format!(
                "{} weight slots given, {} expected for n = {n}",
                slots.len(),
                slot_count(n)
            )));
        }
        let mut weights = vec![0i8; n * n];
        let mut k = 0;
        for j in 0..n {
            for i in j + 1..n {
                weights[j * n + i] = slots[k];
                k += 1;
            }
        }
        Self::new(n, weights, DEFAULT_SIGMA, mechanism)
    }

    /// Builds a graph from `(parent, child, weight)` triples.
    pub fn from_edges(n: usize, edges: &[(usize, usize, i8)], mechanism: Mechanism) -> Result<Self> {
        let mut weights = vec![0i8; n * n];
        for &(j, i, w) in edges {
            if j >= n || i >= n {
                return Err(Error::invalid(format!("edge {j} -> {i} out of range for n = {n}")));
            }
            weights[j * n + i] = w;
        }
        Self::new(n, weights, DEFAULT_SIGMA, mechanism)
    }

    pub fn empty(n: usize) -> Result<Self> {
        Self::new(n, vec![0; n * n], DEFAULT_SIGMA, Mechanism::Linear)
    }

    /// The graph with enumeration index `code` (see [`enumerate_graphs`]).
    pub fn from_code(n: usize, code: u64, mechanism: Mechanism) -> Result<Self> {
        if code >= graph_count(n) {
            return Err(Error::invalid(format!("graph code {code} out of range for n = {n}")));
        }
        let m = slot_count(n);
        let mut slots = vec![0i8; m];
        let mut rest = code;
        for slot in slots.iter_mut().rev() {
            *slot = (rest % 3) as i8 - 1;
            rest /= 3;
        }
        Self::from_slots(n, &slots, mechanism)
    }

    /// Enumeration index: base-3 digits of the slots with `-1, 0, +1 -> 0, 1, 2`,
    /// first slot most significant.
    pub fn code(&self) -> u64 {
        self.slots().iter().fold(0u64, |acc, &w| acc * 3 + (w + 1) as u64)
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        self.sigma = sigma;
        Ok(self)
    }

    pub fn with_mechanism(mut self, mechanism: Mechanism) -> Self {
        self.mechanism = mechanism;
        self
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn mechanism(&self) -> Mechanism {
        self.mechanism
    }

    pub fn hidden(&self) -> usize {
        HIDDEN_NODE
    }

    /// Observable node indices `1..n`.
    pub fn observables(&self) -> std::ops::Range<usize> {
        1..self.n
    }

    /// Weight on `X_j -> X_i`.
    pub fn weight(&self, j: usize, i: usize) -> i8 {
        self.weights[j * self.n + i]
    }

    pub fn weights(&self) -> &[i8] {
        &self.weights
    }

    pub fn slots(&self) -> Vec<i8> {
        let n = self.n;
        (0..n).flat_map(|j| (j + 1..n).map(move |i| (j, i))).map(|(j, i)| self.weights[j * n + i]).collect()
    }

    /// `(parent, weight)` pairs of node `i`, in index order.
    pub fn parents(&self, i: usize) -> impl Iterator<Item = (usize, i8)> + '_ {
        (0..i).filter_map(move |j| {
            let w = self.weight(j, i);
            (w != 0).then_some((j, w))
        })
    }

    pub fn children(&self, j: usize) -> impl Iterator<Item = (usize, i8)> + '_ {
        (j + 1..self.n).filter_map(move |i| {
            let w = self.weight(j, i);
            (w != 0).then_some((i, w))
        })
    }

    pub fn parent_count(&self, i: usize) -> usize {
        self.parents(i).count()
    }

    pub fn edges(&self) -> Vec<(usize, usize, i8)> {
        let n = self.n;
        (0..n)
            .flat_map(|j| (j + 1..n).map(move |i| (j, i)))
            .filter_map(|(j, i)| {
                let w = self.weight(j, i);
                (w != 0).then_some((j, i, w))
            })
            .collect()
    }

    /// Mask of strict descendants of `node`.
    pub fn descendants(&self, node: usize) -> Vec<bool> {
        let mut mask = vec![false; self.n];
        // Index order is a topological order.
        for i in node + 1..self.n {
            mask[i] = self.parents(i).any(|(j, _)| j == node || mask[j]);
        }
        mask
    }

    /// Copy with every incoming edge of `node` removed.
    pub fn without_incoming(&self, node: usize) -> CausalGraph {
        let mut g = self.clone();
        for j in 0..self.n {
            g.weights[j * self.n + node] = 0;
        }
        g
    }
}

/// Draws every upper-triangle slot independently and uniformly from {-1, 0, +1}.
pub fn sample_graph(rng: &mut Rng, n_nodes: usize, mechanism: Mechanism) -> Result<CausalGraph> {
    if n_nodes < 2 {
        return Err(Error::invalid(format!("graph needs at least 2 nodes, got {n_nodes}")));
    }
    let slots: Vec<i8> = (0..slot_count(n_nodes)).map(|_| rng.random_range(0..3i8) - 1).collect();
    CausalGraph::from_slots(n_nodes, &slots, mechanism)
}

/// Every graph on `n_nodes` nodes exactly once, in lexicographic order of the
/// flattened upper triangle with weights ordered `-1 < 0 < +1`.
pub fn enumerate_graphs(n_nodes: usize) -> Result<GraphIter> {
    if n_nodes > MAX_ENUMERABLE_NODES {
        return Err(Error::invalid(format!(
            "refusing to enumerate graphs on {n_nodes} nodes (limit {MAX_ENUMERABLE_NODES})"
        )));
    }
    if n_nodes < 2 {
        return Err(Error::invalid(format!("graph needs at least 2 nodes, got {n_nodes}")));
    }
    Ok(GraphIter { n: n_nodes, next: 0, end: graph_count(n_nodes) })
}

#[derive(Debug)]
pub struct GraphIter {
    n: usize,
    next: u64,
    end: u64,
}

impl Iterator for GraphIter {
    type Item = CausalGraph;

    fn next(&mut self) -> Option<CausalGraph> {
        if self.next >= self.end {
            return None;
        }
        let g = CausalGraph::from_code(self.n, self.next, Mechanism::Linear).ok();
        self.next += 1;
        g
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.end - self.next) as usize;
        (left, Some(left))
    }
}

impl ExactSizeIterator for GraphIter {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use std::collections::HashSet;

    #[test]
    fn rejects_lower_triangular_and_out_of_range_weights() {
        let mut w = vec![0i8; 9];
        w[3] = 1; // 1 -> 0
        assert!(CausalGraph::new(3, w, 0.1, Mechanism::Linear).is_err());
        let mut w = vec![0i8; 9];
        w[1] = 2;
        assert!(CausalGraph::new(3, w, 0.1, Mechanism::Linear).is_err());
        assert!(CausalGraph::empty(1).is_err());
    }

    #[test]
    fn sample_graph_rejects_tiny_graphs() {
        let mut rng = stream(0, "t", 0);
        assert!(sample_graph(&mut rng, 1, Mechanism::Linear).is_err());
        let g = sample_graph(&mut rng, 5, Mechanism::Linear).unwrap();
        assert_eq!(g.slots().len(), 10);
        assert_eq!(g.sigma(), 0.1);
        assert_eq!(g.hidden(), 0);
        assert_eq!(g.parent_count(0), 0);
    }

    #[test]
    fn slot_distribution_is_uniform() {
        let mut rng = stream(11, "t", 0);
        let draws = 1_000_000;
        let mut counts = [[0usize; 3]; 10];
        for _ in 0..draws {
            let g = sample_graph(&mut rng, 5, Mechanism::Linear).unwrap();
            for (k, w) in g.slots().into_iter().enumerate() {
                counts[k][(w + 1) as usize] += 1;
            }
        }
        for slot in counts {
            for c in slot {
                let p = c as f64 / draws as f64;
                assert!((p - 1.0 / 3.0).abs() < 0.01, "slot frequency {p}");
            }
        }
    }

    #[test]
    fn enumeration_counts_and_order() {
        assert_eq!(enumerate_graphs(3).unwrap().count(), 27);
        assert_eq!(graph_count(5), 59049);
        assert_eq!(graph_count(6), 14_348_907);
        assert!(enumerate_graphs(7).is_err());

        let first = enumerate_graphs(3).unwrap().next().unwrap();
        assert_eq!(first.slots(), vec![-1, -1, -1]);
        // All-zero sits in the middle of the (-1, 0, +1) ordering.
        let zero = enumerate_graphs(3).unwrap().nth(13).unwrap();
        assert_eq!(zero.slots(), vec![0, 0, 0]);

        let codes: Vec<u64> = enumerate_graphs(4).unwrap().map(|g| g.code()).collect();
        assert!(codes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn enumeration_has_no_duplicates() {
        for n in 2..=4 {
            let set: HashSet<CausalGraph> = enumerate_graphs(n).unwrap().collect();
            assert_eq!(set.len() as u64, graph_count(n));
        }
    }

    #[test]
    fn code_round_trip() {
        for g in enumerate_graphs(4).unwrap() {
            assert_eq!(CausalGraph::from_code(4, g.code(), Mechanism::Linear).unwrap(), g);
        }
    }

    #[test]
    fn descendants_follow_paths() {
        let g = CausalGraph::from_edges(4, &[(0, 1, 1), (1, 3, -1)], Mechanism::Linear).unwrap();
        assert_eq!(g.descendants(0), vec![false, true, false, true]);
        assert_eq!(g.descendants(2), vec![false; 4]);
        assert_eq!(g.without_incoming(3).parent_count(3), 0);
    }
}
