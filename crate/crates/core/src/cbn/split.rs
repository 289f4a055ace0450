//! Held-out test splits closed under graph equivalence.

use super::{canonical_key, enumerate_graphs, orbit, sample_graph, CausalGraph, Mechanism, PermutationGroup};
use crate::error::{Error, Result};
use crate::rng::Rng;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};

/// Largest graph size for which the training split is listed explicitly.
const MAX_LISTED_NODES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphSet {
    pub split: Split,
    pub seed: u64,
    pub n_nodes: usize,
    pub graphs: Vec<CausalGraph>,
    /// When set, the set is "every graph on `n_nodes` nodes not in the paired
    /// test set" and `graphs` is empty. Used where listing is impractical.
    pub complement: bool,
}

impl GraphSet {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn codes(&self) -> HashSet<u64> {
        self.graphs.iter().map(CausalGraph::code).collect()
    }
}

/// Samples `n_seed_graphs` graphs from distinct equivalence classes, puts the
/// union of their classes in the test set and everything else in the training
/// set.
///
/// For `n_nodes` above 5 the training set is returned as a complement marker
/// rather than a list.
pub fn build_test_split(
    rng: &mut Rng,
    seed: u64,
    n_nodes: usize,
    n_seed_graphs: usize,
    group: PermutationGroup,
) -> Result<(GraphSet, GraphSet)> {
    if n_seed_graphs == 0 {
        return Err(Error::invalid("need at least one seed graph"));
    }
    let mut keys = HashSet::new();
    let mut test: BTreeMap<u64, CausalGraph> = BTreeMap::new();
    let max_attempts = 10_000 * n_seed_graphs;
    let mut attempts = 0;
    while keys.len() < n_seed_graphs {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::invalid(format!(
                "could not find {n_seed_graphs} distinct equivalence classes on {n_nodes} nodes"
            )));
        }
        let g = sample_graph(rng, n_nodes, Mechanism::Linear)?;
        if keys.insert(canonical_key(&g, group)) {
            test.extend(orbit(&g, group).into_iter().map(|h| (h.code(), h)));
        }
    }
    let test_codes: HashSet<u64> = test.keys().copied().collect();
    let (train_graphs, complement) = if n_nodes <= MAX_LISTED_NODES {
        let graphs = enumerate_graphs(n_nodes)?.filter(|g| !test_codes.contains(&g.code())).collect();
        (graphs, false)
    } else {
        (Vec::new(), true)
    };
    let train = GraphSet { split: Split::Train, seed, n_nodes, graphs: train_graphs, complement };
    let test = GraphSet { split: Split::Test, seed, n_nodes, graphs: test.into_values().collect(), complement: false };
    Ok((train, test))
}

/// Source of training graphs for episodes.
#[derive(Clone, Debug)]
pub enum GraphPool {
    /// Uniform over an explicit list.
    Listed(Vec<CausalGraph>),
    /// Uniform over all graphs on `n_nodes` nodes except `excluded` codes.
    Complement { n_nodes: usize, excluded: HashSet<u64>, mechanism: Mechanism },
    /// Uniform over all graphs.
    All { n_nodes: usize, mechanism: Mechanism },
}

impl GraphPool {
    /// Training pool for a train/test pair.
    pub fn training(train: &GraphSet, test: &GraphSet, mechanism: Mechanism) -> Result<Self> {
        if train.complement {
            Ok(GraphPool::Complement { n_nodes: train.n_nodes, excluded: test.codes(), mechanism })
        } else if train.graphs.is_empty() {
            Err(Error::invalid("training set is empty"))
        } else {
            Ok(GraphPool::Listed(train.graphs.iter().map(|g| g.clone().with_mechanism(mechanism)).collect()))
        }
    }

    pub fn n_nodes(&self) -> usize {
        match self {
            GraphPool::Listed(gs) => gs[0].n_nodes(),
            GraphPool::Complement { n_nodes, .. } | GraphPool::All { n_nodes, .. } => *n_nodes,
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> CausalGraph {
        match self {
            GraphPool::Listed(gs) => gs[rng.random_range(0..gs.len())].clone(),
            GraphPool::Complement { n_nodes, excluded, mechanism } => loop {
                let g = sample_graph(rng, *n_nodes, *mechanism).expect("n_nodes validated");
                if !excluded.contains(&g.code()) {
                    break g;
                }
            },
            GraphPool::All { n_nodes, mechanism } => {
                sample_graph(rng, *n_nodes, *mechanism).expect("n_nodes validated")
            }
        }
    }
}
