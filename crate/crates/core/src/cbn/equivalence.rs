//! Graph equivalence under node relabeling.
//!
//! Two graphs are equivalent when some permutation of node labels maps one
//! weighted adjacency onto the other while keeping every edge pointing from a
//! lower to a higher index. A relabeled root stays a root, so the hidden node
//! always lands on a root position. The canonical key of a graph is the
//! smallest slot serialization over all admissible relabelings.

use super::{slot_count, CausalGraph};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Which relabelings count as "the same structure".
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PermutationGroup {
    /// Any permutation of all `N` nodes.
    #[default]
    AllNodes,
    /// Permutations of the observables only; node 0 stays node 0.
    HiddenFixed,
}

fn permutations(n: usize, group: PermutationGroup) -> Vec<Vec<usize>> {
    let movable: Vec<usize> = match group {
        PermutationGroup::AllNodes => (0..n).collect(),
        PermutationGroup::HiddenFixed => (1..n).collect(),
    };
    let mut out = Vec::new();
    let mut current = movable.clone();
    heap_permute(current.len(), &mut current, &mut |p| {
        let mut perm: Vec<usize> = (0..n).collect();
        for (slot, &target) in movable.iter().zip(p) {
            perm[*slot] = target;
        }
        out.push(perm);
    });
    out
}

fn heap_permute(k: usize, items: &mut [usize], visit: &mut impl FnMut(&[usize])) {
    if k <= 1 {
        visit(items);
        return;
    }
    for i in 0..k - 1 {
        heap_permute(k - 1, items, visit);
        if k.is_multiple_of(2) {
            items.swap(i, k - 1);
        } else {
            items.swap(0, k - 1);
        }
    }
    heap_permute(k - 1, items, visit);
}

/// Slots of `g` relabeled by `perm` (old index -> new index), or `None` when
/// the relabeling would produce an edge pointing to a lower index.
fn relabel(g: &CausalGraph, perm: &[usize]) -> Option<Vec<i8>> {
    let n = g.n_nodes();
    let mut w = vec![0i8; n * n];
    for (j, i, weight) in g.edges() {
        let (a, b) = (perm[j], perm[i]);
        if a >= b {
            return None;
        }
        w[a * n + b] = weight;
    }
    let mut slots = Vec::with_capacity(slot_count(n));
    for a in 0..n {
        for b in a + 1..n {
            slots.push(w[a * n + b]);
        }
    }
    Some(slots)
}

fn encode(n: usize, slots: &[i8]) -> Vec<u8> {
    let mut key = Vec::with_capacity(slots.len() + 1);
    key.push(n as u8);
    key.extend(slots.iter().map(|&w| (w + 1) as u8));
    key
}

/// Canonical key of the equivalence class of `g`.
pub fn canonical_key(g: &CausalGraph, group: PermutationGroup) -> Vec<u8> {
    permutations(g.n_nodes(), group)
        .iter()
        .filter_map(|p| relabel(g, p))
        .min()
        .map(|slots| encode(g.n_nodes(), &slots))
        .expect("identity permutation is always admissible")
}

/// Every graph equivalent to `g` (including `g`), ordered by enumeration code.
pub fn orbit(g: &CausalGraph, group: PermutationGroup) -> Vec<CausalGraph> {
    let n = g.n_nodes();
    let members: BTreeMap<u64, CausalGraph> = permutations(n, group)
        .iter()
        .filter_map(|p| relabel(g, p))
        .map(|slots| {
            let h = CausalGraph::from_slots(n, &slots, g.mechanism())
                .expect("relabeling preserves validity")
                .with_sigma(g.sigma())
                .expect("sigma already validated");
            (h.code(), h)
        })
        .collect();
    members.into_values().collect()
}
