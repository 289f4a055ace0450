//! d-separation by reachability over (node, direction) states.
//!
//! A path is blocked when it passes a non-collider that is in `Z`, or a
//! collider such that neither it nor any of its descendants is in `Z`. The
//! search walks active trails from `X` and reports separation when no trail
//! reaches `Y`.

use crate::cbn::CausalGraph;
use crate::error::{Error, Result};
use std::collections::VecDeque;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Dir {
    /// Arrived from a child (travelling against edge direction).
    Up,
    /// Arrived from a parent.
    Down,
}

fn mask(n: usize, nodes: &[usize], what: &str) -> Result<Vec<bool>> {
    let mut m = vec![false; n];
    for &v in nodes {
        if v >= n {
            return Err(Error::invalid(format!("{what} node {v} out of range")));
        }
        m[v] = true;
    }
    Ok(m)
}

pub fn d_separated(g: &CausalGraph, x: &[usize], y: &[usize], z: &[usize]) -> Result<bool> {
    let n = g.n_nodes();
    let in_x = mask(n, x, "X")?;
    let in_y = mask(n, y, "Y")?;
    let in_z = mask(n, z, "Z")?;
    if (0..n).any(|v| (in_x[v] && in_y[v]) || (in_x[v] && in_z[v]) || (in_y[v] && in_z[v])) {
        return Err(Error::invalid("X, Y and Z must be disjoint"));
    }

    // Z and its ancestors: colliders here are open.
    let mut opens_collider = in_z.clone();
    for v in (0..n).rev() {
        if opens_collider[v] {
            for (p, _) in g.parents(v) {
                opens_collider[p] = true;
            }
        }
    }

    let mut seen = vec![[false; 2]; n];
    let mut queue: VecDeque<(usize, Dir)> = x.iter().map(|&v| (v, Dir::Up)).collect();
    while let Some((v, dir)) = queue.pop_front() {
        let slot = if dir == Dir::Up { 0 } else { 1 };
        if seen[v][slot] {
            continue;
        }
        seen[v][slot] = true;
        if !in_z[v] && in_y[v] {
            return Ok(false);
        }
        match dir {
            Dir::Up if !in_z[v] => {
                queue.extend(g.parents(v).map(|(p, _)| (p, Dir::Up)));
                queue.extend(g.children(v).map(|(c, _)| (c, Dir::Down)));
            }
            Dir::Up => {}
            Dir::Down => {
                if !in_z[v] {
                    queue.extend(g.children(v).map(|(c, _)| (c, Dir::Down)));
                }
                if opens_collider[v] {
                    queue.extend(g.parents(v).map(|(p, _)| (p, Dir::Up)));
                }
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cbn::{enumerate_graphs, Mechanism};

    /// Figure-style example: X1 -> X3 <- X2, X2 -> X4, X3 -> X4 (node 0 unused).
    fn collider_graph() -> CausalGraph {
        CausalGraph::from_edges(5, &[(1, 3, 1), (2, 3, 1), (2, 4, 1), (3, 4, 1)], Mechanism::Linear).unwrap()
    }

    #[test]
    fn collider_blocks_marginally() {
        assert!(d_separated(&collider_graph(), &[1], &[2], &[]).unwrap());
    }

    #[test]
    fn conditioning_on_collider_descendant_opens() {
        assert!(!d_separated(&collider_graph(), &[1], &[2], &[4]).unwrap());
        assert!(!d_separated(&collider_graph(), &[1], &[2], &[3]).unwrap());
    }

    #[test]
    fn chain_blocked_by_middle() {
        let g = CausalGraph::from_edges(3, &[(0, 1, 1), (1, 2, 1)], Mechanism::Linear).unwrap();
        assert!(d_separated(&g, &[0], &[2], &[1]).unwrap());
        assert!(!d_separated(&g, &[0], &[2], &[]).unwrap());
    }

    #[test]
    fn overlapping_sets_rejected() {
        let g = collider_graph();
        assert!(d_separated(&g, &[1], &[1], &[]).is_err());
        assert!(d_separated(&g, &[1], &[2], &[1]).is_err());
        assert!(d_separated(&g, &[1], &[9], &[]).is_err());
    }

    /// Independent oracle: enumerate every simple path in the skeleton and
    /// apply the two blocking rules directly.
    fn brute_force(g: &CausalGraph, x: usize, y: usize, z: &[usize]) -> bool {
        let n = g.n_nodes();
        let adjacent = |a: usize, b: usize| g.weight(a.min(b), a.max(b)) != 0;
        let is_desc_or_self_in_z =
            |v: usize| z.contains(&v) || g.descendants(v).iter().enumerate().any(|(d, &m)| m && z.contains(&d));
        fn walk(
            path: &mut Vec<usize>,
            y: usize,
            n: usize,
            adjacent: &dyn Fn(usize, usize) -> bool,
            out: &mut Vec<Vec<usize>>,
        ) {
            let last = *path.last().unwrap();
            if last == y {
                out.push(path.clone());
                return;
            }
            for v in 0..n {
                if !path.contains(&v) && adjacent(last, v) {
                    path.push(v);
                    walk(path, y, n, adjacent, out);
                    path.pop();
                }
            }
        }
        let mut paths = Vec::new();
        walk(&mut vec![x], y, n, &adjacent, &mut paths);
        paths.iter().all(|p| {
            (1..p.len() - 1).any(|k| {
                let (a, v, b) = (p[k - 1], p[k], p[k + 1]);
                // a -> v exists iff a < v (edges point up the index order).
                let collider = a < v && b < v;
                if collider {
                    !is_desc_or_self_in_z(v)
                } else {
                    z.contains(&v)
                }
            })
        })
    }

    #[test]
    fn agrees_with_path_enumeration_on_all_four_node_graphs() {
        for g in enumerate_graphs(4).unwrap() {
            for x in 0..4 {
                for y in x + 1..4 {
                    let rest: Vec<usize> = (0..4).filter(|&v| v != x && v != y).collect();
                    let subsets = [vec![], vec![rest[0]], vec![rest[1]], rest.clone()];
                    for z in subsets {
                        assert_eq!(
                            d_separated(&g, &[x], &[y], &z).unwrap(),
                            brute_force(&g, x, y, &z),
                            "graph {:?} x={x} y={y} z={z:?}",
                            g.edges()
                        );
                    }
                }
            }
        }
    }
}
