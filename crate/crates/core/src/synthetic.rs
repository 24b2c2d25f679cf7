//! Synthetic benchmark: uniform random trees (undesired) against random
//! trees with one extra edge closing a 4-node path into a 4-cycle (desired).

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{Graph, GraphDataset};

pub const MIN_NODES: usize = 4;
pub const MAX_NODES: usize = 15;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SyntheticError {
    #[error("graph count must be even and at least 2, got {0}")]
    InvalidCount(usize),
}

/// Uniform random labeled tree on `n` nodes via a random Prüfer sequence.
pub fn random_tree<R: Rng>(n: usize, rng: &mut R) -> Vec<(usize, usize)> {
    match n {
        0 | 1 => return Vec::new(),
        2 => return vec![(0, 1)],
        _ => {}
    }
    let seq: Vec<usize> = (0..n - 2).map(|_| rng.random_range(0..n)).collect();
    let mut degree = vec![1usize; n];
    for &s in &seq {
        degree[s] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &s in &seq {
        let leaf = (0..n).find(|&v| degree[v] == 1).expect("a leaf always exists");
        edges.push((leaf, s));
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// All simple paths on 4 nodes `(a, b, c, d)` with `a < d`.
pub fn four_paths(g: &Graph) -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for a in 0..g.node_count() {
        for &b in g.neighbors(a) {
            for &c in g.neighbors(b) {
                if c == a {
                    continue;
                }
                for &d in g.neighbors(c) {
                    if d != a && d != b && a < d {
                        out.push([a, b, c, d]);
                    }
                }
            }
        }
    }
    out
}

/// Generates `count` graphs, half desired (label 1, containing a 4-cycle)
/// and half undesired (label 0, trees), alternating desired/undesired.
/// Node counts are uniform in `[4, 15]`. Deterministic in `seed`.
pub fn generate_synthetic(count: usize, seed: u64) -> Result<GraphDataset, SyntheticError> {
    if count < 2 || count % 2 != 0 {
        return Err(SyntheticError::InvalidCount(count));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let desired = i % 2 == 0;
        loop {
            let n = rng.random_range(MIN_NODES..=MAX_NODES);
            let tree = random_tree(n, &mut rng);
            let mut g = Graph::unlabeled(n, &tree).expect("tree edges are valid");
            if desired {
                // stars have no 4-node path; redraw
                let Some(&[a, _, _, d]) = four_paths(&g).choose(&mut rng) else {
                    continue;
                };
                g.add_edge(a, d, None).expect("path endpoints are distinct");
            }
            graphs.push(g);
            labels.push(usize::from(desired));
            break;
        }
    }
    Ok(GraphDataset {
        name: "SYNTH".to_string(),
        graphs,
        labels,
        node_vocab: vec!["0".to_string()],
        edge_vocab: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent 4-cycle check: some pair of distinct nodes shares two
    /// distinct common neighbors.
    fn has_four_cycle(g: &Graph) -> bool {
        let n = g.node_count();
        for u in 0..n {
            for v in u + 1..n {
                let common = (0..n).filter(|&w| w != u && w != v && g.has_edge(u, w) && g.has_edge(v, w)).count();
                if common >= 2 {
                    return true;
                }
            }
        }
        false
    }

    fn is_tree(g: &Graph) -> bool {
        g.edge_count() + 1 == g.node_count() && g.is_connected()
    }

    #[test]
    fn thousand_graphs_split_evenly() {
        let ds = generate_synthetic(1000, 7).unwrap();
        assert_eq!(ds.len(), 1000);
        let mut cyc = 0;
        let mut acyclic = 0;
        for (g, &y) in ds.graphs.iter().zip(&ds.labels) {
            assert!((MIN_NODES..=MAX_NODES).contains(&g.node_count()));
            if y == 1 {
                assert!(has_four_cycle(g));
                assert_eq!(g.edge_count(), g.node_count());
                assert!(g.is_connected());
                cyc += 1;
            } else {
                assert!(is_tree(g));
                acyclic += 1;
            }
        }
        assert_eq!((cyc, acyclic), (500, 500));
    }

    #[test]
    fn minimal_dataset() {
        let ds = generate_synthetic(2, 0).unwrap();
        assert_eq!(ds.labels.iter().filter(|&&y| y == 1).count(), 1);
        assert_eq!(ds.labels.iter().filter(|&&y| y == 0).count(), 1);
    }

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(generate_synthetic(40, 3).unwrap(), generate_synthetic(40, 3).unwrap());
        assert_ne!(generate_synthetic(40, 3).unwrap(), generate_synthetic(40, 4).unwrap());
    }

    #[test]
    fn rejects_bad_counts() {
        assert_eq!(generate_synthetic(0, 1).unwrap_err(), SyntheticError::InvalidCount(0));
        assert_eq!(generate_synthetic(3, 1).unwrap_err(), SyntheticError::InvalidCount(3));
    }

    #[test]
    fn prufer_trees_are_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..20 {
            let g = Graph::unlabeled(n, &random_tree(n, &mut rng)).unwrap();
            assert!(is_tree(&g), "n = {n}");
        }
    }

    #[test]
    fn node_counts_cover_range() {
        let ds = generate_synthetic(400, 9).unwrap();
        for n in MIN_NODES..=MAX_NODES {
            assert!(ds.graphs.iter().any(|g| g.node_count() == n), "missing size {n}");
        }
    }
}
