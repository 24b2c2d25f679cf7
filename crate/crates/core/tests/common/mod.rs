//! Brute-force oracles and random fixtures shared by the integration tests.
//! Nothing here calls into the matcher, the miner or the summarizer.

#![allow(dead_code)]

use std::collections::BTreeSet;

use gce::graph::Graph;
use rand::Rng;

/// Canonical form of a small labeled graph: node labels and sorted labeled
/// edges, minimized over every node permutation.
pub type Canon = (Vec<usize>, Vec<(usize, usize, usize)>);

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// `nodes` are the graph's nodes under consideration, `edges` the labeled
/// edges among them in original indices.
pub fn canonical(labels: &[usize], nodes: &[usize], edges: &[(usize, usize, usize)]) -> Canon {
    let n = nodes.len();
    let local = |v: usize| nodes.iter().position(|&x| x == v).expect("edge inside node set");
    let mut best: Option<Canon> = None;
    for perm in permutations(n) {
        // perm[i] is the new position of local node i
        let mut ls = vec![0; n];
        for i in 0..n {
            ls[perm[i]] = labels[nodes[i]];
        }
        let mut es: Vec<_> = edges
            .iter()
            .map(|&(u, v, l)| {
                let (a, b) = (perm[local(u)], perm[local(v)]);
                (a.min(b), a.max(b), l)
            })
            .collect();
        es.sort_unstable();
        let c = (ls, es);
        if best.as_ref().is_none_or(|b| c < *b) {
            best = Some(c);
        }
    }
    best.expect("at least one permutation")
}

pub fn canonical_graph(g: &Graph) -> Canon {
    let nodes: Vec<usize> = (0..g.node_count()).collect();
    canonical(g.node_labels(), &nodes, &g.edges())
}

fn spans_connected(nodes: &[usize], edges: &[(usize, usize, usize)]) -> bool {
    let mut seen = vec![nodes[0]];
    let mut changed = true;
    while changed {
        changed = false;
        for &(u, v, _) in edges {
            let (hu, hv) = (seen.contains(&u), seen.contains(&v));
            if hu != hv {
                seen.push(if hu { v } else { u });
                changed = true;
            }
        }
    }
    seen.len() == nodes.len()
}

fn subsets_of_size(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|&i| m >> i & 1 == 1).collect())
        .collect()
}

/// Canonical forms of every connected subgraph (not necessarily induced)
/// of `g` with between `min_nodes` and `max_nodes` nodes and at least one
/// edge.
pub fn connected_subgraph_forms(g: &Graph, min_nodes: usize, max_nodes: usize) -> BTreeSet<Canon> {
    let mut out = BTreeSet::new();
    for k in min_nodes.max(2)..=max_nodes.min(g.node_count()) {
        for nodes in subsets_of_size(g.node_count(), k) {
            let induced: Vec<_> = g.edges().into_iter().filter(|(u, v, _)| nodes.contains(u) && nodes.contains(v)).collect();
            for mask in 1u32..1 << induced.len() {
                let es: Vec<_> = (0..induced.len()).filter(|&i| mask >> i & 1 == 1).map(|i| induced[i]).collect();
                let touched: BTreeSet<usize> = es.iter().flat_map(|&(u, v, _)| [u, v]).collect();
                if touched.len() == k && spans_connected(&nodes, &es) {
                    out.insert(canonical(g.node_labels(), &nodes, &es));
                }
            }
        }
    }
    out
}

/// Every injective, label- and edge-preserving map from `p` into `h`.
pub fn all_embeddings(p: &Graph, h: &Graph, induced: bool) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut map = Vec::new();
    extend(p, h, induced, &mut map, &mut out);
    out
}

fn extend(p: &Graph, h: &Graph, induced: bool, map: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if map.len() == p.node_count() {
        let ok = (0..p.node_count()).all(|a| {
            (a + 1..p.node_count()).all(|b| match p.edge_label(a, b) {
                Some(l) => h.edge_label(map[a], map[b]) == Some(l),
                None => !induced || !h.has_edge(map[a], map[b]),
            })
        });
        if ok {
            out.push(map.clone());
        }
        return;
    }
    let a = map.len();
    for v in 0..h.node_count() {
        if !map.contains(&v) && h.node_label(v) == p.node_label(a) {
            map.push(v);
            extend(p, h, induced, map, out);
            map.pop();
        }
    }
}

/// Is there a closed walk `a-b-c-d-a` on four distinct nodes?
pub fn has_four_cycle(g: &Graph) -> bool {
    let n = g.node_count();
    for a in 0..n {
        for c in a + 1..n {
            let common = (0..n).filter(|&x| x != a && x != c && g.has_edge(a, x) && g.has_edge(c, x)).count();
            if common >= 2 {
                return true;
            }
        }
    }
    false
}

/// Is there a simple path on four distinct nodes?
pub fn has_four_node_path(g: &Graph) -> bool {
    let n = g.node_count();
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let distinct = BTreeSet::from([a, b, c, d]).len() == 4;
                    if distinct && g.has_edge(a, b) && g.has_edge(b, c) && g.has_edge(c, d) {
                        return true;
                    }
                }
            }
        }
    }
    false
}

pub fn has_triangle(g: &Graph) -> bool {
    let n = g.node_count();
    (0..n).any(|a| (a + 1..n).any(|b| (b + 1..n).any(|c| g.has_edge(a, b) && g.has_edge(b, c) && g.has_edge(a, c))))
}

pub fn max_degree(g: &Graph) -> usize {
    (0..g.node_count()).map(|v| g.degree(v)).max().unwrap_or(0)
}

/// Random connected graph with a node count drawn from `nodes`: a random
/// spanning tree plus each remaining pair with probability `extra_p`. Edge labels are drawn iff `edge_vocab > 0`.
pub fn random_connected<R: Rng>(rng: &mut R, nodes: std::ops::RangeInclusive<usize>, node_vocab: usize, edge_vocab: usize, extra_p: f64) -> Graph {
    let n = rng.random_range(nodes);
    let labels = (0..n).map(|_| rng.random_range(0..node_vocab)).collect();
    let mut g = Graph::new(labels, node_vocab, edge_vocab).expect("labels in range");
    let edge_label = |rng: &mut R| (edge_vocab > 0).then(|| rng.random_range(0..edge_vocab));
    for v in 1..n {
        let u = rng.random_range(0..v);
        let l = edge_label(rng);
        g.add_edge(u, v, l).expect("valid edge");
    }
    for u in 0..n {
        for v in u + 1..n {
            if !g.has_edge(u, v) && rng.random_bool(extra_p) {
                let l = edge_label(rng);
                g.add_edge(u, v, l).expect("valid edge");
            }
        }
    }
    g
}

/// Simpson's rule on `[a, b]` with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h)).sum();
    h / 3.0 * (f(a) + inner + f(b))
}
