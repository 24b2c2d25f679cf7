//! Label-preserving subgraph matching by backtracking.
//!
//! The default semantics is non-induced (edge monomorphism): every pattern
//! edge must map to a host edge with the same label, while the host may
//! carry extra edges among the image nodes. Induced matching is available
//! through [`MatchConfig::induced`].

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::graph::Graph;

pub const DEFAULT_MAX_OCCURRENCES: usize = 10;

/// Injective map from pattern nodes to host nodes: `mapping[p]` is the
/// host node matched to pattern node `p`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Occurrence {
    pub mapping: Vec<usize>,
}

impl Occurrence {
    /// Image node set, sorted.
    pub fn image(&self) -> Vec<usize> {
        let mut img = self.mapping.clone();
        img.sort_unstable();
        img
    }

    pub fn is_disjoint(&self, other: &Occurrence) -> bool {
        self.mapping.iter().all(|v| !other.mapping.contains(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchConfig {
    /// Require non-edges of the pattern to map to host non-edges.
    pub induced: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig { induced: false }
    }
}

/// Checks injectivity, label preservation and edge preservation.
pub fn is_valid_occurrence(pattern: &Graph, host: &Graph, occ: &Occurrence, cfg: MatchConfig) -> bool {
    let m = &occ.mapping;
    if m.len() != pattern.node_count() || m.iter().any(|&v| v >= host.node_count()) {
        return false;
    }
    let distinct: BTreeSet<_> = m.iter().collect();
    if distinct.len() != m.len() {
        return false;
    }
    if pattern.node_vocab() != host.node_vocab() || pattern.edge_vocab() != host.edge_vocab() {
        return false;
    }
    for p in 0..pattern.node_count() {
        if pattern.node_label(p) != host.node_label(m[p]) {
            return false;
        }
    }
    for p in 0..pattern.node_count() {
        for q in p + 1..pattern.node_count() {
            match pattern.edge_label(p, q) {
                Some(l) => {
                    if host.edge_label(m[p], m[q]) != Some(l) {
                        return false;
                    }
                }
                None => {
                    if cfg.induced && host.has_edge(m[p], m[q]) {
                        return false;
                    }
                }
            }
        }
    }
    true
}

struct Search<'a> {
    pattern: &'a Graph,
    host: &'a Graph,
    cfg: MatchConfig,
    order: Vec<usize>,
    /// For each position in `order`, an already-placed neighbor to anchor
    /// candidate generation on.
    anchor: Vec<Option<usize>>,
    mapping: Vec<usize>,
    used: Vec<bool>,
}

const UNMAPPED: usize = usize::MAX;

impl<'a> Search<'a> {
    fn new(pattern: &'a Graph, host: &'a Graph, cfg: MatchConfig) -> Self {
        let (order, anchor) = match_order(pattern, host);
        Search {
            pattern,
            host,
            cfg,
            order,
            anchor,
            mapping: vec![UNMAPPED; pattern.node_count()],
            used: vec![false; host.node_count()],
        }
    }

    fn feasible(&self, p: usize, h: usize) -> bool {
        if self.used[h] || self.pattern.node_label(p) != self.host.node_label(h) {
            return false;
        }
        if self.host.degree(h) < self.pattern.degree(p) {
            return false;
        }
        for q in 0..self.pattern.node_count() {
            let hq = self.mapping[q];
            if hq == UNMAPPED || q == p {
                continue;
            }
            match self.pattern.edge_label(p, q) {
                Some(l) => {
                    if self.host.edge_label(h, hq) != Some(l) {
                        return false;
                    }
                }
                None => {
                    if self.cfg.induced && self.host.has_edge(h, hq) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Depth-first enumeration; `visit` returns false to stop.
    fn run(&mut self, depth: usize, visit: &mut dyn FnMut(&[usize]) -> bool) -> bool {
        if depth == self.order.len() {
            return visit(&self.mapping);
        }
        let p = self.order[depth];
        let candidates: Vec<usize> = match self.anchor[depth] {
            Some(q) => self.host.neighbors(self.mapping[q]).to_vec(),
            None => (0..self.host.node_count()).collect(),
        };
        for h in candidates {
            if !self.feasible(p, h) {
                continue;
            }
            self.mapping[p] = h;
            self.used[h] = true;
            let keep_going = self.run(depth + 1, visit);
            self.used[h] = false;
            self.mapping[p] = UNMAPPED;
            if !keep_going {
                return false;
            }
        }
        true
    }
}

/// Orders pattern nodes so each one (after the first of its component) has
/// an already-placed neighbor. Component roots are picked rarest host label
/// first, then highest pattern degree.
fn match_order(pattern: &Graph, host: &Graph) -> (Vec<usize>, Vec<Option<usize>>) {
    let n = pattern.node_count();
    let mut label_freq = vec![0usize; host.node_vocab().max(pattern.node_vocab())];
    for v in 0..host.node_count() {
        label_freq[host.node_label(v)] += 1;
    }
    let rank = |p: usize| (label_freq[pattern.node_label(p)], std::cmp::Reverse(pattern.degree(p)), p);

    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut anchor = Vec::with_capacity(n);
    while order.len() < n {
        let root = (0..n).filter(|&p| !placed[p]).min_by_key(|&p| rank(p)).expect("unplaced node");
        placed[root] = true;
        order.push(root);
        anchor.push(None);
        loop {
            // frontier node with most placed neighbors, then rarest label
            let next = (0..n)
                .filter(|&p| !placed[p] && pattern.neighbors(p).iter().any(|&q| placed[q]))
                .min_by_key(|&p| {
                    let links = pattern.neighbors(p).iter().filter(|&&q| placed[q]).count();
                    (std::cmp::Reverse(links), rank(p))
                });
            let Some(p) = next else { break };
            let a = *pattern.neighbors(p).iter().find(|&&q| placed[q]).expect("frontier node");
            placed[p] = true;
            order.push(p);
            anchor.push(Some(a));
        }
    }
    (order, anchor)
}

fn compatible(pattern: &Graph, host: &Graph) -> bool {
    pattern.node_vocab() == host.node_vocab()
        && pattern.edge_vocab() == host.edge_vocab()
        && pattern.node_count() <= host.node_count()
        && pattern.edge_count() <= host.edge_count()
}

/// Up to `max_count` occurrences of `pattern` in `host`, one per distinct
/// image node set, ordered lexicographically by sorted image.
pub fn find_occurrences_with(pattern: &Graph, host: &Graph, max_count: usize, cfg: MatchConfig) -> Vec<Occurrence> {
    if pattern.node_count() == 0 || max_count == 0 || !compatible(pattern, host) {
        return Vec::new();
    }
    let mut found: std::collections::BTreeMap<Vec<usize>, Vec<usize>> = std::collections::BTreeMap::new();
    let mut search = Search::new(pattern, host, cfg);
    search.run(0, &mut |m| {
        let mut img = m.to_vec();
        img.sort_unstable();
        found.entry(img).or_insert_with(|| m.to_vec());
        true
    });
    found.into_values().take(max_count).map(|mapping| Occurrence { mapping }).collect()
}

pub fn find_occurrences(pattern: &Graph, host: &Graph, max_count: usize) -> Vec<Occurrence> {
    find_occurrences_with(pattern, host, max_count, MatchConfig::default())
}

/// First occurrence found by the search, if any.
pub fn first_occurrence(pattern: &Graph, host: &Graph, cfg: MatchConfig) -> Option<Occurrence> {
    if pattern.node_count() == 0 || !compatible(pattern, host) {
        return None;
    }
    let mut out = None;
    let mut search = Search::new(pattern, host, cfg);
    search.run(0, &mut |m| {
        out = Some(Occurrence { mapping: m.to_vec() });
        false
    });
    out
}

/// True iff `pattern` occurs in `host` (non-induced semantics).
pub fn contains(pattern: &Graph, host: &Graph) -> bool {
    first_occurrence(pattern, host, MatchConfig::default()).is_some()
}

/// Label-preserving isomorphism test.
pub fn is_isomorphic(a: &Graph, b: &Graph) -> bool {
    if a.node_count() != b.node_count() || a.edge_count() != b.edge_count() {
        return false;
    }
    if a.node_count() == 0 {
        return a.node_vocab() == b.node_vocab() && a.edge_vocab() == b.edge_vocab();
    }
    let mut la = a.node_labels().to_vec();
    let mut lb = b.node_labels().to_vec();
    la.sort_unstable();
    lb.sort_unstable();
    if la != lb {
        return false;
    }
    first_occurrence(a, b, MatchConfig { induced: true }).is_some()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn triangle() -> Graph {
        Graph::unlabeled(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    fn path3() -> Graph {
        Graph::unlabeled(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn identity_occurrence() {
        let g = Graph::from_edges(vec![0, 1, 1, 2], 3, 0, &[(0, 1, None), (1, 2, None), (2, 3, None)]).unwrap();
        let occ = find_occurrences(&g, &g, 10);
        assert!(occ.iter().any(|o| o.mapping == vec![0, 1, 2, 3]));
        assert!(contains(&g, &g));
        assert!(is_isomorphic(&g, &g));
    }

    #[test]
    fn path_in_triangle_is_non_induced() {
        let occ = find_occurrences(&path3(), &triangle(), 10);
        // one image set: all three nodes
        assert_eq!(occ.len(), 1);
        assert!(is_valid_occurrence(&path3(), &triangle(), &occ[0], MatchConfig::default()));
        assert!(find_occurrences_with(&path3(), &triangle(), 10, MatchConfig { induced: true }).is_empty());
    }

    #[test]
    fn missing_label_gives_nothing() {
        let pattern = Graph::new(vec![2], 3, 0).unwrap();
        let host = Graph::from_edges(vec![0, 1, 0], 3, 0, &[(0, 1, None)]).unwrap();
        assert!(find_occurrences(&pattern, &host, 10).is_empty());
        assert!(!contains(&pattern, &host));
    }

    #[test]
    fn edge_labels_must_match() {
        let pattern = Graph::from_edges(vec![0, 0], 1, 2, &[(0, 1, Some(1))]).unwrap();
        let host = Graph::from_edges(vec![0, 0, 0], 1, 2, &[(0, 1, Some(0)), (1, 2, Some(1))]).unwrap();
        let occ = find_occurrences(&pattern, &host, 10);
        assert_eq!(occ.len(), 1);
        assert_eq!(occ[0].image(), vec![1, 2]);
    }

    #[test]
    fn triangle_vs_path_not_isomorphic() {
        assert!(!is_isomorphic(&triangle(), &path3()));
        let relabeled = Graph::from_edges(vec![0, 0, 1], 2, 0, &[(0, 1, None), (1, 2, None)]).unwrap();
        let other = Graph::from_edges(vec![0, 1, 0], 2, 0, &[(0, 1, None), (1, 2, None)]).unwrap();
        assert!(!is_isomorphic(&relabeled, &other));
    }

    #[test]
    fn occurrence_cap_and_order() {
        // star with 5 leaves: C(5,2) = 10 images of a 3-path centered at 0
        let star = Graph::unlabeled(6, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)]).unwrap();
        let all = find_occurrences(&path3(), &star, 100);
        assert_eq!(all.len(), 10);
        let images: Vec<_> = all.iter().map(Occurrence::image).collect();
        let mut sorted = images.clone();
        sorted.sort();
        assert_eq!(images, sorted);
        assert_eq!(find_occurrences(&path3(), &star, 3).len(), 3);
        assert_eq!(find_occurrences(&path3(), &star, 3), all[..3].to_vec());
    }

    fn random_labeled(rng: &mut ChaCha8Rng, n: usize, p: f64, labels: usize) -> Graph {
        let mut g = Graph::new((0..n).map(|_| rng.random_range(0..labels)).collect(), labels, 0).unwrap();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(p) {
                    g.add_edge(u, v, None).unwrap();
                }
            }
        }
        g
    }

    #[test]
    fn permuted_graphs_are_isomorphic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let g = random_labeled(&mut rng, 7, 0.4, 2);
            let mut perm: Vec<usize> = (0..7).collect();
            for i in (1..7).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            assert!(is_isomorphic(&g, &g.permuted(&perm)));
        }
    }

    #[test]
    fn monotone_under_edge_deletion() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let host = random_labeled(&mut rng, 8, 0.4, 2);
            let pattern = random_labeled(&mut rng, 4, 0.5, 2);
            if !contains(&pattern, &host) {
                continue;
            }
            for (u, v, _) in pattern.edges() {
                let mut smaller = pattern.clone();
                smaller.remove_edge(u, v);
                assert!(contains(&smaller, &host));
            }
        }
    }
}
