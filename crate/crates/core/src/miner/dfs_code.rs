//! DFS codes and the shared machinery for rightmost-path extension.

use std::collections::BTreeMap;
use std::fmt;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::graph::Graph;

/// One DFS-code entry `(from, to, from_label, edge_label, to_label)`.
/// `from < to` marks a forward edge, `from > to` a backward edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DfsEdge {
    pub from: usize,
    pub to: usize,
    pub from_label: usize,
    pub edge_label: usize,
    pub to_label: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DfsCode(pub Vec<DfsEdge>);

impl DfsCode {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.0.iter().map(|e| e.from.max(e.to) + 1).max().unwrap_or(0)
    }

    /// Indices of the forward edges on the rightmost path, rightmost first.
    pub fn rightmost_path(&self) -> Vec<usize> {
        let mut path = Vec::new();
        let mut old_from = None;
        for i in (0..self.0.len()).rev() {
            let e = self.0[i];
            if e.from < e.to && (path.is_empty() || old_from == Some(e.to)) {
                path.push(i);
                old_from = Some(e.from);
            }
        }
        path
    }

    /// Vertex labels indexed by DFS discovery id.
    pub fn vertex_labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.node_count()];
        for e in &self.0 {
            labels[e.from] = e.from_label;
            labels[e.to] = e.to_label;
        }
        labels
    }

    /// Materializes the pattern graph. Vocabulary sizes come from the
    /// dataset the code was mined from.
    pub fn to_graph(&self, node_vocab: usize, edge_vocab: usize) -> Graph {
        let labeled = edge_vocab > 0;
        let edges: Vec<_> =
            self.0.iter().map(|e| (e.from, e.to, labeled.then_some(e.edge_label))).collect();
        Graph::from_edges(self.vertex_labels(), node_vocab, edge_vocab, &edges).expect("DFS code describes a valid graph")
    }
}

impl fmt::Display for DfsCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "({},{},{},{},{})", e.from, e.to, e.from_label, e.edge_label, e.to_label)?;
        }
        Ok(())
    }
}

/// Directed half of an undirected edge in a [`MineGraph`]. Both halves
/// share `id`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct HalfEdge {
    pub from: usize,
    pub to: usize,
    pub label: usize,
    pub id: usize,
}

/// Adjacency-list view of a [`Graph`] with numbered edges.
pub(crate) struct MineGraph {
    pub labels: Vec<usize>,
    pub adj: Vec<Vec<HalfEdge>>,
    pub edge_count: usize,
}

impl MineGraph {
    pub fn new(g: &Graph) -> Self {
        let mut adj = vec![Vec::new(); g.node_count()];
        let mut id = 0;
        for (u, v, label) in g.edges() {
            adj[u].push(HalfEdge { from: u, to: v, label, id });
            adj[v].push(HalfEdge { from: v, to: u, label, id });
            id += 1;
        }
        MineGraph { labels: g.node_labels().to_vec(), adj, edge_count: id }
    }
}

/// One embedding of the current code, stored as a linked list of host edges
/// (last code edge first).
pub(crate) struct Projection {
    pub gid: usize,
    pub edge: HalfEdge,
    pub prev: Option<Rc<Projection>>,
}

/// Host edges of one embedding in code order, plus used vertices/edges.
pub(crate) struct History {
    pub edges: Vec<HalfEdge>,
    vertex_used: Vec<bool>,
    edge_used: Vec<bool>,
}

impl History {
    pub fn build(g: &MineGraph, p: &Rc<Projection>) -> Self {
        let mut edges = Vec::new();
        let mut vertex_used = vec![false; g.labels.len()];
        let mut edge_used = vec![false; g.edge_count];
        let mut cur = Some(p.clone());
        while let Some(node) = cur {
            let e = node.edge;
            edges.push(e);
            vertex_used[e.from] = true;
            vertex_used[e.to] = true;
            edge_used[e.id] = true;
            cur = node.prev.clone();
        }
        edges.reverse();
        History { edges, vertex_used, edge_used }
    }

    pub fn has_vertex(&self, v: usize) -> bool {
        self.vertex_used[v]
    }

    pub fn has_edge(&self, id: usize) -> bool {
        self.edge_used[id]
    }
}

/// Backward edge from the rightmost vertex (`e2.to`) to `e1.from`.
pub(crate) fn backward_edge(g: &MineGraph, e1: HalfEdge, e2: HalfEdge, h: &History) -> Option<HalfEdge> {
    if e1.id == e2.id {
        return None;
    }
    g.adj[e2.to].iter().copied().find(|it| {
        !h.has_edge(it.id)
            && it.to == e1.from
            && (e1.label < it.label || (e1.label == it.label && g.labels[e1.to] <= g.labels[e2.to]))
    })
}

/// Forward edges from the rightmost vertex to unvisited vertices.
pub(crate) fn forward_pure(g: &MineGraph, e: HalfEdge, min_label: usize, h: &History) -> Vec<HalfEdge> {
    g.adj[e.to].iter().copied().filter(|it| min_label <= g.labels[it.to] && !h.has_vertex(it.to)).collect()
}

/// Forward edges from `e.from` (a rightmost-path vertex) that sort after `e`.
pub(crate) fn forward_rmpath(g: &MineGraph, e: HalfEdge, min_label: usize, h: &History) -> Vec<HalfEdge> {
    let to_label = g.labels[e.to];
    g.adj[e.from]
        .iter()
        .copied()
        .filter(|it| {
            let to_label2 = g.labels[it.to];
            e.to != it.to
                && min_label <= to_label2
                && !h.has_vertex(it.to)
                && (e.label < it.label || (e.label == it.label && to_label <= to_label2))
        })
        .collect()
}

/// Forward edges out of `v` toward neighbors with label >= its own.
pub(crate) fn forward_root(g: &MineGraph, v: usize) -> impl Iterator<Item = HalfEdge> + '_ {
    g.adj[v].iter().copied().filter(move |it| g.labels[v] <= g.labels[it.to])
}

/// Greedily builds the minimum DFS code of a connected graph. When
/// `against` is given, stops with `None` as soon as the construction
/// diverges from it (the `against` code is then not minimal).
fn build_min_code(g: &MineGraph, against: Option<&DfsCode>) -> Option<DfsCode> {
    let mut roots: BTreeMap<(usize, usize, usize), Vec<Rc<Projection>>> = BTreeMap::new();
    for v in 0..g.labels.len() {
        for e in forward_root(g, v) {
            roots.entry((g.labels[v], e.label, g.labels[e.to])).or_default().push(Rc::new(Projection {
                gid: 0,
                edge: e,
                prev: None,
            }));
        }
    }
    let Some(((fl, el, tl), mut projected)) = roots.into_iter().next() else {
        return Some(DfsCode::default());
    };
    let mut code = DfsCode(vec![DfsEdge { from: 0, to: 1, from_label: fl, edge_label: el, to_label: tl }]);
    if let Some(target) = against {
        if target.0.first() != code.0.first() {
            return None;
        }
    }

    loop {
        if let Some(target) = against {
            if code.len() == target.len() {
                return Some(code);
            }
        }
        let rmpath = code.rightmost_path();
        let min_label = code.0[0].from_label;
        let max_toc = code.0[rmpath[0]].to;
        let labels = code.vertex_labels();

        // backward extensions, closest-to-root target first
        let mut back: BTreeMap<usize, Vec<Rc<Projection>>> = BTreeMap::new();
        let mut new_to = None;
        for i in (1..rmpath.len()).rev() {
            for p in &projected {
                let h = History::build(g, p);
                if let Some(e) = backward_edge(g, h.edges[rmpath[i]], h.edges[rmpath[0]], &h) {
                    back.entry(e.label).or_default().push(Rc::new(Projection { gid: 0, edge: e, prev: Some(p.clone()) }));
                    new_to = Some(code.0[rmpath[i]].from);
                }
            }
            if new_to.is_some() {
                break;
            }
        }
        if let Some(to) = new_to {
            let (el, next) = back.into_iter().next().expect("backward extension recorded");
            code.0.push(DfsEdge {
                from: max_toc,
                to,
                from_label: labels[max_toc],
                edge_label: el,
                to_label: labels[to],
            });
            if let Some(target) = against {
                if code.0.last() != target.0.get(code.len() - 1) {
                    return None;
                }
            }
            projected = next;
            continue;
        }

        // forward extensions: pure first, then along the rightmost path
        let mut fwd: BTreeMap<(usize, usize), Vec<Rc<Projection>>> = BTreeMap::new();
        let mut new_from = None;
        for p in &projected {
            let h = History::build(g, p);
            for e in forward_pure(g, h.edges[rmpath[0]], min_label, &h) {
                new_from = Some(max_toc);
                fwd.entry((e.label, g.labels[e.to]))
                    .or_default()
                    .push(Rc::new(Projection { gid: 0, edge: e, prev: Some(p.clone()) }));
            }
        }
        let mut i = 0;
        while new_from.is_none() && i < rmpath.len() {
            for p in &projected {
                let h = History::build(g, p);
                for e in forward_rmpath(g, h.edges[rmpath[i]], min_label, &h) {
                    new_from = Some(code.0[rmpath[i]].from);
                    fwd.entry((e.label, g.labels[e.to]))
                        .or_default()
                        .push(Rc::new(Projection { gid: 0, edge: e, prev: Some(p.clone()) }));
                }
            }
            i += 1;
        }
        let Some(from) = new_from else {
            return Some(code);
        };
        let ((el, tl), next) = fwd.into_iter().next().expect("forward extension recorded");
        code.0.push(DfsEdge { from, to: max_toc + 1, from_label: labels[from], edge_label: el, to_label: tl });
        if let Some(target) = against {
            if code.0.last() != target.0.get(code.len() - 1) {
                return None;
            }
        }
        projected = next;
    }
}

/// Minimum DFS code of a connected graph (empty for edgeless graphs).
pub fn min_dfs_code(g: &Graph) -> DfsCode {
    build_min_code(&MineGraph::new(g), None).expect("unconstrained construction always completes")
}

/// True when `code` is the minimum DFS code of the graph it describes.
pub fn is_min_code(code: &DfsCode, node_vocab: usize, edge_vocab: usize) -> bool {
    if code.len() <= 1 {
        return true;
    }
    let g = code.to_graph(node_vocab, edge_vocab.max(1));
    build_min_code(&MineGraph::new(&g), Some(code)).is_some()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::is_isomorphic;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn e(from: usize, to: usize, fl: usize, el: usize, tl: usize) -> DfsEdge {
        DfsEdge { from, to, from_label: fl, edge_label: el, to_label: tl }
    }

    #[test]
    fn rightmost_path_of_textbook_code() {
        // 0-1-2, back 2->0, then 2-3, then 1-4
        let code = DfsCode(vec![e(0, 1, 0, 0, 0), e(1, 2, 0, 0, 0), e(2, 0, 0, 0, 0), e(2, 3, 0, 0, 0), e(1, 4, 0, 0, 0)]);
        assert_eq!(code.rightmost_path(), vec![4, 0]);
        assert_eq!(code.node_count(), 5);
    }

    #[test]
    fn triangle_min_code() {
        let g = Graph::unlabeled(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let code = min_dfs_code(&g);
        assert_eq!(code.0, vec![e(0, 1, 0, 0, 0), e(1, 2, 0, 0, 0), e(2, 0, 0, 0, 0)]);
        assert!(is_min_code(&code, 1, 0));
    }

    #[test]
    fn labeled_path_starts_at_smallest_label() {
        let g = Graph::from_edges(vec![2, 1, 0], 3, 0, &[(0, 1, None), (1, 2, None)]).unwrap();
        let code = min_dfs_code(&g);
        assert_eq!(code.0, vec![e(0, 1, 0, 0, 1), e(1, 2, 1, 0, 2)]);
        let non_min = DfsCode(vec![e(0, 1, 1, 0, 2), e(0, 2, 1, 0, 0)]);
        assert!(!is_min_code(&non_min, 3, 0));
    }

    fn random_connected(rng: &mut ChaCha8Rng, n: usize, labels: usize) -> Graph {
        let mut g = Graph::new((0..n).map(|_| rng.random_range(0..labels)).collect(), labels, 0).unwrap();
        for v in 1..n {
            g.add_edge(v, rng.random_range(0..v), None).unwrap();
        }
        for _ in 0..n / 2 {
            let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
            if u != v {
                g.add_edge(u, v, None).unwrap();
            }
        }
        g
    }

    #[test]
    fn min_code_is_a_canonical_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let n = rng.random_range(2..8);
            let g = random_connected(&mut rng, n, 2);
            let code = min_dfs_code(&g);
            assert_eq!(code.len(), g.edge_count());
            let back = code.to_graph(2, 0);
            assert!(is_isomorphic(&g, &back));
            assert!(is_min_code(&code, 2, 0));
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            assert_eq!(min_dfs_code(&g.permuted(&perm)), code);
        }
    }
}
