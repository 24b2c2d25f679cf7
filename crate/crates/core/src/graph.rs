//! Labeled undirected graphs and the graph-level primitives shared by the
//! rest of the crate: weighted distance, symmetric difference and the
//! connected-component count used by the comprehensibility metric.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("node index {index} out of range for graph with {node_count} nodes")]
    NodeOutOfRange { index: usize, node_count: usize },
    #[error("self loop on node {0}")]
    SelfLoop(usize),
    #[error("node label {label} outside vocabulary of size {vocab}")]
    NodeLabelOutOfRange { label: usize, vocab: usize },
    #[error("edge label {label} outside vocabulary of size {vocab}")]
    EdgeLabelOutOfRange { label: usize, vocab: usize },
    #[error("edge ({0}, {1}) needs a label: graph has labeled edges")]
    MissingEdgeLabel(usize, usize),
    #[error("attribute dimensions differ: ({0}, {1}) vs ({2}, {3})")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("invalid distance weights: {0}")]
    InvalidWeights(String),
}

/// An undirected graph with one categorical label per node and, when the
/// edge vocabulary is non-empty, one categorical label per edge.
///
/// Labels are stored as indices; the one-hot matrices `X` and `E` are
/// materialized on demand by [`Graph::node_attr_matrix`] and friends.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "GraphRecord", try_from = "GraphRecord")]
pub struct Graph {
    node_labels: Vec<usize>,
    node_vocab: usize,
    edge_vocab: usize,
    /// Sorted neighbor lists.
    adjacency: Vec<Vec<usize>>,
    /// Keyed by `(min, max)`; empty when `edge_vocab == 0`.
    edge_labels: BTreeMap<(usize, usize), usize>,
}

/// Serialized form of a [`Graph`]: labels plus an edge list `(u, v, label)`
/// with `u < v`. Edge labels are 0 for unlabeled-edge graphs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphRecord {
    pub node_labels: Vec<usize>,
    pub node_vocab: usize,
    pub edge_vocab: usize,
    pub edges: Vec<(usize, usize, usize)>,
}

impl From<Graph> for GraphRecord {
    fn from(g: Graph) -> Self {
        GraphRecord { edges: g.edges(), node_vocab: g.node_vocab, edge_vocab: g.edge_vocab, node_labels: g.node_labels }
    }
}

impl TryFrom<GraphRecord> for Graph {
    type Error = GraphError;

    fn try_from(r: GraphRecord) -> Result<Self, GraphError> {
        let labeled = r.edge_vocab > 0;
        let edges: Vec<_> = r.edges.iter().map(|&(u, v, l)| (u, v, labeled.then_some(l))).collect();
        Graph::from_edges(r.node_labels, r.node_vocab, r.edge_vocab, &edges)
    }
}

#[inline]
fn key(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

impl Graph {
    /// Creates an edgeless graph.
    pub fn new(node_labels: Vec<usize>, node_vocab: usize, edge_vocab: usize) -> Result<Self, GraphError> {
        if let Some(&label) = node_labels.iter().find(|&&l| l >= node_vocab) {
            return Err(GraphError::NodeLabelOutOfRange { label, vocab: node_vocab });
        }
        let n = node_labels.len();
        Ok(Graph {
            node_labels,
            node_vocab,
            edge_vocab,
            adjacency: vec![Vec::new(); n],
            edge_labels: BTreeMap::new(),
        })
    }

    /// Builds a graph from an edge list. Edge labels are required iff
    /// `edge_vocab > 0` and ignored otherwise.
    pub fn from_edges(
        node_labels: Vec<usize>,
        node_vocab: usize,
        edge_vocab: usize,
        edges: &[(usize, usize, Option<usize>)],
    ) -> Result<Self, GraphError> {
        let mut g = Graph::new(node_labels, node_vocab, edge_vocab)?;
        for &(u, v, label) in edges {
            g.add_edge(u, v, label)?;
        }
        Ok(g)
    }

    /// Unlabeled convenience constructor: single node label, no edge labels.
    pub fn unlabeled(node_count: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut g = Graph::new(vec![0; node_count], 1, 0)?;
        for &(u, v) in edges {
            g.add_edge(u, v, None)?;
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.node_labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Size `l` of the node-label vocabulary.
    pub fn node_vocab(&self) -> usize {
        self.node_vocab
    }

    /// Size `m` of the edge-label vocabulary; 0 for unlabeled edges.
    pub fn edge_vocab(&self) -> usize {
        self.edge_vocab
    }

    pub fn node_label(&self, v: usize) -> usize {
        self.node_labels[v]
    }

    pub fn node_labels(&self) -> &[usize] {
        &self.node_labels
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.node_count() && self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Label of edge `(u, v)`: `Some(label)` for labeled edges, `Some(0)`
    /// for present edges in an unlabeled graph, `None` when absent.
    pub fn edge_label(&self, u: usize, v: usize) -> Option<usize> {
        if !self.has_edge(u, v) {
            return None;
        }
        if self.edge_vocab == 0 {
            Some(0)
        } else {
            self.edge_labels.get(&key(u, v)).copied()
        }
    }

    /// Edges as `(u, v, label)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (u, nbrs) in self.adjacency.iter().enumerate() {
            for &v in nbrs.iter().filter(|&&v| v > u) {
                out.push((u, v, self.edge_label(u, v).unwrap_or(0)));
            }
        }
        out
    }

    fn check_node(&self, v: usize) -> Result<(), GraphError> {
        if v >= self.node_count() {
            Err(GraphError::NodeOutOfRange { index: v, node_count: self.node_count() })
        } else {
            Ok(())
        }
    }

    /// Adds (or relabels) edge `(u, v)`.
    pub fn add_edge(&mut self, u: usize, v: usize, label: Option<usize>) -> Result<(), GraphError> {
        self.check_node(u)?;
        self.check_node(v)?;
        if u == v {
            return Err(GraphError::SelfLoop(u));
        }
        if self.edge_vocab > 0 {
            let label = label.ok_or(GraphError::MissingEdgeLabel(u, v))?;
            if label >= self.edge_vocab {
                return Err(GraphError::EdgeLabelOutOfRange { label, vocab: self.edge_vocab });
            }
            self.edge_labels.insert(key(u, v), label);
        }
        if let Err(pos) = self.adjacency[u].binary_search(&v) {
            self.adjacency[u].insert(pos, v);
        }
        if let Err(pos) = self.adjacency[v].binary_search(&u) {
            self.adjacency[v].insert(pos, u);
        }
        Ok(())
    }

    pub fn remove_edge(&mut self, u: usize, v: usize) {
        if u >= self.node_count() || v >= self.node_count() {
            return;
        }
        if let Ok(pos) = self.adjacency[u].binary_search(&v) {
            self.adjacency[u].remove(pos);
        }
        if let Ok(pos) = self.adjacency[v].binary_search(&u) {
            self.adjacency[v].remove(pos);
        }
        self.edge_labels.remove(&key(u, v));
    }

    pub fn set_node_label(&mut self, v: usize, label: usize) -> Result<(), GraphError> {
        self.check_node(v)?;
        if label >= self.node_vocab {
            return Err(GraphError::NodeLabelOutOfRange { label, vocab: self.node_vocab });
        }
        self.node_labels[v] = label;
        Ok(())
    }

    /// Appends an isolated node and returns its index.
    pub fn add_node(&mut self, label: usize) -> Result<usize, GraphError> {
        if label >= self.node_vocab {
            return Err(GraphError::NodeLabelOutOfRange { label, vocab: self.node_vocab });
        }
        self.node_labels.push(label);
        self.adjacency.push(Vec::new());
        Ok(self.node_labels.len() - 1)
    }

    /// Dense 0/1 adjacency, row-major `n x n`.
    pub fn adjacency_matrix(&self) -> Vec<f64> {
        let n = self.node_count();
        let mut a = vec![0.0; n * n];
        for (u, nbrs) in self.adjacency.iter().enumerate() {
            for &v in nbrs {
                a[u * n + v] = 1.0;
            }
        }
        a
    }

    /// One-hot node attributes, row-major `n x l`.
    pub fn node_attr_matrix(&self) -> Vec<f64> {
        let l = self.node_vocab;
        let mut x = vec![0.0; self.node_count() * l];
        for (v, &label) in self.node_labels.iter().enumerate() {
            x[v * l + label] = 1.0;
        }
        x
    }

    /// One-hot edge attributes as `m` channel matrices, each row-major `n x n`
    /// and symmetric. Empty when `m == 0`.
    pub fn edge_attr_channels(&self) -> Vec<Vec<f64>> {
        let n = self.node_count();
        let mut channels = vec![vec![0.0; n * n]; self.edge_vocab];
        for (&(u, v), &label) in &self.edge_labels {
            channels[label][u * n + v] = 1.0;
            channels[label][v * n + u] = 1.0;
        }
        channels
    }

    /// Subgraph induced by `nodes` (in the given order).
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Graph {
        let labels = nodes.iter().map(|&v| self.node_labels[v]).collect();
        let mut g = Graph::new(labels, self.node_vocab, self.edge_vocab).expect("labels already validated");
        for (i, &u) in nodes.iter().enumerate() {
            for (j, &v) in nodes.iter().enumerate().skip(i + 1) {
                if self.has_edge(u, v) {
                    let label = if self.edge_vocab > 0 { self.edge_label(u, v) } else { None };
                    g.add_edge(i, j, label).expect("indices in range");
                }
            }
        }
        g
    }

    /// Relabels nodes: node `v` of `self` becomes node `perm[v]` of the result.
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        let n = self.node_count();
        assert_eq!(perm.len(), n, "permutation length");
        let mut labels = vec![0; n];
        for v in 0..n {
            labels[perm[v]] = self.node_labels[v];
        }
        let mut g = Graph::new(labels, self.node_vocab, self.edge_vocab).expect("labels already validated");
        for (u, v, label) in self.edges() {
            let label = if self.edge_vocab > 0 { Some(label) } else { None };
            g.add_edge(perm[u], perm[v], label).expect("permutation in range");
        }
        g
    }

    /// True when the graph is connected (the empty graph counts as connected).
    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == n
    }

    /// Validates the structural invariants. Construction through the public
    /// API always preserves them; this is used by tests and loaders.
    pub fn validate(&self) -> Result<(), GraphError> {
        let n = self.node_count();
        for (u, nbrs) in self.adjacency.iter().enumerate() {
            for &v in nbrs {
                self.check_node(v)?;
                if v == u {
                    return Err(GraphError::SelfLoop(u));
                }
                if !self.adjacency[v].contains(&u) {
                    return Err(GraphError::NodeOutOfRange { index: v, node_count: n });
                }
                if self.edge_vocab > 0 && !self.edge_labels.contains_key(&key(u, v)) {
                    return Err(GraphError::MissingEdgeLabel(u, v));
                }
            }
        }
        if let Some(&(u, v)) = self.edge_labels.keys().find(|&&(u, v)| !self.has_edge(u, v)) {
            return Err(GraphError::MissingEdgeLabel(u, v));
        }
        Ok(())
    }
}

/// Binary-labeled collection of graphs sharing node and edge vocabularies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    /// Class per graph; 0 is undesired, 1 is desired.
    pub labels: Vec<usize>,
    pub node_vocab: Vec<String>,
    pub edge_vocab: Vec<String>,
}

impl GraphDataset {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// New dataset holding only the graphs at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> GraphDataset {
        GraphDataset {
            name: self.name.clone(),
            graphs: indices.iter().map(|&i| self.graphs[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            node_vocab: self.node_vocab.clone(),
            edge_vocab: self.edge_vocab.clone(),
        }
    }
}

/// Weights of the three terms of the graph distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedDistanceConfig {
    /// Adjacency term.
    pub rho: f64,
    /// Node-attribute term.
    pub beta: f64,
    /// Edge-attribute term.
    pub gamma: f64,
}

impl Default for WeightedDistanceConfig {
    fn default() -> Self {
        WeightedDistanceConfig { rho: 1.0, beta: 1.0, gamma: 1.0 }
    }
}

impl WeightedDistanceConfig {
    pub fn validate(&self) -> Result<(), GraphError> {
        let w = [self.rho, self.beta, self.gamma];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(GraphError::InvalidWeights(format!("weights must be finite and >= 0, got {w:?}")));
        }
        if w.iter().all(|&x| x == 0.0) {
            return Err(GraphError::InvalidWeights("at least one weight must be positive".into()));
        }
        Ok(())
    }
}

/// Weighted distance `rho * d_A + beta * d_X + gamma * d_E`.
///
/// `d_A` is the Frobenius norm of `A_a ⊙ (1 - A_b)` over the strict upper
/// triangle, so it counts edges of `a` missing from `b` and is directed.
/// `d_X` and `d_E` are Frobenius norms of the one-hot differences. Graphs
/// of different sizes are compared after zero-padding the smaller one.
pub fn graph_distance(a: &Graph, b: &Graph, w: &WeightedDistanceConfig) -> Result<f64, GraphError> {
    if a.node_vocab != b.node_vocab || a.edge_vocab != b.edge_vocab {
        return Err(GraphError::DimensionMismatch(a.node_vocab, a.edge_vocab, b.node_vocab, b.edge_vocab));
    }
    let n = a.node_count().max(b.node_count());

    let missing = a.edges().into_iter().filter(|&(u, v, _)| !b.has_edge(u, v)).count();
    let d_a = (missing as f64).sqrt();

    let mut x_sq = 0usize;
    for v in 0..n {
        let la = a.node_labels.get(v);
        let lb = b.node_labels.get(v);
        x_sq += match (la, lb) {
            (Some(x), Some(y)) if x == y => 0,
            (Some(_), Some(_)) => 2,
            (None, None) => 0,
            _ => 1,
        };
    }
    let d_x = (x_sq as f64).sqrt();

    let mut e_sq = 0usize;
    if a.edge_vocab > 0 {
        let mut slots: Vec<(usize, usize)> = a.edge_labels.keys().chain(b.edge_labels.keys()).copied().collect();
        slots.sort_unstable();
        slots.dedup();
        for (u, v) in slots {
            e_sq += match (a.edge_labels.get(&(u, v)), b.edge_labels.get(&(u, v))) {
                (Some(x), Some(y)) if x == y => 0,
                (Some(_), Some(_)) => 2,
                _ => 1,
            };
        }
    }
    let d_e = (e_sq as f64).sqrt();

    Ok(w.rho * d_a + w.beta * d_x + w.gamma * d_e)
}

/// Structural graph on `max(n_a, n_b)` nodes holding the edges present in
/// exactly one of `a` and `b`. Labels are dropped.
pub fn symmetric_difference(a: &Graph, b: &Graph) -> Graph {
    let n = a.node_count().max(b.node_count());
    let mut out = Graph::unlabeled(n, &[]).expect("single label vocabulary");
    for (u, v, _) in a.edges() {
        if !b.has_edge(u, v) {
            out.add_edge(u, v, None).expect("in range");
        }
    }
    for (u, v, _) in b.edges() {
        if !a.has_edge(u, v) {
            out.add_edge(u, v, None).expect("in range");
        }
    }
    out
}

/// Number of connected components among nodes with at least one edge.
/// An edgeless graph counts as one component.
pub fn connected_components(g: &Graph) -> usize {
    let n = g.node_count();
    let mut seen = vec![false; n];
    let mut components = 0;
    for start in 0..n {
        if seen[start] || g.degree(start) == 0 {
            continue;
        }
        components += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for &v in g.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    components.max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn path(n: usize) -> Graph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::unlabeled(n, &edges).unwrap()
    }

    fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Graph {
        let mut g = Graph::unlabeled(n, &[]).unwrap();
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
    fn rejects_bad_construction() {
        assert!(matches!(Graph::new(vec![2], 2, 0), Err(GraphError::NodeLabelOutOfRange { .. })));
        let mut g = Graph::unlabeled(2, &[]).unwrap();
        assert_eq!(g.add_edge(0, 0, None), Err(GraphError::SelfLoop(0)));
        assert!(g.add_edge(0, 5, None).is_err());
        let mut labeled = Graph::new(vec![0, 0], 1, 2).unwrap();
        assert_eq!(labeled.add_edge(0, 1, None), Err(GraphError::MissingEdgeLabel(0, 1)));
        assert!(labeled.add_edge(0, 1, Some(2)).is_err());
        labeled.add_edge(0, 1, Some(1)).unwrap();
        assert_eq!(labeled.edge_label(1, 0), Some(1));
        labeled.validate().unwrap();
    }

    #[test]
    fn matrices_are_symmetric_one_hot() {
        let g = Graph::from_edges(vec![0, 2, 1], 3, 2, &[(0, 1, Some(1)), (1, 2, Some(0))]).unwrap();
        let a = g.adjacency_matrix();
        for i in 0..3 {
            assert_eq!(a[i * 3 + i], 0.0);
            for j in 0..3 {
                assert_eq!(a[i * 3 + j], a[j * 3 + i]);
            }
        }
        let x = g.node_attr_matrix();
        for row in x.chunks(3) {
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
        let e = g.edge_attr_channels();
        assert_eq!(e[1][1], 1.0);
        assert_eq!(e[0][1 * 3 + 2], 1.0);
        assert_eq!(e[0][2 * 3 + 1], 1.0);
    }

    #[test]
    fn distance_identity_is_zero() {
        let g = Graph::from_edges(vec![0, 1, 1], 2, 2, &[(0, 1, Some(0)), (1, 2, Some(1))]).unwrap();
        for w in [
            WeightedDistanceConfig::default(),
            WeightedDistanceConfig { rho: 3.0, beta: 0.0, gamma: 0.5 },
        ] {
            assert_eq!(graph_distance(&g, &g, &w).unwrap(), 0.0);
        }
    }

    #[test]
    fn distance_single_missing_edge_is_one() {
        let a = path(4);
        let mut b = path(4);
        b.remove_edge(2, 3);
        let w = WeightedDistanceConfig::default();
        assert_eq!(graph_distance(&a, &b, &w).unwrap(), 1.0);
        // directed: b has no edge missing from a
        assert_eq!(graph_distance(&b, &a, &w).unwrap(), 0.0);
    }

    #[test]
    fn distance_flipped_label_is_sqrt_two() {
        let a = Graph::from_edges(vec![0, 0, 1], 2, 0, &[(0, 1, None), (1, 2, None)]).unwrap();
        let mut b = a.clone();
        b.set_node_label(0, 1).unwrap();
        let w = WeightedDistanceConfig { rho: 1.0, beta: 2.5, gamma: 1.0 };
        let d = graph_distance(&a, &b, &w).unwrap();
        assert!((d - 2.5 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn distance_pads_smaller_graph() {
        let a = path(3);
        let mut b = path(3);
        let extra = b.add_node(0).unwrap();
        b.add_edge(extra, 0, None).unwrap();
        let w = WeightedDistanceConfig::default();
        // one extra node row (d_X^2 = 1); a misses nothing from b's view
        assert_eq!(graph_distance(&a, &b, &w).unwrap(), 1.0);
        // b's edge to the extra node is absent in a: d_A = 1, d_X = 1
        assert_eq!(graph_distance(&b, &a, &w).unwrap(), 2.0);
    }

    #[test]
    fn distance_edge_attrs() {
        let a = Graph::from_edges(vec![0, 0, 0], 1, 2, &[(0, 1, Some(0)), (1, 2, Some(0))]).unwrap();
        let mut b = a.clone();
        b.add_edge(1, 2, Some(1)).unwrap();
        b.add_edge(0, 2, Some(1)).unwrap();
        let w = WeightedDistanceConfig { rho: 0.0, beta: 0.0, gamma: 1.0 };
        // slot (1,2) differs in both channels (2), slot (0,2) only in b (1)
        assert!((graph_distance(&a, &b, &w).unwrap() - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn distance_rejects_vocab_mismatch() {
        let a = Graph::new(vec![0], 1, 0).unwrap();
        let b = Graph::new(vec![0], 2, 0).unwrap();
        assert!(matches!(
            graph_distance(&a, &b, &WeightedDistanceConfig::default()),
            Err(GraphError::DimensionMismatch(..))
        ));
    }

    #[test]
    fn weights_validation() {
        assert!(WeightedDistanceConfig::default().validate().is_ok());
        assert!(WeightedDistanceConfig { rho: 0.0, beta: 0.0, gamma: 0.0 }.validate().is_err());
        assert!(WeightedDistanceConfig { rho: -1.0, beta: 1.0, gamma: 1.0 }.validate().is_err());
    }

    #[test]
    fn symmetric_difference_cases() {
        let g = path(5);
        let sdg = symmetric_difference(&g, &g);
        assert_eq!(sdg.edge_count(), 0);
        assert_eq!(connected_components(&sdg), 1);

        let mut h = g.clone();
        h.add_edge(0, 4, None).unwrap();
        let sdg = symmetric_difference(&g, &h);
        assert_eq!(sdg.edges(), vec![(0, 4, 0)]);
    }

    #[test]
    fn symmetric_difference_matches_xor_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = random_graph(&mut rng, 8, 0.4);
            let b = random_graph(&mut rng, 8, 0.4);
            let sdg = symmetric_difference(&a, &b);
            for u in 0..8 {
                for v in 0..8 {
                    if u != v {
                        assert_eq!(sdg.has_edge(u, v), a.has_edge(u, v) ^ b.has_edge(u, v));
                    }
                }
            }
            assert_eq!(sdg, symmetric_difference(&b, &a));
        }
    }

    #[test]
    fn component_counts() {
        let triangle = Graph::unlabeled(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(connected_components(&triangle), 1);
        let two = Graph::unlabeled(4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(connected_components(&two), 2);
        // isolated nodes are ignored
        let sparse = Graph::unlabeled(6, &[(0, 1), (4, 5)]).unwrap();
        assert_eq!(connected_components(&sparse), 2);
    }

    fn union_find_components(g: &Graph) -> usize {
        let n = g.node_count();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for (u, v, _) in g.edges() {
            let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
            parent[ru] = rv;
        }
        let mut roots: Vec<usize> = (0..n).filter(|&v| g.degree(v) > 0).map(|v| find(&mut parent, v)).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len().max(1)
    }

    #[test]
    fn components_match_union_find() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let p = rng.random_range(0.05..0.3);
            let g = random_graph(&mut rng, 12, p);
            assert_eq!(connected_components(&g), union_find_components(&g));
        }
    }

    #[test]
    fn permutation_and_induced_subgraph() {
        let g = Graph::from_edges(vec![0, 1, 2], 3, 0, &[(0, 1, None), (1, 2, None)]).unwrap();
        let p = g.permuted(&[2, 0, 1]);
        assert_eq!(p.node_labels(), &[1, 2, 0]);
        assert!(p.has_edge(2, 0) && p.has_edge(0, 1) && !p.has_edge(2, 1));
        let sub = g.induced_subgraph(&[2, 1]);
        assert_eq!(sub.node_labels(), &[2, 1]);
        assert!(sub.has_edge(0, 1));
        assert!(g.is_connected());
        assert!(!Graph::unlabeled(2, &[]).unwrap().is_connected());
    }
}
