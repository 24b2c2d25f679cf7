//! Frequent subgraph mining and significant-pattern selection.

mod dfs_code;
mod gspan;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;

pub use dfs_code::{is_min_code, min_dfs_code, DfsCode, DfsEdge};
pub use gspan::{mine_frequent, mine_graphs};

pub const PATTERN_DUMP_FORMAT: &str = "gce-patterns";
pub const PATTERN_DUMP_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MinerError {
    #[error("tau must lie in (0, 1], got {0}")]
    InvalidTau(f64),
    #[error("node bounds must satisfy 3 <= min_nodes <= max_nodes, got {min}..={max}")]
    InvalidNodeBounds { min: usize, max: usize },
    #[error("candidate budget must be at least 1")]
    InvalidBudget,
    #[error("pattern dump: {0}")]
    Dump(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    TopAr,
    GreedyCover,
}

impl std::str::FromStr for SelectionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "top_ar" => Ok(SelectionMode::TopAr),
            "greedy_cover" => Ok(SelectionMode::GreedyCover),
            other => Err(format!("unknown selection mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinerConfig {
    pub tau: f64,
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Number of significant patterns kept for counterfactual training.
    pub budget: usize,
    pub selection_mode: SelectionMode,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig { tau: 0.1, min_nodes: 3, max_nodes: 20, budget: 20, selection_mode: SelectionMode::TopAr }
    }
}

impl MinerConfig {
    pub fn validate(&self) -> Result<(), MinerError> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(MinerError::InvalidTau(self.tau));
        }
        if self.min_nodes < 3 || self.min_nodes > self.max_nodes {
            return Err(MinerError::InvalidNodeBounds { min: self.min_nodes, max: self.max_nodes });
        }
        if self.budget == 0 {
            return Err(MinerError::InvalidBudget);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequentPattern {
    pub dfs_code: DfsCode,
    pub graph: Graph,
    pub appearance_rate: f64,
    pub support_ids: Vec<usize>,
}

/// Picks `k` patterns. `TopAr` keeps the first `k` of an AR-sorted list;
/// `GreedyCover` repeatedly takes the pattern covering the most input graphs
/// not yet covered (earliest pattern on ties) until `k` are chosen.
pub fn select_significant(
    patterns: &[FrequentPattern],
    k: usize,
    mode: SelectionMode,
) -> Result<Vec<FrequentPattern>, MinerError> {
    if k == 0 {
        return Err(MinerError::InvalidBudget);
    }
    match mode {
        SelectionMode::TopAr => Ok(patterns.iter().take(k).cloned().collect()),
        SelectionMode::GreedyCover => {
            let universe = patterns.iter().flat_map(|p| p.support_ids.iter().copied()).max().map_or(0, |m| m + 1);
            let mut covered = vec![false; universe];
            let mut taken = vec![false; patterns.len()];
            let mut out = Vec::new();
            while out.len() < k.min(patterns.len()) {
                let mut best: Option<(usize, usize)> = None;
                for (i, p) in patterns.iter().enumerate() {
                    if taken[i] {
                        continue;
                    }
                    let gain = p.support_ids.iter().filter(|&&g| !covered[g]).count();
                    if best.is_none_or(|(_, b)| gain > b) {
                        best = Some((i, gain));
                    }
                }
                let (i, _) = best.expect("an untaken pattern remains");
                taken[i] = true;
                for &g in &patterns[i].support_ids {
                    covered[g] = true;
                }
                out.push(patterns[i].clone());
            }
            Ok(out)
        }
    }
}

#[derive(Serialize, Deserialize)]
struct DumpHeader {
    format: String,
    version: u32,
    node_vocab: usize,
    edge_vocab: usize,
}

#[derive(Serialize, Deserialize)]
struct DumpRecord {
    dfs_code: DfsCode,
    appearance_rate: f64,
    support_ids: Vec<usize>,
}

/// Writes patterns as JSON lines after a header line.
pub fn write_patterns<W: Write>(
    mut w: W,
    patterns: &[FrequentPattern],
    node_vocab: usize,
    edge_vocab: usize,
) -> Result<(), MinerError> {
    let header = DumpHeader { format: PATTERN_DUMP_FORMAT.into(), version: PATTERN_DUMP_VERSION, node_vocab, edge_vocab };
    let line = |v: serde_json::Result<String>| v.map_err(|e| MinerError::Dump(e.to_string()));
    writeln!(w, "{}", line(serde_json::to_string(&header))?)?;
    for p in patterns {
        let rec = DumpRecord {
            dfs_code: p.dfs_code.clone(),
            appearance_rate: p.appearance_rate,
            support_ids: p.support_ids.clone(),
        };
        writeln!(w, "{}", line(serde_json::to_string(&rec))?)?;
    }
    Ok(())
}

/// Reads a dump produced by [`write_patterns`], rebuilding pattern graphs.
pub fn read_patterns<R: BufRead>(r: R) -> Result<Vec<FrequentPattern>, MinerError> {
    let mut lines = r.lines();
    let header_line = lines.next().ok_or_else(|| MinerError::Dump("empty file".into()))??;
    let header: DumpHeader =
        serde_json::from_str(&header_line).map_err(|e| MinerError::Dump(format!("header: {e}")))?;
    if header.format != PATTERN_DUMP_FORMAT || header.version != PATTERN_DUMP_VERSION {
        return Err(MinerError::Dump(format!(
            "unsupported format {} v{} (expected {PATTERN_DUMP_FORMAT} v{PATTERN_DUMP_VERSION})",
            header.format, header.version
        )));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DumpRecord =
            serde_json::from_str(&line).map_err(|e| MinerError::Dump(format!("record {}: {e}", i + 1)))?;
        if rec.dfs_code.is_empty() {
            return Err(MinerError::Dump(format!("record {}: empty DFS code", i + 1)));
        }
        let graph = rec.dfs_code.to_graph(header.node_vocab, header.edge_vocab);
        out.push(FrequentPattern {
            dfs_code: rec.dfs_code,
            graph,
            appearance_rate: rec.appearance_rate,
            support_ids: rec.support_ids,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphDataset;
    use crate::matcher::contains;

    fn dataset(graphs: Vec<Graph>) -> GraphDataset {
        let n = graphs.len();
        let l = graphs.first().map_or(1, |g| g.node_vocab());
        GraphDataset {
            name: "t".into(),
            graphs,
            labels: vec![0; n],
            node_vocab: (0..l).map(|i| i.to_string()).collect(),
            edge_vocab: Vec::new(),
        }
    }

    fn cfg(tau: f64, min: usize, max: usize) -> MinerConfig {
        MinerConfig { tau, min_nodes: min, max_nodes: max, ..MinerConfig::default() }
    }

    #[test]
    fn identical_triangles() {
        let tri = Graph::from_edges(vec![0, 1, 1], 2, 0, &[(0, 1, None), (1, 2, None), (0, 2, None)]).unwrap();
        let ds = dataset(vec![tri.clone(), tri.clone(), tri.clone()]);
        let pats = mine_frequent(&ds, &cfg(1.0, 3, 3)).unwrap();
        // the triangle plus its two distinct 3-node paths (1-0-1 and 0-1-1)
        assert_eq!(pats.len(), 3);
        assert!(pats.iter().all(|p| p.appearance_rate == 1.0 && p.support_ids == vec![0, 1, 2]));
        assert!(pats.iter().any(|p| p.graph.edge_count() == 3));
        for p in &pats {
            assert_eq!(min_dfs_code(&p.graph), p.dfs_code);
            assert!(contains(&p.graph, &tri));
        }
    }

    #[test]
    fn no_common_pattern() {
        let path = Graph::unlabeled(3, &[(0, 1), (1, 2)]).unwrap();
        let edge = Graph::unlabeled(3, &[(0, 1)]).unwrap();
        let ds = dataset(vec![path, edge]);
        assert!(mine_frequent(&ds, &cfg(1.0, 3, 20)).unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_config() {
        let ds = dataset(vec![]);
        assert!(matches!(mine_frequent(&ds, &cfg(0.0, 3, 5)), Err(MinerError::InvalidTau(_))));
        assert!(matches!(mine_frequent(&ds, &cfg(1.5, 3, 5)), Err(MinerError::InvalidTau(_))));
        assert!(matches!(mine_frequent(&ds, &cfg(0.5, 2, 5)), Err(MinerError::InvalidNodeBounds { .. })));
        assert!(matches!(mine_frequent(&ds, &cfg(0.5, 6, 5)), Err(MinerError::InvalidNodeBounds { .. })));
    }

    fn pattern(support: Vec<usize>, tag: usize) -> FrequentPattern {
        let g = Graph::unlabeled(tag + 3, &(0..tag + 2).map(|i| (i, i + 1)).collect::<Vec<_>>()).unwrap();
        FrequentPattern { dfs_code: min_dfs_code(&g), graph: g, appearance_rate: 0.0, support_ids: support }
    }

    #[test]
    fn greedy_cover_defers_redundant_pattern() {
        let pats = vec![pattern(vec![0, 1], 0), pattern(vec![0, 1], 1), pattern(vec![2], 2)];
        let sel = select_significant(&pats, 2, SelectionMode::GreedyCover).unwrap();
        assert_eq!(sel[0].support_ids, vec![0, 1]);
        assert_eq!(sel[1].support_ids, vec![2]);
        let all = select_significant(&pats, 10, SelectionMode::GreedyCover).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(all[2].dfs_code, pats[1].dfs_code);
        assert!(select_significant(&pats, 0, SelectionMode::TopAr).is_err());
        assert_eq!(select_significant(&pats, 5, SelectionMode::TopAr).unwrap().len(), 3);
    }

    #[test]
    fn dump_round_trip() {
        let tri = Graph::unlabeled(4, &[(0, 1), (1, 2), (0, 2), (2, 3)]).unwrap();
        let ds = dataset(vec![tri.clone(), tri]);
        let pats = mine_frequent(&ds, &cfg(0.5, 3, 4)).unwrap();
        assert!(!pats.is_empty());
        let mut buf = Vec::new();
        write_patterns(&mut buf, &pats, 1, 0).unwrap();
        let back = read_patterns(buf.as_slice()).unwrap();
        assert_eq!(back, pats);

        let bad = b"{\"format\":\"gce-patterns\",\"version\":99,\"node_vocab\":1,\"edge_vocab\":0}\n";
        assert!(read_patterns(&bad[..]).is_err());
    }
}
