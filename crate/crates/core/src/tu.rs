//! Reader and writer for the TU flat-file dataset format.
//!
//! A dataset `NAME` lives in one directory:
//!
//! ```text
//! NAME_A.txt                "i, j" per line, 1-based global node ids, both directions
//! NAME_graph_indicator.txt  1-based graph id per node
//! NAME_graph_labels.txt     one integer class per graph
//! NAME_node_labels.txt      (optional) one integer per node
//! NAME_edge_labels.txt      (optional) one integer per line of NAME_A.txt
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::graph::{Graph, GraphDataset, GraphError};

#[derive(Debug, Error)]
pub enum TuError {
    #[error("missing dataset file {0}")]
    MissingFile(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {msg}")]
    Parse { file: PathBuf, line: usize, msg: String },
    #[error("node {node} referenced by edge line {line} lies outside graph {graph}")]
    NodeOutsidePartition { node: usize, graph: usize, line: usize },
    #[error("graph labels {0:?} are not binary; supply a label map")]
    NonBinaryLabels(Vec<i64>),
    #[error("raw label {0} missing from label map")]
    UnmappedLabel(i64),
    #[error("inconsistent file lengths: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TuError + '_ {
    move |source| TuError::Io { path: path.to_path_buf(), source }
}

/// Map from raw dataset class labels to the binary convention
/// (0 = undesired, 1 = desired).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelMap(pub BTreeMap<i64, usize>);

impl LabelMap {
    /// Parses the two-column `raw_label {0|1}` text form.
    pub fn parse(text: &str, file: &Path) -> Result<Self, TuError> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |msg: &str| TuError::Parse { file: file.to_path_buf(), line: i + 1, msg: msg.to_string() };
            if fields.len() != 2 {
                return Err(bad("expected `raw_label class`"));
            }
            let raw: i64 = fields[0].parse().map_err(|_| bad("raw label is not an integer"))?;
            let class: usize = match fields[1] {
                "0" => 0,
                "1" => 1,
                _ => return Err(bad("mapped class must be 0 or 1")),
            };
            map.insert(raw, class);
        }
        Ok(LabelMap(map))
    }

    pub fn load(path: &Path) -> Result<Self, TuError> {
        if !path.exists() {
            return Err(TuError::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text, path)
    }
}

fn file_path(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

fn read_required(path: &Path) -> Result<String, TuError> {
    if !path.exists() {
        return Err(TuError::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(io_err(path))
}

fn read_optional(path: &Path) -> Result<Option<String>, TuError> {
    if path.exists() {
        fs::read_to_string(path).map(Some).map_err(io_err(path))
    } else {
        Ok(None)
    }
}

/// Non-empty lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty())
}

fn parse_int_column(text: &str, file: &Path) -> Result<Vec<i64>, TuError> {
    data_lines(text)
        .map(|(line, l)| {
            l.parse::<i64>().map_err(|_| TuError::Parse {
                file: file.to_path_buf(),
                line,
                msg: format!("expected an integer, got `{l}`"),
            })
        })
        .collect()
}

/// Builds a sorted vocabulary and the index of each raw value in it.
fn encode(raw: &[i64]) -> (Vec<String>, Vec<usize>) {
    let vocab: Vec<i64> = raw.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let index: BTreeMap<i64, usize> = vocab.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    (vocab.iter().map(i64::to_string).collect(), raw.iter().map(|v| index[v]).collect())
}

/// Reads dataset `name` from `dir`. Raw graph labels must already be binary
/// (`{0, 1}`) unless `label_map` is supplied.
pub fn parse_tu_dataset(dir: &Path, name: &str, label_map: Option<&LabelMap>) -> Result<GraphDataset, TuError> {
    let a_path = file_path(dir, name, "A");
    let ind_path = file_path(dir, name, "graph_indicator");
    let gl_path = file_path(dir, name, "graph_labels");
    let nl_path = file_path(dir, name, "node_labels");
    let el_path = file_path(dir, name, "edge_labels");

    let a_text = read_required(&a_path)?;
    let ind_text = read_required(&ind_path)?;
    let gl_text = read_required(&gl_path)?;

    let indicator = parse_int_column(&ind_text, &ind_path)?;
    let raw_graph_labels = parse_int_column(&gl_text, &gl_path)?;
    let graph_count = raw_graph_labels.len();

    // node -> (graph, local index)
    let mut local = Vec::with_capacity(indicator.len());
    let mut sizes = vec![0usize; graph_count];
    for (node, &gid) in indicator.iter().enumerate() {
        if gid < 1 || gid as usize > graph_count {
            return Err(TuError::Parse {
                file: ind_path.clone(),
                line: node + 1,
                msg: format!("graph id {gid} outside 1..={graph_count}"),
            });
        }
        let g = gid as usize - 1;
        local.push((g, sizes[g]));
        sizes[g] += 1;
    }

    let node_labels = match read_optional(&nl_path)? {
        Some(text) => {
            let raw = parse_int_column(&text, &nl_path)?;
            if raw.len() != indicator.len() {
                return Err(TuError::Inconsistent(format!(
                    "{} node labels for {} nodes",
                    raw.len(),
                    indicator.len()
                )));
            }
            Some(encode(&raw))
        }
        None => None,
    };
    let (node_vocab, node_index) = node_labels.unwrap_or_else(|| (vec!["0".to_string()], vec![0; indicator.len()]));

    let mut edges = Vec::new();
    for (line, l) in data_lines(&a_text) {
        let bad = |msg: String| TuError::Parse { file: a_path.clone(), line, msg };
        let mut parts = l.split(',').map(str::trim);
        let (Some(i), Some(j), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad(format!("expected `i, j`, got `{l}`")));
        };
        let i: usize = i.parse().map_err(|_| bad(format!("bad node id `{i}`")))?;
        let j: usize = j.parse().map_err(|_| bad(format!("bad node id `{j}`")))?;
        for v in [i, j] {
            if v < 1 || v > indicator.len() {
                return Err(bad(format!("node id {v} outside 1..={}", indicator.len())));
            }
        }
        edges.push((line, i - 1, j - 1));
    }

    let edge_labels = match read_optional(&el_path)? {
        Some(text) => {
            let raw = parse_int_column(&text, &el_path)?;
            if raw.len() != edges.len() {
                return Err(TuError::Inconsistent(format!("{} edge labels for {} edges", raw.len(), edges.len())));
            }
            Some(encode(&raw))
        }
        None => None,
    };
    let (edge_vocab, edge_index) = edge_labels.unwrap_or_default();

    let mut graphs: Vec<Graph> = Vec::with_capacity(graph_count);
    let mut per_graph_labels: Vec<Vec<usize>> = sizes.iter().map(|&n| Vec::with_capacity(n)).collect();
    for (node, &(g, _)) in local.iter().enumerate() {
        per_graph_labels[g].push(node_index[node]);
    }
    for labels in per_graph_labels {
        graphs.push(Graph::new(labels, node_vocab.len(), edge_vocab.len())?);
    }
    for (k, &(line, u, v)) in edges.iter().enumerate() {
        let (gu, lu) = local[u];
        let (gv, lv) = local[v];
        if gu != gv {
            return Err(TuError::NodeOutsidePartition { node: v + 1, graph: gu + 1, line });
        }
        if lu == lv {
            return Err(TuError::Parse { file: a_path.clone(), line, msg: "self loop".into() });
        }
        let label = if edge_vocab.is_empty() { None } else { Some(edge_index[k]) };
        graphs[gu].add_edge(lu, lv, label)?;
    }

    let labels = map_graph_labels(&raw_graph_labels, label_map)?;

    Ok(GraphDataset { name: name.to_string(), graphs, labels, node_vocab, edge_vocab })
}

fn map_graph_labels(raw: &[i64], label_map: Option<&LabelMap>) -> Result<Vec<usize>, TuError> {
    match label_map {
        Some(map) => raw.iter().map(|r| map.0.get(r).copied().ok_or(TuError::UnmappedLabel(*r))).collect(),
        None => {
            let distinct: BTreeSet<i64> = raw.iter().copied().collect();
            if distinct.iter().all(|&v| v == 0 || v == 1) {
                Ok(raw.iter().map(|&v| v as usize).collect())
            } else {
                Err(TuError::NonBinaryLabels(distinct.into_iter().collect()))
            }
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, TuError> {
    fs::File::create(path).map(BufWriter::new).map_err(io_err(path))
}

/// Writes `dataset` under `dir` using `dataset.name` as the file prefix.
/// The edge-label file is only written for labeled-edge datasets. Node and
/// edge vocabulary entries are written verbatim and must be integers for
/// the output to parse back.
pub fn write_tu_dataset(dataset: &GraphDataset, dir: &Path) -> Result<(), TuError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let name = &dataset.name;
    let paths = [
        file_path(dir, name, "A"),
        file_path(dir, name, "graph_indicator"),
        file_path(dir, name, "graph_labels"),
        file_path(dir, name, "node_labels"),
    ];
    let mut a = create(&paths[0])?;
    let mut ind = create(&paths[1])?;
    let mut gl = create(&paths[2])?;
    let mut nl = create(&paths[3])?;
    let labeled_edges = !dataset.edge_vocab.is_empty();
    let el_path = file_path(dir, name, "edge_labels");
    let mut el = if labeled_edges { Some(create(&el_path)?) } else { None };

    let mut offset = 0usize;
    for (gid, (g, &label)) in dataset.graphs.iter().zip(&dataset.labels).enumerate() {
        writeln!(gl, "{label}").map_err(io_err(&paths[2]))?;
        for v in 0..g.node_count() {
            writeln!(ind, "{}", gid + 1).map_err(io_err(&paths[1]))?;
            writeln!(nl, "{}", dataset.node_vocab[g.node_label(v)]).map_err(io_err(&paths[3]))?;
        }
        for u in 0..g.node_count() {
            for &v in g.neighbors(u) {
                writeln!(a, "{}, {}", offset + u + 1, offset + v + 1).map_err(io_err(&paths[0]))?;
                if let Some(el) = el.as_mut() {
                    let l = g.edge_label(u, v).expect("neighbor implies edge");
                    writeln!(el, "{}", dataset.edge_vocab[l]).map_err(io_err(&el_path))?;
                }
            }
        }
        offset += g.node_count();
    }
    for (w, p) in [&mut a, &mut ind, &mut gl, &mut nl].into_iter().zip(&paths) {
        w.flush().map_err(io_err(p))?;
    }
    if let Some(mut el) = el {
        el.flush().map_err(io_err(&el_path))?;
    }
    Ok(())
}
