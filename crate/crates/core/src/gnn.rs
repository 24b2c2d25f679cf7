//! Two-layer message-passing graph classifier with max pooling.
//!
//! Node inputs are `[one-hot label | weighted degree | per-edge-label
//! weighted degree]`, all computed from the (possibly soft) adjacency so the
//! classifier stays differentiable with respect to graph structure.

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{relative_error, sgd_step, uniform_init, Adam, Mat, Tape, Var};
use crate::graph::{Graph, GraphDataset};

pub const HIDDEN: usize = 32;
pub const DESIRED_CLASS: usize = 1;
pub const CHECKPOINT_FORMAT: &str = "gce-classifier";
pub const CHECKPOINT_VERSION: u32 = 1;
const ATTENTION_SLOPE: f64 = 0.2;

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("split {0:?} leaves an empty partition for {1} graphs")]
    EmptySplit((f64, f64, f64), usize),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Gcn,
    Gat,
}

impl std::str::FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gcn" => Ok(Architecture::Gcn),
            "gat" => Ok(Architecture::Gat),
            other => Err(format!("unknown architecture `{other}`")),
        }
    }
}

/// Anything that maps a graph to a class in `{0, 1}`.
pub trait Classifier: Sync {
    fn predict(&self, g: &Graph) -> usize;
}

impl<F: Fn(&Graph) -> usize + Sync> Classifier for F {
    fn predict(&self, g: &Graph) -> usize {
        self(g)
    }
}

/// Dense graph with entries in `[0, 1]`; hard graphs are the 0/1 case.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftGraph {
    pub adjacency: Mat,
    pub node_attrs: Mat,
    /// One n×n channel per edge label (empty when the graph has none).
    pub edge_attrs: Vec<Mat>,
}

impl SoftGraph {
    pub fn from_graph(g: &Graph) -> Self {
        let n = g.node_count();
        let adjacency = Array2::from_shape_vec((n, n), g.adjacency_matrix()).expect("n×n adjacency");
        let node_attrs = Array2::from_shape_vec((n, g.node_vocab()), g.node_attr_matrix()).expect("n×l attributes");
        let edge_attrs = g
            .edge_attr_channels()
            .into_iter()
            .map(|c| Array2::from_shape_vec((n, n), c).expect("n×n channel"))
            .collect();
        SoftGraph { adjacency, node_attrs, edge_attrs }
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.nrows()
    }
}

/// Tape handles for a graph fed to [`ClassifierModel::forward_tape`].
#[derive(Debug, Clone)]
pub struct GraphVars {
    pub adjacency: Var,
    pub node_attrs: Var,
    pub edge_attrs: Vec<Var>,
}

impl GraphVars {
    pub fn constant(tape: &mut Tape, g: &SoftGraph) -> Self {
        GraphVars {
            adjacency: tape.constant(g.adjacency.clone()),
            node_attrs: tape.constant(g.node_attrs.clone()),
            edge_attrs: g.edge_attrs.iter().map(|c| tape.constant(c.clone())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub architecture: Architecture,
    pub node_vocab: usize,
    pub edge_vocab: usize,
    pub hidden: usize,
    /// Flat parameter list; see [`ClassifierModel::layout`].
    pub params: Vec<Mat>,
}

// parameter slots
const W1: usize = 0;
const B1: usize = 1;
const W2: usize = 2;
const B2: usize = 3;
const HEAD_W: usize = 4;
const HEAD_B: usize = 5;
const ATT: usize = 6;

impl ClassifierModel {
    pub fn new(architecture: Architecture, node_vocab: usize, edge_vocab: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = HIDDEN;
        let input = node_vocab + 1 + edge_vocab;
        let mut params = vec![
            uniform_init(input, h, input, &mut rng),
            uniform_init(1, h, input, &mut rng),
            uniform_init(h, h, h, &mut rng),
            uniform_init(1, h, h, &mut rng),
            uniform_init(h, 2, h, &mut rng),
            uniform_init(1, 2, h, &mut rng),
        ];
        if architecture == Architecture::Gat {
            for _ in 0..2 {
                params.push(uniform_init(h, 1, h, &mut rng));
                params.push(uniform_init(h, 1, h, &mut rng));
                if edge_vocab > 0 {
                    params.push(uniform_init(1, edge_vocab, edge_vocab, &mut rng));
                }
            }
        }
        ClassifierModel { architecture, node_vocab, edge_vocab, hidden: h, params }
    }

    pub fn input_dim(&self) -> usize {
        self.node_vocab + 1 + self.edge_vocab
    }

    /// Names of the parameter slots in order.
    pub fn layout(&self) -> Vec<&'static str> {
        let mut names = vec!["layer1.weight", "layer1.bias", "layer2.weight", "layer2.bias", "head.weight", "head.bias"];
        if self.architecture == Architecture::Gat {
            for layer in [["layer1.att_src", "layer1.att_dst", "layer1.att_edge"], ["layer2.att_src", "layer2.att_dst", "layer2.att_edge"]] {
                names.extend_from_slice(&layer[..2]);
                if self.edge_vocab > 0 {
                    names.push(layer[2]);
                }
            }
        }
        names
    }

    fn check_dims(&self, g: &SoftGraph) -> Result<(), GnnError> {
        let n = g.node_count();
        if n == 0 {
            return Err(GnnError::Dimension("graph has no nodes".into()));
        }
        if g.adjacency.ncols() != n || g.node_attrs.nrows() != n {
            return Err(GnnError::Dimension(format!(
                "adjacency {:?} vs attributes {:?}",
                g.adjacency.dim(),
                g.node_attrs.dim()
            )));
        }
        if g.node_attrs.ncols() != self.node_vocab {
            return Err(GnnError::Dimension(format!(
                "model expects {} node labels, graph has {}",
                self.node_vocab,
                g.node_attrs.ncols()
            )));
        }
        if g.edge_attrs.len() != self.edge_vocab {
            return Err(GnnError::Dimension(format!(
                "model expects {} edge labels, graph has {}",
                self.edge_vocab,
                g.edge_attrs.len()
            )));
        }
        Ok(())
    }

    /// Records the forward pass; returns 1×2 logits. `p` are the parameter
    /// handles in [`ClassifierModel::layout`] order.
    pub fn forward_tape(&self, tape: &mut Tape, p: &[Var], g: &GraphVars) -> Var {
        let n = tape.value(g.adjacency).nrows();
        let identity = tape.constant(Mat::eye(n));
        let with_loops = tape.add(g.adjacency, identity);

        let mut inputs = vec![g.node_attrs, tape.row_sum(g.adjacency)];
        for &channel in &g.edge_attrs {
            let weighted = tape.mul(g.adjacency, channel);
            inputs.push(tape.row_sum(weighted));
        }
        let x = tape.concat_cols(&inputs);

        let propagate: Box<dyn Fn(&mut Tape, Var, usize) -> Var> = match self.architecture {
            Architecture::Gcn => {
                let deg = tape.row_sum(with_loops);
                let dinv = tape.pow_const(deg, -0.5);
                let left = tape.scale_rows(with_loops, dinv);
                // symmetric input, so transposing swaps the scaled side
                let left_t = tape.transpose(left);
                let norm = tape.scale_rows(left_t, dinv);
                Box::new(move |t: &mut Tape, z: Var, _layer: usize| t.matmul(norm, z))
            }
            Architecture::Gat => {
                let per_layer = if self.edge_vocab > 0 { 3 } else { 2 };
                let edges = g.edge_attrs.clone();
                let p = p.to_vec();
                Box::new(move |t: &mut Tape, z: Var, layer: usize| {
                    let base = ATT + layer * per_layer;
                    let src = t.matmul(z, p[base]);
                    let dst = t.matmul(z, p[base + 1]);
                    let mut scores = t.outer_sum(src, dst);
                    if !edges.is_empty() {
                        let edge_term = t.lin_comb(&edges, p[base + 2]);
                        scores = t.add(scores, edge_term);
                    }
                    let scores = t.leaky_relu(scores, ATTENTION_SLOPE);
                    let att = t.weighted_softmax_rows(scores, with_loops);
                    t.matmul(att, z)
                })
            }
        };

        let z1 = tape.matmul(x, p[W1]);
        let m1 = propagate(tape, z1, 0);
        let m1 = tape.add_row(m1, p[B1]);
        let h1 = tape.relu(m1);
        let z2 = tape.matmul(h1, p[W2]);
        let m2 = propagate(tape, z2, 1);
        let m2 = tape.add_row(m2, p[B2]);
        let h2 = tape.relu(m2);
        let pooled = tape.col_max(h2);
        let logits = tape.matmul(pooled, p[HEAD_W]);
        tape.add_row(logits, p[HEAD_B])
    }

    fn params_on(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params.iter().map(|m| if trainable { tape.param(m.clone()) } else { tape.constant(m.clone()) }).collect()
    }

    pub fn forward_soft(&self, g: &SoftGraph) -> Result<[f64; 2], GnnError> {
        self.check_dims(g)?;
        let mut tape = Tape::new();
        let p = self.params_on(&mut tape, false);
        let vars = GraphVars::constant(&mut tape, g);
        let out = self.forward_tape(&mut tape, &p, &vars);
        let v = tape.value(out);
        Ok([v[[0, 0]], v[[0, 1]]])
    }

    pub fn forward(&self, g: &Graph) -> Result<[f64; 2], GnnError> {
        self.forward_soft(&SoftGraph::from_graph(g))
    }

    /// Argmax of the logits; ties go to class 0.
    pub fn try_predict(&self, g: &Graph) -> Result<usize, GnnError> {
        let [a, b] = self.forward(g)?;
        Ok(usize::from(b > a))
    }

    /// Mean cross-entropy of `graphs` and the parameter gradients of its sum.
    fn batch_gradient(&self, graphs: &[(&SoftGraph, usize)]) -> (f64, Vec<Mat>) {
        let per_graph: Vec<(f64, Vec<Mat>)> = graphs
            .par_iter()
            .map(|(g, y)| {
                let mut tape = Tape::new();
                let p = self.params_on(&mut tape, true);
                let vars = GraphVars::constant(&mut tape, g);
                let logits = self.forward_tape(&mut tape, &p, &vars);
                let loss = nll(&mut tape, logits, *y);
                let grads = tape.backward(loss);
                (tape.scalar(loss), p.iter().map(|v| grads.wrt(&tape, *v)).collect())
            })
            .collect();
        let scale = 1.0 / graphs.len() as f64;
        let mut total = 0.0;
        let mut acc: Vec<Mat> = self.params.iter().map(|m| Mat::zeros(m.raw_dim())).collect();
        for (loss, grads) in per_graph {
            total += loss;
            for (a, g) in acc.iter_mut().zip(grads) {
                a.scaled_add(scale, &g);
            }
        }
        (total * scale, acc)
    }

    pub fn save(&self, path: &Path) -> Result<(), GnnError> {
        let ck = Checkpoint { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, model: self.clone() };
        let text = serde_json::to_string(&ck).map_err(|e| GnnError::Checkpoint(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, GnnError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, GnnError> {
        let header: CheckpointHeader = serde_json::from_str(text).map_err(|e| GnnError::Checkpoint(e.to_string()))?;
        if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
            return Err(GnnError::Checkpoint(format!(
                "unsupported checkpoint {} v{} (expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION})",
                header.format, header.version
            )));
        }
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| GnnError::Checkpoint(e.to_string()))?;
        let model = ck.model;
        let fresh = ClassifierModel::new(model.architecture, model.node_vocab, model.edge_vocab, 0);
        let shapes_ok = model.hidden == HIDDEN
            && model.params.len() == fresh.params.len()
            && model.params.iter().zip(&fresh.params).all(|(a, b)| a.dim() == b.dim());
        if !shapes_ok {
            return Err(GnnError::Checkpoint("parameter shapes do not match the declared architecture".into()));
        }
        Ok(model)
    }
}

impl Classifier for ClassifierModel {
    fn predict(&self, g: &Graph) -> usize {
        self.try_predict(g).expect("graph dimensions match the classifier")
    }
}

/// Negative log-likelihood of class `y` under 1×2 `logits`.
pub fn nll(tape: &mut Tape, logits: Var, y: usize) -> Var {
    let log_probs = tape.log_softmax_rows(logits);
    let mut pick = Mat::zeros((1, 2));
    pick[[0, y]] = -1.0;
    let picked = tape.mul_const(log_probs, pick);
    tape.sum(picked)
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    model: ClassifierModel,
}

#[derive(Deserialize)]
struct CheckpointHeader {
    format: String,
    version: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(format!("unknown optimizer `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub architecture: Architecture,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub optimizer: Optimizer,
    /// Graphs per gradient step; 0 means full batch.
    pub batch_size: usize,
    pub split: (f64, f64, f64),
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            architecture: Architecture::Gcn,
            epochs: 600,
            learning_rate: 0.005,
            weight_decay: 0.0,
            optimizer: Optimizer::Adam,
            batch_size: 32,
            split: (0.5, 0.25, 0.25),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GnnError> {
        let (a, b, c) = self.split;
        if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) || ((a + b + c) - 1.0).abs() > 1e-9 {
            return Err(GnnError::Config(format!("split fractions {:?} must be in [0,1] and sum to 1", self.split)));
        }
        if !(self.learning_rate > 0.0) || self.weight_decay < 0.0 {
            return Err(GnnError::Config("learning rate must be positive and weight decay nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub best_epoch: usize,
    /// Mean training loss before any update, then after each epoch.
    pub loss_history: Vec<f64>,
    pub train_ids: Vec<usize>,
    pub val_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
}

/// Seeded shuffle split into train/val/test index lists.
pub fn split_indices(n: usize, split: (f64, f64, f64), seed: u64) -> Result<[Vec<usize>; 3], GnnError> {
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5911));
    let n_train = (n as f64 * split.0).round() as usize;
    let n_val = ((n as f64 * split.1).round() as usize).min(n - n_train.min(n));
    let n_train = n_train.min(n);
    let test = ids.split_off(n_train + n_val);
    let val = ids.split_off(n_train);
    let mut parts = [ids, val, test];
    for p in &mut parts {
        if p.is_empty() {
            return Err(GnnError::EmptySplit(split, n));
        }
        p.sort_unstable();
    }
    Ok(parts)
}

fn accuracy(model: &ClassifierModel, soft: &[SoftGraph], labels: &[usize], ids: &[usize]) -> f64 {
    let correct: usize = ids
        .par_iter()
        .map(|&i| {
            let [a, b] = model.forward_soft(&soft[i]).expect("dimensions checked before training");
            usize::from(usize::from(b > a) == labels[i])
        })
        .sum();
    correct as f64 / ids.len() as f64
}

/// Trains a classifier with cross-entropy, keeping the parameters with the
/// best validation accuracy (earliest epoch on ties).
pub fn train(dataset: &GraphDataset, cfg: &TrainConfig) -> Result<(ClassifierModel, TrainReport), GnnError> {
    cfg.validate()?;
    let [train_ids, val_ids, test_ids] = split_indices(dataset.len(), cfg.split, cfg.seed)?;
    let node_vocab = dataset.node_vocab.len().max(1);
    let edge_vocab = dataset.edge_vocab.len();
    let mut model = ClassifierModel::new(cfg.architecture, node_vocab, edge_vocab, cfg.seed);
    let soft: Vec<SoftGraph> = dataset.graphs.iter().map(SoftGraph::from_graph).collect();
    for g in &soft {
        model.check_dims(g)?;
    }
    let labels = &dataset.labels;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut adam = Adam::new(&model.params, cfg.learning_rate, cfg.weight_decay);
    let batch = if cfg.batch_size == 0 { train_ids.len() } else { cfg.batch_size };

    let full: Vec<(&SoftGraph, usize)> = train_ids.iter().map(|&i| (&soft[i], labels[i])).collect();
    let mut loss_history = vec![model.batch_gradient(&full).0];
    let mut best = (accuracy(&model, &soft, labels, &val_ids), 0, model.params.clone());
    let mut order = train_ids.clone();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let items: Vec<(&SoftGraph, usize)> = chunk.iter().map(|&i| (&soft[i], labels[i])).collect();
            let (loss, grads) = model.batch_gradient(&items);
            epoch_loss += loss * chunk.len() as f64;
            match cfg.optimizer {
                Optimizer::Adam => adam.step(&mut model.params, &grads),
                Optimizer::Sgd => sgd_step(&mut model.params, &grads, cfg.learning_rate, cfg.weight_decay),
            }
        }
        loss_history.push(epoch_loss / order.len() as f64);
        let val = accuracy(&model, &soft, labels, &val_ids);
        if val > best.0 {
            best = (val, epoch, model.params.clone());
        }
    }
    model.params = best.2;
    let report = TrainReport {
        train_accuracy: accuracy(&model, &soft, labels, &train_ids),
        val_accuracy: best.0,
        test_accuracy: accuracy(&model, &soft, labels, &test_ids),
        best_epoch: best.1,
        loss_history,
        train_ids,
        val_ids,
        test_ids,
    };
    Ok((model, report))
}

/// Largest relative error between the tape gradient of the class-1 logit
/// and central differences, over every upper-triangle adjacency entry and
/// every node-attribute entry of `g`.
pub fn gradient_check(model: &ClassifierModel, g: &SoftGraph, epsilon: f64) -> Result<f64, GnnError> {
    model.check_dims(g)?;
    let n = g.node_count();
    let upper: Vec<f64> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| g.adjacency[[i, j]]).collect();
    let logit = |upper: &[f64], attrs: &Mat, trainable: bool| {
        let mut tape = Tape::new();
        let p = model.params_on(&mut tape, false);
        let u = Mat::from_shape_vec((1, upper.len()), upper.to_vec()).expect("row vector");
        let (u, x) = if trainable {
            (tape.param(u), tape.param(attrs.clone()))
        } else {
            (tape.constant(u), tape.constant(attrs.clone()))
        };
        let adjacency = if n > 1 { tape.sym_from_upper(u) } else { tape.constant(Mat::zeros((1, 1))) };
        let edge_attrs = g.edge_attrs.iter().map(|c| tape.constant(c.clone())).collect();
        let vars = GraphVars { adjacency, node_attrs: x, edge_attrs };
        let out = model.forward_tape(&mut tape, &p, &vars);
        let pick = tape.mul_const(out, Mat::from_shape_vec((1, 2), vec![0.0, 1.0]).expect("1×2"));
        let s = tape.sum(pick);
        (tape, s, u, x)
    };
    let (tape, out, u, x) = logit(&upper, &g.node_attrs, true);
    let grads = tape.backward(out);
    let (du, dx) = (grads.wrt(&tape, u), grads.wrt(&tape, x));
    let eval = |upper: &[f64], attrs: &Mat| {
        let (t, s, _, _) = logit(upper, attrs, false);
        t.scalar(s)
    };

    let mut worst: f64 = 0.0;
    for k in 0..upper.len() {
        let (mut plus, mut minus) = (upper.clone(), upper.clone());
        plus[k] += epsilon;
        minus[k] -= epsilon;
        let numeric = (eval(&plus, &g.node_attrs) - eval(&minus, &g.node_attrs)) / (2.0 * epsilon);
        worst = worst.max(relative_error(du[[0, k]], numeric));
    }
    for idx in 0..g.node_attrs.len() {
        let (r, c) = (idx / g.node_attrs.ncols(), idx % g.node_attrs.ncols());
        let (mut plus, mut minus) = (g.node_attrs.clone(), g.node_attrs.clone());
        plus[[r, c]] += epsilon;
        minus[[r, c]] -= epsilon;
        let numeric = (eval(&upper, &plus) - eval(&upper, &minus)) / (2.0 * epsilon);
        worst = worst.max(relative_error(dx[[r, c]], numeric));
    }
    Ok(worst)
}
