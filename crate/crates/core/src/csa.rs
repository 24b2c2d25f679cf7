//! Conditional subgraph autoencoder: learns, per significant pattern, a
//! probabilistic counterfactual subgraph that pushes host graphs containing
//! the pattern into the desired class, then discretizes it into a CSM.

use std::io::{BufRead, Write};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{relative_error, uniform_init, Adam, Mat, Tape, Var};
use crate::gnn::{nll, ClassifierModel, GraphVars, SoftGraph, DESIRED_CLASS};
use crate::graph::{Graph, GraphDataset, GraphError, WeightedDistanceConfig};
use crate::matcher::{first_occurrence, MatchConfig, Occurrence};
use crate::miner::{DfsCode, FrequentPattern};

pub const CANDIDATE_DUMP_FORMAT: &str = "gce-candidates";
pub const CANDIDATE_DUMP_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CsaError {
    #[error("pattern {0} has no supporting host graphs")]
    EmptySupport(usize),
    #[error("no host graphs given")]
    EmptyHosts,
    #[error("occurrence maps outside the host: {0}")]
    BadOccurrence(String),
    #[error("pattern {0} does not occur in supporting graph {1}")]
    MissingOccurrence(usize, usize),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("candidate dump: {0}")]
    Dump(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsaConfig {
    pub latent_dim: usize,
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
    /// Extra node slots beyond the pattern's own nodes.
    pub extra_nodes: usize,
    pub dropout: f64,
    pub alpha: f64,
    pub distance: WeightedDistanceConfig,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for CsaConfig {
    fn default() -> Self {
        CsaConfig {
            latent_dim: 64,
            encoder_hidden: 32,
            decoder_hidden: 128,
            extra_nodes: 2,
            dropout: 0.5,
            alpha: 10.0,
            distance: WeightedDistanceConfig::default(),
            learning_rate: 0.01,
            epochs: 100,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl CsaConfig {
    pub fn validate(&self) -> Result<(), CsaError> {
        if self.latent_dim == 0 || self.encoder_hidden == 0 || self.decoder_hidden == 0 {
            return Err(CsaError::Config("layer sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(CsaError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.alpha < 0.0 || !(self.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(CsaError::Config("alpha must be >= 0, learning rate > 0, batch size >= 1".into()));
        }
        self.distance.validate()?;
        Ok(())
    }
}

/// Decoder output: soft adjacency, attribute rows and edge-label slots over
/// `base_nodes + extra_nodes` node slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilisticSubgraph {
    pub adjacency: Mat,
    pub node_attrs: Mat,
    /// One row per strict-upper-triangle slot (row-major), one column per
    /// edge label. Empty (zero columns) when there are no edge labels.
    pub edge_slots: Mat,
    pub base_nodes: usize,
    pub extra_nodes: usize,
}

impl ProbabilisticSubgraph {
    pub fn node_slots(&self) -> usize {
        self.base_nodes + self.extra_nodes
    }

    /// Exact 0/1 embedding of a graph with `extra` unused node slots.
    pub fn from_graph(g: &Graph, extra: usize) -> Self {
        let soft = SoftGraph::from_graph(g);
        let (n, size) = (g.node_count(), g.node_count() + extra);
        let mut adjacency = Mat::zeros((size, size));
        adjacency.slice_mut(ndarray::s![..n, ..n]).assign(&soft.adjacency);
        let mut node_attrs = Mat::zeros((size, g.node_vocab()));
        node_attrs.slice_mut(ndarray::s![..n, ..]).assign(&soft.node_attrs);
        for r in n..size {
            node_attrs[[r, 0]] = 1.0;
        }
        let m = g.edge_vocab();
        let mut edge_slots = Mat::zeros((upper_len(size), m));
        if m > 0 {
            for (k, (i, j)) in upper_pairs(size).enumerate() {
                edge_slots[[k, g.edge_label(i, j).filter(|_| i < n && j < n).unwrap_or(0)]] = 1.0;
            }
        }
        ProbabilisticSubgraph { adjacency, node_attrs, edge_slots, base_nodes: n, extra_nodes: extra }
    }

    fn edge_channels(&self) -> Vec<Mat> {
        let size = self.node_slots();
        (0..self.edge_slots.ncols())
            .map(|c| {
                let mut ch = Mat::zeros((size, size));
                for (k, (i, j)) in upper_pairs(size).enumerate() {
                    ch[[i, j]] = self.edge_slots[[k, c]];
                    ch[[j, i]] = self.edge_slots[[k, c]];
                }
                ch
            })
            .collect()
    }
}

fn upper_len(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

fn upper_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Reconstruction distance between the decoded subgraph and the pattern.
    pub distance: f64,
    /// Mean negative log-likelihood of the desired class over hosts.
    pub classification: f64,
    pub kl: f64,
    /// `distance + alpha * classification + kl`.
    pub total: f64,
}

/// Per-pattern autoencoder parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsaModel {
    pub node_vocab: usize,
    pub edge_vocab: usize,
    pub base_nodes: usize,
    pub config: CsaConfig,
    pub params: Vec<Mat>,
}

// parameter slots
const ENC_W1: usize = 0;
const ENC_B1: usize = 1;
const ENC_W2: usize = 2;
const ENC_B2: usize = 3;
const MU_W: usize = 4;
const MU_B: usize = 5;
const LS_W: usize = 6;
const LS_B: usize = 7;
const DEC_W: usize = 8;
const DEC_B: usize = 9;
const ADJ_W: usize = 10;
const ADJ_B: usize = 11;
const ATTR_W: usize = 12;
const ATTR_B: usize = 13;
const EDGE_W: usize = 14;
const EDGE_B: usize = 15;

/// Dropout masks for the two encoder hidden layers (already scaled).
#[derive(Debug, Clone)]
pub struct DropoutMasks(pub Mat, pub Mat);

/// Handles of a decoded subgraph on a tape.
pub struct DecodedVars {
    pub adj_logits: Var,
    pub adjacency: Var,
    pub attr_logits: Var,
    pub node_attrs: Var,
    pub edge_logits: Option<Var>,
    pub edge_channels: Vec<Var>,
}

impl CsaModel {
    pub fn new(node_vocab: usize, edge_vocab: usize, base_nodes: usize, config: CsaConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, z, dh) = (config.encoder_hidden, config.latent_dim, config.decoder_hidden);
        let input = node_vocab + 1 + edge_vocab;
        let size = base_nodes + config.extra_nodes;
        let dec_in = z + 2;
        let mut params = vec![
            uniform_init(input, h, input, &mut rng),
            uniform_init(1, h, input, &mut rng),
            uniform_init(h, h, h, &mut rng),
            uniform_init(1, h, h, &mut rng),
            uniform_init(h, z, h, &mut rng),
            uniform_init(1, z, h, &mut rng),
            uniform_init(h, z, h, &mut rng),
            uniform_init(1, z, h, &mut rng),
            uniform_init(dec_in, dh, dec_in, &mut rng),
            uniform_init(1, dh, dec_in, &mut rng),
            uniform_init(dh, upper_len(size), dh, &mut rng),
            uniform_init(1, upper_len(size), dh, &mut rng),
            uniform_init(dh, size * node_vocab, dh, &mut rng),
            uniform_init(1, size * node_vocab, dh, &mut rng),
        ];
        if edge_vocab > 0 {
            params.push(uniform_init(dh, upper_len(size) * edge_vocab, dh, &mut rng));
            params.push(uniform_init(1, upper_len(size) * edge_vocab, dh, &mut rng));
        }
        CsaModel { node_vocab, edge_vocab, base_nodes, config, params }
    }

    pub fn node_slots(&self) -> usize {
        self.base_nodes + self.config.extra_nodes
    }

    fn check_pattern(&self, g: &Graph) -> Result<(), CsaError> {
        if g.node_count() != self.base_nodes || g.node_vocab() != self.node_vocab || g.edge_vocab() != self.edge_vocab {
            return Err(CsaError::Config(format!(
                "pattern with {} nodes, vocab ({}, {}) does not fit model ({}, {}, {})",
                g.node_count(),
                g.node_vocab(),
                g.edge_vocab(),
                self.base_nodes,
                self.node_vocab,
                self.edge_vocab
            )));
        }
        Ok(())
    }

    fn vars(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params.iter().map(|m| if trainable { tape.param(m.clone()) } else { tape.constant(m.clone()) }).collect()
    }

    /// Records the encoder; returns 1×latent `(mu, log_sigma)` handles.
    pub fn encode_tape(&self, tape: &mut Tape, p: &[Var], g: &Graph, dropout: Option<&DropoutMasks>) -> (Var, Var) {
        let soft = SoftGraph::from_graph(g);
        let n = soft.node_count();
        let mut with_loops = soft.adjacency.clone();
        for i in 0..n {
            with_loops[[i, i]] += 1.0;
        }
        let dinv: Vec<f64> = with_loops.rows().into_iter().map(|r| r.sum().powf(-0.5)).collect();
        let norm = Mat::from_shape_fn((n, n), |(i, j)| dinv[i] * with_loops[[i, j]] * dinv[j]);
        let mut cols = vec![soft.node_attrs.clone(), soft.adjacency.sum_axis(ndarray::Axis(1)).insert_axis(ndarray::Axis(1))];
        for ch in &soft.edge_attrs {
            cols.push((&soft.adjacency * ch).sum_axis(ndarray::Axis(1)).insert_axis(ndarray::Axis(1)));
        }
        let views: Vec<_> = cols.iter().map(|c| c.view()).collect();
        let x = tape.constant(ndarray::concatenate(ndarray::Axis(1), &views).expect("aligned rows"));
        let norm = tape.constant(norm);

        let mut h = x;
        for (layer, (w, b)) in [(ENC_W1, ENC_B1), (ENC_W2, ENC_B2)].into_iter().enumerate() {
            let z = tape.matmul(h, p[w]);
            let m = tape.matmul(norm, z);
            let m = tape.add_row(m, p[b]);
            h = tape.relu(m);
            if let Some(masks) = dropout {
                let mask = if layer == 0 { &masks.0 } else { &masks.1 };
                h = tape.mul_const(h, mask.clone());
            }
        }
        let pooled = tape.col_max(h);
        let mu = tape.matmul(pooled, p[MU_W]);
        let mu = tape.add_row(mu, p[MU_B]);
        let ls = tape.matmul(pooled, p[LS_W]);
        let ls = tape.add_row(ls, p[LS_B]);
        (mu, ls)
    }

    /// Records the decoder for latent `z` (1×latent) and class `y_star`.
    pub fn decode_tape(&self, tape: &mut Tape, p: &[Var], z: Var, y_star: usize) -> DecodedVars {
        let mut onehot = Mat::zeros((1, 2));
        onehot[[0, y_star]] = 1.0;
        let y = tape.constant(onehot);
        let input = tape.concat_cols(&[z, y]);
        let h = tape.matmul(input, p[DEC_W]);
        let h = tape.add_row(h, p[DEC_B]);
        let h = tape.relu(h);

        let size = self.node_slots();
        let adj_logits = tape.matmul(h, p[ADJ_W]);
        let adj_logits = tape.add_row(adj_logits, p[ADJ_B]);
        let adjacency = if size > 1 {
            let probs = tape.sigmoid(adj_logits);
            tape.sym_from_upper(probs)
        } else {
            tape.constant(Mat::zeros((1, 1)))
        };

        let attr_flat = tape.matmul(h, p[ATTR_W]);
        let attr_flat = tape.add_row(attr_flat, p[ATTR_B]);
        let attr_logits = tape.reshape(attr_flat, size, self.node_vocab);
        let node_attrs = tape.softmax_rows(attr_logits);

        let (edge_logits, edge_channels) = if self.edge_vocab > 0 && size > 1 {
            let flat = tape.matmul(h, p[EDGE_W]);
            let flat = tape.add_row(flat, p[EDGE_B]);
            let logits = tape.reshape(flat, upper_len(size), self.edge_vocab);
            let probs = tape.softmax_rows(logits);
            let channels = (0..self.edge_vocab)
                .map(|c| {
                    let col = tape.slice_cols(probs, c, 1);
                    let row = tape.transpose(col);
                    tape.sym_from_upper(row)
                })
                .collect();
            (Some(logits), channels)
        } else {
            let channels =
                (0..self.edge_vocab).map(|_| tape.constant(Mat::zeros((size, size)))).collect();
            (None, channels)
        };
        DecodedVars { adj_logits, adjacency, attr_logits, node_attrs, edge_logits, edge_channels }
    }

    pub fn encode(&self, g: &Graph) -> Result<(Vec<f64>, Vec<f64>), CsaError> {
        self.check_pattern(g)?;
        let mut tape = Tape::new();
        let p = self.vars(&mut tape, false);
        let (mu, ls) = self.encode_tape(&mut tape, &p, g, None);
        Ok((tape.value(mu).iter().copied().collect(), tape.value(ls).iter().copied().collect()))
    }

    pub fn decode(&self, z: &[f64], y_star: usize) -> ProbabilisticSubgraph {
        assert_eq!(z.len(), self.config.latent_dim, "latent dimension");
        let mut tape = Tape::new();
        let p = self.vars(&mut tape, false);
        let zv = tape.constant(Mat::from_shape_vec((1, z.len()), z.to_vec()).expect("row"));
        let d = self.decode_tape(&mut tape, &p, zv, y_star);
        let size = self.node_slots();
        let edge_slots = match d.edge_logits {
            Some(logits) => {
                let l = tape.softmax_rows(logits);
                tape.value(l).clone()
            }
            None => Mat::zeros((upper_len(size), self.edge_vocab)),
        };
        ProbabilisticSubgraph {
            adjacency: tape.value(d.adjacency).clone(),
            node_attrs: tape.value(d.node_attrs).clone(),
            edge_slots,
            base_nodes: self.base_nodes,
            extra_nodes: self.config.extra_nodes,
        }
    }

    /// Records the full objective for one latent sample over `hosts`.
    #[allow(clippy::too_many_arguments)]
    fn loss_tape(
        &self,
        tape: &mut Tape,
        p: &[Var],
        g: &Graph,
        hosts: &[(&SoftGraph, &[usize])],
        classifier: &ClassifierModel,
        noise: &Mat,
        dropout: Option<&DropoutMasks>,
    ) -> (Var, [Var; 3]) {
        let (mu, ls) = self.encode_tape(tape, p, g, dropout);
        let sigma = tape.exp(ls);
        let spread = tape.mul_const(sigma, noise.clone());
        let z = tape.add(mu, spread);
        let d = self.decode_tape(tape, p, z, DESIRED_CLASS);

        let dist = self.reconstruction_tape(tape, g, &d);

        let cls_params: Vec<Var> = classifier.params.iter().map(|m| tape.constant(m.clone())).collect();
        let mut cls_terms = Vec::with_capacity(hosts.len());
        for (host, occ) in hosts {
            let composite = compose_tape(tape, host, occ, self.base_nodes, &d);
            let logits = classifier.forward_tape(tape, &cls_params, &composite);
            cls_terms.push(nll(tape, logits, DESIRED_CLASS));
        }
        let stacked = tape.concat_cols(&cls_terms);
        let cls_sum = tape.sum(stacked);
        let cls = tape.scale(cls_sum, 1.0 / hosts.len() as f64);

        let kl = kl_tape(tape, mu, ls);
        let weighted = tape.scale(cls, self.config.alpha);
        let total = tape.add(dist, weighted);
        let total = tape.add(total, kl);
        (total, [dist, cls, kl])
    }

    /// Cross-entropy reconstruction of `g` (padded with empty extra slots),
    /// each term averaged over its entries.
    fn reconstruction_tape(&self, tape: &mut Tape, g: &Graph, d: &DecodedVars) -> Var {
        let w = &self.config.distance;
        let size = self.node_slots();
        let n = g.node_count();
        let mut target = Mat::zeros((1, upper_len(size)));
        for (k, (i, j)) in upper_pairs(size).enumerate() {
            if i < n && j < n && g.has_edge(i, j) {
                target[[0, k]] = 1.0;
            }
        }
        let adj = tape.bce_with_logits(d.adj_logits, target);
        let mut total = tape.scale(adj, w.rho / upper_len(size).max(1) as f64);

        // attribute rows of the pattern's own nodes only
        let mut pick = Mat::zeros((size, self.node_vocab));
        for v in 0..n {
            pick[[v, g.node_label(v)]] = -1.0;
        }
        let log_x = tape.log_softmax_rows(d.attr_logits);
        let x_ce = tape.mul_const(log_x, pick);
        let x_ce = tape.sum(x_ce);
        let x_ce = tape.scale(x_ce, w.beta / n.max(1) as f64);
        total = tape.add(total, x_ce);

        if let Some(logits) = d.edge_logits {
            let mut pick = Mat::zeros((upper_len(size), self.edge_vocab));
            for (k, (i, j)) in upper_pairs(size).enumerate() {
                if i < n && j < n {
                    if let Some(label) = g.edge_label(i, j) {
                        pick[[k, label]] = -1.0;
                    }
                }
            }
            let log_e = tape.log_softmax_rows(logits);
            let e_ce = tape.mul_const(log_e, pick);
            let e_ce = tape.sum(e_ce);
            let e_ce = tape.scale(e_ce, w.gamma / g.edge_count().max(1) as f64);
            total = tape.add(total, e_ce);
        }
        total
    }

    /// Evaluates the objective with fixed noise and (optional) dropout masks.
    pub fn loss(
        &self,
        g: &Graph,
        hosts: &[(Graph, Occurrence)],
        classifier: &ClassifierModel,
        noise: &[f64],
        dropout: Option<&DropoutMasks>,
    ) -> Result<LossBreakdown, CsaError> {
        self.check_pattern(g)?;
        if hosts.is_empty() {
            return Err(CsaError::EmptyHosts);
        }
        let soft: Vec<SoftGraph> = hosts.iter().map(|(h, _)| SoftGraph::from_graph(h)).collect();
        for ((h, occ), _) in hosts.iter().zip(&soft) {
            check_occurrence(h, &occ.mapping, self.base_nodes)?;
        }
        let refs: Vec<(&SoftGraph, &[usize])> =
            soft.iter().zip(hosts).map(|(s, (_, o))| (s, o.mapping.as_slice())).collect();
        let mut tape = Tape::new();
        let p = self.vars(&mut tape, false);
        let noise = Mat::from_shape_vec((1, noise.len()), noise.to_vec()).expect("row");
        let (total, [d, c, k]) = self.loss_tape(&mut tape, &p, g, &refs, classifier, &noise, dropout);
        Ok(LossBreakdown { distance: tape.scalar(d), classification: tape.scalar(c), kl: tape.scalar(k), total: tape.scalar(total) })
    }

    /// Largest relative error between the tape gradient of the full loss and
    /// central differences, over every parameter entry (or an evenly spaced
    /// subset of at most `max_per_param` entries per parameter matrix).
    #[allow(clippy::too_many_arguments)]
    pub fn gradient_check(
        &self,
        g: &Graph,
        hosts: &[(Graph, Occurrence)],
        classifier: &ClassifierModel,
        noise: &[f64],
        dropout: Option<&DropoutMasks>,
        epsilon: f64,
        max_per_param: Option<usize>,
    ) -> Result<f64, CsaError> {
        self.check_pattern(g)?;
        if hosts.is_empty() {
            return Err(CsaError::EmptyHosts);
        }
        let soft: Vec<SoftGraph> = hosts.iter().map(|(h, _)| SoftGraph::from_graph(h)).collect();
        let refs: Vec<(&SoftGraph, &[usize])> =
            soft.iter().zip(hosts).map(|(s, (_, o))| (s, o.mapping.as_slice())).collect();
        let noise = Mat::from_shape_vec((1, noise.len()), noise.to_vec()).expect("row");

        let mut tape = Tape::new();
        let p = self.vars(&mut tape, true);
        let (total, _) = self.loss_tape(&mut tape, &p, g, &refs, classifier, &noise, dropout);
        let grads = tape.backward(total);
        let analytic: Vec<Mat> = p.iter().map(|v| grads.wrt(&tape, *v)).collect();

        let eval = |model: &CsaModel| {
            let mut t = Tape::new();
            let p = model.vars(&mut t, false);
            let (total, _) = model.loss_tape(&mut t, &p, g, &refs, classifier, &noise, dropout);
            t.scalar(total)
        };
        let mut jobs = Vec::new();
        for (k, m) in self.params.iter().enumerate() {
            let count = m.len();
            let take = max_per_param.map_or(count, |c| c.min(count));
            for s in 0..take {
                jobs.push((k, s * count / take));
            }
        }
        let worst = jobs
            .par_iter()
            .map(|&(k, idx)| {
                let cols = self.params[k].ncols();
                let (r, c) = (idx / cols, idx % cols);
                let mut plus = self.clone();
                plus.params[k][[r, c]] += epsilon;
                let mut minus = self.clone();
                minus.params[k][[r, c]] -= epsilon;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * epsilon);
                relative_error(analytic[k][[r, c]], numeric)
            })
            .reduce(|| 0.0, f64::max);
        Ok(worst)
    }
}

fn check_occurrence(host: &Graph, occ: &[usize], base_nodes: usize) -> Result<(), CsaError> {
    if occ.len() != base_nodes {
        return Err(CsaError::BadOccurrence(format!("{} entries for a {base_nodes}-node pattern", occ.len())));
    }
    if let Some(&v) = occ.iter().find(|&&v| v >= host.node_count()) {
        return Err(CsaError::BadOccurrence(format!("node {v} in a {}-node host", host.node_count())));
    }
    let mut seen = occ.to_vec();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != occ.len() {
        return Err(CsaError::BadOccurrence("mapping is not injective".into()));
    }
    Ok(())
}

/// `KL(N(mu, diag(exp(2 ls))) || N(0, I))`.
pub fn kl_tape(tape: &mut Tape, mu: Var, ls: Var) -> Var {
    let dim = tape.value(mu).len() as f64;
    let mu2 = tape.mul(mu, mu);
    let two_ls = tape.scale(ls, 2.0);
    let var = tape.exp(two_ls);
    let a = tape.add(mu2, var);
    let a = tape.sub(a, two_ls);
    let s = tape.sum(a);
    let s = tape.add_scalar(s, -dim);
    tape.scale(s, 0.5)
}

/// Closed-form KL divergence of a diagonal Gaussian from the standard normal.
pub fn kl_divergence(mu: &[f64], log_sigma: &[f64]) -> f64 {
    mu.iter().zip(log_sigma).map(|(m, l)| 0.5 * (m * m + (2.0 * l).exp() - 1.0 - 2.0 * l)).sum()
}

/// `z = mu + exp(log_sigma) * noise`.
pub fn sample_latent(mu: &[f64], log_sigma: &[f64], noise: &[f64]) -> Vec<f64> {
    mu.iter().zip(log_sigma).zip(noise).map(|((m, l), e)| m + l.exp() * e).collect()
}

/// Records the composite of `host` with the decoded subgraph spliced in at
/// `occ`. Extra node slots are appended after the host's nodes.
fn compose_tape(tape: &mut Tape, host: &SoftGraph, occ: &[usize], base: usize, d: &DecodedVars) -> GraphVars {
    let nh = host.node_count();
    let size = tape.value(d.adjacency).nrows();
    let total = nh + size - base;
    let mut in_image = vec![false; total];
    for &v in occ {
        in_image[v] = true;
    }
    let mut select = Mat::zeros((total, size));
    for (p, &v) in occ.iter().enumerate() {
        select[[v, p]] = 1.0;
    }
    for e in base..size {
        select[[nh + e - base, e]] = 1.0;
    }
    let select_t = select.t().to_owned();

    let masked = |m: &Mat| {
        let mut out = Mat::zeros((total, total));
        for i in 0..nh {
            for j in 0..nh {
                if !(in_image[i] && in_image[j]) {
                    out[[i, j]] = m[[i, j]];
                }
            }
        }
        out
    };
    let splice = |tape: &mut Tape, host_part: Mat, block: Var| {
        let s = tape.constant(select.clone());
        let st = tape.constant(select_t.clone());
        let left = tape.matmul(s, block);
        let placed = tape.matmul(left, st);
        let h = tape.constant(host_part);
        tape.add(h, placed)
    };
    let adjacency = splice(tape, masked(&host.adjacency), d.adjacency);
    let edge_attrs = host
        .edge_attrs
        .iter()
        .zip(&d.edge_channels)
        .map(|(h, &c)| splice(tape, masked(h), c))
        .collect();

    let mut attrs = Mat::zeros((total, host.node_attrs.ncols()));
    for i in 0..nh {
        if !in_image[i] {
            attrs.row_mut(i).assign(&host.node_attrs.row(i));
        }
    }
    let s = tape.constant(select);
    let placed = tape.matmul(s, d.node_attrs);
    let h = tape.constant(attrs);
    let node_attrs = tape.add(h, placed);
    GraphVars { adjacency, node_attrs, edge_attrs }
}

/// Soft composite of `host` with `ps` spliced in at `occ`: image-block
/// adjacency and image attribute rows come from `ps`, extra slots are
/// appended, every edge with an endpoint outside the image is kept.
pub fn compose_soft(host: &Graph, occ: &Occurrence, ps: &ProbabilisticSubgraph) -> Result<SoftGraph, CsaError> {
    check_occurrence(host, &occ.mapping, ps.base_nodes)?;
    if ps.node_attrs.ncols() != host.node_vocab() || ps.edge_slots.ncols() != host.edge_vocab() {
        return Err(CsaError::Config("subgraph and host vocabularies differ".into()));
    }
    let soft = SoftGraph::from_graph(host);
    let mut tape = Tape::new();
    let d = DecodedVars {
        adj_logits: tape.constant(Mat::zeros((1, 1))),
        adjacency: tape.constant(ps.adjacency.clone()),
        attr_logits: tape.constant(Mat::zeros((1, 1))),
        node_attrs: tape.constant(ps.node_attrs.clone()),
        edge_logits: None,
        edge_channels: ps.edge_channels().into_iter().map(|c| tape.constant(c)).collect(),
    };
    let vars = compose_tape(&mut tape, &soft, &occ.mapping, ps.base_nodes, &d);
    Ok(SoftGraph {
        adjacency: tape.value(vars.adjacency).clone(),
        node_attrs: tape.value(vars.node_attrs).clone(),
        edge_attrs: vars.edge_attrs.iter().map(|v| tape.value(*v).clone()).collect(),
    })
}

/// Thresholds a probabilistic subgraph: edges where the probability exceeds
/// 0.5, attribute rows at their argmax (lowest index on ties). Extra slots
/// without any edge are dropped. Returns the graph and the correspondence
/// of base nodes (the identity).
pub fn discretize(ps: &ProbabilisticSubgraph) -> (Graph, Vec<usize>) {
    let size = ps.node_slots();
    let argmax = |row: ndarray::ArrayView1<f64>| {
        let mut best = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        best
    };
    let edges: Vec<(usize, usize)> = upper_pairs(size).filter(|&(i, j)| ps.adjacency[[i, j]] > 0.5).collect();
    let mut keep: Vec<bool> = (0..size).map(|v| v < ps.base_nodes).collect();
    for &(i, j) in &edges {
        keep[i] = true;
        keep[j] = true;
    }
    let mut index = vec![usize::MAX; size];
    let mut labels = Vec::new();
    for v in 0..size {
        if keep[v] {
            index[v] = labels.len();
            labels.push(argmax(ps.node_attrs.row(v)));
        }
    }
    let m = ps.edge_slots.ncols();
    let slot_of = |i: usize, j: usize| i * size - i * (i + 1) / 2 + (j - i - 1);
    let edge_list: Vec<(usize, usize, Option<usize>)> = edges
        .iter()
        .map(|&(i, j)| (index[i], index[j], (m > 0).then(|| argmax(ps.edge_slots.row(slot_of(i, j))))))
        .collect();
    let g = Graph::from_edges(labels, ps.node_attrs.ncols(), m, &edge_list).expect("thresholded subgraph is valid");
    (g, (0..ps.base_nodes).collect())
}

/// A counterfactual subgraph mapping `source -> counterfactual`; source node
/// `i` corresponds to counterfactual node `correspondence[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsmCandidate {
    pub source_code: DfsCode,
    pub source: Graph,
    pub counterfactual: Graph,
    pub correspondence: Vec<usize>,
    pub train_stats: LossBreakdown,
}

impl CsmCandidate {
    /// Candidate mapping `source` to `counterfactual` with identity
    /// correspondence on the source nodes.
    pub fn new(source: Graph, counterfactual: Graph) -> Self {
        let correspondence = (0..source.node_count()).collect();
        let source_code = crate::miner::min_dfs_code(&source);
        CsmCandidate { source_code, source, counterfactual, correspondence, train_stats: LossBreakdown::default() }
    }
}

/// Seed of pattern `index`'s private stream.
pub fn pattern_seed(global: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(global);
    rng.set_stream(index as u64 + 1);
    rng.random()
}

fn dropout_masks<R: Rng>(rows: usize, hidden: usize, rate: f64, rng: &mut R) -> DropoutMasks {
    let keep = Bernoulli::new(1.0 - rate).expect("rate in [0, 1)");
    let scale = 1.0 / (1.0 - rate);
    let mut mask = || Array2::from_shape_fn((rows, hidden), |_| if keep.sample(rng) { scale } else { 0.0 });
    DropoutMasks(mask(), mask())
}

/// Trains one autoencoder for `pattern` over its supporting hosts and
/// returns the model with the mean loss terms of the last epoch.
pub fn train_pattern(
    pattern: &FrequentPattern,
    index: usize,
    dataset: &GraphDataset,
    classifier: &ClassifierModel,
    cfg: &CsaConfig,
) -> Result<(CsaModel, LossBreakdown), CsaError> {
    cfg.validate()?;
    if pattern.support_ids.is_empty() {
        return Err(CsaError::EmptySupport(index));
    }
    let g = &pattern.graph;
    let mut hosts = Vec::with_capacity(pattern.support_ids.len());
    for &id in &pattern.support_ids {
        let host = dataset.graphs.get(id).ok_or(CsaError::MissingOccurrence(index, id))?;
        let occ = first_occurrence(g, host, MatchConfig::default()).ok_or(CsaError::MissingOccurrence(index, id))?;
        hosts.push((SoftGraph::from_graph(host), occ.mapping));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(pattern_seed(cfg.seed, index));
    let mut model = CsaModel::new(dataset.node_vocab.len().max(1), dataset.edge_vocab.len(), g.node_count(), cfg.clone(), rng.random());
    let mut adam = Adam::new(&model.params, cfg.learning_rate, 0.0);
    let batch = cfg.batch_size.min(hosts.len());
    let steps = hosts.len().div_ceil(batch);
    let mut cursor = 0;
    let mut last = LossBreakdown::default();
    for _ in 0..cfg.epochs {
        let mut sum = LossBreakdown::default();
        for _ in 0..steps {
            let refs: Vec<(&SoftGraph, &[usize])> = (0..batch)
                .map(|k| {
                    let (s, o) = &hosts[(cursor + k) % hosts.len()];
                    (s, o.as_slice())
                })
                .collect();
            cursor = (cursor + batch) % hosts.len();
            let noise = Mat::from_shape_fn((1, cfg.latent_dim), |_| rng.sample(StandardNormal));
            let masks = (cfg.dropout > 0.0).then(|| dropout_masks(g.node_count(), cfg.encoder_hidden, cfg.dropout, &mut rng));

            let mut tape = Tape::new();
            let p = model.vars(&mut tape, true);
            let (total, [d, c, k]) = model.loss_tape(&mut tape, &p, g, &refs, classifier, &noise, masks.as_ref());
            let grads = tape.backward(total);
            let grads: Vec<Mat> = p.iter().map(|v| grads.wrt(&tape, *v)).collect();
            adam.step(&mut model.params, &grads);
            sum.distance += tape.scalar(d);
            sum.classification += tape.scalar(c);
            sum.kl += tape.scalar(k);
            sum.total += tape.scalar(total);
        }
        let s = steps as f64;
        last = LossBreakdown { distance: sum.distance / s, classification: sum.classification / s, kl: sum.kl / s, total: sum.total / s };
    }
    Ok((model, last))
}

/// Decodes at the posterior mean (no dropout, no noise) and discretizes.
pub fn candidate_from_model(model: &CsaModel, pattern: &FrequentPattern, stats: LossBreakdown) -> Result<CsmCandidate, CsaError> {
    let (mu, _) = model.encode(&pattern.graph)?;
    let ps = model.decode(&mu, DESIRED_CLASS);
    let (counterfactual, correspondence) = discretize(&ps);
    Ok(CsmCandidate {
        source_code: pattern.dfs_code.clone(),
        source: pattern.graph.clone(),
        counterfactual,
        correspondence,
        train_stats: stats,
    })
}

/// Trains one autoencoder per pattern (in parallel) and returns one
/// candidate per pattern, in pattern order.
pub fn train_csa(
    patterns: &[FrequentPattern],
    dataset: &GraphDataset,
    classifier: &ClassifierModel,
    cfg: &CsaConfig,
) -> Result<Vec<CsmCandidate>, CsaError> {
    cfg.validate()?;
    if let Some(i) = patterns.iter().position(|p| p.support_ids.is_empty()) {
        return Err(CsaError::EmptySupport(i));
    }
    patterns
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let (model, stats) = train_pattern(p, i, dataset, classifier, cfg)?;
            candidate_from_model(&model, p, stats)
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct DumpHeader {
    format: String,
    version: u32,
}

/// Writes candidates as JSON lines after a header line.
pub fn write_candidates<W: Write>(mut w: W, candidates: &[CsmCandidate]) -> Result<(), CsaError> {
    let dump = |e: serde_json::Error| CsaError::Dump(e.to_string());
    let header = DumpHeader { format: CANDIDATE_DUMP_FORMAT.into(), version: CANDIDATE_DUMP_VERSION };
    writeln!(w, "{}", serde_json::to_string(&header).map_err(dump)?)?;
    for c in candidates {
        writeln!(w, "{}", serde_json::to_string(c).map_err(dump)?)?;
    }
    Ok(())
}

pub fn read_candidates<R: BufRead>(r: R) -> Result<Vec<CsmCandidate>, CsaError> {
    let mut lines = r.lines();
    let first = lines.next().ok_or_else(|| CsaError::Dump("empty file".into()))??;
    let header: DumpHeader = serde_json::from_str(&first).map_err(|e| CsaError::Dump(format!("header: {e}")))?;
    if header.format != CANDIDATE_DUMP_FORMAT || header.version != CANDIDATE_DUMP_VERSION {
        return Err(CsaError::Dump(format!(
            "unsupported format {} v{} (expected {CANDIDATE_DUMP_FORMAT} v{CANDIDATE_DUMP_VERSION})",
            header.format, header.version
        )));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let c: CsmCandidate = serde_json::from_str(&line).map_err(|e| CsaError::Dump(format!("record {}: {e}", i + 1)))?;
        if c.correspondence.len() != c.source.node_count()
            || c.correspondence.iter().any(|&v| v >= c.counterfactual.node_count())
        {
            return Err(CsaError::Dump(format!("record {}: correspondence does not fit the graphs", i + 1)));
        }
        out.push(c);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::Architecture;
    use crate::matcher::{find_occurrences, is_isomorphic};

    fn path(n: usize) -> Graph {
        Graph::unlabeled(n, &(0..n - 1).map(|i| (i, i + 1)).collect::<Vec<_>>()).unwrap()
    }

    fn small_cfg() -> CsaConfig {
        CsaConfig { latent_dim: 8, encoder_hidden: 6, decoder_hidden: 10, ..CsaConfig::default() }
    }

    #[test]
    fn sample_latent_closed_forms() {
        let mu = [0.5, -1.0];
        assert_eq!(sample_latent(&mu, &[0.3, 0.1], &[0.0, 0.0]), mu.to_vec());
        assert_eq!(sample_latent(&mu, &[0.0, 0.0], &[1.0, 0.0]), vec![1.5, -1.0]);
    }

    #[test]
    fn kl_closed_forms() {
        assert_eq!(kl_divergence(&[0.0; 4], &[0.0; 4]), 0.0);
        assert!((kl_divergence(&[1.0, 0.0], &[0.0, 0.0]) - 0.5).abs() < 1e-15);
        let mut tape = Tape::new();
        let mu = tape.constant(Mat::from_shape_vec((1, 2), vec![0.3, -0.7]).unwrap());
        let ls = tape.constant(Mat::from_shape_vec((1, 2), vec![-0.2, 0.4]).unwrap());
        let k = kl_tape(&mut tape, mu, ls);
        assert!((tape.scalar(k) - kl_divergence(&[0.3, -0.7], &[-0.2, 0.4])).abs() < 1e-14);
    }

    #[test]
    fn decoder_output_shape_and_symmetry() {
        let model = CsaModel::new(2, 1, 4, small_cfg(), 3);
        let ps = model.decode(&[0.2; 8], 1);
        assert_eq!(ps.adjacency.dim(), (6, 6));
        for i in 0..6 {
            assert_eq!(ps.adjacency[[i, i]], 0.0);
            assert!((ps.node_attrs.row(i).sum() - 1.0).abs() < 1e-12);
            for j in 0..6 {
                assert_eq!(ps.adjacency[[i, j]], ps.adjacency[[j, i]]);
                if i != j {
                    assert!(ps.adjacency[[i, j]] > 0.0 && ps.adjacency[[i, j]] < 1.0);
                }
            }
        }
        assert_eq!(ps.edge_slots.dim(), (15, 1));
        assert_eq!(model.decode(&[0.2; 8], 1), ps);
    }

    #[test]
    fn encoder_is_deterministic_and_invariant() {
        let g = Graph::from_edges(vec![0, 1, 1, 0], 2, 0, &[(0, 1, None), (1, 2, None), (2, 3, None)]).unwrap();
        let model = CsaModel::new(2, 0, 4, small_cfg(), 1);
        let a = model.encode(&g).unwrap();
        assert_eq!(a, model.encode(&g).unwrap());
        let b = model.encode(&g.permuted(&[3, 1, 0, 2])).unwrap();
        for (x, y) in a.0.iter().zip(&b.0).chain(a.1.iter().zip(&b.1)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn discretize_thresholds_strictly() {
        let g = path(3);
        let mut ps = ProbabilisticSubgraph::from_graph(&g, 2);
        ps.adjacency[[0, 2]] = 0.5;
        ps.adjacency[[2, 0]] = 0.5;
        ps.adjacency[[1, 3]] = 0.6;
        ps.adjacency[[3, 1]] = 0.6;
        let (d, corr) = discretize(&ps);
        assert_eq!(corr, vec![0, 1, 2]);
        assert_eq!(d.node_count(), 4);
        assert!(!d.has_edge(0, 2));
        assert!(d.has_edge(1, 3));

        let mut ps = ProbabilisticSubgraph::from_graph(&Graph::new(vec![0], 3, 0).unwrap(), 0);
        ps.node_attrs = Mat::from_shape_vec((1, 3), vec![0.2, 0.7, 0.1]).unwrap();
        assert_eq!(discretize(&ps).0.node_label(0), 1);
    }

    #[test]
    fn hard_embedding_round_trips() {
        let g = Graph::from_edges(vec![0, 2, 1], 3, 2, &[(0, 1, Some(1)), (1, 2, Some(0))]).unwrap();
        let (d, _) = discretize(&ProbabilisticSubgraph::from_graph(&g, 2));
        assert_eq!(d, g);
    }

    #[test]
    fn compose_identity_and_boundary() {
        // 5-node host: path 0-1-2 is the pattern image, 2-3 and 3-4 hang off
        let host = Graph::unlabeled(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        let g = path(3);
        let occ = find_occurrences(&g, &host, 1).remove(0);
        let ps = ProbabilisticSubgraph::from_graph(&g, 0);
        let composite = compose_soft(&host, &occ, &ps).unwrap();
        assert_eq!(composite, SoftGraph::from_graph(&host));

        // drop every edge of the block: the boundary edge 2-3 survives
        let mut empty = ps.clone();
        empty.adjacency.fill(0.0);
        let c = compose_soft(&host, &occ, &empty).unwrap();
        assert_eq!(c.adjacency[[2, 3]], 1.0);
        assert_eq!(c.adjacency[[3, 4]], 1.0);
        assert_eq!(c.adjacency[[0, 1]], 0.0);
        assert_eq!(c.adjacency.sum(), 4.0);
    }

    #[test]
    fn compose_alone_when_host_is_pattern() {
        let g = path(3);
        let occ = Occurrence { mapping: vec![0, 1, 2] };
        let model = CsaModel::new(1, 0, 3, small_cfg(), 2);
        let ps = model.decode(&[0.1; 8], 1);
        let c = compose_soft(&g, &occ, &ps).unwrap();
        assert_eq!(c.adjacency, ps.adjacency);
        assert_eq!(c.node_attrs, ps.node_attrs);
    }

    #[test]
    fn loss_terms_decompose() {
        let g = path(4);
        let host = Graph::unlabeled(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (1, 5)]).unwrap();
        let occ = find_occurrences(&g, &host, 1).remove(0);
        let classifier = ClassifierModel::new(Architecture::Gcn, 1, 0, 7);
        let model = CsaModel::new(1, 0, 4, small_cfg(), 3);
        let b = model.loss(&g, &[(host, occ)], &classifier, &[0.1; 8], None).unwrap();
        assert!(b.distance >= 0.0 && b.classification >= 0.0 && b.kl >= 0.0);
        assert!((b.total - (b.distance + 10.0 * b.classification + b.kl)).abs() < 1e-12);
        assert!(matches!(model.loss(&g, &[], &classifier, &[0.1; 8], None), Err(CsaError::EmptyHosts)));
    }

    #[test]
    fn full_loss_gradient_matches_finite_differences() {
        let g = path(4);
        let h1 = Graph::unlabeled(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (1, 5)]).unwrap();
        let h2 = Graph::unlabeled(5, &[(0, 1), (1, 2), (2, 3), (2, 4)]).unwrap();
        let hosts: Vec<_> = [h1, h2].into_iter().map(|h| {
            let o = find_occurrences(&g, &h, 1).remove(0);
            (h, o)
        }).collect();
        let classifier = ClassifierModel::new(Architecture::Gcn, 1, 0, 7);
        let cfg = small_cfg();
        let model = CsaModel::new(1, 0, 4, cfg.clone(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let masks = dropout_masks(4, cfg.encoder_hidden, 0.5, &mut rng);
        let noise: Vec<f64> = (0..8).map(|_| rng.sample(StandardNormal)).collect();
        let err = model.gradient_check(&g, &hosts, &classifier, &noise, Some(&masks), 1e-5, None).unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn zero_epochs_decodes_initial_model() {
        let ds = GraphDataset {
            name: "t".into(),
            graphs: vec![path(5), path(4)],
            labels: vec![0, 0],
            node_vocab: vec!["0".into()],
            edge_vocab: vec![],
        };
        let g = path(3);
        let pattern = FrequentPattern { dfs_code: crate::miner::min_dfs_code(&g), graph: g, appearance_rate: 1.0, support_ids: vec![0, 1] };
        let classifier = ClassifierModel::new(Architecture::Gcn, 1, 0, 1);
        let cfg = CsaConfig { epochs: 0, ..small_cfg() };
        let a = train_csa(std::slice::from_ref(&pattern), &ds, &classifier, &cfg).unwrap();
        let b = train_csa(std::slice::from_ref(&pattern), &ds, &classifier, &cfg).unwrap();
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(pattern_seed(cfg.seed, 0));
        let model = CsaModel::new(1, 0, 3, cfg.clone(), rng.random());
        let (mu, _) = model.encode(&pattern.graph).unwrap();
        assert_eq!(a[0].counterfactual, discretize(&model.decode(&mu, 1)).0);
    }

    #[test]
    fn reconstruction_only_recovers_pattern() {
        let g = Graph::unlabeled(4, &[(0, 1), (1, 2), (2, 3), (1, 3)]).unwrap();
        let host = Graph::unlabeled(6, &[(0, 1), (1, 2), (2, 3), (1, 3), (3, 4), (4, 5)]).unwrap();
        let ds = GraphDataset {
            name: "t".into(),
            graphs: vec![host.clone(), host],
            labels: vec![0, 0],
            node_vocab: vec!["0".into()],
            edge_vocab: vec![],
        };
        let pattern = FrequentPattern { dfs_code: crate::miner::min_dfs_code(&g), graph: g.clone(), appearance_rate: 1.0, support_ids: vec![0, 1] };
        let classifier = ClassifierModel::new(Architecture::Gcn, 1, 0, 1);
        let cfg = CsaConfig { alpha: 0.0, epochs: 150, ..CsaConfig::default() };
        let c = train_csa(&[pattern], &ds, &classifier, &cfg).unwrap().remove(0);
        assert_eq!(c.counterfactual.node_count(), 4);
        assert!(is_isomorphic(&c.counterfactual, &g));
    }

    #[test]
    fn candidate_dump_round_trip() {
        let c = CsmCandidate::new(path(3), Graph::unlabeled(3, &[(0, 1), (1, 2), (0, 2)]).unwrap());
        let mut buf = Vec::new();
        write_candidates(&mut buf, std::slice::from_ref(&c)).unwrap();
        assert_eq!(read_candidates(buf.as_slice()).unwrap(), vec![c]);
        assert!(read_candidates(&b"{\"format\":\"gce-candidates\",\"version\":7}\n"[..]).is_err());
    }
}
