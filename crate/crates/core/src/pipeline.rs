//! Pipeline stages over a shared output directory.
//!
//! ```text
//! out/
//!   config.toml               resolved configuration
//!   dataset/                  synthetic dataset in TU format (synth)
//!   seed-<s>/classifier.json  train-gnn
//!   seed-<s>/patterns.jsonl   mine
//!   seed-<s>/candidates.jsonl train-csa
//!   seed-<s>/csm_set.json     summarize (plus rules.txt)
//!   seed-<s>/results.jsonl    evaluate
//!   summary.txt               evaluate, all seeds
//!   manifest.json             run-all
//! ```
//!
//! Every stage reads its inputs from the dumps of earlier stages, so any
//! stage can be rerun on its own.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, DatasetSource, RunConfig};
use crate::csa::{read_candidates, train_csa, write_candidates, CsaConfig, CsaError};
use crate::gnn::{train, Classifier, ClassifierModel, GnnError, TrainConfig};
use crate::graph::{Graph, GraphDataset};
use crate::metrics::{
    format_aggregate, format_row, table_header, write_results, EvaluationResult, MetricsError,
};
use crate::miner::{mine_graphs, read_patterns, select_significant, write_patterns, MinerError};
use crate::summarizer::{coverage_from_index, greedy_select, CsmSet, SummaryError, WitnessIndex};
use crate::synthetic::{generate_synthetic, SyntheticError};
use crate::tu::{parse_tu_dataset, write_tu_dataset, LabelMap, TuError};

pub const MANIFEST_FORMAT: &str = "gce-manifest";
pub const MANIFEST_VERSION: u32 = 1;
const SYNTHETIC_NAME: &str = "SYNTH";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] TuError),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Miner(#[from] MinerError),
    #[error(transparent)]
    Csa(#[from] CsaError),
    #[error(transparent)]
    Summary(#[from] SummaryError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("missing {what} at {path}; run `{stage}` first")]
    MissingArtifact { what: &'static str, path: PathBuf, stage: &'static str },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<PipelineError>,
    },
}

impl PipelineError {
    /// Process exit code: 1 for configuration problems, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Stage { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io(dir))?;
    }
    File::create(path).map(BufWriter::new).map_err(io(path))
}

fn open(path: &Path, what: &'static str, stage: &'static str) -> Result<BufReader<File>> {
    if !path.exists() {
        return Err(PipelineError::MissingArtifact { what, path: path.to_path_buf(), stage });
    }
    File::open(path).map(BufReader::new).map_err(io(path))
}

/// Paths of every artifact of a run.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }
    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }
    pub fn dataset_dir(&self) -> PathBuf {
        self.root.join("dataset")
    }
    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.root.join(format!("seed-{seed}"))
    }
    pub fn classifier(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("classifier.json")
    }
    pub fn patterns(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("patterns.jsonl")
    }
    pub fn candidates(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("candidates.jsonl")
    }
    pub fn csm_set(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("csm_set.json")
    }
    pub fn rules(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("rules.txt")
    }
    pub fn results(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("results.jsonl")
    }
    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.txt")
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
}

/// Writes the synthetic dataset in TU format. Returns its directory.
pub fn cmd_synth(count: usize, seed: u64, out_dir: &Path) -> Result<PathBuf> {
    let mut ds = generate_synthetic(count, seed)?;
    ds.name = SYNTHETIC_NAME.to_string();
    let dir = out_dir.join("dataset");
    write_tu_dataset(&ds, &dir)?;
    Ok(dir)
}

/// Loads the configured dataset: the synthetic dump under the output
/// directory, or a TU dataset from `dataset.path`.
pub fn load_dataset(cfg: &RunConfig) -> Result<GraphDataset> {
    let label_map = cfg.label_map.as_deref().map(LabelMap::load).transpose()?;
    match &cfg.dataset {
        DatasetSource::Synthetic { .. } => {
            let dir = Layout::new(&cfg.output_dir).dataset_dir();
            if !dir.exists() {
                return Err(PipelineError::MissingArtifact { what: "synthetic dataset", path: dir, stage: "synth" });
            }
            Ok(parse_tu_dataset(&dir, SYNTHETIC_NAME, label_map.as_ref())?)
        }
        DatasetSource::Tu { path, name } => Ok(parse_tu_dataset(path, name, label_map.as_ref())?),
    }
}

fn gnn_config(cfg: &RunConfig, seed: u64) -> TrainConfig {
    TrainConfig { seed, ..cfg.gnn.clone() }
}

fn csa_config(cfg: &RunConfig, seed: u64) -> CsaConfig {
    CsaConfig { seed, ..cfg.csa.clone() }
}

pub fn cmd_train_gnn(cfg: &RunConfig, seed: u64) -> Result<String> {
    let ds = load_dataset(cfg)?;
    let (model, report) = train(&ds, &gnn_config(cfg, seed))?;
    let path = Layout::new(&cfg.output_dir).classifier(seed);
    fs::create_dir_all(path.parent().expect("seed dir")).map_err(io(&path))?;
    model.save(&path)?;
    Ok(format!(
        "seed {seed}: accuracy train {:.4} val {:.4} test {:.4} (best epoch {})",
        report.train_accuracy, report.val_accuracy, report.test_accuracy, report.best_epoch
    ))
}

fn load_classifier(cfg: &RunConfig, seed: u64) -> Result<ClassifierModel> {
    let path = Layout::new(&cfg.output_dir).classifier(seed);
    if !path.exists() {
        return Err(PipelineError::MissingArtifact { what: "classifier checkpoint", path, stage: "train-gnn" });
    }
    Ok(ClassifierModel::load(&path)?)
}

/// Graphs the classifier assigns to the undesired class, in dataset order.
pub fn undesired_hosts<C: Classifier + ?Sized>(ds: &GraphDataset, classifier: &C) -> GraphDataset {
    let ids: Vec<usize> = (0..ds.len()).filter(|&i| classifier.predict(&ds.graphs[i]) != crate::gnn::DESIRED_CLASS).collect();
    let mut hosts = ds.subset(&ids);
    hosts.labels = vec![0; ids.len()];
    hosts
}

struct Context {
    hosts: GraphDataset,
    classifier: ClassifierModel,
}

fn context(cfg: &RunConfig, seed: u64) -> Result<Context> {
    let ds = load_dataset(cfg)?;
    let classifier = load_classifier(cfg, seed)?;
    Ok(Context { hosts: undesired_hosts(&ds, &classifier), classifier })
}

pub fn cmd_mine(cfg: &RunConfig, seed: u64) -> Result<String> {
    let ctx = context(cfg, seed)?;
    let (l, m) = (ctx.hosts.node_vocab.len().max(1), ctx.hosts.edge_vocab.len());
    let frequent = mine_graphs(&ctx.hosts.graphs, l, m, &cfg.miner)?;
    let selected = select_significant(&frequent, cfg.miner.budget, cfg.miner.selection_mode)?;
    let path = Layout::new(&cfg.output_dir).patterns(seed);
    let mut w = create(&path)?;
    write_patterns(&mut w, &selected, l, m)?;
    w.flush().map_err(io(&path))?;
    Ok(format!(
        "seed {seed}: {} undesired graphs, {} frequent patterns, kept {}",
        ctx.hosts.len(),
        frequent.len(),
        selected.len()
    ))
}

pub fn cmd_train_csa(cfg: &RunConfig, seed: u64) -> Result<String> {
    let ctx = context(cfg, seed)?;
    let layout = Layout::new(&cfg.output_dir);
    let patterns = read_patterns(open(&layout.patterns(seed), "pattern dump", "mine")?)?;
    let candidates = train_csa(&patterns, &ctx.hosts, &ctx.classifier, &csa_config(cfg, seed))?;
    let path = layout.candidates(seed);
    let mut w = create(&path)?;
    write_candidates(&mut w, &candidates)?;
    w.flush().map_err(io(&path))?;
    Ok(format!("seed {seed}: {} candidates", candidates.len()))
}

pub fn cmd_summarize(cfg: &RunConfig, seed: u64) -> Result<String> {
    let ctx = context(cfg, seed)?;
    let layout = Layout::new(&cfg.output_dir);
    let pool = read_candidates(open(&layout.candidates(seed), "candidate dump", "train-csa")?)?;
    let app = &cfg.summarize.application;
    let index = WitnessIndex::build(&ctx.hosts.graphs, &pool, &ctx.classifier, app);
    let k = cfg.summarize.k.min(pool.len());
    let trace = if k == 0 { Vec::new() } else { greedy_select(&index, k)? };
    let set = CsmSet::from_trace(&pool, cfg.summarize.k, trace);
    set.validate()?;
    let rules = if ctx.hosts.is_empty() {
        format!("no undesired graphs; {} rule(s) selected\n", set.csms.len())
    } else {
        set.report(&ctx.hosts.graphs, &coverage_from_index(&index, &set.pool_ids)?)
    };
    let path = layout.csm_set(seed);
    let mut w = create(&path)?;
    w.write_all(set.to_json()?.as_bytes()).map_err(io(&path))?;
    w.flush().map_err(io(&path))?;
    let rules_path = layout.rules(seed);
    fs::write(&rules_path, &rules).map_err(io(&rules_path))?;
    Ok(format!("seed {seed}:\n{rules}"))
}

/// Scores one seed's rule set and writes its results file.
pub fn evaluate_seed(cfg: &RunConfig, seed: u64) -> Result<EvaluationResult> {
    let ctx = context(cfg, seed)?;
    let layout = Layout::new(&cfg.output_dir);
    let path = layout.csm_set(seed);
    let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => PipelineError::MissingArtifact { what: "CSM set", path: path.clone(), stage: "summarize" },
        _ => PipelineError::Io { path: path.clone(), source: e },
    })?;
    let set = CsmSet::from_json(&text)?;
    let (result, mut report) = if ctx.hosts.is_empty() {
        (EvaluationResult { coverage_pct: 0.0, proximity: None, comprehensibility: None, covered_count: 0, evaluated: 0, pairs: vec![] }, None)
    } else {
        let (r, rep) = crate::metrics::evaluate_global(&set.csms, &ctx.hosts.graphs, &ctx.classifier, &cfg.summarize.application)?;
        (r, Some(rep))
    };
    if let Some(rep) = report.as_mut() {
        rep.per_csm_marginals = set.trace.clone();
    }
    let out = layout.results(seed);
    let mut w = create(&out)?;
    write_results(&mut w, &result, report.as_ref(), Some(seed))?;
    w.flush().map_err(io(&out))?;
    Ok(result)
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<String> {
    let mut table = vec![table_header()];
    let mut results = Vec::new();
    for &seed in &cfg.seeds {
        let r = evaluate_seed(cfg, seed)?;
        table.push(format_row(&seed.to_string(), &r));
        results.push(r);
    }
    if results.len() > 1 {
        table.push(format_aggregate(&results));
    }
    let text = table.join("\n") + "\n";
    let path = Layout::new(&cfg.output_dir).summary();
    fs::write(&path, &text).map_err(io(&path))?;
    Ok(text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub stage: String,
    pub seed: Option<u64>,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub artifacts: Vec<ManifestEntry>,
}

/// SHA-256 of a file, or of every file below a directory (sorted by
/// relative path, each preceded by its path).
pub fn hash_artifact(path: &Path) -> Result<String> {
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(io(path))?
            .map(|e| e.map(|e| e.path()).map_err(io(path)))
            .collect::<Result<_>>()?;
        files.sort();
        for f in files {
            h.update(f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default().as_bytes());
            h.update(fs::read(&f).map_err(io(&f))?);
        }
    } else {
        h.update(fs::read(path).map_err(io(path))?);
    }
    Ok(hex::encode(h.finalize()))
}

fn staged<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| PipelineError::Stage { stage, source: Box::new(e) })
}

/// Runs every stage for every seed and writes the manifest. `log` receives
/// each stage's console output.
pub fn cmd_run_all(cfg: &RunConfig, log: &mut dyn FnMut(&str)) -> Result<Manifest> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.output_dir);
    fs::create_dir_all(&layout.root).map_err(io(&layout.root))?;
    fs::write(layout.config(), cfg.to_text()).map_err(io(&layout.config()))?;
    let rel = |p: &Path| p.strip_prefix(&layout.root).unwrap_or(p).display().to_string();
    let mut artifacts = Vec::new();

    if let DatasetSource::Synthetic { count, seed } = cfg.dataset {
        let dir = staged("synth", cmd_synth(count, seed, &layout.root))?;
        artifacts.push(ManifestEntry { stage: "synth".into(), seed: None, path: rel(&dir), sha256: hash_artifact(&dir)? });
    } else {
        let ds = staged("ingest", load_dataset(cfg))?;
        log(&format!("ingest: {} graphs", ds.len()));
    }
    for &seed in &cfg.seeds {
        type Stage = fn(&RunConfig, u64) -> Result<String>;
        let stages: [(&'static str, Stage, PathBuf); 4] = [
            ("train-gnn", cmd_train_gnn, layout.classifier(seed)),
            ("mine", cmd_mine, layout.patterns(seed)),
            ("train-csa", cmd_train_csa, layout.candidates(seed)),
            ("summarize", cmd_summarize, layout.csm_set(seed)),
        ];
        for (name, run, artifact) in stages {
            log(&staged(name, run(cfg, seed))?);
            artifacts.push(ManifestEntry { stage: name.into(), seed: Some(seed), path: rel(&artifact), sha256: hash_artifact(&artifact)? });
        }
    }
    log(&staged("evaluate", cmd_evaluate(cfg))?);
    for &seed in &cfg.seeds {
        let p = layout.results(seed);
        artifacts.push(ManifestEntry { stage: "evaluate".into(), seed: Some(seed), path: rel(&p), sha256: hash_artifact(&p)? });
    }
    let manifest = Manifest { format: MANIFEST_FORMAT.into(), version: MANIFEST_VERSION, artifacts };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| PipelineError::Io {
        path: layout.manifest(),
        source: std::io::Error::other(e),
    })?;
    fs::write(layout.manifest(), text).map_err(io(&layout.manifest()))?;
    Ok(manifest)
}

/// Loads `seed`'s selected rules, for callers inspecting a finished run.
pub fn load_csm_set(cfg: &RunConfig, seed: u64) -> Result<CsmSet> {
    let path = Layout::new(&cfg.output_dir).csm_set(seed);
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    Ok(CsmSet::from_json(&text)?)
}

/// The undesired hosts of a finished run for `seed`.
pub fn load_hosts(cfg: &RunConfig, seed: u64) -> Result<Vec<Graph>> {
    Ok(context(cfg, seed)?.hosts.graphs)
}
