//! Run configuration, read from TOML with one table per stage.
//!
//! ```toml
//! [dataset]
//! kind = "synthetic"
//! count = 1000
//!
//! [miner]
//! min_nodes = 4
//!
//! [run]
//! seeds = [0, 1, 2, 3, 4]
//! ```
//!
//! Unset keys keep their defaults; unknown keys are rejected. Every key is
//! addressed as `table.key`, which is also the form [`RunConfig::set`] takes.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::csa::CsaConfig;
use crate::gnn::TrainConfig;
use crate::miner::MinerConfig;
use crate::summarizer::ApplicationConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Syntax(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic { count: usize, seed: u64 },
    Tu { path: PathBuf, name: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummarizeConfig {
    pub k: usize,
    pub application: ApplicationConfig,
}

impl Default for SummarizeConfig {
    fn default() -> Self {
        SummarizeConfig { k: 10, application: ApplicationConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub label_map: Option<PathBuf>,
    pub gnn: TrainConfig,
    pub miner: MinerConfig,
    pub csa: CsaConfig,
    pub summarize: SummarizeConfig,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetSource::Synthetic { count: 1000, seed: 0 },
            label_map: None,
            gnn: TrainConfig::default(),
            miner: MinerConfig::default(),
            csa: CsaConfig::default(),
            summarize: SummarizeConfig::default(),
            seeds: vec![0],
            output_dir: PathBuf::from("out"),
            threads: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e: T::Err| ConfigError::Value { key: key.to_string(), msg: e.to_string() })
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

/// The snake_case name serde uses for a unit enum variant.
fn tag<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|j| j.as_str().map(str::to_string)).unwrap_or_default()
}

/// A TOML value in the textual form [`RunConfig::set`] parses; arrays
/// become comma-separated lists.
fn scalar_text(key: &str, v: &toml::Value) -> Result<String, ConfigError> {
    use toml::Value;
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Integer(i) => Ok(i.to_string()),
        Value::Float(f) => Ok(f.to_string()),
        Value::Boolean(b) => Ok(b.to_string()),
        Value::Array(xs) => Ok(xs.iter().map(|x| scalar_text(key, x)).collect::<Result<Vec<_>, _>>()?.join(",")),
        _ => Err(ConfigError::Value { key: key.to_string(), msg: format!("unsupported value {v}") }),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        let mut cfg = RunConfig::default();
        let mut kind = None;
        let (mut count, mut dseed, mut path, mut name) = (1000usize, 0u64, None, None);
        for (section, body) in &doc {
            let toml::Value::Table(body) = body else {
                return Err(ConfigError::UnknownKey(section.clone()));
            };
            for (k, value) in body {
                let key = format!("{section}.{k}");
                let v = scalar_text(&key, value)?;
                let (key, v) = (key.as_str(), v.as_str());
                match key {
                    "dataset.kind" => kind = Some(v.to_string()),
                    "dataset.count" => count = parse(key, v)?,
                    "dataset.seed" => dseed = parse(key, v)?,
                    "dataset.path" => path = Some(PathBuf::from(v)),
                    "dataset.name" => name = Some(v.to_string()),
                    "dataset.label_map" => cfg.label_map = (!v.is_empty()).then(|| PathBuf::from(v)),
                    _ => cfg.set(key, v)?,
                }
            }
        }
        let kind = kind.unwrap_or_else(|| if path.is_some() { "tu".into() } else { "synthetic".into() });
        cfg.dataset = match kind.as_str() {
            "synthetic" => DatasetSource::Synthetic { count, seed: dseed },
            "tu" => DatasetSource::Tu {
                path: path.ok_or_else(|| ConfigError::Invalid("dataset.kind = tu needs dataset.path".into()))?,
                name: name.ok_or_else(|| ConfigError::Invalid("dataset.kind = tu needs dataset.name".into()))?,
            },
            other => return Err(ConfigError::Value { key: "dataset.kind".into(), msg: format!("unknown kind `{other}`") }),
        };
        Ok(cfg)
    }

    /// Sets one non-dataset key; used by the parser and by flag overrides.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let bad = |msg: String| ConfigError::Value { key: key.to_string(), msg };
        match key {
            "gnn.architecture" => self.gnn.architecture = v.parse().map_err(bad)?,
            "gnn.epochs" => self.gnn.epochs = parse(key, v)?,
            "gnn.learning_rate" => self.gnn.learning_rate = parse(key, v)?,
            "gnn.weight_decay" => self.gnn.weight_decay = parse(key, v)?,
            "gnn.optimizer" => self.gnn.optimizer = v.parse().map_err(bad)?,
            "gnn.batch_size" => self.gnn.batch_size = parse(key, v)?,
            "gnn.split" => {
                let f: Vec<f64> = parse_list(key, v)?;
                let [a, b, c] = f[..] else { return Err(bad("expected three fractions".into())) };
                self.gnn.split = (a, b, c);
            }
            "miner.tau" => self.miner.tau = parse(key, v)?,
            "miner.min_nodes" => self.miner.min_nodes = parse(key, v)?,
            "miner.max_nodes" => self.miner.max_nodes = parse(key, v)?,
            "miner.budget" => self.miner.budget = parse(key, v)?,
            "miner.selection_mode" => self.miner.selection_mode = v.parse().map_err(bad)?,
            "csa.alpha" => self.csa.alpha = parse(key, v)?,
            "csa.extra_nodes" => self.csa.extra_nodes = parse(key, v)?,
            "csa.rho" => self.csa.distance.rho = parse(key, v)?,
            "csa.beta" => self.csa.distance.beta = parse(key, v)?,
            "csa.gamma" => self.csa.distance.gamma = parse(key, v)?,
            "csa.epochs" => self.csa.epochs = parse(key, v)?,
            "csa.learning_rate" => self.csa.learning_rate = parse(key, v)?,
            "csa.latent_dim" => self.csa.latent_dim = parse(key, v)?,
            "csa.encoder_hidden" => self.csa.encoder_hidden = parse(key, v)?,
            "csa.decoder_hidden" => self.csa.decoder_hidden = parse(key, v)?,
            "csa.dropout" => self.csa.dropout = parse(key, v)?,
            "csa.batch_size" => self.csa.batch_size = parse(key, v)?,
            "summarize.k" => self.summarize.k = parse(key, v)?,
            "summarize.max_simultaneous" => self.summarize.application.max_simultaneous = parse(key, v)?,
            "summarize.max_occurrences" => self.summarize.application.max_occurrences = parse(key, v)?,
            "run.seeds" => self.seeds = parse_list(key, v)?,
            "run.output_dir" => self.output_dir = PathBuf::from(v),
            "run.threads" => self.threads = Some(parse(key, v)?),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Every key as TOML, in a form [`RunConfig::parse`] reads back.
    pub fn to_text(&self) -> String {
        use toml::Value;
        let mut doc = toml::Table::new();
        let mut kv = |k: &str, v: Value| {
            let (section, key) = k.split_once('.').expect("dotted key");
            let table = doc.entry(section).or_insert_with(|| Value::Table(toml::Table::new()));
            table.as_table_mut().expect("section table").insert(key.to_string(), v);
        };
        let int = |x: usize| Value::Integer(x as i64);
        match &self.dataset {
            DatasetSource::Synthetic { count, seed } => {
                kv("dataset.kind", "synthetic".into());
                kv("dataset.count", int(*count));
                kv("dataset.seed", Value::Integer(*seed as i64));
            }
            DatasetSource::Tu { path, name } => {
                kv("dataset.kind", "tu".into());
                kv("dataset.path", path.display().to_string().into());
                kv("dataset.name", name.clone().into());
            }
        }
        if let Some(p) = &self.label_map {
            kv("dataset.label_map", p.display().to_string().into());
        }
        let g = &self.gnn;
        kv("gnn.architecture", tag(&g.architecture).into());
        kv("gnn.epochs", int(g.epochs));
        kv("gnn.learning_rate", Value::Float(g.learning_rate));
        kv("gnn.weight_decay", Value::Float(g.weight_decay));
        kv("gnn.optimizer", tag(&g.optimizer).into());
        kv("gnn.batch_size", int(g.batch_size));
        kv("gnn.split", Value::Array(vec![g.split.0.into(), g.split.1.into(), g.split.2.into()]));
        let m = &self.miner;
        kv("miner.tau", Value::Float(m.tau));
        kv("miner.min_nodes", int(m.min_nodes));
        kv("miner.max_nodes", int(m.max_nodes));
        kv("miner.budget", int(m.budget));
        kv("miner.selection_mode", tag(&m.selection_mode).into());
        let c = &self.csa;
        kv("csa.alpha", Value::Float(c.alpha));
        kv("csa.extra_nodes", int(c.extra_nodes));
        kv("csa.rho", Value::Float(c.distance.rho));
        kv("csa.beta", Value::Float(c.distance.beta));
        kv("csa.gamma", Value::Float(c.distance.gamma));
        kv("csa.epochs", int(c.epochs));
        kv("csa.learning_rate", Value::Float(c.learning_rate));
        kv("csa.latent_dim", int(c.latent_dim));
        kv("csa.encoder_hidden", int(c.encoder_hidden));
        kv("csa.decoder_hidden", int(c.decoder_hidden));
        kv("csa.dropout", Value::Float(c.dropout));
        kv("csa.batch_size", int(c.batch_size));
        kv("summarize.k", int(self.summarize.k));
        kv("summarize.max_simultaneous", int(self.summarize.application.max_simultaneous));
        kv("summarize.max_occurrences", int(self.summarize.application.max_occurrences));
        kv("run.seeds", Value::Array(self.seeds.iter().map(|&s| Value::Integer(s as i64)).collect()));
        kv("run.output_dir", self.output_dir.display().to_string().into());
        if let Some(t) = self.threads {
            kv("run.threads", int(t));
        }
        toml::to_string(&doc).expect("plain tables serialize")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.gnn.validate().map_err(|e| inv(&e))?;
        self.miner.validate().map_err(|e| inv(&e))?;
        self.csa.validate().map_err(|e| inv(&e))?;
        self.summarize.application.distance.validate().map_err(|e| inv(&e))?;
        if self.summarize.k == 0 || self.summarize.k > self.miner.budget {
            return Err(ConfigError::Invalid(format!(
                "summarize.k = {} must lie in 1..={} (miner.budget)",
                self.summarize.k, self.miner.budget
            )));
        }
        if self.summarize.application.max_simultaneous == 0 || self.summarize.application.max_occurrences == 0 {
            return Err(ConfigError::Invalid("max_simultaneous and max_occurrences must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("run.seeds is empty".into()));
        }
        if self.threads == Some(0) {
            return Err(ConfigError::Invalid("run.threads must be at least 1".into()));
        }
        if let DatasetSource::Synthetic { count, .. } = self.dataset {
            if count < 2 || count % 2 != 0 {
                return Err(ConfigError::Invalid(format!("dataset.count = {count} must be even and >= 2")));
            }
        }
        Ok(())
    }
}
