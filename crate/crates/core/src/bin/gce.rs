use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gce::config::{ConfigError, DatasetSource, RunConfig};
use gce::pipeline::{self, PipelineError};

/// Global counterfactual explanations for graph classifiers.
#[derive(Parser)]
#[command(name = "gce", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (overrides GCE_THREADS and run.threads).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (overrides run.output_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic dataset in TU format.
    Synth {
        /// Number of graphs (even).
        count: Option<usize>,
        /// Generator seed.
        gen_seed: Option<u64>,
    },
    /// Train the explainee classifier.
    TrainGnn,
    /// Mine significant subgraphs from graphs classified undesired.
    Mine,
    /// Train one counterfactual autoencoder per pattern.
    TrainCsa,
    /// Greedily select the rule set.
    Summarize,
    /// Score the rule set: coverage, proximity, comprehensibility.
    Evaluate,
    /// Run every stage and write a manifest of artifact hashes.
    RunAll,
}

fn resolve(common: &Common) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seeds = vec![s];
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Ok(v) = std::env::var("GCE_THREADS") {
        cfg.set("run.threads", &v)?;
    }
    if let Some(t) = common.threads {
        cfg.threads = Some(t);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = resolve(&cli.common)?;
    if let Some(t) = cfg.threads {
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let per_seed = |f: fn(&RunConfig, u64) -> Result<String, PipelineError>, cfg: &RunConfig| {
        cfg.seeds.iter().try_for_each(|&s| f(cfg, s).map(|msg| println!("{msg}")))
    };
    match cli.command {
        Command::Synth { count, gen_seed } => {
            let (c0, s0) = match cfg.dataset {
                DatasetSource::Synthetic { count, seed } => (count, seed),
                DatasetSource::Tu { .. } => (1000, 0),
            };
            let count = count.unwrap_or(c0);
            let seed = gen_seed.or(cli.common.seed).unwrap_or(s0);
            cfg.dataset = DatasetSource::Synthetic { count, seed };
            cfg.validate()?;
            let dir = pipeline::cmd_synth(count, seed, &cfg.output_dir)?;
            println!("wrote {count} graphs to {}", dir.display());
        }
        Command::TrainGnn => per_seed(pipeline::cmd_train_gnn, &cfg)?,
        Command::Mine => per_seed(pipeline::cmd_mine, &cfg)?,
        Command::TrainCsa => per_seed(pipeline::cmd_train_csa, &cfg)?,
        Command::Summarize => per_seed(pipeline::cmd_summarize, &cfg)?,
        Command::Evaluate => print!("{}", pipeline::cmd_evaluate(&cfg)?),
        Command::RunAll => {
            let manifest = pipeline::cmd_run_all(&cfg, &mut |msg| println!("{msg}"))?;
            println!("manifest: {} artifacts in {}", manifest.artifacts.len(), cfg.output_dir.join("manifest.json").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
