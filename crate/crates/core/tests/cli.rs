//! End-to-end runs of the `gce` binary on the small configuration.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gce::metrics::{read_results, ResultRecord};
use gce::pipeline::Manifest;
use gce::tu::parse_tu_dataset;

fn smoke_conf() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml")
}

fn gce(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gce"))
        .arg("--config")
        .arg(smoke_conf())
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("GCE_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_writes_balanced_parseable_dataset() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = gce(dir.path(), &["synth", "1000", "3"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let ds = parse_tu_dataset(&a.path().join("dataset"), "SYNTH", None).unwrap();
    assert_eq!(ds.len(), 1000);
    assert_eq!(ds.labels.iter().filter(|&&y| y == 1).count(), 500);
    for f in std::fs::read_dir(a.path().join("dataset")).unwrap() {
        let f = f.unwrap();
        let other = b.path().join("dataset").join(f.file_name());
        assert_eq!(std::fs::read(f.path()).unwrap(), std::fs::read(other).unwrap(), "{:?}", f.file_name());
    }
}

#[test]
fn missing_dataset_is_a_runtime_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = gce(dir.path(), &["train-gnn"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains(&dir.path().join("dataset").display().to_string()), "{}", stderr(&o));

    let conf = dir.path().join("tu.toml");
    std::fs::write(&conf, "[dataset]\nkind = \"tu\"\npath = \"/nonexistent/tu\"\nname = \"MUTAG\"\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_gce")).arg("--config").arg(&conf).arg("--out").arg(dir.path()).arg("train-gnn").output().unwrap();
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("/nonexistent/tu"), "{}", stderr(&o));
}

#[test]
fn usage_and_config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&gce(dir.path(), &["no-such-verb"])), 1);

    let conf = dir.path().join("bad.toml");
    std::fs::write(&conf, "miner.budget = 4\nsummarize.k = 5\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_gce")).arg("--config").arg(&conf).arg("summarize").output().unwrap();
    assert_eq!(code(&o), 1, "{}", stderr(&o));

    let o = Command::new(env!("CARGO_BIN_EXE_gce")).arg("--config").arg(smoke_conf()).arg("evaluate").env("GCE_THREADS", "zero").output().unwrap();
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn empty_candidate_dump_gives_zero_coverage() {
    let dir = tempfile::tempdir().unwrap();
    for verb in ["synth", "train-gnn", "mine", "train-csa"] {
        let o = gce(dir.path(), &[verb]);
        assert_eq!(code(&o), 0, "{verb}: {}", stderr(&o));
    }
    let dump = dir.path().join("seed-0/candidates.jsonl");
    let text = std::fs::read_to_string(&dump).unwrap();
    std::fs::write(&dump, format!("{}\n", text.lines().next().unwrap())).unwrap();
    for verb in ["summarize", "evaluate"] {
        let o = gce(dir.path(), &[verb]);
        assert_eq!(code(&o), 0, "{verb}: {}", stderr(&o));
    }
    let records = read_results(std::io::BufReader::new(std::fs::File::open(dir.path().join("seed-0/results.jsonl")).unwrap())).unwrap();
    match records.last().unwrap() {
        ResultRecord::Summary { coverage_pct, covered_count, .. } => {
            assert_eq!(*coverage_pct, 0.0);
            assert_eq!(*covered_count, 0);
        }
        other => panic!("last record {other:?}"),
    }
}

#[test]
fn run_all_writes_manifest_and_aggregates_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("two.toml");
    std::fs::write(&conf, std::fs::read_to_string(smoke_conf()).unwrap().replace("seeds = [0]", "seeds = [0, 1]")).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_gce")).arg("--config").arg(&conf).arg("--out").arg(dir.path()).arg("run-all").output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    // dataset, then four stages per seed, then one results file per seed
    assert_eq!(manifest.artifacts.len(), 11);

    // mean and sample std recomputed from the per-seed summaries
    let mut coverage = Vec::new();
    for seed in [0, 1] {
        let f = std::fs::File::open(dir.path().join(format!("seed-{seed}/results.jsonl"))).unwrap();
        let records = read_results(std::io::BufReader::new(f)).unwrap();
        match records.last().unwrap() {
            ResultRecord::Summary { coverage_pct, .. } => coverage.push(*coverage_pct),
            other => panic!("last record {other:?}"),
        }
    }
    let mean = (coverage[0] + coverage[1]) / 2.0;
    let std = ((coverage[0] - mean).powi(2) + (coverage[1] - mean).powi(2)).sqrt();
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    let last = summary.lines().last().unwrap();
    assert!(last.starts_with("mean") && last.contains(&format!("{mean:.2}±{std:.2}")), "{summary}");
}
