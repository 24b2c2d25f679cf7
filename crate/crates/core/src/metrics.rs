//! Coverage, proximity and comprehensibility, globally and for local
//! (one counterfactual per host) explainers.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csa::CsmCandidate;
use crate::gnn::{Classifier, DESIRED_CLASS};
use crate::graph::{connected_components, graph_distance, symmetric_difference, Graph, GraphError, WeightedDistanceConfig};
use crate::summarizer::{coverage, ApplicationConfig, CoverageReport, Placement, SummaryError};

pub const RESULTS_FORMAT: &str = "gce-results";
pub const RESULTS_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Summary(#[from] SummaryError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("results file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A covered host with the counterfactual the metrics are computed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedPair {
    pub host_id: usize,
    pub counterfactual: Graph,
    pub distance: f64,
    /// Connected components of the edge symmetric difference.
    pub cc: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub coverage_pct: f64,
    pub proximity: Option<f64>,
    pub comprehensibility: Option<f64>,
    pub covered_count: usize,
    pub evaluated: usize,
    pub pairs: Vec<EvaluatedPair>,
}

/// Mean of the per-host minimum distances; `None` for no pairs.
pub fn proximity(distances: &[f64]) -> Option<f64> {
    (!distances.is_empty()).then(|| distances.iter().sum::<f64>() / distances.len() as f64)
}

/// `1 / (mean CC - 0.9)`; `None` for no pairs.
pub fn comprehensibility(ccs: &[usize]) -> Option<f64> {
    if ccs.is_empty() {
        return None;
    }
    let n = ccs.len() as f64;
    let total = ccs.iter().sum::<usize>() as f64;
    // n / (total - 0.9 n), scaled by 10 so all-ones is exactly 10
    Some(10.0 * n / (10.0 * total - 9.0 * n))
}

/// Component count of the symmetric-difference graph of a pair.
pub fn pair_cc(host: &Graph, counterfactual: &Graph) -> usize {
    connected_components(&symmetric_difference(host, counterfactual))
}

fn summarize(evaluated: usize, pairs: Vec<EvaluatedPair>) -> EvaluationResult {
    let distances: Vec<f64> = pairs.iter().map(|p| p.distance).collect();
    let ccs: Vec<usize> = pairs.iter().map(|p| p.cc).collect();
    EvaluationResult {
        coverage_pct: if evaluated == 0 { 0.0 } else { 100.0 * pairs.len() as f64 / evaluated as f64 },
        proximity: proximity(&distances),
        comprehensibility: comprehensibility(&ccs),
        covered_count: pairs.len(),
        evaluated,
        pairs,
    }
}

/// Metrics of a coverage report computed over `hosts`.
pub fn evaluate_report(report: &CoverageReport, hosts: &[Graph]) -> EvaluationResult {
    let pairs = report
        .best_counterfactuals
        .iter()
        .map(|(&h, b)| EvaluatedPair {
            host_id: h,
            counterfactual: b.graph.clone(),
            distance: b.distance,
            cc: pair_cc(&hosts[h], &b.graph),
        })
        .collect();
    summarize(report.evaluated, pairs)
}

/// Applies `csms` to every host and scores the closest valid counterfactuals.
pub fn evaluate_global<C: Classifier + ?Sized>(
    csms: &[CsmCandidate],
    hosts: &[Graph],
    classifier: &C,
    cfg: &ApplicationConfig,
) -> Result<(EvaluationResult, CoverageReport), MetricsError> {
    let report = coverage(csms, hosts, classifier, cfg)?;
    Ok((evaluate_report(&report, hosts), report))
}

/// Scores one optional counterfactual per host; only those the classifier
/// assigns to the desired class count.
pub fn evaluate_local<C: Classifier + ?Sized>(
    pairs: &[(Graph, Option<Graph>)],
    classifier: &C,
    weights: &WeightedDistanceConfig,
) -> Result<EvaluationResult, MetricsError> {
    let scored: Vec<Option<Result<EvaluatedPair, GraphError>>> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, (host, cf))| {
            let cf = cf.as_ref()?;
            if classifier.predict(cf) != DESIRED_CLASS {
                return None;
            }
            Some(graph_distance(cf, host, weights).map(|distance| EvaluatedPair {
                host_id: i,
                counterfactual: cf.clone(),
                distance,
                cc: pair_cc(host, cf),
            }))
        })
        .collect();
    let valid = scored.into_iter().flatten().collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(pairs.len(), valid))
}

/// One line of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum ResultRecord {
    Header { format: String, version: u32 },
    Host {
        id: usize,
        covered: bool,
        distance: Option<f64>,
        cc: Option<usize>,
        applications: Vec<Placement>,
        counterfactual: Option<Graph>,
    },
    Summary {
        seed: Option<u64>,
        coverage_pct: f64,
        proximity: Option<f64>,
        comprehensibility: Option<f64>,
        covered_count: usize,
        evaluated: usize,
    },
}

/// Writes a header, one record per evaluated host, and a summary record.
pub fn write_results<W: Write>(
    mut w: W,
    result: &EvaluationResult,
    report: Option<&CoverageReport>,
    seed: Option<u64>,
) -> Result<(), MetricsError> {
    let mut emit = |r: &ResultRecord| -> Result<(), MetricsError> {
        let line = serde_json::to_string(r).map_err(|e| MetricsError::Format(e.to_string()))?;
        writeln!(w, "{line}")?;
        Ok(())
    };
    emit(&ResultRecord::Header { format: RESULTS_FORMAT.into(), version: RESULTS_VERSION })?;
    let mut pairs = result.pairs.iter().peekable();
    for id in 0..result.evaluated {
        let rec = match pairs.next_if(|p| p.host_id == id) {
            Some(p) => ResultRecord::Host {
                id,
                covered: true,
                distance: Some(p.distance),
                cc: Some(p.cc),
                applications: report
                    .and_then(|r| r.best_counterfactuals.get(&id))
                    .map_or_else(Vec::new, |b| b.placements.clone()),
                counterfactual: Some(p.counterfactual.clone()),
            },
            None => ResultRecord::Host { id, covered: false, distance: None, cc: None, applications: Vec::new(), counterfactual: None },
        };
        emit(&rec)?;
    }
    emit(&ResultRecord::Summary {
        seed,
        coverage_pct: result.coverage_pct,
        proximity: result.proximity,
        comprehensibility: result.comprehensibility,
        covered_count: result.covered_count,
        evaluated: result.evaluated,
    })
}

/// Reads a results file back into its records, checking the header.
pub fn read_results<R: BufRead>(r: R) -> Result<Vec<ResultRecord>, MetricsError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ResultRecord =
            serde_json::from_str(&line).map_err(|e| MetricsError::Format(format!("line {}: {e}", i + 1)))?;
        if i == 0 {
            match &rec {
                ResultRecord::Header { format, version } if format == RESULTS_FORMAT && *version == RESULTS_VERSION => {}
                _ => return Err(MetricsError::Format(format!("expected {RESULTS_FORMAT} v{RESULTS_VERSION} header"))),
            }
        }
        out.push(rec);
    }
    if out.is_empty() {
        return Err(MetricsError::Format("empty file".into()));
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.decimals$}"))
}

/// One table row: coverage as a percentage with 2 decimals, the other two
/// metrics with 4.
pub fn format_row(label: &str, r: &EvaluationResult) -> String {
    format!(
        "{label:<8} {:>8} {:>10} {:>10}",
        format!("{:.2}", r.coverage_pct),
        fmt_opt(r.proximity, 4),
        fmt_opt(r.comprehensibility, 4)
    )
}

pub fn table_header() -> String {
    format!("{:<8} {:>8} {:>10} {:>10}", "run", "cove.", "prox.", "comp.")
}

/// Mean and sample standard deviation; `None` when nothing is present.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Some((mean, var.sqrt()))
}

/// `mean±std` row over several runs. Metrics absent in a run are skipped.
pub fn format_aggregate(results: &[EvaluationResult]) -> String {
    let cell = |vals: Vec<f64>, d: usize| {
        mean_std(&vals).map_or_else(|| "n/a".to_string(), |(m, s)| format!("{m:.d$}±{s:.d$}"))
    };
    format!(
        "{:<8} {:>14} {:>16} {:>16}",
        "mean",
        cell(results.iter().map(|r| r.coverage_pct).collect(), 2),
        cell(results.iter().filter_map(|r| r.proximity).collect(), 4),
        cell(results.iter().filter_map(|r| r.comprehensibility).collect(), 4)
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Graph {
        Graph::unlabeled(n, &(0..n - 1).map(|i| (i, i + 1)).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn closed_forms() {
        assert_eq!(proximity(&[0.0, 0.0]), Some(0.0));
        assert_eq!(proximity(&[1.0, 3.0]), Some(2.0));
        assert_eq!(proximity(&[]), None);
        assert_eq!(comprehensibility(&[1, 1, 1]), Some(10.0));
        assert!((comprehensibility(&[2, 2]).unwrap() - 1.0 / 1.1).abs() < 1e-12);
        assert_eq!(comprehensibility(&[]), None);
    }

    #[test]
    fn comprehensibility_decreases_in_mean_cc() {
        let mut prev = f64::INFINITY;
        for total in 4..40 {
            let ccs: Vec<usize> = (0..4).map(|i| total / 4 + usize::from(i < total % 4)).collect();
            let c = comprehensibility(&ccs).unwrap();
            assert!(c < prev);
            prev = c;
        }
    }

    #[test]
    fn local_one_extra_edge() {
        let rule = |g: &Graph| usize::from(g.edge_count() == 4);
        let pairs: Vec<(Graph, Option<Graph>)> = (0..5)
            .map(|_| {
                let mut cf = path(4);
                cf.add_edge(0, 3, None).unwrap();
                (path(4), Some(cf))
            })
            .collect();
        let r = evaluate_local(&pairs, &rule, &WeightedDistanceConfig::default()).unwrap();
        assert_eq!(r.coverage_pct, 100.0);
        assert_eq!(r.proximity, Some(1.0));
        assert_eq!(r.comprehensibility, Some(10.0));
    }

    #[test]
    fn local_mixed_validity() {
        let rule = |g: &Graph| usize::from(g.edge_count() >= 3);
        let pairs = vec![(path(3), None), (path(3), Some(path(4))), (path(3), Some(path(3))), (path(3), Some(path(5)))];
        let r = evaluate_local(&pairs, &rule, &WeightedDistanceConfig::default()).unwrap();
        assert_eq!(r.covered_count, 2);
        assert_eq!(r.coverage_pct, 50.0);
        assert!(evaluate_local(&[(path(3), None)], &rule, &WeightedDistanceConfig::default()).unwrap().proximity.is_none());
    }

    #[test]
    fn global_empty_and_identity_sets() {
        let hosts = vec![path(4), path(5)];
        let rule = |g: &Graph| usize::from(g.edge_count() > 10);
        let cfg = ApplicationConfig::default();
        let (r, _) = evaluate_global(&[], &hosts, &rule, &cfg).unwrap();
        assert_eq!((r.coverage_pct, r.proximity), (0.0, None));
        let identity = CsmCandidate::new(path(3), path(3));
        let (r, _) = evaluate_global(&[identity], &hosts, &rule, &cfg).unwrap();
        assert_eq!(r.covered_count, 0);
    }

    #[test]
    fn results_round_trip_and_recompute() {
        let hosts = vec![path(4), path(3), path(5)];
        let close = CsmCandidate::new(path(4), Graph::unlabeled(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap());
        let rule = |g: &Graph| usize::from(g.edge_count() == g.node_count());
        let (r, report) = evaluate_global(&[close], &hosts, &rule, &ApplicationConfig::default()).unwrap();
        assert_eq!(r.covered_count, 2);
        let mut buf = Vec::new();
        write_results(&mut buf, &r, Some(&report), Some(3)).unwrap();
        let recs = read_results(buf.as_slice()).unwrap();
        assert_eq!(recs.len(), 5);
        let mut dist = Vec::new();
        for rec in &recs {
            if let ResultRecord::Host { id, counterfactual: Some(cf), .. } = rec {
                dist.push(graph_distance(cf, &hosts[*id], &WeightedDistanceConfig::default()).unwrap());
            }
        }
        assert!((proximity(&dist).unwrap() - r.proximity.unwrap()).abs() <= 1e-9);
        assert!(read_results(&b"{\"record\":\"header\",\"format\":\"x\",\"version\":1}\n"[..]).is_err());
    }

    #[test]
    fn formatting() {
        let r = EvaluationResult {
            coverage_pct: 93.3412,
            proximity: Some(1.23456),
            comprehensibility: None,
            covered_count: 1,
            evaluated: 1,
            pairs: vec![],
        };
        let row = format_row("0", &r);
        assert!(row.contains("93.34") && row.contains("1.2346") && row.contains("n/a"));
        assert_eq!(mean_std(&[1.0, 3.0]), Some((2.0, 2f64.sqrt())));
        assert!(format_aggregate(&[r.clone(), r]).contains("93.34±0.00"));
    }
}
