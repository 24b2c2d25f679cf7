//! Applying counterfactual subgraph mappings (CSMs), the coverage they
//! achieve on undesired graphs, and budgeted greedy selection.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csa::CsmCandidate;
use crate::gnn::{Classifier, DESIRED_CLASS};
use crate::graph::{graph_distance, Graph, GraphError, WeightedDistanceConfig};
use crate::matcher::{find_occurrences, is_isomorphic, is_valid_occurrence, MatchConfig, Occurrence, DEFAULT_MAX_OCCURRENCES};

pub const CSM_SET_FORMAT: &str = "gce-csm-set";
pub const CSM_SET_VERSION: u32 = 1;
const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Error)]
pub enum SummaryError {
    #[error("occurrence is not a valid embedding of the CSM source")]
    InvalidOccurrence,
    #[error("CSM correspondence does not fit its graphs")]
    BadCorrespondence,
    #[error("budget must be at least 1")]
    InvalidBudget,
    #[error("budget {k} exceeds the {available} available candidates")]
    BudgetTooLarge { k: usize, available: usize },
    #[error("{0} subsets exceed the exhaustive search limit")]
    TooManySubsets(u128),
    #[error("no graphs to evaluate")]
    EmptyDataset,
    #[error("csm set: {0}")]
    Format(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApplicationConfig {
    /// Most CSM applications combined in one counterfactual.
    pub max_simultaneous: usize,
    /// Most occurrences considered per (CSM, host).
    pub max_occurrences: usize,
    pub distance: WeightedDistanceConfig,
}

impl Default for ApplicationConfig {
    fn default() -> Self {
        ApplicationConfig {
            max_simultaneous: 2,
            max_occurrences: DEFAULT_MAX_OCCURRENCES,
            distance: WeightedDistanceConfig::default(),
        }
    }
}

/// Replaces the image of `occ` in `host` with the CSM's counterfactual:
/// image labels and image-internal edges come from the counterfactual,
/// counterfactual nodes without a source counterpart are appended, and every
/// edge with an endpoint outside the image is kept.
pub fn apply_csm(host: &Graph, csm: &CsmCandidate, occ: &Occurrence) -> Result<Graph, SummaryError> {
    if !is_valid_occurrence(&csm.source, host, occ, MatchConfig::default()) {
        return Err(SummaryError::InvalidOccurrence);
    }
    let cf = &csm.counterfactual;
    if csm.correspondence.len() != csm.source.node_count() || csm.correspondence.iter().any(|&c| c >= cf.node_count()) {
        return Err(SummaryError::BadCorrespondence);
    }
    let mut out = host.clone();
    let image = &occ.mapping;
    for (i, &u) in image.iter().enumerate() {
        for &v in &image[i + 1..] {
            out.remove_edge(u, v);
        }
    }
    let mut to_host = vec![usize::MAX; cf.node_count()];
    for (p, &c) in csm.correspondence.iter().enumerate() {
        to_host[c] = image[p];
        out.set_node_label(image[p], cf.node_label(c))?;
    }
    for (c, slot) in to_host.iter_mut().enumerate() {
        if *slot == usize::MAX {
            *slot = out.add_node(cf.node_label(c))?;
        }
    }
    let labeled = cf.edge_vocab() > 0;
    for (a, b, label) in cf.edges() {
        out.add_edge(to_host[a], to_host[b], labeled.then_some(label))?;
    }
    Ok(out)
}

/// One CSM placed at one occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub csm: usize,
    pub occurrence: Occurrence,
}

/// A counterfactual produced by applying one or more placements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Application {
    pub graph: Graph,
    pub placements: Vec<Placement>,
}

fn placements(host: &Graph, csms: &[CsmCandidate], max_occ: usize) -> Vec<Placement> {
    csms.iter()
        .enumerate()
        .flat_map(|(i, c)| {
            find_occurrences(&c.source, host, max_occ).into_iter().map(move |occurrence| Placement { csm: i, occurrence })
        })
        .collect()
}

fn apply_all(host: &Graph, csms: &[CsmCandidate], combo: &[&Placement]) -> Graph {
    combo.iter().fold(host.clone(), |g, p| {
        apply_csm(&g, &csms[p.csm], &p.occurrence).expect("disjoint placements stay valid")
    })
}

/// Every counterfactual reachable with up to `max_simultaneous` placements
/// with pairwise disjoint images: singles in (CSM, occurrence) order, then
/// pairs, then larger groups, each in lexicographic order. Structurally
/// equal results are reported once.
pub fn enumerate_applications(host: &Graph, csms: &[CsmCandidate], cfg: &ApplicationConfig) -> Vec<Application> {
    let singles = placements(host, csms, cfg.max_occurrences);
    let mut out: Vec<Application> = Vec::new();
    for size in 1..=cfg.max_simultaneous.max(1) {
        for_each_combo(&singles, size, &mut |combo| {
            let graph = apply_all(host, csms, combo);
            if !out.iter().any(|a| a.graph == graph) {
                out.push(Application { graph, placements: combo.iter().map(|p| (*p).clone()).collect() });
            }
        });
    }
    out
}

/// Calls `f` with every `size`-subset of pairwise disjoint placements, in
/// lexicographic index order.
fn for_each_combo<'a>(singles: &'a [Placement], size: usize, f: &mut dyn FnMut(&[&'a Placement])) {
    fn rec<'a>(singles: &'a [Placement], start: usize, size: usize, cur: &mut Vec<&'a Placement>, f: &mut dyn FnMut(&[&'a Placement])) {
        if cur.len() == size {
            f(cur);
            return;
        }
        for i in start..singles.len() {
            if cur.iter().all(|p| p.occurrence.is_disjoint(&singles[i].occurrence)) {
                cur.push(&singles[i]);
                rec(singles, i + 1, size, cur, f);
                cur.pop();
            }
        }
    }
    rec(singles, 0, size, &mut Vec::new(), f);
}

/// Best valid counterfactual of one host.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestCounterfactual {
    pub graph: Graph,
    pub distance: f64,
    pub placements: Vec<Placement>,
}

/// Whether any application of `csms` flips `host` to the desired class, and
/// the valid counterfactual closest to the host (earliest on ties).
/// Distances are measured from the counterfactual to the host.
pub fn is_covered<C: Classifier + ?Sized>(
    host: &Graph,
    csms: &[CsmCandidate],
    classifier: &C,
    cfg: &ApplicationConfig,
) -> Option<BestCounterfactual> {
    let mut best: Option<BestCounterfactual> = None;
    for app in enumerate_applications(host, csms, cfg) {
        if classifier.predict(&app.graph) != DESIRED_CLASS {
            continue;
        }
        let distance = graph_distance(&app.graph, host, &cfg.distance).expect("shared vocabularies");
        if best.as_ref().is_none_or(|b| distance < b.distance) {
            best = Some(BestCounterfactual { graph: app.graph, distance, placements: app.placements });
        }
    }
    best
}

/// A minimal valid application: the CSM indices it uses and its result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    /// Sorted, deduplicated CSM indices.
    pub csms: Vec<usize>,
    pub distance: f64,
    pub graph: Graph,
    pub placements: Vec<Placement>,
}

/// Valid applications of a candidate pool on every host, from which the
/// coverage and best counterfactuals of any subset of the pool follow
/// without re-running the classifier.
///
/// Combinations extending an already valid combination are skipped: adding
/// disjoint edits never lowers the distance, so they can neither cover a new
/// host nor improve a best counterfactual.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WitnessIndex {
    pub pool_size: usize,
    pub witnesses: Vec<Vec<Witness>>,
}

impl WitnessIndex {
    pub fn build<C: Classifier + ?Sized>(hosts: &[Graph], csms: &[CsmCandidate], classifier: &C, cfg: &ApplicationConfig) -> Self {
        let witnesses = hosts.par_iter().map(|h| host_witnesses(h, csms, classifier, cfg)).collect();
        WitnessIndex { pool_size: csms.len(), witnesses }
    }

    pub fn host_count(&self) -> usize {
        self.witnesses.len()
    }

    /// Best witness of host `h` using only CSMs with `selected[i]` set.
    pub fn best(&self, h: usize, selected: &[bool]) -> Option<&Witness> {
        let mut best: Option<&Witness> = None;
        for w in &self.witnesses[h] {
            if w.csms.iter().all(|&c| selected[c]) && best.is_none_or(|b| w.distance < b.distance) {
                best = Some(w);
            }
        }
        best
    }

    pub fn covered_count(&self, selected: &[bool]) -> usize {
        (0..self.host_count()).filter(|&h| self.best(h, selected).is_some()).count()
    }

    pub fn mask(&self, subset: &[usize]) -> Vec<bool> {
        let mut m = vec![false; self.pool_size];
        for &i in subset {
            m[i] = true;
        }
        m
    }
}

fn host_witnesses<C: Classifier + ?Sized>(host: &Graph, csms: &[CsmCandidate], classifier: &C, cfg: &ApplicationConfig) -> Vec<Witness> {
    let singles = placements(host, csms, cfg.max_occurrences);
    let mut out = Vec::new();
    let mut seen: Vec<(Vec<usize>, Graph)> = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    fn rec<C: Classifier + ?Sized>(
        host: &Graph,
        csms: &[CsmCandidate],
        classifier: &C,
        cfg: &ApplicationConfig,
        singles: &[Placement],
        start: usize,
        stack: &mut Vec<usize>,
        seen: &mut Vec<(Vec<usize>, Graph)>,
        out: &mut Vec<Witness>,
    ) {
        for i in start..singles.len() {
            if !stack.iter().all(|&j| singles[j].occurrence.is_disjoint(&singles[i].occurrence)) {
                continue;
            }
            stack.push(i);
            let combo: Vec<&Placement> = stack.iter().map(|&j| &singles[j]).collect();
            let graph = apply_all(host, csms, &combo);
            let valid = classifier.predict(&graph) == DESIRED_CLASS;
            let mut ids: Vec<usize> = combo.iter().map(|p| p.csm).collect();
            ids.sort_unstable();
            ids.dedup();
            // the same graph may be reachable from different CSM sets; each set needs its own witness
            let known = seen.iter().any(|(s, g)| s.iter().all(|c| ids.contains(c)) && *g == graph);
            if valid && !known {
                let distance = graph_distance(&graph, host, &cfg.distance).expect("shared vocabularies");
                seen.push((ids.clone(), graph.clone()));
                out.push(Witness { csms: ids, distance, graph, placements: combo.into_iter().cloned().collect() });
            } else if !valid && stack.len() < cfg.max_simultaneous {
                rec(host, csms, classifier, cfg, singles, i + 1, stack, seen, out);
            }
            stack.pop();
        }
    }
    rec(host, csms, classifier, cfg, &singles, 0, &mut stack, &mut seen, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub coverage: f64,
    pub evaluated: usize,
    pub covered_ids: Vec<usize>,
    pub best_counterfactuals: BTreeMap<usize, BestCounterfactual>,
    /// Greedy trace of the set, when it came from a selection.
    #[serde(default)]
    pub per_csm_marginals: Vec<SelectionStep>,
}

/// Coverage of the CSM subset `selected` over the indexed hosts.
pub fn coverage_from_index(index: &WitnessIndex, selected: &[usize]) -> Result<CoverageReport, SummaryError> {
    if index.host_count() == 0 {
        return Err(SummaryError::EmptyDataset);
    }
    let mask = index.mask(selected);
    let mut best_counterfactuals = BTreeMap::new();
    for h in 0..index.host_count() {
        if let Some(w) = index.best(h, &mask) {
            best_counterfactuals.insert(
                h,
                BestCounterfactual { graph: w.graph.clone(), distance: w.distance, placements: w.placements.clone() },
            );
        }
    }
    let covered_ids: Vec<usize> = best_counterfactuals.keys().copied().collect();
    Ok(CoverageReport {
        coverage: covered_ids.len() as f64 / index.host_count() as f64,
        evaluated: index.host_count(),
        covered_ids,
        best_counterfactuals,
        per_csm_marginals: Vec::new(),
    })
}

/// Fraction of `hosts` covered by `csms` (hosts are evaluated in parallel).
pub fn coverage<C: Classifier + ?Sized>(
    csms: &[CsmCandidate],
    hosts: &[Graph],
    classifier: &C,
    cfg: &ApplicationConfig,
) -> Result<CoverageReport, SummaryError> {
    if hosts.is_empty() {
        return Err(SummaryError::EmptyDataset);
    }
    let best: Vec<Option<BestCounterfactual>> = hosts.par_iter().map(|h| is_covered(h, csms, classifier, cfg)).collect();
    let best_counterfactuals: BTreeMap<usize, BestCounterfactual> =
        best.into_iter().enumerate().filter_map(|(i, b)| b.map(|b| (i, b))).collect();
    let covered_ids: Vec<usize> = best_counterfactuals.keys().copied().collect();
    Ok(CoverageReport {
        coverage: covered_ids.len() as f64 / hosts.len() as f64,
        evaluated: hosts.len(),
        covered_ids,
        best_counterfactuals,
        per_csm_marginals: Vec::new(),
    })
}

/// One greedy round: the chosen candidate and what it added.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub candidate: usize,
    pub marginal: usize,
    pub covered_after: usize,
    /// Mean distance of the hosts this round newly covered.
    pub mean_new_distance: Option<f64>,
}

/// Greedy maximum-coverage selection of `k` candidates. Ties go to the lower
/// mean distance of newly covered hosts, then the lower candidate index.
pub fn greedy_select(index: &WitnessIndex, k: usize) -> Result<Vec<SelectionStep>, SummaryError> {
    if k == 0 {
        return Err(SummaryError::InvalidBudget);
    }
    if k > index.pool_size {
        return Err(SummaryError::BudgetTooLarge { k, available: index.pool_size });
    }
    let mut selected = vec![false; index.pool_size];
    let mut covered: Vec<bool> = vec![false; index.host_count()];
    let mut trace = Vec::new();
    for _ in 0..k {
        let scored: Vec<(usize, usize, f64)> = (0..index.pool_size)
            .into_par_iter()
            .filter(|&c| !selected[c])
            .map(|c| {
                let mut trial = selected.clone();
                trial[c] = true;
                let (mut gain, mut dist) = (0, 0.0);
                for h in 0..index.host_count() {
                    if !covered[h] {
                        if let Some(w) = index.best(h, &trial) {
                            gain += 1;
                            dist += w.distance;
                        }
                    }
                }
                let mean = if gain > 0 { dist / gain as f64 } else { f64::INFINITY };
                (c, gain, mean)
            })
            .collect();
        let &(c, gain, mean) = scored
            .iter()
            .min_by(|a, b| b.1.cmp(&a.1).then(a.2.total_cmp(&b.2)).then(a.0.cmp(&b.0)))
            .expect("k <= pool size leaves a candidate");
        selected[c] = true;
        for (h, flag) in covered.iter_mut().enumerate() {
            if !*flag && index.best(h, &selected).is_some() {
                *flag = true;
            }
        }
        trace.push(SelectionStep {
            candidate: c,
            marginal: gain,
            covered_after: covered.iter().filter(|&&f| f).count(),
            mean_new_distance: (gain > 0).then_some(mean),
        });
    }
    Ok(trace)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Exact best `k`-subset by exhaustive search; the lexicographically first
/// optimum wins ties.
pub fn brute_force_select(index: &WitnessIndex, k: usize) -> Result<(Vec<usize>, usize), SummaryError> {
    if k == 0 {
        return Err(SummaryError::InvalidBudget);
    }
    if k > index.pool_size {
        return Err(SummaryError::BudgetTooLarge { k, available: index.pool_size });
    }
    let subsets = binomial(index.pool_size, k);
    if subsets > BRUTE_FORCE_LIMIT {
        return Err(SummaryError::TooManySubsets(subsets));
    }
    let mut combo: Vec<usize> = (0..k).collect();
    let mut best = (combo.clone(), index.covered_count(&index.mask(&combo)));
    loop {
        // next combination in lexicographic order
        let Some(i) = (0..k).rev().find(|&i| combo[i] < index.pool_size - k + i) else { break };
        combo[i] += 1;
        for j in i + 1..k {
            combo[j] = combo[j - 1] + 1;
        }
        let c = index.covered_count(&index.mask(&combo));
        if c > best.1 {
            best = (combo.clone(), c);
        }
    }
    Ok(best)
}

/// The selected rules with their greedy trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsmSet {
    pub budget: usize,
    pub csms: Vec<CsmCandidate>,
    /// Candidate-pool index of each selected CSM.
    pub pool_ids: Vec<usize>,
    pub trace: Vec<SelectionStep>,
}

impl CsmSet {
    pub fn from_trace(pool: &[CsmCandidate], budget: usize, trace: Vec<SelectionStep>) -> Self {
        let pool_ids: Vec<usize> = trace.iter().map(|s| s.candidate).collect();
        CsmSet { budget, csms: pool_ids.iter().map(|&i| pool[i].clone()).collect(), pool_ids, trace }
    }

    /// Checks the size bound and that no two sources are isomorphic.
    pub fn validate(&self) -> Result<(), SummaryError> {
        if self.csms.len() > self.budget {
            return Err(SummaryError::Format(format!("{} rules exceed budget {}", self.csms.len(), self.budget)));
        }
        for (i, a) in self.csms.iter().enumerate() {
            for b in &self.csms[i + 1..] {
                if is_isomorphic(&a.source, &b.source) {
                    return Err(SummaryError::Format("two rules share an isomorphic source".into()));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, SummaryError> {
        let file = CsmSetFile { format: CSM_SET_FORMAT.into(), version: CSM_SET_VERSION, set: self.clone() };
        serde_json::to_string_pretty(&file).map_err(|e| SummaryError::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, SummaryError> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: u32,
        }
        let h: Header = serde_json::from_str(text).map_err(|e| SummaryError::Format(e.to_string()))?;
        if h.format != CSM_SET_FORMAT || h.version != CSM_SET_VERSION {
            return Err(SummaryError::Format(format!(
                "unsupported {} v{} (expected {CSM_SET_FORMAT} v{CSM_SET_VERSION})",
                h.format, h.version
            )));
        }
        let file: CsmSetFile = serde_json::from_str(text).map_err(|e| SummaryError::Format(e.to_string()))?;
        Ok(file.set)
    }

    /// Human-readable rule listing. `coverage` must index placements by
    /// candidate-pool position, as [`coverage_from_index`] does.
    pub fn report(&self, hosts: &[Graph], coverage: &CoverageReport) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} rule(s), budget {}", self.csms.len(), self.budget);
        let _ = writeln!(out, "coverage {:.2}% ({} of {})", 100.0 * coverage.coverage, coverage.covered_ids.len(), coverage.evaluated);
        for (rank, (csm, step)) in self.csms.iter().zip(&self.trace).enumerate() {
            let _ = writeln!(out, "\nrule {} (candidate {})", rank + 1, step.candidate);
            let _ = writeln!(out, "  source         {}", describe(&csm.source));
            let _ = writeln!(out, "  counterfactual {}", describe(&csm.counterfactual));
            let _ = writeln!(out, "  correspondence {:?}", csm.correspondence);
            let _ = writeln!(out, "  marginal       +{} (total {})", step.marginal, step.covered_after);
            let example = coverage
                .best_counterfactuals
                .iter()
                .find(|(_, b)| b.placements.iter().any(|p| p.csm == self.pool_ids[rank]));
            if let Some((&h, b)) = example {
                let _ = writeln!(out, "  example        host {h}: {}", describe(&hosts[h]));
                let _ = writeln!(out, "                 -> {} (distance {:.4})", describe(&b.graph), b.distance);
            }
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct CsmSetFile {
    format: String,
    version: u32,
    set: CsmSet,
}

/// Compact text form: node labels then labeled edge list.
pub fn describe(g: &Graph) -> String {
    let edges: Vec<String> = g
        .edges()
        .into_iter()
        .map(|(u, v, l)| if g.edge_vocab() > 0 { format!("{u}-{v}:{l}") } else { format!("{u}-{v}") })
        .collect();
    format!("nodes {:?} edges [{}]", g.node_labels(), edges.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::connected_components;

    fn path(n: usize) -> Graph {
        Graph::unlabeled(n, &(0..n - 1).map(|i| (i, i + 1)).collect::<Vec<_>>()).unwrap()
    }

    fn has_four_cycle(g: &Graph) -> bool {
        let n = g.node_count();
        (0..n).any(|u| {
            (u + 1..n).any(|v| (0..n).filter(|&w| w != u && w != v && g.has_edge(u, w) && g.has_edge(v, w)).count() >= 2)
        })
    }

    fn close_path() -> CsmCandidate {
        CsmCandidate::new(path(4), Graph::unlabeled(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap())
    }

    #[test]
    fn identity_csm_leaves_host_unchanged() {
        let host = Graph::unlabeled(5, &[(0, 1), (1, 2), (2, 3), (2, 4)]).unwrap();
        let csm = CsmCandidate::new(path(3), path(3));
        for occ in find_occurrences(&csm.source, &host, 10) {
            assert_eq!(apply_csm(&host, &csm, &occ).unwrap(), host);
        }
    }

    #[test]
    fn host_equal_to_source_becomes_counterfactual() {
        let csm = close_path();
        let occ = Occurrence { mapping: vec![0, 1, 2, 3] };
        assert!(is_isomorphic(&apply_csm(&path(4), &csm, &occ).unwrap(), &csm.counterfactual));
    }

    #[test]
    fn closing_edge_keeps_boundary() {
        // 6-node tree: path 0-1-2-3 with leaves 4 (on 1) and 5 (on 3)
        let host = Graph::unlabeled(6, &[(0, 1), (1, 2), (2, 3), (1, 4), (3, 5)]).unwrap();
        let csm = close_path();
        for occ in find_occurrences(&csm.source, &host, 10) {
            let out = apply_csm(&host, &csm, &occ).unwrap();
            assert!(has_four_cycle(&out));
            let image = occ.image();
            for (u, v, _) in host.edges() {
                if !(image.contains(&u) && image.contains(&v)) {
                    assert!(out.has_edge(u, v), "boundary edge {u}-{v} lost");
                }
            }
        }
    }

    #[test]
    fn extra_nodes_are_appended() {
        let cf = Graph::unlabeled(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let csm = CsmCandidate::new(path(3), cf);
        let host = Graph::unlabeled(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let occ = find_occurrences(&csm.source, &host, 1).remove(0);
        let out = apply_csm(&host, &csm, &occ).unwrap();
        assert_eq!(out.node_count(), 5);
        assert!(has_four_cycle(&out));
    }

    #[test]
    fn invalid_occurrence_rejected() {
        let csm = close_path();
        let occ = Occurrence { mapping: vec![0, 2, 1, 3] };
        assert!(matches!(apply_csm(&path(4), &csm, &occ), Err(SummaryError::InvalidOccurrence)));
    }

    #[test]
    fn enumeration_singles_then_disjoint_pairs() {
        let triangle = CsmCandidate::new(path(3), Graph::unlabeled(3, &[(0, 1), (1, 2), (0, 2)]).unwrap());
        // no match
        assert!(enumerate_applications(&Graph::unlabeled(2, &[(0, 1)]).unwrap(), std::slice::from_ref(&triangle), &ApplicationConfig::default()).is_empty());
        // one occurrence
        let apps = enumerate_applications(&path(3), std::slice::from_ref(&triangle), &ApplicationConfig::default());
        assert_eq!(apps.len(), 1);
        // two CSMs whose only occurrences overlap: singles only
        let other = CsmCandidate::new(path(3), path(3).permuted(&[0, 1, 2]));
        let mut relabel = other.clone();
        relabel.counterfactual = Graph::unlabeled(3, &[(0, 1)]).unwrap();
        let apps = enumerate_applications(&path(3), &[triangle.clone(), relabel], &ApplicationConfig::default());
        assert_eq!(apps.len(), 2);
        assert!(apps.iter().all(|a| a.placements.len() == 1));
        // two disjoint paths admit a pair
        let host = Graph::unlabeled(6, &[(0, 1), (1, 2), (3, 4), (4, 5)]).unwrap();
        let apps = enumerate_applications(&host, &[triangle], &ApplicationConfig::default());
        assert_eq!(apps.last().unwrap().placements.len(), 2);
        assert_eq!(apps.last().unwrap().graph.edge_count(), 6);
    }

    /// Desired iff the graph has a 4-cycle.
    fn cycle_rule(g: &Graph) -> usize {
        usize::from(has_four_cycle(g))
    }

    #[test]
    fn covered_reports_closest_counterfactual() {
        let host = Graph::unlabeled(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        let csm = close_path();
        let best = is_covered(&host, std::slice::from_ref(&csm), &cycle_rule, &ApplicationConfig::default()).unwrap();
        assert_eq!(best.distance, 1.0);
        assert!(has_four_cycle(&best.graph));
        assert!(is_covered(&host, &[], &cycle_rule, &ApplicationConfig::default()).is_none());
        let identity = CsmCandidate::new(path(4), path(4));
        assert!(is_covered(&host, &[identity], &cycle_rule, &ApplicationConfig::default()).is_none());
    }

    #[test]
    fn witness_index_agrees_with_direct_coverage() {
        let hosts: Vec<Graph> = vec![
            path(4),
            path(6),
            Graph::unlabeled(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap(),
            Graph::unlabeled(6, &[(0, 1), (1, 2), (3, 4), (4, 5)]).unwrap(),
        ];
        let pool = vec![
            close_path(),
            CsmCandidate::new(path(3), Graph::unlabeled(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap()),
            CsmCandidate::new(path(3), path(3)),
            // same effect as the first: must be credited on its own
            close_path(),
        ];
        let cfg = ApplicationConfig::default();
        let index = WitnessIndex::build(&hosts, &pool, &cycle_rule, &cfg);
        for subset in [vec![], vec![0], vec![1], vec![2], vec![3], vec![0, 1], vec![0, 1, 2], vec![2, 3]] {
            let chosen: Vec<CsmCandidate> = subset.iter().map(|&i| pool[i].clone()).collect();
            let direct = coverage(&chosen, &hosts, &cycle_rule, &cfg).unwrap();
            let indexed = coverage_from_index(&index, &subset).unwrap();
            assert_eq!(direct.covered_ids, indexed.covered_ids);
            for (h, b) in &direct.best_counterfactuals {
                assert_eq!(b.distance, indexed.best_counterfactuals[h].distance);
            }
        }
    }

    #[test]
    fn greedy_on_disjoint_covers_is_optimal() {
        // each candidate covers exactly the hosts carrying its own label
        let hosts: Vec<Graph> = (0..6).map(|i| Graph::from_edges(vec![i % 3, i % 3, i % 3], 4, 0, &[(0, 1, None), (1, 2, None)]).unwrap()).collect();
        let pool: Vec<CsmCandidate> = (0..3)
            .map(|l| {
                let src = Graph::from_edges(vec![l, l, l], 4, 0, &[(0, 1, None), (1, 2, None)]).unwrap();
                let mut cf = src.clone();
                cf.set_node_label(0, 3).unwrap();
                CsmCandidate::new(src, cf)
            })
            .collect();
        let has_three = |g: &Graph| usize::from(g.node_labels().contains(&3));
        let index = WitnessIndex::build(&hosts, &pool, &has_three, &ApplicationConfig::default());
        let trace = greedy_select(&index, 2).unwrap();
        let (_, opt) = brute_force_select(&index, 2).unwrap();
        assert_eq!(trace.last().unwrap().covered_after, opt);
        assert_eq!(opt, 4);
        assert!(greedy_select(&index, 0).is_err());
        assert!(greedy_select(&index, 4).is_err());
    }

    #[test]
    fn simultaneous_pairs_break_submodularity() {
        // desired iff both labels 2 and 3 are present: neither rule alone
        // covers the host, together they do
        let host = Graph::from_edges(vec![0, 0, 1, 1], 4, 0, &[(0, 1, None), (2, 3, None)]).unwrap();
        let make = |l: usize, to: usize| {
            let src = Graph::from_edges(vec![l, l], 4, 0, &[(0, 1, None)]).unwrap();
            let mut cf = src.clone();
            cf.set_node_label(0, to).unwrap();
            CsmCandidate::new(src, cf)
        };
        let pool = vec![make(0, 2), make(1, 3)];
        let both = |g: &Graph| usize::from(g.node_labels().contains(&2) && g.node_labels().contains(&3));
        let index = WitnessIndex::build(&[host], &pool, &both, &ApplicationConfig::default());
        let gain = |base: &[usize], c: usize| {
            let mut with = base.to_vec();
            with.push(c);
            index.covered_count(&index.mask(&with)) - index.covered_count(&index.mask(base))
        };
        // marginal of rule 1 grows when the base set grows
        assert_eq!(gain(&[], 1), 0);
        assert_eq!(gain(&[0], 1), 1);
    }

    #[test]
    fn csm_set_json_round_trip() {
        let pool = vec![close_path(), CsmCandidate::new(path(3), path(3))];
        let trace = vec![SelectionStep { candidate: 1, marginal: 0, covered_after: 0, mean_new_distance: None }];
        let set = CsmSet::from_trace(&pool, 2, trace);
        set.validate().unwrap();
        let back = CsmSet::from_json(&set.to_json().unwrap()).unwrap();
        assert_eq!(back, set);
        let report = set.report(&[path(4)], &coverage_from_index(&WitnessIndex { pool_size: 2, witnesses: vec![vec![]] }, &[1]).unwrap());
        assert!(report.contains("rule 1"));
        let dup = CsmSet::from_trace(&[pool[1].clone(), pool[1].clone()], 2, vec![
            SelectionStep { candidate: 0, marginal: 0, covered_after: 0, mean_new_distance: None },
            SelectionStep { candidate: 1, marginal: 0, covered_after: 0, mean_new_distance: None },
        ]);
        assert!(dup.validate().is_err());
        assert_eq!(connected_components(&path(3)), 1);
    }
}
