//! Frequent connected subgraph mining by rightmost-path extension.

use std::collections::BTreeMap;
use std::rc::Rc;

use rayon::prelude::*;

use super::dfs_code::{
    backward_edge, forward_pure, forward_rmpath, forward_root, is_min_code, DfsCode, DfsEdge, History, MineGraph,
    Projection,
};
use super::{FrequentPattern, MinerConfig, MinerError};
use crate::graph::{Graph, GraphDataset};

struct Ctx<'a> {
    graphs: &'a [MineGraph],
    total: usize,
    cfg: &'a MinerConfig,
    node_vocab: usize,
    edge_vocab: usize,
}

fn support_ids(projected: &[Rc<Projection>]) -> Vec<usize> {
    let mut ids: Vec<usize> = projected.iter().map(|p| p.gid).collect();
    ids.dedup();
    ids.sort_unstable();
    ids.dedup();
    ids
}

impl Ctx<'_> {
    fn frequent(&self, support: usize) -> bool {
        support as f64 / self.total as f64 >= self.cfg.tau
    }

    fn grow(&self, code: &mut DfsCode, projected: &[Rc<Projection>], out: &mut Vec<FrequentPattern>) {
        let support = support_ids(projected);
        if !self.frequent(support.len()) || !is_min_code(code, self.node_vocab, self.edge_vocab) {
            return;
        }
        let nodes = code.node_count();
        if nodes >= self.cfg.min_nodes {
            out.push(FrequentPattern {
                dfs_code: code.clone(),
                graph: code.to_graph(self.node_vocab, self.edge_vocab),
                appearance_rate: support.len() as f64 / self.total as f64,
                support_ids: support,
            });
        }

        let rmpath = code.rightmost_path();
        let min_label = code.0[0].from_label;
        let max_toc = code.0[rmpath[0]].to;
        let labels = code.vertex_labels();
        let allow_forward = nodes < self.cfg.max_nodes;

        let mut back: BTreeMap<(usize, usize), Vec<Rc<Projection>>> = BTreeMap::new();
        let mut fwd: BTreeMap<(std::cmp::Reverse<usize>, usize, usize), Vec<Rc<Projection>>> = BTreeMap::new();
        for p in projected {
            let g = &self.graphs[p.gid];
            let h = History::build(g, p);
            for i in (1..rmpath.len()).rev() {
                if let Some(e) = backward_edge(g, h.edges[rmpath[i]], h.edges[rmpath[0]], &h) {
                    back.entry((code.0[rmpath[i]].from, e.label)).or_default().push(Rc::new(Projection {
                        gid: p.gid,
                        edge: e,
                        prev: Some(p.clone()),
                    }));
                }
            }
            if !allow_forward {
                continue;
            }
            for e in forward_pure(g, h.edges[rmpath[0]], min_label, &h) {
                fwd.entry((std::cmp::Reverse(max_toc), e.label, g.labels[e.to])).or_default().push(Rc::new(
                    Projection { gid: p.gid, edge: e, prev: Some(p.clone()) },
                ));
            }
            for &idx in &rmpath {
                for e in forward_rmpath(g, h.edges[idx], min_label, &h) {
                    fwd.entry((std::cmp::Reverse(code.0[idx].from), e.label, g.labels[e.to])).or_default().push(
                        Rc::new(Projection { gid: p.gid, edge: e, prev: Some(p.clone()) }),
                    );
                }
            }
        }

        for ((to, el), next) in back {
            code.0.push(DfsEdge { from: max_toc, to, from_label: labels[max_toc], edge_label: el, to_label: labels[to] });
            self.grow(code, &next, out);
            code.0.pop();
        }
        for ((std::cmp::Reverse(from), el, tl), next) in fwd {
            code.0.push(DfsEdge { from, to: max_toc + 1, from_label: labels[from], edge_label: el, to_label: tl });
            self.grow(code, &next, out);
            code.0.pop();
        }
    }
}

/// Mines every connected pattern with at least `min_nodes` and at most
/// `max_nodes` nodes whose appearance rate (fraction of graphs containing
/// it) is at least `tau`. Sorted by appearance rate descending, then code
/// length, then code. `support_ids` index into `dataset.graphs`.
pub fn mine_frequent(dataset: &GraphDataset, cfg: &MinerConfig) -> Result<Vec<FrequentPattern>, MinerError> {
    mine_graphs(&dataset.graphs, dataset.node_vocab.len().max(1), dataset.edge_vocab.len(), cfg)
}

/// [`mine_frequent`] over a bare graph slice with explicit vocabulary sizes.
pub fn mine_graphs(
    graphs: &[Graph],
    node_vocab: usize,
    edge_vocab: usize,
    cfg: &MinerConfig,
) -> Result<Vec<FrequentPattern>, MinerError> {
    cfg.validate()?;
    if graphs.is_empty() {
        return Ok(Vec::new());
    }
    let mine_graphs: Vec<MineGraph> = graphs.iter().map(MineGraph::new).collect();

    // root edge classes, each grown independently
    let mut roots: BTreeMap<(usize, usize, usize), Vec<(usize, usize, usize)>> = BTreeMap::new();
    for (gid, g) in mine_graphs.iter().enumerate() {
        for v in 0..g.labels.len() {
            for (k, e) in forward_root(g, v).enumerate() {
                roots.entry((g.labels[v], e.label, g.labels[e.to])).or_default().push((gid, v, k));
            }
        }
    }
    let roots: Vec<_> = roots.into_iter().collect();

    let ctx = Ctx { graphs: &mine_graphs, total: graphs.len(), cfg, node_vocab, edge_vocab };
    let mut patterns: Vec<FrequentPattern> = roots
        .par_iter()
        .flat_map_iter(|((fl, el, tl), seeds)| {
            let projected: Vec<Rc<Projection>> = seeds
                .iter()
                .map(|&(gid, v, k)| {
                    let edge = forward_root(&ctx.graphs[gid], v).nth(k).expect("seed edge exists");
                    Rc::new(Projection { gid, edge, prev: None })
                })
                .collect();
            let mut code = DfsCode(vec![DfsEdge { from: 0, to: 1, from_label: *fl, edge_label: *el, to_label: *tl }]);
            let mut out = Vec::new();
            ctx.grow(&mut code, &projected, &mut out);
            out
        })
        .collect();
    patterns.sort_by(|a, b| {
        b.appearance_rate
            .total_cmp(&a.appearance_rate)
            .then(a.dfs_code.len().cmp(&b.dfs_code.len()))
            .then_with(|| a.dfs_code.cmp(&b.dfs_code))
    });
    Ok(patterns)
}
