//! Greedy rule selection against exhaustive search on a hand-made
//! instance with a rule-based classifier.
//!
//! cargo run --example summary

use gce::csa::CsmCandidate;
use gce::graph::Graph;
use gce::summarizer::{brute_force_select, greedy_select, ApplicationConfig, CsmSet, WitnessIndex};

fn has_label(g: &Graph, l: usize) -> bool {
    g.node_labels().contains(&l)
}

fn main() {
    // hosts are labeled 3-paths; a rule relabels one end of a path with label 4
    let host = |l: usize| Graph::from_edges(vec![l, l, l], 5, 0, &[(0, 1, None), (1, 2, None)]).unwrap();
    let hosts: Vec<Graph> = [0, 0, 0, 1, 1, 2, 3].into_iter().map(host).collect();
    let pool: Vec<CsmCandidate> = (0..4)
        .map(|l| {
            let mut cf = host(l);
            cf.set_node_label(0, 4).unwrap();
            CsmCandidate::new(host(l), cf)
        })
        .collect();
    let classifier = |g: &Graph| usize::from(has_label(g, 4));

    let index = WitnessIndex::build(&hosts, &pool, &classifier, &ApplicationConfig::default());
    for k in 1..=3 {
        let trace = greedy_select(&index, k).unwrap();
        let (best, opt) = brute_force_select(&index, k).unwrap();
        let picked: Vec<usize> = trace.iter().map(|s| s.candidate).collect();
        println!("k={k}: greedy {picked:?} covers {}, optimum {best:?} covers {opt}", trace.last().unwrap().covered_after);
    }
    let set = CsmSet::from_trace(&pool, 2, greedy_select(&index, 2).unwrap());
    println!("\n{}", set.to_json().unwrap());
}
