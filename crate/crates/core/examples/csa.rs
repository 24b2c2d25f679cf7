//! Train a single counterfactual autoencoder for the 4-node path against a
//! trained classifier and inspect the decoded probabilistic subgraph.
//!
//! cargo run --release --example csa -- [seed] [epochs]

use gce::csa::{candidate_from_model, train_pattern, CsaConfig};
use gce::gnn::{train, Classifier, TrainConfig, DESIRED_CLASS};
use gce::graph::Graph;
use gce::miner::{mine_graphs, MinerConfig};
use gce::pipeline::undesired_hosts;
use gce::summarizer::describe;
use gce::synthetic::generate_synthetic;

fn main() {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let epochs: usize = args.next().map_or(100, |s| s.parse().expect("epochs"));

    let ds = generate_synthetic(1000, seed).expect("even count");
    let (model, _) = train(&ds, &TrainConfig { seed, ..TrainConfig::default() }).expect("classifier");
    let hosts = undesired_hosts(&ds, &model);

    let cfg = MinerConfig { min_nodes: 4, max_nodes: 4, ..MinerConfig::default() };
    let patterns = mine_graphs(&hosts.graphs, 1, 0, &cfg).expect("mining");
    let path = Graph::unlabeled(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
    let pattern = patterns.iter().find(|p| gce::matcher::is_isomorphic(&p.graph, &path)).expect("4-path is frequent");
    println!("4-path appears in {:.1}% of {} undesired graphs", 100.0 * pattern.appearance_rate, hosts.len());

    let csa = CsaConfig { seed, epochs, ..CsaConfig::default() };
    let (trained, stats) = train_pattern(pattern, 0, &hosts, &model, &csa).expect("training");
    println!("final loss {:.4} (distance {:.4}, nll {:.5}, kl {:.4})", stats.total, stats.distance, stats.classification, stats.kl);

    let (mu, _) = trained.encode(&pattern.graph).expect("pattern fits");
    let ps = trained.decode(&mu, DESIRED_CLASS);
    println!("edge probabilities at the posterior mean:");
    for row in ps.adjacency.rows() {
        println!("  {}", row.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>().join(" "));
    }
    let cand = candidate_from_model(&trained, pattern, stats).expect("candidate");
    println!("{} => {}", describe(&cand.source), describe(&cand.counterfactual));
    let flipped = hosts
        .graphs
        .iter()
        .filter_map(|h| {
            let occ = gce::matcher::first_occurrence(&cand.source, h, Default::default())?;
            Some(model.predict(&gce::summarizer::apply_csm(h, &cand, &occ).ok()?) == DESIRED_CLASS)
        })
        .filter(|&ok| ok)
        .count();
    println!("single application flips {flipped} of {} hosts", hosts.len());
}
