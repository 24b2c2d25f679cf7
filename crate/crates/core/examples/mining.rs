//! Frequent subgraph mining on the undesired half of the synthetic data,
//! with both significant-pattern selection modes.
//!
//! cargo run --release --example mining -- [tau] [min_nodes] [budget]

use gce::miner::{mine_frequent, select_significant, MinerConfig, SelectionMode};
use gce::synthetic::generate_synthetic;

fn main() {
    let mut args = std::env::args().skip(1);
    let tau: f64 = args.next().map_or(0.1, |s| s.parse().expect("tau"));
    let min_nodes: usize = args.next().map_or(4, |s| s.parse().expect("min_nodes"));
    let budget: usize = args.next().map_or(8, |s| s.parse().expect("budget"));

    let ds = generate_synthetic(1000, 0).expect("even count");
    let trees: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == 0).collect();
    let trees = ds.subset(&trees);
    let cfg = MinerConfig { tau, min_nodes, budget, ..MinerConfig::default() };
    let frequent = mine_frequent(&trees, &cfg).expect("valid config");
    println!("{} frequent patterns with AR >= {tau} over {} trees", frequent.len(), trees.len());

    for mode in [SelectionMode::TopAr, SelectionMode::GreedyCover] {
        println!("\n{mode:?}");
        for p in select_significant(&frequent, budget, mode).expect("budget >= 1") {
            println!("  AR {:.3}  {} nodes  {}", p.appearance_rate, p.graph.node_count(), p.dfs_code);
        }
    }
}
