//! The whole pipeline on the synthetic benchmark, in memory: train the
//! classifier, mine the graphs it labels undesired, learn one counterfactual
//! per pattern, pick a rule set greedily and score it.
//!
//! cargo run --release --example end_to_end -- [seed] [k]

use std::time::Instant;

use gce::csa::{train_csa, CsaConfig};
use gce::gnn::{train, Classifier, TrainConfig};
use gce::metrics::{evaluate_report, format_row, table_header};
use gce::miner::{mine_graphs, select_significant, MinerConfig};
use gce::summarizer::{coverage_from_index, describe, greedy_select, ApplicationConfig, CsmSet, WitnessIndex};
use gce::synthetic::generate_synthetic;

fn main() {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let k: usize = args.next().map_or(5, |s| s.parse().expect("k"));
    let clock = Instant::now();

    let ds = generate_synthetic(1000, seed).expect("even count");
    let (model, report) = train(&ds, &TrainConfig { seed, ..TrainConfig::default() }).expect("classifier");
    println!("[{:6.1?}] classifier test accuracy {:.3}", clock.elapsed(), report.test_accuracy);

    let hosts: Vec<_> = ds.graphs.iter().filter(|g| model.predict(g) == 0).cloned().collect();
    let miner = MinerConfig { min_nodes: 4, ..MinerConfig::default() };
    let frequent = mine_graphs(&hosts, 1, 0, &miner).expect("mining");
    let patterns = select_significant(&frequent, miner.budget, miner.selection_mode).expect("selection");
    println!("[{:6.1?}] {} undesired hosts, {} frequent patterns, {} kept", clock.elapsed(), hosts.len(), frequent.len(), patterns.len());

    let host_ds = gce::graph::GraphDataset { graphs: hosts.clone(), labels: vec![0; hosts.len()], ..ds.subset(&[]) };
    let pool = train_csa(&patterns, &host_ds, &model, &CsaConfig { seed, ..CsaConfig::default() }).expect("csa");
    println!("[{:6.1?}] trained {} autoencoders", clock.elapsed(), pool.len());
    for (i, c) in pool.iter().enumerate() {
        println!("  {i:2} {} => {}", describe(&c.source), describe(&c.counterfactual));
    }

    let app = ApplicationConfig::default();
    let index = WitnessIndex::build(&hosts, &pool, &model, &app);
    let trace = greedy_select(&index, k.min(pool.len())).expect("selection");
    let set = CsmSet::from_trace(&pool, k, trace);
    let cov = coverage_from_index(&index, &set.pool_ids).expect("hosts");
    println!("[{:6.1?}] selected {:?}", clock.elapsed(), set.pool_ids);
    print!("{}", set.report(&hosts, &cov));
    println!("{}\n{}", table_header(), format_row(&seed.to_string(), &evaluate_report(&cov, &hosts)));
}
