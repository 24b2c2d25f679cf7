//! Generate the synthetic rectangle dataset, write it in TU format and read
//! it back.
//!
//! cargo run --example synth -- [count] [seed] [dir]

use std::path::PathBuf;

use gce::synthetic::{four_paths, generate_synthetic};
use gce::tu::{parse_tu_dataset, write_tu_dataset};

fn main() {
    let mut args = std::env::args().skip(1);
    let count: usize = args.next().map_or(1000, |s| s.parse().expect("count"));
    let seed: u64 = args.next().map_or(7, |s| s.parse().expect("seed"));
    let dir = args.next().map_or_else(|| std::env::temp_dir().join("gce-synth"), PathBuf::from);

    let ds = generate_synthetic(count, seed).expect("even count >= 2");
    write_tu_dataset(&ds, &dir).expect("write");
    let back = parse_tu_dataset(&dir, &ds.name, None).expect("parse");
    assert_eq!(back.graphs, ds.graphs);

    let desired = ds.labels.iter().filter(|&&y| y == 1).count();
    let nodes: usize = ds.graphs.iter().map(|g| g.node_count()).sum();
    let paths: usize = ds.graphs.iter().map(|g| four_paths(g).len()).sum();
    println!("{} graphs in {}", ds.len(), dir.display());
    println!("{desired} desired, {} undesired", ds.len() - desired);
    println!("mean size {:.2} nodes, {:.1} four-node paths per graph", nodes as f64 / ds.len() as f64, paths as f64 / ds.len() as f64);
}
