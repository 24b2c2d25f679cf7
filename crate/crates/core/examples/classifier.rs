//! Train the explainee classifier on the synthetic benchmark and report
//! accuracy on each split.
//!
//! cargo run --release --example classifier -- [seed] [epochs]

use std::time::Instant;

use gce::gnn::{train, Classifier, TrainConfig};
use gce::synthetic::generate_synthetic;

fn main() {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let epochs: usize = args.next().map_or(600, |s| s.parse().expect("epochs"));

    let ds = generate_synthetic(1000, seed).expect("even count");
    let cfg = TrainConfig { epochs, seed, ..TrainConfig::default() };
    let start = Instant::now();
    let (model, report) = train(&ds, &cfg).expect("training");
    println!("trained {epochs} epochs in {:.1?}", start.elapsed());
    println!(
        "accuracy  train {:.3}  val {:.3}  test {:.3}  (best epoch {})",
        report.train_accuracy, report.val_accuracy, report.test_accuracy, report.best_epoch
    );
    let desired = ds.graphs.iter().filter(|g| model.predict(g) == 1).count();
    println!("{desired} of {} graphs classified as desired", ds.len());
}
