//! Coverage, proximity and comprehensibility for a local explainer that
//! proposes one counterfactual per graph.
//!
//! cargo run --example metrics

use gce::graph::{Graph, WeightedDistanceConfig};
use gce::metrics::{evaluate_local, format_row, table_header};

fn main() {
    let path = |n: usize| Graph::unlabeled(n, &(0..n - 1).map(|i| (i, i + 1)).collect::<Vec<_>>()).unwrap();
    let has_cycle = |g: &Graph| usize::from(g.edge_count() >= g.node_count());

    // one closing edge: one SDG component, distance 1
    let closed = |n: usize| {
        let mut g = path(n);
        g.add_edge(0, n - 1, None).unwrap();
        g
    };
    // two separate edits: two SDG components
    let scattered = {
        let mut g = path(8);
        g.add_edge(0, 2, None).unwrap();
        g.add_edge(5, 7, None).unwrap();
        g
    };
    let pairs = vec![
        (path(4), Some(closed(4))),
        (path(5), Some(closed(5))),
        (path(8), Some(scattered)),
        (path(6), Some(path(6))),
        (path(7), None),
    ];
    let r = evaluate_local(&pairs, &has_cycle, &WeightedDistanceConfig::default()).unwrap();
    println!("{}\n{}", table_header(), format_row("local", &r));
    for p in &r.pairs {
        println!("host {}: distance {:.4}, {} SDG component(s)", p.host_id, p.distance, p.cc);
    }
}
