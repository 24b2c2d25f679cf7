//! Subgraph matching: every embedding of a 4-node path in a small tree, and
//! induced versus non-induced containment.
//!
//! cargo run --example matching

use gce::graph::Graph;
use gce::matcher::{contains, find_occurrences, find_occurrences_with, is_isomorphic, MatchConfig};

fn main() {
    let path = Graph::unlabeled(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
    let tree = Graph::unlabeled(6, &[(0, 1), (1, 2), (2, 3), (1, 4), (3, 5)]).unwrap();
    for occ in find_occurrences(&path, &tree, usize::MAX) {
        println!("path -> {:?}", occ.mapping);
    }

    let cycle = Graph::unlabeled(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
    let induced = find_occurrences_with(&path, &cycle, usize::MAX, MatchConfig { induced: true });
    println!("path in 4-cycle: contained {}, induced embeddings {}", contains(&path, &cycle), induced.len());

    let relabeled = cycle.permuted(&[2, 0, 3, 1]);
    println!("4-cycle isomorphic to its permutation: {}", is_isomorphic(&cycle, &relabeled));
}
