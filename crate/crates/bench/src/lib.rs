//! Shared instance builders for the criterion benches.

use tn_slicer_core::baselines::random_network;
use tn_slicer_core::network::greedy_test_path;
use tn_slicer_core::tree::{build_tree, ContractionTree};

/// A deterministic mid-size planning instance.
pub fn bench_tree(seed: u64, n: usize) -> ContractionTree {
    let net = random_network(seed, n, n / 2, 2);
    let path = greedy_test_path(&net, seed).expect("connected");
    build_tree(&net, &path).expect("valid path")
}
