//! Property tests over randomly generated instances.

use proptest::prelude::*;

use tn_slicer_core::baselines::{random_network, random_test_path, residual_peak};
use tn_slicer_core::cost::{
    log2_biguint, log_sum_exp2, overhead, sliced_cost, sliced_cost_over_nodes, tree_cost,
    Provenance, SliceSet,
};
use tn_slicer_core::lifetime::{all_lifetimes, extract_stem, restrict_lifetimes};
use tn_slicer_core::network::{
    parse_network, parse_path, serialize_network, serialize_path, IndexId,
};
use tn_slicer_core::slicing::{check_stem_constraint, find_slices, FinderPool};
use tn_slicer_core::refine::{refine, AnnealConfig};
use tn_slicer_core::tree::{build_tree, check_conservation, ContractionTree};

fn instance(seed: u64, n: usize, extra: usize, open: usize) -> ContractionTree {
    let net = random_network(seed, n, extra, open);
    let path = random_test_path(&net, seed).expect("connected");
    build_tree(&net, &path).expect("valid path")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Every generated tree conserves indices at every internal node.
    #[test]
    fn trees_conserve_indices(seed in 0u64..10_000, n in 4usize..16, extra in 0usize..5, open in 0usize..3) {
        let tree = instance(seed, n, extra, open);
        check_conservation(&tree).unwrap();
    }

    /// The float log2 total tracks the exact BigUint total, and both agree
    /// with the Kahan log-sum-exp over per-node exponents.
    #[test]
    fn cost_totals_are_consistent(seed in 0u64..10_000, n in 4usize..16, extra in 0usize..5) {
        let tree = instance(seed, n, extra, 1);
        let cost = tree_cost(&tree);
        let via_big = log2_biguint(&cost.total_flops);
        let via_lse = log_sum_exp2(&cost.per_node_log2);
        prop_assert!((cost.log2_time_total - via_big).abs() < 1e-9);
        prop_assert!((cost.log2_time_total - via_lse).abs() < 1e-9);
    }

    /// Slicing overhead is >= 1, and growing the slice set never lowers the
    /// sliced total (each added index multiplies node terms by 1 or 2).
    #[test]
    fn overhead_at_least_one_and_monotone(seed in 0u64..10_000, n in 4usize..14, take in 1usize..4) {
        let tree = instance(seed, n, 3, 1);
        let pool: Vec<IndexId> = tree.all_indices().into_iter().collect();
        let k = take.min(pool.len());
        let s = SliceSet::new(pool[..k].to_vec(), 0, Provenance::Manual);
        prop_assert!(overhead(&tree, &s).unwrap() >= 1.0);
        if k > 1 {
            let smaller = SliceSet::new(pool[..k - 1].to_vec(), 0, Provenance::Manual);
            let big = sliced_cost(&tree, &s).unwrap().total_flops;
            let small = sliced_cost(&tree, &smaller).unwrap().total_flops;
            prop_assert!(big >= small);
        }
        prop_assert!(residual_peak(&tree, &s) <= residual_peak(&tree, &SliceSet::empty(0)));
    }

    /// Network and path documents roundtrip through their JSON form.
    #[test]
    fn documents_roundtrip(seed in 0u64..10_000, n in 4usize..16, extra in 0usize..5, open in 0usize..3) {
        let net = random_network(seed, n, extra, open);
        let path = random_test_path(&net, seed).unwrap();
        let net2 = parse_network(&serialize_network(&net)).unwrap();
        prop_assert_eq!(serialize_network(&net), serialize_network(&net2));
        let path2 = parse_path(&serialize_path(&path)).unwrap();
        prop_assert_eq!(path.steps, path2.steps);
    }

    /// Whatever the finder returns satisfies the stem memory constraint, and
    /// the refiner (which optimizes stem-restricted cost) never hands back a
    /// set with a worse stem cost than its starting point.
    #[test]
    fn finder_valid_and_refiner_never_worse(seed in 0u64..2_000, n in 8usize..16, drop in 1u64..3) {
        let tree = instance(seed, n, 4, 2);
        let stem = extract_stem(&tree).unwrap();
        let lifetimes = all_lifetimes(&tree).unwrap();
        let intervals = restrict_lifetimes(&tree, &stem, &lifetimes).unwrap();
        let peak = stem.tensors.iter().map(|&e| tree.rank(e)).max().unwrap();
        let t = peak.saturating_sub(drop).max(1);
        if let Ok(found) = find_slices(&tree, &stem, &intervals, t, FinderPool::Local) {
            check_stem_constraint(&tree, &stem, &found).unwrap();
            let cfg = AnnealConfig { max_outer_iters: 60, seed, ..AnnealConfig::default() };
            let refined = refine(&tree, &stem, &intervals, &found, t, &cfg).unwrap();
            check_stem_constraint(&tree, &stem, &refined).unwrap();
            let cost_f = sliced_cost_over_nodes(&tree, &stem.steps, &found);
            let cost_r = sliced_cost_over_nodes(&tree, &stem.steps, &refined);
            prop_assert!(cost_r <= cost_f);
        }
    }
}
