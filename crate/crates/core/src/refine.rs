//! Simulated-annealing slice refiner.
//!
//! The finder fixes the size of the slicing set; the refiner keeps that size
//! and replaces members to lower the overhead. Replacement candidates for a
//! sliced index are the unsliced indices shared by all of its critical
//! tensors (the tensors pinned exactly at the memory target). Uphill moves
//! are accepted with probability exp((C_ori - C_new) / C_ori / T) under a
//! geometric cooling schedule; moves that would break the memory constraint
//! are rejected outright. The best state seen is returned, not the last.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cost::{flop_ratio, residual_rank, sliced_cost_over_nodes, Provenance, SliceSet};
use crate::error::{Result, TnError};
use crate::lifetime::{Stem, StemInterval};
use crate::network::IndexId;
use crate::slicing::check_stem_constraint;
use crate::tree::{ContractionTree, TreeEdgeId};

/// Annealing schedule and seeding.
#[derive(Debug, Clone)]
pub struct AnnealConfig {
    pub t_initial: f64,
    pub t_final: f64,
    pub alpha: f64,
    pub seed: u64,
    pub max_outer_iters: usize,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig {
            t_initial: 1.0,
            t_final: 1e-3,
            alpha: 0.95,
            seed: 0,
            max_outer_iters: 5000,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0 && self.t_final < self.t_initial) {
            return Err(TnError::BadConfig(
                "final temperature must satisfy 0 < tf < t_initial".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(TnError::BadConfig("alpha must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Acceptance probability for a worsening (or equal) move.
/// Equal costs give probability exactly 1.
pub fn accept_probability(c_ori: f64, c_new: f64, temperature: f64) -> f64 {
    ((c_ori - c_new) / c_ori / temperature).exp()
}

/// Tensors in the chosen index's stem lifetime whose residual rank sits
/// exactly at the memory boundary `t`. Empty means the index contributes
/// nothing to memory reduction and can be dropped from the set.
pub fn find_critical_tensors(
    tree: &ContractionTree,
    stem: &Stem,
    lf: StemInterval,
    t: u64,
    s: &SliceSet,
) -> Vec<TreeEdgeId> {
    (lf.first..=lf.last)
        .map(|p| stem.tensors[p])
        .filter(|&e| residual_rank(tree, e, s) == t)
        .collect()
}

/// Unsliced indices shared by every critical tensor, excluding the index
/// being replaced. Empty when the critical tensors have no common index.
pub fn find_candidate_indices(
    tree: &ContractionTree,
    critical: &[TreeEdgeId],
    s: &SliceSet,
    chosen: &IndexId,
) -> BTreeSet<IndexId> {
    let mut iter = critical.iter();
    let Some(&first) = iter.next() else {
        return BTreeSet::new();
    };
    let mut common: BTreeSet<IndexId> = tree.index_set(first).clone();
    for &e in iter {
        common = common
            .intersection(tree.index_set(e))
            .cloned()
            .collect();
    }
    common
        .into_iter()
        .filter(|i| i != chosen && !s.contains(i) && tree.log2_weight(i) == 1)
        .collect()
}

fn stem_cost(tree: &ContractionTree, stem: &Stem, s: &SliceSet) -> BigUint {
    sliced_cost_over_nodes(tree, &stem.steps, s)
}

/// Drop sliced indices with no critical tensors. The post-sweep set still
/// satisfies the constraint: such an index's lifetime tensors all sit
/// strictly below the boundary, so removal cannot push any above it.
fn removability_sweep(
    tree: &ContractionTree,
    stem: &Stem,
    intervals: &BTreeMap<IndexId, StemInterval>,
    s: &mut SliceSet,
    t: u64,
) {
    loop {
        let removable = s.indices().iter().cloned().find(|idx| {
            intervals
                .get(idx)
                .map(|&lf| find_critical_tensors(tree, stem, lf, t, s).is_empty())
                .unwrap_or(true)
        });
        match removable {
            Some(idx) => s.remove(&idx),
            None => break,
        }
    }
}

/// Refine a valid slicing set by simulated annealing. Deterministic for a
/// given seed; two independent RNG streams drive index choice and move
/// acceptance so the two decisions never perturb each other.
pub fn refine(
    tree: &ContractionTree,
    stem: &Stem,
    intervals: &BTreeMap<IndexId, StemInterval>,
    s0: &SliceSet,
    t: u64,
    cfg: &AnnealConfig,
) -> Result<SliceSet> {
    cfg.validate()?;
    s0.check_unit_weights(tree)?;
    check_stem_constraint(tree, stem, s0)?;

    let mut s = SliceSet::new(s0.indices().to_vec(), t, Provenance::Refiner);
    removability_sweep(tree, stem, intervals, &mut s, t);

    let mut rng_choice = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_choice.set_stream(0);
    let mut rng_accept = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_accept.set_stream(1);

    let mut best = s.clone();
    let mut best_cost = stem_cost(tree, stem, &best);

    let mut temperature = cfg.t_initial;
    let mut iters = 0;
    while temperature >= cfg.t_final && iters < cfg.max_outer_iters && !s.is_empty() {
        let slot = rng_choice.gen_range(0..s.len());
        let chosen = s.indices()[slot].clone();
        if let Some(&lf) = intervals.get(&chosen) {
            let critical = find_critical_tensors(tree, stem, lf, t, &s);
            if !critical.is_empty() {
                let candidates = find_candidate_indices(tree, &critical, &s, &chosen);
                let mut occupant = chosen;
                for can in candidates {
                    let mut next = s.clone();
                    next.replace(&occupant, can.clone());
                    if check_stem_constraint(tree, stem, &next).is_err() {
                        continue;
                    }
                    let c_ori = stem_cost(tree, stem, &s);
                    let c_new = stem_cost(tree, stem, &next);
                    let accept = if c_new < c_ori {
                        true
                    } else {
                        // exp((C_ori - C_new)/C_ori/T) via the exact cost ratio
                        let ratio = flop_ratio(&c_new, &c_ori);
                        let p = accept_probability(1.0, ratio, temperature);
                        rng_accept.gen::<f64>() < p
                    };
                    if accept {
                        s = next;
                        occupant = can;
                        let cost = stem_cost(tree, stem, &s);
                        if cost < best_cost {
                            best_cost = cost;
                            best = s.clone();
                        }
                    }
                }
            }
        }
        temperature *= cfg.alpha;
        iters += 1;
    }
    Ok(best)
}

/// Run several annealing chains with consecutive seeds and keep the best
/// result. The reduction is deterministic regardless of scheduling: chains
/// are compared by stem cost, then by their index lists.
pub fn refine_chains(
    tree: &ContractionTree,
    stem: &Stem,
    intervals: &BTreeMap<IndexId, StemInterval>,
    s0: &SliceSet,
    t: u64,
    cfg: &AnnealConfig,
    chains: usize,
) -> Result<SliceSet> {
    use rayon::prelude::*;
    let results: Vec<Result<SliceSet>> = (0..chains.max(1))
        .into_par_iter()
        .map(|i| {
            let chain_cfg = AnnealConfig {
                seed: cfg.seed.wrapping_add(i as u64),
                ..cfg.clone()
            };
            refine(tree, stem, intervals, s0, t, &chain_cfg)
        })
        .collect();
    let mut best: Option<(BigUint, SliceSet)> = None;
    for r in results {
        let s = r?;
        let cost = stem_cost(tree, stem, &s);
        let key = (cost, s.indices().to_vec());
        best = match best {
            None => Some((key.0, s)),
            Some((bc, bs)) => {
                if key.0 < bc || (key.0 == bc && s.indices() < bs.indices()) {
                    Some((key.0, s))
                } else {
                    Some((bc, bs))
                }
            }
        };
    }
    Ok(best.expect("at least one chain").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, idx};
    use crate::lifetime::{all_lifetimes, extract_stem, restrict_lifetimes};
    use crate::slicing::{find_slices, FinderPool};
    use crate::tree::build_tree;

    #[test]
    fn acceptance_probability_values() {
        assert_eq!(accept_probability(10.0, 10.0, 0.37), 1.0);
        let p = accept_probability(1.0, 2.0, 1.0);
        assert!((p - (-1.0f64).exp()).abs() < 1e-15);
    }

    fn prepare(
        net: &crate::network::TensorNetwork,
        path: &crate::network::ContractionPath,
    ) -> (
        ContractionTree,
        Stem,
        BTreeMap<IndexId, StemInterval>,
    ) {
        let tree = build_tree(net, path).unwrap();
        let stem = extract_stem(&tree).unwrap();
        let lts = all_lifetimes(&tree).unwrap();
        let intervals = restrict_lifetimes(&tree, &stem, &lts).unwrap();
        (tree, stem, intervals)
    }

    #[test]
    fn critical_tensors_on_chain5() {
        let (net, path) = fixtures::chain5();
        let (tree, stem, intervals) = prepare(&net, &path);
        let s = SliceSet::new(vec![idx("c")], 2, Provenance::Manual);
        // after slicing c, the rank-3 tensors sit exactly at the target
        let critical = find_critical_tensors(&tree, &stem, intervals[&idx("c")], 2, &s);
        assert_eq!(critical, vec![stem.tensors[2], stem.tensors[3]]);
        // an index whose lifetime has no boundary tensor is removable
        let s_loose = SliceSet::new(vec![idx("c")], 3, Provenance::Manual);
        let critical =
            find_critical_tensors(&tree, &stem, intervals[&idx("c")], 3, &s_loose);
        assert!(critical.is_empty());
    }

    #[test]
    fn candidates_are_shared_indices() {
        let (net, path) = fixtures::chain5();
        let (tree, stem, intervals) = prepare(&net, &path);
        let s = SliceSet::new(vec![idx("a")], 2, Provenance::Manual);
        // with a sliced, M2 is fine (rank 2) but M3 {z,b,c} is at rank 3;
        // lifetime of a covers M1, M2 only, so its critical list at t=2
        // holds tensors at residual exactly 2
        let critical = find_critical_tensors(&tree, &stem, intervals[&idx("a")], 2, &s);
        let candidates = find_candidate_indices(&tree, &critical, &s, &idx("a"));
        for can in &candidates {
            for &e in &critical {
                assert!(tree.index_set(e).contains(can));
            }
        }
        assert!(!candidates.contains(&idx("a")));
    }

    #[test]
    fn disjoint_critical_tensors_yield_no_candidates() {
        let (net, path) = fixtures::grid8();
        let (tree, _stem, _) = prepare(&net, &path);
        // leaves 1 {b,c} and 6 {i,j} share nothing
        let s = SliceSet::empty(3);
        let candidates = find_candidate_indices(&tree, &[1, 6], &s, &idx("q"));
        assert!(candidates.is_empty());
    }

    #[test]
    fn sweep_drops_redundant_index() {
        let (net, path) = fixtures::chain5();
        let (tree, stem, intervals) = prepare(&net, &path);
        // target 3: nothing is over the limit, so any sliced index has no
        // critical tensors and is dropped
        let s0 = SliceSet::new(vec![idx("c")], 3, Provenance::Manual);
        let out = refine(&tree, &stem, &intervals, &s0, 3, &AnnealConfig::default()).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn refine_never_worsens() {
        for seed in 0..10 {
            let net = crate::baselines::random_network(seed, 14, 6, 2);
            let path = crate::network::greedy_test_path(&net, seed).unwrap();
            let (tree, stem, intervals) = prepare(&net, &path);
            let peak = stem.tensors.iter().map(|&e| tree.rank(e)).max().unwrap();
            if peak < 3 {
                continue;
            }
            let t = peak - 2;
            let s0 = find_slices(&tree, &stem, &intervals, t, FinderPool::Local).unwrap();
            let cfg = AnnealConfig {
                seed,
                ..AnnealConfig::default()
            };
            let out = refine(&tree, &stem, &intervals, &s0, t, &cfg).unwrap();
            check_stem_constraint(&tree, &stem, &out).unwrap();
            assert!(stem_cost(&tree, &stem, &out) <= stem_cost(&tree, &stem, &s0));
        }
    }

    #[test]
    fn refine_is_deterministic() {
        let net = crate::baselines::random_network(5, 16, 7, 2);
        let path = crate::network::greedy_test_path(&net, 5).unwrap();
        let (tree, stem, intervals) = prepare(&net, &path);
        let peak = stem.tensors.iter().map(|&e| tree.rank(e)).max().unwrap();
        let t = peak.saturating_sub(2).max(1);
        let s0 = find_slices(&tree, &stem, &intervals, t, FinderPool::Local).unwrap();
        let cfg = AnnealConfig {
            seed: 42,
            ..AnnealConfig::default()
        };
        let a = refine(&tree, &stem, &intervals, &s0, t, &cfg).unwrap();
        let b = refine(&tree, &stem, &intervals, &s0, t, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_initial_set_rejected() {
        let (net, path) = fixtures::chain5();
        let (tree, stem, intervals) = prepare(&net, &path);
        let s0 = SliceSet::empty(1); // rank-3 tensors above target 1
        assert!(matches!(
            refine(&tree, &stem, &intervals, &s0, 1, &AnnealConfig::default()),
            Err(TnError::ConstraintViolated { .. })
        ));
    }
}
