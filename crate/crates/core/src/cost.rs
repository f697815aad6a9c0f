//! Time/memory complexity, slicing overhead, and the slice-vs-stack advisor.
//!
//! All per-contraction costs are exact integer log2 exponents (the summed
//! log2 weights of the participating indices). Totals are kept both as
//! exact big integers and as log2 reals; the two routes are tested against
//! each other and against the instrumented executor.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TnError};
use crate::network::IndexId;
use crate::tree::{ContractionTree, TreeEdgeId, TreeNode};

/// Contraction cost of one node in log2: the summed log2 weight of the
/// union of its three index sets (matmul MNK counting).
pub fn node_cost(tree: &ContractionTree, node: &TreeNode) -> u64 {
    let union: BTreeSet<&IndexId> = tree
        .index_set(node.left)
        .iter()
        .chain(tree.index_set(node.right).iter())
        .chain(tree.index_set(node.out).iter())
        .collect();
    union.iter().map(|i| tree.log2_weight(i)).sum()
}

/// Union of the three index sets of a node.
pub fn node_union(tree: &ContractionTree, node: &TreeNode) -> BTreeSet<IndexId> {
    tree.index_set(node.left)
        .iter()
        .chain(tree.index_set(node.right).iter())
        .chain(tree.index_set(node.out).iter())
        .cloned()
        .collect()
}

/// Cost summary of a contraction tree, before or after slicing.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    /// log2 of the total scalar-multiply count.
    pub log2_time_total: f64,
    /// log2 of the largest tensor (leaf, intermediate or root).
    pub log2_memory_peak: u64,
    /// Per-contraction log2 costs, in node order.
    pub per_node_log2: Vec<u64>,
    /// Exact total scalar-multiply count.
    pub total_flops: BigUint,
}

/// log2 of a positive big integer, to f64 precision.
pub fn log2_biguint(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits == 0 {
        return f64::NEG_INFINITY;
    }
    // take the top 64 bits as a mantissa
    let shift = bits.saturating_sub(64);
    let top: BigUint = x >> shift;
    let mant = top.iter_u64_digits().next().unwrap_or(0);
    (mant as f64).log2() + shift as f64
}

/// log2(sum of 2^e over exponents), via log-sum-exp with compensated
/// (Kahan) accumulation. Second route used to cross-check the exact sum.
pub fn log_sum_exp2(exponents: &[u64]) -> f64 {
    let Some(&max) = exponents.iter().max() else {
        return f64::NEG_INFINITY;
    };
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &e in exponents {
        let term = 2f64.powi(e as i32 - max as i32);
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    max as f64 + sum.log2()
}

fn report_from_exponents(exponents: Vec<u64>, peak: u64) -> CostReport {
    let mut total = BigUint::from(0u32);
    for &e in &exponents {
        total += BigUint::from(1u32) << e;
    }
    CostReport {
        log2_time_total: log2_biguint(&total),
        log2_memory_peak: peak,
        per_node_log2: exponents,
        total_flops: total,
    }
}

/// Eq-1 style total: sum of per-node costs over the real contractions.
/// Leaf reads and the closing root pseudo-contraction cost nothing.
pub fn tree_cost(tree: &ContractionTree) -> CostReport {
    let exps: Vec<u64> = tree.nodes().iter().map(|n| node_cost(tree, n)).collect();
    let peak = (0..tree.edge_count()).map(|e| tree.rank(e)).max().unwrap_or(0);
    report_from_exponents(exps, peak)
}

// ---------------------------------------------------------------------------
// Slice sets
// ---------------------------------------------------------------------------

/// How a slice set was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Finder,
    Refiner,
    Manual,
}

/// Ordered set of sliced indices plus the memory target it was built for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceSet {
    indices: Vec<IndexId>,
    pub target_rank: u64,
    pub provenance: Provenance,
}

impl SliceSet {
    pub fn new(indices: Vec<IndexId>, target_rank: u64, provenance: Provenance) -> Self {
        let mut seen = BTreeSet::new();
        let indices = indices
            .into_iter()
            .filter(|i| seen.insert(i.clone()))
            .collect();
        SliceSet {
            indices,
            target_rank,
            provenance,
        }
    }

    pub fn empty(target_rank: u64) -> Self {
        SliceSet::new(Vec::new(), target_rank, Provenance::Manual)
    }

    pub fn indices(&self) -> &[IndexId] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, idx: &IndexId) -> bool {
        self.indices.iter().any(|i| i == idx)
    }

    pub fn as_set(&self) -> BTreeSet<IndexId> {
        self.indices.iter().cloned().collect()
    }

    pub fn push(&mut self, idx: IndexId) {
        if !self.contains(&idx) {
            self.indices.push(idx);
        }
    }

    pub fn remove(&mut self, idx: &IndexId) {
        self.indices.retain(|i| i != idx);
    }

    /// Replace `old` by `new`, keeping position (ordered-set semantics).
    pub fn replace(&mut self, old: &IndexId, new: IndexId) {
        for i in self.indices.iter_mut() {
            if i == old {
                *i = new;
                return;
            }
        }
    }

    /// Check that every sliced index has unit weight.
    pub fn check_unit_weights(&self, tree: &ContractionTree) -> Result<()> {
        for idx in &self.indices {
            if tree.log2_weight(idx) != 1 {
                return Err(TnError::NonUnitWeight(idx.0.clone()));
            }
        }
        Ok(())
    }

    /// Check the memory constraint |S ∩ s_T| >= |s_T| - t on every tree edge.
    pub fn check_constraint_on_tree(&self, tree: &ContractionTree) -> Result<()> {
        for e in 0..tree.edge_count() {
            let residual = residual_rank(tree, e, self);
            if residual > self.target_rank {
                return Err(TnError::ConstraintViolated {
                    tensor: e,
                    residual,
                    target: self.target_rank,
                });
            }
        }
        Ok(())
    }
}

/// Rank of a tree edge after slicing: summed weights minus sliced members.
pub fn residual_rank(tree: &ContractionTree, e: TreeEdgeId, s: &SliceSet) -> u64 {
    tree.index_set(e)
        .iter()
        .filter(|i| !s.contains(i))
        .map(|i| tree.log2_weight(i))
        .sum()
}

/// Eq-4 style total after slicing: per node, the exponent grows by the
/// number of sliced indices absent from the node's union. Reduces to
/// [`tree_cost`] at S = ∅. The reported memory peak is the residual peak.
pub fn sliced_cost(tree: &ContractionTree, s: &SliceSet) -> Result<CostReport> {
    s.check_unit_weights(tree)?;
    let s_len = s.len() as u64;
    let exps: Vec<u64> = tree
        .nodes()
        .iter()
        .map(|n| {
            let union = node_union(tree, n);
            let present = s.indices().iter().filter(|i| union.contains(*i)).count() as u64;
            node_cost(tree, n) + s_len - present
        })
        .collect();
    let peak = (0..tree.edge_count())
        .map(|e| residual_rank(tree, e, s))
        .max()
        .unwrap_or(0);
    Ok(report_from_exponents(exps, peak))
}

/// Slicing overhead: total flops over all 2^|S| subtasks divided by the
/// unsliced total. Always >= 1.
pub fn overhead(tree: &ContractionTree, s: &SliceSet) -> Result<f64> {
    let full = tree_cost(tree);
    let sliced = sliced_cost(tree, s)?;
    Ok(flop_ratio(&sliced.total_flops, &full.total_flops))
}

/// Exact ratio of two flop counts, as f64.
pub fn flop_ratio(numer: &BigUint, denom: &BigUint) -> f64 {
    // scale both into f64 range together so desk-scale ratios stay exact
    let shift = denom.bits().saturating_sub(52);
    let n: BigUint = numer >> shift;
    let d: BigUint = denom >> shift;
    let nf = n.iter_u64_digits().fold((0f64, 0u32), |(acc, i), w| {
        (acc + (w as f64) * 2f64.powi((64 * i) as i32), i + 1)
    });
    let df = d.iter_u64_digits().fold((0f64, 0u32), |(acc, i), w| {
        (acc + (w as f64) * 2f64.powi((64 * i) as i32), i + 1)
    });
    nf.0 / df.0
}

/// Eq-4 exponents restricted to a subset of nodes (used by the refiner to
/// cost the stem only). Returns the exact total.
pub fn sliced_cost_over_nodes(
    tree: &ContractionTree,
    node_positions: &[usize],
    s: &SliceSet,
) -> BigUint {
    let s_len = s.len() as u64;
    let mut total = BigUint::from(0u32);
    for &p in node_positions {
        let n = &tree.nodes()[p];
        let union = node_union(tree, n);
        let present = s.indices().iter().filter(|i| union.contains(*i)).count() as u64;
        total += BigUint::from(1u32) << (node_cost(tree, n) + s_len - present);
    }
    total
}

// ---------------------------------------------------------------------------
// Slice-vs-stack strategy advisor
// ---------------------------------------------------------------------------

/// One storage level of a memory hierarchy, outermost first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemoryLevel {
    pub name: String,
    pub capacity_bytes: f64,
    pub bandwidth_bytes_per_s: f64,
}

/// Declared machine model for the advisor and the fused-cost report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemoryLevelModel {
    /// Levels ordered outer to inner; capacities strictly decreasing.
    pub levels: Vec<MemoryLevel>,
    pub peak_flops: f64,
    pub element_bytes: u64,
    /// Minimum transfer granularity applied to byte accounting.
    #[serde(default = "default_granularity")]
    pub min_transfer_bytes: u64,
}

fn default_granularity() -> u64 {
    1
}

impl MemoryLevelModel {
    pub fn validate(&self) -> Result<()> {
        if self.levels.len() < 2 {
            return Err(TnError::Invalid("model needs at least two levels".into()));
        }
        for w in self.levels.windows(2) {
            if w[1].capacity_bytes >= w[0].capacity_bytes {
                return Err(TnError::Invalid(
                    "level capacities must strictly decrease outer to inner".into(),
                ));
            }
        }
        for l in &self.levels {
            if l.capacity_bytes <= 0.0 || l.bandwidth_bytes_per_s <= 0.0 {
                return Err(TnError::Invalid(format!(
                    "level `{}` has non-positive capacity or bandwidth",
                    l.name
                )));
            }
        }
        if self.peak_flops <= 0.0 || self.element_bytes == 0 {
            return Err(TnError::Invalid("peak flops and element size must be positive".into()));
        }
        Ok(())
    }

    /// Machine balance point in flops per byte.
    pub fn balance_flops_per_byte(&self, level: usize) -> f64 {
        self.peak_flops / self.levels[level].bandwidth_bytes_per_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Slice,
    Stack,
}

/// Advice for one adjacent pair of storage levels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategyAdvice {
    pub outer: String,
    pub inner: String,
    pub stack_equivalent_overhead: f64,
    pub best_slice_overhead: f64,
    pub recommendation: Strategy,
}

/// For each adjacent level pair, translate the stacking data movement into
/// an equivalent compute overhead and compare it against the best available
/// slicing overhead. This translation is a declared model:
/// `equivalent_overhead = 1 + time_movement / time_compute`, with
/// `time_movement = bytes / bandwidth` and `time_compute = flops / peak`.
pub fn advise_strategy(
    model: &MemoryLevelModel,
    tree: &ContractionTree,
    candidates: &[SliceSet],
) -> Result<Vec<StrategyAdvice>> {
    model.validate()?;
    if candidates.is_empty() {
        return Err(TnError::EmptyCandidates);
    }
    let full = tree_cost(tree);
    let flops_base = 2f64.powf(full.log2_time_total);
    let mut best_slice = f64::INFINITY;
    for s in candidates {
        best_slice = best_slice.min(overhead(tree, s)?);
    }
    let mut out = Vec::new();
    for pair in model.levels.windows(2) {
        let inner = &pair[1];
        // boundary tensors: those too large for the inner level, which must
        // round-trip through the outer level when stacking
        let bytes_moved: f64 = (0..tree.edge_count())
            .map(|e| {
                let sz = 2f64.powi(tree.rank(e) as i32) * model.element_bytes as f64;
                if sz > inner.capacity_bytes {
                    sz
                } else {
                    0.0
                }
            })
            .sum();
        let time_movement = bytes_moved / pair[0].bandwidth_bytes_per_s;
        let time_compute = flops_base / model.peak_flops;
        let equivalent = 1.0 + time_movement / time_compute;
        out.push(StrategyAdvice {
            outer: pair[0].name.clone(),
            inner: inner.name.clone(),
            stack_equivalent_overhead: equivalent,
            best_slice_overhead: best_slice,
            recommendation: if equivalent <= best_slice {
                Strategy::Stack
            } else {
                Strategy::Slice
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, idx};
    use crate::tree::build_tree;

    fn matmul_tree() -> ContractionTree {
        let (net, path) = fixtures::matmul();
        build_tree(&net, &path).unwrap()
    }

    #[test]
    fn node_cost_matmul() {
        let tree = matmul_tree();
        assert_eq!(node_cost(&tree, &tree.nodes()[0]), 3);
    }

    #[test]
    fn node_cost_inner_product() {
        // ([a],[a],[]) -> 1
        let net = crate::network::TensorNetwork::new(
            vec![(0, vec![idx("a")]), (1, vec![idx("a")])],
            vec![(idx("a"), 1)],
        )
        .unwrap();
        let path = crate::network::ContractionPath::new(vec![(0, 1)]);
        let tree = build_tree(&net, &path).unwrap();
        assert_eq!(node_cost(&tree, &tree.nodes()[0]), 1);
    }

    #[test]
    fn tree_cost_matmul() {
        let report = tree_cost(&matmul_tree());
        assert_eq!(report.log2_time_total, 3.0);
        assert_eq!(report.log2_memory_peak, 2);
        assert_eq!(report.total_flops, BigUint::from(8u32));
    }

    #[test]
    fn two_equal_nodes_sum() {
        // log2(8 + 8) = 4, both via big integers and log-sum-exp
        let exps = vec![3, 3];
        assert_eq!(log_sum_exp2(&exps), 4.0);
        let report = report_from_exponents(exps, 0);
        assert_eq!(report.log2_time_total, 4.0);
    }

    #[test]
    fn log_routes_agree() {
        let exps = vec![3, 5, 5, 9, 2, 11, 7];
        let report = report_from_exponents(exps.clone(), 0);
        let lse = log_sum_exp2(&exps);
        assert!((report.log2_time_total - lse).abs() < 1e-12);
    }

    #[test]
    fn empty_slice_set_matches_tree_cost() {
        let tree = matmul_tree();
        let s = SliceSet::empty(2);
        let sliced = sliced_cost(&tree, &s).unwrap();
        let full = tree_cost(&tree);
        assert_eq!(sliced.total_flops, full.total_flops);
        assert_eq!(overhead(&tree, &s).unwrap(), 1.0);
    }

    #[test]
    fn full_span_slice_has_overhead_one() {
        // index in every node union: slicing it costs nothing extra
        let tree = matmul_tree();
        let s = SliceSet::new(vec![idx("b")], 2, Provenance::Manual);
        assert_eq!(overhead(&tree, &s).unwrap(), 1.0);
    }

    #[test]
    fn chain5_per_part_multiples() {
        let (net, path) = fixtures::chain5();
        let tree = build_tree(&net, &path).unwrap();
        let full = tree_cost(&tree);
        let s1 = SliceSet::new(vec![idx("a"), idx("b")], 2, Provenance::Manual);
        let s2 = SliceSet::new(vec![idx("c")], 2, Provenance::Manual);
        let r1 = sliced_cost(&tree, &s1).unwrap();
        let r2 = sliced_cost(&tree, &s2).unwrap();
        let mult = |r: &CostReport| -> Vec<u64> {
            r.per_node_log2
                .iter()
                .zip(&full.per_node_log2)
                .map(|(s, f)| 1u64 << (s - f))
                .collect()
        };
        assert_eq!(mult(&r1), vec![2, 2, 1, 2, 2]);
        assert_eq!(mult(&r2), vec![2, 1, 1, 1, 2]);
        assert!(overhead(&tree, &s2).unwrap() < overhead(&tree, &s1).unwrap());
    }

    #[test]
    fn non_unit_weight_rejected() {
        let net = crate::network::TensorNetwork::new(
            vec![(0, vec![idx("a"), idx("b")]), (1, vec![idx("b"), idx("c")])],
            vec![(idx("a"), 1), (idx("b"), 3), (idx("c"), 1)],
        )
        .unwrap();
        let path = crate::network::ContractionPath::new(vec![(0, 1)]);
        let tree = build_tree(&net, &path).unwrap();
        let s = SliceSet::new(vec![idx("b")], 2, Provenance::Manual);
        assert!(matches!(
            sliced_cost(&tree, &s),
            Err(TnError::NonUnitWeight(_))
        ));
    }

    #[test]
    fn monotone_superposition() {
        // adding an index never decreases the sliced cost; cost is unchanged
        // exactly when the index covers every node union
        for seed in 0..20 {
            let net = crate::baselines::random_network(seed, 8, 3, 1);
            let path = crate::network::greedy_test_path(&net, seed).unwrap();
            let tree = build_tree(&net, &path).unwrap();
            let indices: Vec<IndexId> = tree.all_indices().into_iter().collect();
            let base = SliceSet::new(vec![indices[0].clone()], 30, Provenance::Manual);
            let base_cost = sliced_cost(&tree, &base).unwrap().total_flops;
            for extra in &indices[1..] {
                let mut bigger = base.clone();
                bigger.push(extra.clone());
                let cost = sliced_cost(&tree, &bigger).unwrap().total_flops;
                assert!(cost >= base_cost);
                let covers_all = tree
                    .nodes()
                    .iter()
                    .all(|n| node_union(&tree, n).contains(extra));
                if covers_all {
                    assert_eq!(cost, base_cost);
                } else {
                    assert!(cost > base_cost);
                }
            }
        }
    }

    fn toy_model(outer_bw: f64, inner_bw: f64) -> MemoryLevelModel {
        MemoryLevelModel {
            levels: vec![
                MemoryLevel {
                    name: "disk".into(),
                    capacity_bytes: 1e12,
                    bandwidth_bytes_per_s: outer_bw,
                },
                MemoryLevel {
                    name: "ram".into(),
                    capacity_bytes: 1e9,
                    bandwidth_bytes_per_s: inner_bw,
                },
                MemoryLevel {
                    name: "scratch".into(),
                    capacity_bytes: 1e5,
                    bandwidth_bytes_per_s: inner_bw * 10.0,
                },
            ],
            peak_flops: 1e12,
            element_bytes: 16,
            min_transfer_bytes: 1,
        }
    }

    #[test]
    fn infinite_bandwidth_always_stacks() {
        let (net, path) = fixtures::chain5();
        let tree = build_tree(&net, &path).unwrap();
        let model = toy_model(f64::INFINITY, f64::INFINITY);
        let s = SliceSet::new(vec![idx("c")], 2, Provenance::Manual);
        let advice = advise_strategy(&model, &tree, &[s]).unwrap();
        assert!(advice.iter().all(|a| a.recommendation == Strategy::Stack));
    }

    #[test]
    fn small_tensors_stack() {
        // every tensor fits in the innermost level: nothing to move
        let (net, path) = fixtures::chain5();
        let tree = build_tree(&net, &path).unwrap();
        let model = MemoryLevelModel {
            levels: vec![
                MemoryLevel {
                    name: "a".into(),
                    capacity_bytes: 3e13,
                    bandwidth_bytes_per_s: 10.0,
                },
                MemoryLevel {
                    name: "b".into(),
                    capacity_bytes: 2e13,
                    bandwidth_bytes_per_s: 100.0,
                },
            ],
            ..toy_model(10.0, 100.0)
        };
        let s = SliceSet::new(vec![idx("c")], 2, Provenance::Manual);
        let advice = advise_strategy(&model, &tree, &[s]).unwrap();
        assert!(advice.iter().all(|a| a.recommendation == Strategy::Stack));
    }

    #[test]
    fn low_bandwidth_outer_slices() {
        let (net, path) = fixtures::chain5();
        let tree = build_tree(&net, &path).unwrap();
        // outer level crawls; inner level is fast
        let model = MemoryLevelModel {
            levels: vec![
                MemoryLevel {
                    name: "disk".into(),
                    capacity_bytes: 1e9,
                    bandwidth_bytes_per_s: 1e-3,
                },
                MemoryLevel {
                    name: "ram".into(),
                    capacity_bytes: 100.0,
                    bandwidth_bytes_per_s: 1e12,
                },
                MemoryLevel {
                    name: "scratch".into(),
                    capacity_bytes: 50.0,
                    bandwidth_bytes_per_s: 1e15,
                },
            ],
            peak_flops: 1e9,
            element_bytes: 16,
            min_transfer_bytes: 1,
        };
        let s = SliceSet::new(vec![idx("c")], 2, Provenance::Manual);
        let advice = advise_strategy(&model, &tree, &[s]).unwrap();
        assert_eq!(advice[0].recommendation, Strategy::Slice);
        assert_eq!(advice[1].recommendation, Strategy::Stack);
    }

    #[test]
    fn empty_candidates_rejected() {
        let (net, path) = fixtures::chain5();
        let tree = build_tree(&net, &path).unwrap();
        let model = toy_model(10.0, 100.0);
        assert!(matches!(
            advise_strategy(&model, &tree, &[]),
            Err(TnError::EmptyCandidates)
        ));
    }
}
