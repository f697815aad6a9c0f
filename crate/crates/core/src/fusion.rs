//! Secondary slicing: fused kernel groups for a two-level memory model,
//! and permutation-map reduction plans.
//!
//! A fused group runs several consecutive stem steps inside the inner
//! memory level. The indices sliced for the group are exactly those whose
//! stem lifetime covers the whole group, so they are never contracted
//! inside it and each subtask needs one bulk load and one bulk store.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::cost::{node_cost, MemoryLevelModel};
use crate::error::{Result, TnError};
use crate::lifetime::{Stem, StemInterval};
use crate::network::IndexId;
use crate::tree::ContractionTree;

/// One fused group of consecutive stem steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusedGroup {
    /// Inclusive interval of stem step positions.
    pub first_step: usize,
    pub last_step: usize,
    /// Indices kept in outer memory; each subtask fixes one assignment.
    pub secondary_slices: Vec<IndexId>,
    /// Largest residual rank held in the scratchpad across the group.
    pub resident_rank: u64,
    /// Bulk transfers per subtask: one load and one store.
    pub transfers_in: u64,
    pub transfers_out: u64,
    /// Bytes are reported by `fused_cost_model`, which knows element size.
    pub load_rank: u64,
    pub store_rank: u64,
}

impl FusedGroup {
    pub fn step_count(&self) -> usize {
        self.last_step - self.first_step + 1
    }

    pub fn subtask_count(&self) -> u64 {
        1u64 << self.secondary_slices.len()
    }
}

/// Partition of the stem into fused groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusedPlan {
    pub groups: Vec<FusedGroup>,
    /// Scratchpad rank capacity.
    pub capacity: u64,
    /// Transfers eliminated versus step-by-step execution: 2(len-1) per group.
    pub dma_saved: u64,
}

impl FusedPlan {
    pub fn subtask_counts(&self) -> Vec<u64> {
        self.groups.iter().map(|g| g.subtask_count()).collect()
    }
}

/// Default scratchpad capacity: rank-13 tensors fit.
pub const DEFAULT_SCRATCHPAD_RANK: u64 = 13;

/// Greedy left-to-right fused-group planner.
///
/// At the start of each group the indices live through the first step are
/// considered, longest remaining lifetime first; just enough are sliced to
/// fit the two tensors of that step. The group then extends while all its
/// slices stay live and every produced tensor fits.
pub fn plan_fusion(
    tree: &ContractionTree,
    stem: &Stem,
    intervals: &BTreeMap<IndexId, StemInterval>,
    capacity: u64,
) -> Result<FusedPlan> {
    if capacity == 0 {
        return Err(TnError::TargetInfeasible(0));
    }
    let steps = stem.step_count();
    if steps == 0 {
        return Err(TnError::Invalid("stem has no contraction steps".into()));
    }
    let rank_of = |pos: usize| tree.rank(stem.tensors[pos]);
    let residual = |pos: usize, slices: &[IndexId]| -> u64 {
        let set = tree.index_set(stem.tensors[pos]);
        rank_of(pos)
            - slices
                .iter()
                .filter(|i| set.contains(*i))
                .map(|i| tree.log2_weight(i))
                .sum::<u64>()
    };

    let mut groups: Vec<FusedGroup> = Vec::new();
    let mut i = 0;
    while i < steps {
        // candidates: indices live through step i (present in tensors i and
        // i+1), longest remaining interval first, then id order
        let mut candidates: Vec<(&IndexId, &StemInterval)> = intervals
            .iter()
            .filter(|(_, iv)| iv.first <= i && iv.last >= i + 1)
            .map(|(id, iv)| (id, iv))
            .collect();
        candidates.sort_by(|a, b| b.1.last.cmp(&a.1.last).then_with(|| a.0.cmp(b.0)));

        let mut slices: Vec<IndexId> = Vec::new();
        let mut pool = candidates.iter();
        while residual(i, &slices) > capacity || residual(i + 1, &slices) > capacity {
            match pool.next() {
                Some((id, _)) => {
                    if tree.log2_weight(id) != 1 {
                        continue;
                    }
                    slices.push((*id).clone());
                }
                None => {
                    return Err(TnError::StepCannotFit {
                        step: i,
                        rank: rank_of(i).max(rank_of(i + 1)),
                        capacity,
                    });
                }
            }
        }

        // extend while every slice stays live and the produced tensor fits
        let mut j = i;
        while j + 1 < steps {
            let next = j + 1;
            let all_live = slices
                .iter()
                .all(|s| intervals[s].first <= next && intervals[s].last >= next + 1);
            if !all_live || residual(next + 1, &slices) > capacity {
                break;
            }
            j = next;
        }

        let resident = (i..=j + 1).map(|p| residual(p, &slices)).max().expect("nonempty");
        groups.push(FusedGroup {
            first_step: i,
            last_step: j,
            resident_rank: resident,
            transfers_in: 1,
            transfers_out: 1,
            load_rank: residual(i, &slices),
            store_rank: residual(j + 1, &slices),
            secondary_slices: slices,
        });
        i = j + 1;
    }

    let dma_saved = groups
        .iter()
        .map(|g| 2 * (g.step_count() as u64 - 1))
        .sum();
    Ok(FusedPlan {
        groups,
        capacity,
        dma_saved,
    })
}

// ---------------------------------------------------------------------------
// Permutation-map reduction
// ---------------------------------------------------------------------------

/// Which end of the target order anchors the fixed run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    Front,
    Back,
}

/// Side on which absorbed indices are gathered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbsorbSide {
    Front,
    Back,
}

/// Reduced-map plan for one tensor permutation (all extents are 2).
///
/// The full dest-to-source element map of size 2^rank is reconstructed from
/// a reduced map of size 2^(rank-m) by a linear recursion:
/// - `Back` anchor: `map[q*stride + k] = reduced[q] + k*offset` for `k < stride`;
/// - `Front` anchor: `map[b*stride + j] = reduced[j] + b*offset` for `j < stride`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationPlan {
    /// Target index order (positions into the input order).
    pub perm: Vec<usize>,
    /// Length of the fixed run at the anchored side.
    pub fixed_run: u32,
    pub anchor: Anchor,
    /// 2^fixed_run; the full map shrinks by this factor.
    pub map_size_divisor: u64,
    pub stride: u64,
    pub offset: u64,
}

/// Plan a permutation that gathers `absorbed` at the chosen side, keeping
/// the relative order of everything else (stable partition).
pub fn plan_permutation(
    input_order: &[IndexId],
    absorbed: &[IndexId],
    side: AbsorbSide,
) -> Result<PermutationPlan> {
    if input_order.is_empty() {
        return Err(TnError::Invalid("empty index order".into()));
    }
    for a in absorbed {
        if !input_order.contains(a) {
            return Err(TnError::NoSuchIndex(a.0.clone()));
        }
    }
    let is_absorbed = |i: &IndexId| absorbed.contains(i);
    let kept: Vec<usize> = (0..input_order.len())
        .filter(|&p| !is_absorbed(&input_order[p]))
        .collect();
    let gathered: Vec<usize> = (0..input_order.len())
        .filter(|&p| is_absorbed(&input_order[p]))
        .collect();
    let perm: Vec<usize> = match side {
        AbsorbSide::Back => kept.iter().chain(gathered.iter()).copied().collect(),
        AbsorbSide::Front => gathered.iter().chain(kept.iter()).copied().collect(),
    };
    Ok(plan_from_perm(perm, side))
}

/// Build the reduced-map parameters for an explicit target order.
pub fn plan_from_perm(perm: Vec<usize>, side: AbsorbSide) -> PermutationPlan {
    let rank = perm.len() as u32;
    // the anchored run sits opposite the absorbed side
    let (anchor, run) = match side {
        AbsorbSide::Back => (Anchor::Front, front_run(&perm)),
        AbsorbSide::Front => (Anchor::Back, back_run(&perm)),
    };
    let m = run.len as u32;
    let inner = rank - m;
    // source stride of the last run dim: consecutive run dims make the
    // whole run contribute k * 2^(rank - p0 - m) for block index k
    let offset = 1u64 << (rank as u64 - run.start_src as u64 - m as u64);
    let stride = match anchor {
        Anchor::Back => 1u64 << m,
        Anchor::Front => 1u64 << inner,
    };
    PermutationPlan {
        perm,
        fixed_run: m,
        anchor,
        map_size_divisor: 1u64 << m,
        stride,
        offset,
    }
}

struct Run {
    len: usize,
    /// Source position of the first dim in the run.
    start_src: usize,
}

/// Longest prefix of `perm` that is a consecutive ascending source run.
fn front_run(perm: &[usize]) -> Run {
    let mut len = 1;
    while len < perm.len() && perm[len] == perm[len - 1] + 1 {
        len += 1;
    }
    Run {
        len,
        start_src: perm[0],
    }
}

/// Longest suffix of `perm` that is a consecutive ascending source run.
fn back_run(perm: &[usize]) -> Run {
    let n = perm.len();
    let mut len = 1;
    while len < n && perm[n - len - 1] + 1 == perm[n - len] {
        len += 1;
    }
    Run {
        len,
        start_src: perm[n - len],
    }
}

/// Naive dest-to-source element map of the permutation (extent 2 per dim).
pub fn naive_permutation_map(perm: &[usize]) -> Vec<u64> {
    let rank = perm.len();
    let n = 1usize << rank;
    let mut map = vec![0u64; n];
    for (dest, slot) in map.iter_mut().enumerate() {
        let mut src = 0u64;
        for (dest_pos, &src_pos) in perm.iter().enumerate() {
            let bit = (dest >> (rank - 1 - dest_pos)) & 1;
            src |= (bit as u64) << (rank - 1 - src_pos);
        }
        *slot = src;
    }
    map
}

/// The reduced map stored by the plan: one entry per recursion base point.
pub fn reduced_map(plan: &PermutationPlan) -> Vec<u64> {
    let full = naive_permutation_map(&plan.perm);
    match plan.anchor {
        Anchor::Back => full
            .iter()
            .step_by(plan.stride as usize)
            .copied()
            .collect(),
        Anchor::Front => full[..plan.stride as usize].to_vec(),
    }
}

/// Expand the reduced map through the recursion, reproducing the full map.
pub fn expand_reduced_map(plan: &PermutationPlan, reduced: &[u64]) -> Vec<u64> {
    let n = 1usize << plan.perm.len();
    let mut full = vec![0u64; n];
    match plan.anchor {
        Anchor::Back => {
            for (q, &base) in reduced.iter().enumerate() {
                for k in 0..plan.stride {
                    full[q * plan.stride as usize + k as usize] = base + k * plan.offset;
                }
            }
        }
        Anchor::Front => {
            let blocks = (n as u64) / plan.stride;
            for b in 0..blocks {
                for (j, &base) in reduced.iter().enumerate() {
                    full[(b * plan.stride) as usize + j] = base + b * plan.offset;
                }
            }
        }
    }
    full
}

// ---------------------------------------------------------------------------
// Fused cost model
// ---------------------------------------------------------------------------

/// Arithmetic-intensity report for a fused plan.
#[derive(Debug, Clone, Serialize)]
pub struct FusedCostReport {
    pub bytes_moved: f64,
    pub flops: f64,
    pub arithmetic_intensity: f64,
    pub balance_flops_per_byte: f64,
    pub compute_bound: bool,
    pub degenerate: bool,
}

/// Flops from the contractions inside groups, bytes from the group-boundary
/// transfers (all subtasks), AI = flops / bytes. Transfers are rounded up
/// to the model's minimum granularity. The balance point compares against
/// the innermost level's bandwidth.
pub fn fused_cost_model(
    tree: &ContractionTree,
    stem: &Stem,
    plan: &FusedPlan,
    model: &MemoryLevelModel,
) -> Result<FusedCostReport> {
    model.validate()?;
    let mut flops = 0f64;
    let mut bytes = 0f64;
    let gran = model.min_transfer_bytes as f64;
    for g in &plan.groups {
        for step in g.first_step..=g.last_step {
            let node = &tree.nodes()[stem.steps[step]];
            flops += 2f64.powi(node_cost(tree, node) as i32);
        }
        let subtasks = g.subtask_count() as f64;
        let load = (2f64.powi(g.load_rank as i32) * model.element_bytes as f64 / gran).ceil() * gran;
        let store =
            (2f64.powi(g.store_rank as i32) * model.element_bytes as f64 / gran).ceil() * gran;
        bytes += subtasks * (load + store);
    }
    let balance = model.peak_flops / model
        .levels
        .last()
        .expect("validated model has levels")
        .bandwidth_bytes_per_s;
    let degenerate = flops == 0.0;
    let ai = if degenerate { 0.0 } else { flops / bytes };
    Ok(FusedCostReport {
        bytes_moved: bytes,
        flops,
        arithmetic_intensity: ai,
        balance_flops_per_byte: balance,
        compute_bound: !degenerate && ai > balance,
        degenerate,
    })
}
