//! Dense reference executor: full, sliced and fused contraction over
//! complex-double tensors, with exact flop instrumentation. This is the
//! ground-truth oracle for the cost model — slow on purpose.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cost::{sliced_cost, tree_cost, SliceSet};
use crate::error::{Result, TnError};
use crate::fusion::FusedPlan;
use crate::lifetime::Stem;
use crate::network::{IndexId, TensorNetwork, VertexId};
use crate::tree::ContractionTree;

/// Refuse execution above this predicted log2 flop count unless overridden.
pub const DEFAULT_GUARD_LOG2: f64 = 34.0;

/// Row-major dense tensor over complex doubles; one extent per index.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    index_order: Vec<IndexId>,
    extents: Vec<usize>,
    data: Vec<Complex64>,
}

impl DenseTensor {
    pub fn new(index_order: Vec<IndexId>, extents: Vec<usize>, data: Vec<Complex64>) -> Result<Self> {
        if index_order.len() != extents.len() {
            return Err(TnError::ShapeMismatch(
                "index order and extents disagree in length".into(),
            ));
        }
        let unique: BTreeSet<&IndexId> = index_order.iter().collect();
        if unique.len() != index_order.len() {
            return Err(TnError::ShapeMismatch("duplicate index in order".into()));
        }
        let want: usize = extents.iter().product();
        if data.len() != want {
            return Err(TnError::ShapeMismatch(format!(
                "data length {} != product of extents {}",
                data.len(),
                want
            )));
        }
        Ok(DenseTensor {
            index_order,
            extents,
            data,
        })
    }

    pub fn zeros(index_order: Vec<IndexId>, extents: Vec<usize>) -> Self {
        let n: usize = extents.iter().product();
        DenseTensor {
            index_order,
            extents,
            data: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn scalar(value: Complex64) -> Self {
        DenseTensor {
            index_order: Vec::new(),
            extents: Vec::new(),
            data: vec![value],
        }
    }

    pub fn index_order(&self) -> &[IndexId] {
        &self.index_order
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn index_set(&self) -> BTreeSet<IndexId> {
        self.index_order.iter().cloned().collect()
    }

    /// log2 of the element count (all extents are powers of two).
    pub fn log2_len(&self) -> u64 {
        self.extents.iter().map(|e| e.trailing_zeros() as u64).sum()
    }

    fn extent_of(&self, idx: &IndexId) -> usize {
        let p = self
            .index_order
            .iter()
            .position(|i| i == idx)
            .expect("index present");
        self.extents[p]
    }

    /// Reorder axes to `order` (a permutation of the current order).
    pub fn permuted(&self, order: &[IndexId]) -> Result<DenseTensor> {
        if order.len() != self.index_order.len()
            || order.iter().any(|i| !self.index_order.contains(i))
        {
            return Err(TnError::ShapeMismatch(
                "permutation target is not a reorder of the tensor's indices".into(),
            ));
        }
        if order == self.index_order {
            return Ok(self.clone());
        }
        // perm[dest axis] = source axis
        let perm: Vec<usize> = order
            .iter()
            .map(|i| self.index_order.iter().position(|j| j == i).expect("present"))
            .collect();
        let new_extents: Vec<usize> = perm.iter().map(|&p| self.extents[p]).collect();
        let src_strides = strides(&self.extents);
        let mut out = vec![Complex64::new(0.0, 0.0); self.data.len()];
        let mut coords = vec![0usize; order.len()];
        for (dest, slot) in out.iter_mut().enumerate() {
            unravel(dest, &new_extents, &mut coords);
            let mut src = 0usize;
            for (dest_axis, &src_axis) in perm.iter().enumerate() {
                src += coords[dest_axis] * src_strides[src_axis];
            }
            *slot = self.data[src];
        }
        DenseTensor::new(order.to_vec(), new_extents, out)
    }

    /// Fix one index to a value, dropping its axis.
    pub fn fixed(&self, idx: &IndexId, value: usize) -> Result<DenseTensor> {
        let axis = self
            .index_order
            .iter()
            .position(|i| i == idx)
            .ok_or_else(|| TnError::NoSuchIndex(idx.0.clone()))?;
        if value >= self.extents[axis] {
            return Err(TnError::ShapeMismatch(format!(
                "value {value} out of range for index `{idx}`"
            )));
        }
        let mut order = self.index_order.clone();
        order.remove(axis);
        let mut extents = self.extents.clone();
        extents.remove(axis);
        let src_strides = strides(&self.extents);
        let n: usize = extents.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut coords = vec![0usize; extents.len()];
        for dest in 0..n {
            unravel(dest, &extents, &mut coords);
            let mut src = value * src_strides[axis];
            let mut c = 0;
            for (a, &stride) in src_strides.iter().enumerate() {
                if a == axis {
                    continue;
                }
                src += coords[c] * stride;
                c += 1;
            }
            data.push(self.data[src]);
        }
        DenseTensor::new(order, extents, data)
    }

    /// Largest relative element error against `other`, aligning axis orders.
    /// Inverse of [`fixed`](Self::fixed): add `idx` as a leading extent-2
    /// axis, placing this tensor at position `value` and zeros at the other.
    pub fn expanded(&self, idx: &IndexId, value: usize) -> Result<DenseTensor> {
        if self.index_set().contains(idx) {
            return Err(TnError::ShapeMismatch(format!(
                "cannot expand {idx}: the tensor already holds it"
            )));
        }
        let mut index_order = vec![idx.clone()];
        index_order.extend(self.index_order.iter().cloned());
        let mut extents = vec![2];
        extents.extend(self.extents.iter().copied());
        let mut data = vec![Complex64::new(0.0, 0.0); 2 * self.data.len()];
        let off = value * self.data.len();
        data[off..off + self.data.len()].copy_from_slice(&self.data);
        DenseTensor::new(index_order, extents, data)
    }

    pub fn max_rel_err(&self, other: &DenseTensor) -> Result<f64> {
        let aligned = other.permuted(&self.index_order)?;
        let scale = self
            .data
            .iter()
            .map(|c| c.norm())
            .fold(0.0f64, f64::max)
            .max(1e-300);
        Ok(self
            .data
            .iter()
            .zip(&aligned.data)
            .map(|(a, b)| (a - b).norm() / scale)
            .fold(0.0f64, f64::max))
    }
}

fn strides(extents: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; extents.len()];
    for i in (0..extents.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * extents[i + 1];
    }
    s
}

fn unravel(mut flat: usize, extents: &[usize], coords: &mut [usize]) {
    for i in (0..extents.len()).rev() {
        coords[i] = flat % extents[i];
        flat /= extents[i];
    }
}

/// Exact scalar-multiply counts, per contraction node.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlopCounter {
    pub per_node: BTreeMap<usize, BigUint>,
}

impl FlopCounter {
    pub fn add(&mut self, node: usize, count: BigUint) {
        *self.per_node.entry(node).or_default() += count;
    }

    pub fn merge(&mut self, other: &FlopCounter) {
        for (n, c) in &other.per_node {
            self.add(*n, c.clone());
        }
    }

    pub fn total(&self) -> BigUint {
        self.per_node.values().sum()
    }
}

/// Contraction kernel selection: TTGT is the real path, the nested-loop
/// kernel is a second oracle for the kernel itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    #[default]
    Ttgt,
    Naive,
}

/// Contract two tensors into `out_set`, counting scalar multiplies.
fn contract_pair(
    left: &DenseTensor,
    right: &DenseTensor,
    out_set: &BTreeSet<IndexId>,
    kernel: Kernel,
) -> Result<(DenseTensor, BigUint)> {
    let ls = left.index_set();
    let rs = right.index_set();
    let batch: Vec<IndexId> = ls
        .intersection(&rs)
        .filter(|i| out_set.contains(*i))
        .cloned()
        .collect();
    let contracted: Vec<IndexId> = ls
        .intersection(&rs)
        .filter(|i| !out_set.contains(*i))
        .cloned()
        .collect();
    let m: Vec<IndexId> = ls.difference(&rs).cloned().collect();
    let n: Vec<IndexId> = rs.difference(&ls).cloned().collect();
    let expect: BTreeSet<IndexId> = batch
        .iter()
        .chain(m.iter())
        .chain(n.iter())
        .cloned()
        .collect();
    if &expect != out_set {
        return Err(TnError::ShapeMismatch(
            "output index set inconsistent with the operands".into(),
        ));
    }
    for i in ls.intersection(&rs) {
        if left.extent_of(i) != right.extent_of(i) {
            return Err(TnError::ShapeMismatch(format!("extent mismatch on `{i}`")));
        }
    }
    let dim = |t: &DenseTensor, ids: &[IndexId]| -> usize {
        ids.iter().map(|i| t.extent_of(i)).product()
    };
    let (bsz, msz, nsz, ksz) = (
        dim(left, &batch),
        dim(left, &m),
        dim(right, &n),
        dim(left, &contracted),
    );
    let multiplies = BigUint::from(bsz) * BigUint::from(msz) * BigUint::from(nsz) * BigUint::from(ksz);

    let out_order: Vec<IndexId> = batch.iter().chain(m.iter()).chain(n.iter()).cloned().collect();
    let out_extents: Vec<usize> = out_order
        .iter()
        .map(|i| {
            if ls.contains(i) {
                left.extent_of(i)
            } else {
                right.extent_of(i)
            }
        })
        .collect();

    let out = match kernel {
        Kernel::Ttgt => {
            // permute-then-GEMM
            let l_order: Vec<IndexId> = batch.iter().chain(m.iter()).chain(contracted.iter()).cloned().collect();
            let r_order: Vec<IndexId> = batch.iter().chain(contracted.iter()).chain(n.iter()).cloned().collect();
            let l = left.permuted(&l_order)?;
            let r = right.permuted(&r_order)?;
            let mut data = vec![Complex64::new(0.0, 0.0); bsz * msz * nsz];
            for b in 0..bsz {
                let lb = &l.data[b * msz * ksz..(b + 1) * msz * ksz];
                let rb = &r.data[b * ksz * nsz..(b + 1) * ksz * nsz];
                let ob = &mut data[b * msz * nsz..(b + 1) * msz * nsz];
                for i in 0..msz {
                    for k in 0..ksz {
                        let lv = lb[i * ksz + k];
                        for j in 0..nsz {
                            ob[i * nsz + j] += lv * rb[k * nsz + j];
                        }
                    }
                }
            }
            DenseTensor::new(out_order, out_extents, data)?
        }
        Kernel::Naive => {
            // one giant loop over the union assignment space
            let union: Vec<IndexId> = batch
                .iter()
                .chain(m.iter())
                .chain(n.iter())
                .chain(contracted.iter())
                .cloned()
                .collect();
            let union_extents: Vec<usize> = union
                .iter()
                .map(|i| {
                    if ls.contains(i) {
                        left.extent_of(i)
                    } else {
                        right.extent_of(i)
                    }
                })
                .collect();
            let mut out = DenseTensor::zeros(out_order.clone(), out_extents.clone());
            let total: usize = union_extents.iter().product();
            let mut coords = vec![0usize; union.len()];
            let value_at = |t: &DenseTensor, assign: &dyn Fn(&IndexId) -> usize| -> Complex64 {
                let st = strides(&t.extents);
                let mut pos = 0;
                for (a, idx) in t.index_order.iter().enumerate() {
                    pos += assign(idx) * st[a];
                }
                t.data[pos]
            };
            for flat in 0..total {
                unravel(flat, &union_extents, &mut coords);
                let assign = |idx: &IndexId| -> usize {
                    coords[union.iter().position(|u| u == idx).expect("present")]
                };
                let prod = value_at(left, &assign) * value_at(right, &assign);
                let st = strides(&out.extents);
                let mut pos = 0;
                for (a, idx) in out_order.iter().enumerate() {
                    pos += assign(idx) * st[a];
                }
                out.data[pos] += prod;
            }
            out
        }
    };
    Ok((out, multiplies))
}

/// Seeded random inputs for every vertex of a network.
pub fn random_inputs(net: &TensorNetwork, seed: u64) -> BTreeMap<VertexId, DenseTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    net.vertices()
        .iter()
        .map(|v| {
            let order: Vec<IndexId> = v.indices.iter().cloned().collect();
            let extents: Vec<usize> = order
                .iter()
                .map(|i| 1usize << net.log2_weight(i).expect("validated"))
                .collect();
            let n: usize = extents.iter().product();
            let data: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            (v.id, DenseTensor::new(order, extents, data).expect("consistent shape"))
        })
        .collect()
}

fn validate_inputs(
    tree: &ContractionTree,
    inputs: &BTreeMap<VertexId, DenseTensor>,
) -> Result<Vec<DenseTensor>> {
    let mut leaves = Vec::with_capacity(tree.leaf_count());
    for e in 0..tree.leaf_count() {
        let v = tree.leaf_vertex(e).expect("leaf edge");
        let t = inputs
            .get(&v)
            .ok_or_else(|| TnError::ShapeMismatch(format!("missing input for vertex {v}")))?;
        if t.index_set() != *tree.index_set(e) {
            return Err(TnError::ShapeMismatch(format!(
                "input for vertex {v} has the wrong index set"
            )));
        }
        for (a, idx) in t.index_order.iter().enumerate() {
            if t.extents[a] != 1usize << tree.log2_weight(idx) {
                return Err(TnError::ShapeMismatch(format!(
                    "input for vertex {v} has the wrong extent on `{idx}`"
                )));
            }
        }
        leaves.push(t.clone());
    }
    Ok(leaves)
}

fn check_guard(predicted_log2: f64, limit_log2: f64) -> Result<()> {
    if predicted_log2 > limit_log2 {
        return Err(TnError::GuardTripped {
            predicted_log2,
            limit_log2,
        });
    }
    Ok(())
}

/// Contract the whole tree with explicit inputs.
pub fn contract_full(
    tree: &ContractionTree,
    inputs: &BTreeMap<VertexId, DenseTensor>,
    limit_log2: f64,
) -> Result<(DenseTensor, FlopCounter)> {
    contract_full_with(tree, inputs, limit_log2, Kernel::Ttgt)
}

pub fn contract_full_with(
    tree: &ContractionTree,
    inputs: &BTreeMap<VertexId, DenseTensor>,
    limit_log2: f64,
    kernel: Kernel,
) -> Result<(DenseTensor, FlopCounter)> {
    check_guard(tree_cost(tree).log2_time_total, limit_log2)?;
    let leaves = validate_inputs(tree, inputs)?;
    let mut tensors: Vec<Option<DenseTensor>> = vec![None; tree.edge_count()];
    for (e, t) in leaves.into_iter().enumerate() {
        tensors[e] = Some(t);
    }
    let mut counter = FlopCounter::default();
    for (i, node) in tree.nodes().iter().enumerate() {
        let l = tensors[node.left].take().expect("SSA order");
        let r = tensors[node.right].take().expect("SSA order");
        let (out, mults) = contract_pair(&l, &r, tree.index_set(node.out), kernel)?;
        counter.add(i, mults);
        tensors[node.out] = Some(out);
    }
    let final_edge = tree.nodes().last().map(|n| n.out).unwrap_or(0);
    Ok((tensors[final_edge].take().expect("final tensor"), counter))
}

/// Contract with slicing: run all 2^|S| subtasks, summing the results in
/// ascending subtask order. Subtasks run on the rayon pool; the reduction
/// order is fixed regardless of worker count.
///
/// Sliced open indices survive to the root; each subtask's result is stacked
/// back (re-expanded at its fixed position) before the sum, so the output
/// always equals the unsliced contraction.
pub fn contract_sliced(
    tree: &ContractionTree,
    s: &SliceSet,
    inputs: &BTreeMap<VertexId, DenseTensor>,
    limit_log2: f64,
) -> Result<(DenseTensor, FlopCounter)> {
    s.check_unit_weights(tree)?;
    check_guard(sliced_cost(tree, s)?.log2_time_total, limit_log2)?;
    let leaves = validate_inputs(tree, inputs)?;
    let sliced: Vec<IndexId> = s.indices().to_vec();
    let n_subtasks = 1usize << sliced.len();

    let run = |mask: usize| -> Result<(DenseTensor, FlopCounter)> {
        let mut tensors: Vec<Option<DenseTensor>> = vec![None; tree.edge_count()];
        for (e, t) in leaves.iter().enumerate() {
            let mut t = t.clone();
            for (b, idx) in sliced.iter().enumerate() {
                if t.index_set().contains(idx) {
                    t = t.fixed(idx, mask >> b & 1)?;
                }
            }
            tensors[e] = Some(t);
        }
        let mut counter = FlopCounter::default();
        for (i, node) in tree.nodes().iter().enumerate() {
            let l = tensors[node.left].take().expect("SSA order");
            let r = tensors[node.right].take().expect("SSA order");
            let out_set: BTreeSet<IndexId> = tree
                .index_set(node.out)
                .iter()
                .filter(|x| !sliced.contains(x))
                .cloned()
                .collect();
            let (out, mults) = contract_pair(&l, &r, &out_set, Kernel::Ttgt)?;
            counter.add(i, mults);
            tensors[node.out] = Some(out);
        }
        let final_edge = tree.nodes().last().map(|n| n.out).unwrap_or(0);
        let mut out = tensors[final_edge].take().expect("final tensor");
        for (b, idx) in sliced.iter().enumerate() {
            if tree.index_set(final_edge).contains(idx) {
                out = out.expanded(idx, mask >> b & 1)?;
            }
        }
        Ok((out, counter))
    };

    let results: Vec<Result<(DenseTensor, FlopCounter)>> =
        (0..n_subtasks).into_par_iter().map(run).collect();
    let mut acc: Option<DenseTensor> = None;
    let mut counter = FlopCounter::default();
    for r in results {
        let (t, c) = r?;
        counter.merge(&c);
        acc = Some(match acc {
            None => t,
            Some(mut a) => {
                let aligned = t.permuted(&a.index_order)?;
                for (x, y) in a.data.iter_mut().zip(&aligned.data) {
                    *x += y;
                }
                a
            }
        });
    }
    Ok((acc.expect("at least one subtask"), counter))
}

/// Per-group transfer counts of a fused execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupTransfers {
    pub subtasks: u64,
    /// Bulk transfers per subtask: one load, one store.
    pub loads_per_subtask: u64,
    pub stores_per_subtask: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransferLedger {
    pub per_group: Vec<GroupTransfers>,
}

impl TransferLedger {
    /// Transfers counted once per group boundary (the Fig-8 style tally the
    /// planner's dma_saved is measured against).
    pub fn boundary_transfers(&self) -> u64 {
        self.per_group
            .iter()
            .map(|g| g.loads_per_subtask + g.stores_per_subtask)
            .sum()
    }

    pub fn total_transfers(&self) -> u64 {
        self.per_group
            .iter()
            .map(|g| g.subtasks * (g.loads_per_subtask + g.stores_per_subtask))
            .sum()
    }
}

/// Execute the stem through a fused plan: per group, per secondary-slice
/// assignment, load once, run every group step, store once. Branches are
/// pre-contracted with the plain executor.
pub fn execute_fused(
    tree: &ContractionTree,
    stem: &Stem,
    plan: &FusedPlan,
    inputs: &BTreeMap<VertexId, DenseTensor>,
    limit_log2: f64,
) -> Result<(DenseTensor, TransferLedger, FlopCounter)> {
    check_guard(tree_cost(tree).log2_time_total, limit_log2)?;
    let leaves = validate_inputs(tree, inputs)?;
    let mut tensors: Vec<Option<DenseTensor>> = vec![None; tree.edge_count()];
    for (e, t) in leaves.into_iter().enumerate() {
        tensors[e] = Some(t);
    }
    // pre-contract every off-stem node in SSA order
    let stem_nodes: BTreeSet<usize> = stem.steps.iter().copied().collect();
    let mut counter = FlopCounter::default();
    for (i, node) in tree.nodes().iter().enumerate() {
        if stem_nodes.contains(&i) {
            continue;
        }
        let l = tensors[node.left].clone().expect("SSA order");
        let r = tensors[node.right].clone().expect("SSA order");
        let (out, mults) = contract_pair(&l, &r, tree.index_set(node.out), Kernel::Ttgt)?;
        counter.add(i, mults);
        tensors[node.out] = Some(out);
    }

    let mut ledger = TransferLedger::default();
    let mut current: DenseTensor = tensors[stem.tensors[0]].clone().expect("stem start");
    for g in &plan.groups {
        let slices = &g.secondary_slices;
        let n_subtasks = 1usize << slices.len();
        let out_edge = stem.tensors[g.last_step + 1];

        let run = |mask: usize| -> Result<DenseTensor> {
            let fix_all = |t: &DenseTensor| -> Result<DenseTensor> {
                let mut t = t.clone();
                for (b, idx) in slices.iter().enumerate() {
                    if t.index_set().contains(idx) {
                        t = t.fixed(idx, mask >> b & 1)?;
                    }
                }
                Ok(t)
            };
            let mut resident = fix_all(&current)?;
            if resident.log2_len() > plan.capacity {
                return Err(TnError::CapacityExceeded {
                    step: g.first_step,
                    rank: resident.log2_len(),
                    capacity: plan.capacity,
                });
            }
            for step in g.first_step..=g.last_step {
                let node = &tree.nodes()[stem.steps[step]];
                let branch = fix_all(tensors[stem.branch_map[step]].as_ref().expect("branch"))?;
                let out_set: BTreeSet<IndexId> = tree
                    .index_set(node.out)
                    .iter()
                    .filter(|x| !slices.contains(x))
                    .cloned()
                    .collect();
                let (next, _) = contract_pair(&resident, &branch, &out_set, Kernel::Ttgt)?;
                if next.log2_len() > plan.capacity {
                    return Err(TnError::CapacityExceeded {
                        step,
                        rank: next.log2_len(),
                        capacity: plan.capacity,
                    });
                }
                resident = next;
            }
            Ok(resident)
        };
        let subs: Vec<DenseTensor> = (0..n_subtasks)
            .into_par_iter()
            .map(run)
            .collect::<Result<_>>()?;

        // count the group's flops on the unfused tally (same totals)
        for step in g.first_step..=g.last_step {
            let node_idx = stem.steps[step];
            let node = &tree.nodes()[node_idx];
            counter.add(
                node_idx,
                BigUint::from(1u32) << crate::cost::node_cost(tree, node),
            );
        }

        // stack sub-results into the full group output (slices are kept dims)
        let sub0 = subs.first().expect("at least one subtask").clone();
        let mut order: Vec<IndexId> = slices.clone();
        order.extend(sub0.index_order.iter().cloned());
        let mut extents: Vec<usize> = vec![2; slices.len()];
        extents.extend(sub0.extents.iter().copied());
        let mut full = DenseTensor::zeros(order, extents);
        let inner: usize = sub0.data.len();
        for (mask, sub) in subs.into_iter().enumerate() {
            let sub = sub.permuted(&sub0.index_order)?;
            // axis b of the slice block is bit b of the mask, row-major
            let mut pos = 0usize;
            for b in 0..slices.len() {
                pos = pos * 2 + (mask >> b & 1);
            }
            full.data[pos * inner..(pos + 1) * inner].copy_from_slice(&sub.data);
        }
        if full.index_set() != *tree.index_set(out_edge) {
            return Err(TnError::ShapeMismatch(
                "fused group output has the wrong index set".into(),
            ));
        }
        ledger.per_group.push(GroupTransfers {
            subtasks: n_subtasks as u64,
            loads_per_subtask: 1,
            stores_per_subtask: 1,
        });
        tensors[out_edge] = Some(full.clone());
        current = full;
    }
    Ok((current, ledger, counter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{random_network, random_test_path};
    use crate::cost::{overhead, Provenance};
    use crate::fixtures::{self, idx};
    use crate::lifetime::{all_lifetimes, extract_stem, restrict_lifetimes};
    use crate::network::greedy_test_path;
    use crate::slicing::{find_slices, FinderPool};
    use crate::tree::build_tree;

    const G: f64 = DEFAULT_GUARD_LOG2;

    /// Giant-sum oracle: sum over every closed assignment of the product of
    /// all input tensors; open indices in sorted order.
    fn brute_force(net: &TensorNetwork, inputs: &BTreeMap<VertexId, DenseTensor>) -> DenseTensor {
        let all: Vec<IndexId> = net.edges().keys().cloned().collect();
        let extents: Vec<usize> = all
            .iter()
            .map(|i| 1usize << net.log2_weight(i).unwrap())
            .collect();
        let open: Vec<IndexId> = net.open_edges().into_iter().collect();
        let open_extents: Vec<usize> = open
            .iter()
            .map(|i| 1usize << net.log2_weight(i).unwrap())
            .collect();
        let mut out = DenseTensor::zeros(open.clone(), open_extents);
        let total: usize = extents.iter().product();
        let mut coords = vec![0usize; all.len()];
        for flat in 0..total {
            unravel(flat, &extents, &mut coords);
            let assign =
                |i: &IndexId| -> usize { coords[all.iter().position(|a| a == i).unwrap()] };
            let mut prod = Complex64::new(1.0, 0.0);
            for v in net.vertices() {
                let t = &inputs[&v.id];
                let st = strides(t.extents());
                let mut pos = 0;
                for (a, i) in t.index_order().iter().enumerate() {
                    pos += assign(i) * st[a];
                }
                prod *= t.data()[pos];
            }
            let st = strides(out.extents());
            let mut pos = 0;
            for (a, i) in open.iter().enumerate() {
                pos += assign(i) * st[a];
            }
            out.data[pos] += prod;
        }
        out
    }

    #[test]
    fn identity_matmul() {
        let (net, path) = fixtures::matmul();
        let tree = build_tree(&net, &path).unwrap();
        let eye = |order: [&str; 2]| {
            DenseTensor::new(
                vec![idx(order[0]), idx(order[1])],
                vec![2, 2],
                vec![
                    Complex64::new(1.0, 0.0),
                    Complex64::new(0.0, 0.0),
                    Complex64::new(0.0, 0.0),
                    Complex64::new(1.0, 0.0),
                ],
            )
            .unwrap()
        };
        let inputs: BTreeMap<VertexId, DenseTensor> =
            [(0, eye(["a", "b"])), (1, eye(["b", "c"]))].into();
        let (out, counter) = contract_full(&tree, &inputs, G).unwrap();
        assert_eq!(counter.total(), BigUint::from(8u32));
        let want = eye(["a", "c"]);
        assert!(out.max_rel_err(&want).unwrap() < 1e-15);
    }

    #[test]
    fn closed_cycle_equals_trace() {
        let (net, path) = fixtures::closed_chain4();
        let tree = build_tree(&net, &path).unwrap();
        let inputs = random_inputs(&net, 3);
        let (out, _) = contract_full(&tree, &inputs, G).unwrap();
        let oracle = brute_force(&net, &inputs);
        assert!(out.max_rel_err(&oracle).unwrap() < 1e-12);
        assert!(out.index_order().is_empty());
    }

    #[test]
    fn random_networks_match_giant_sum() {
        for seed in 0..8 {
            let net = random_network(seed, 10, 4, 2);
            if net.edges().len() > 20 {
                continue;
            }
            let path = greedy_test_path(&net, seed).unwrap();
            let tree = build_tree(&net, &path).unwrap();
            let inputs = random_inputs(&net, seed + 100);
            let (out, counter) = contract_full(&tree, &inputs, G).unwrap();
            let oracle = brute_force(&net, &inputs);
            assert!(out.max_rel_err(&oracle).unwrap() < 1e-10);
            // Eq-1 exactness
            let predicted = tree_cost(&tree).total_flops;
            assert_eq!(counter.total(), predicted);
        }
    }

    #[test]
    fn kernels_agree() {
        for seed in 0..5 {
            let net = random_network(seed, 8, 3, 1);
            let path = greedy_test_path(&net, seed).unwrap();
            let tree = build_tree(&net, &path).unwrap();
            let inputs = random_inputs(&net, seed);
            let (a, ca) = contract_full_with(&tree, &inputs, G, Kernel::Ttgt).unwrap();
            let (b, cb) = contract_full_with(&tree, &inputs, G, Kernel::Naive).unwrap();
            assert!(a.max_rel_err(&b).unwrap() < 1e-12);
            assert_eq!(ca, cb);
        }
    }

    #[test]
    fn empty_slice_set_identical() {
        let net = random_network(1, 8, 3, 1);
        let path = greedy_test_path(&net, 1).unwrap();
        let tree = build_tree(&net, &path).unwrap();
        let inputs = random_inputs(&net, 1);
        let s = SliceSet::empty(30);
        let (full, cf) = contract_full(&tree, &inputs, G).unwrap();
        let (sl, cs) = contract_sliced(&tree, &s, &inputs, G).unwrap();
        assert!(full.max_rel_err(&sl).unwrap() < 1e-15);
        assert_eq!(cf.total(), cs.total());
    }

    #[test]
    fn single_slice_sums_to_full() {
        let (net, path) = fixtures::matmul();
        let tree = build_tree(&net, &path).unwrap();
        let inputs = random_inputs(&net, 5);
        let s = SliceSet::new(vec![idx("b")], 30, Provenance::Manual);
        let (full, _) = contract_full(&tree, &inputs, G).unwrap();
        let (sl, _) = contract_sliced(&tree, &s, &inputs, G).unwrap();
        assert!(full.max_rel_err(&sl).unwrap() < 1e-12);
    }

    #[test]
    fn sliced_open_index_stacks_back_to_full() {
        // `a` and `c` are open in the matmul fixture: each subtask fixes one
        // value of the sliced open index and must be stacked, not summed.
        let (net, path) = fixtures::matmul();
        let tree = build_tree(&net, &path).unwrap();
        let inputs = random_inputs(&net, 9);
        let s = SliceSet::new(vec![idx("a"), idx("b")], 30, Provenance::Manual);
        let (full, _) = contract_full(&tree, &inputs, G).unwrap();
        let (sl, _) = contract_sliced(&tree, &s, &inputs, G).unwrap();
        assert_eq!(sl.index_set(), full.index_set());
        assert!(full.max_rel_err(&sl).unwrap() < 1e-12);
    }

    #[test]
    fn sliced_flops_match_eq4_and_overhead() {
        for seed in 0..10 {
            let net = random_network(seed, 9, 3, 1);
            let path = random_test_path(&net, seed).unwrap();
            let tree = build_tree(&net, &path).unwrap();
            let inputs = random_inputs(&net, seed + 7);
            let indices: Vec<IndexId> = tree.all_indices().into_iter().collect();
            let s = SliceSet::new(indices[..2.min(indices.len())].to_vec(), 30, Provenance::Manual);
            let (full, cf) = contract_full(&tree, &inputs, G).unwrap();
            let (sl, cs) = contract_sliced(&tree, &s, &inputs, G).unwrap();
            assert!(full.max_rel_err(&sl).unwrap() < 1e-10);
            let predicted = sliced_cost(&tree, &s).unwrap().total_flops;
            assert_eq!(cs.total(), predicted);
            let measured =
                crate::cost::flop_ratio(&cs.total(), &cf.total());
            assert_eq!(measured, overhead(&tree, &s).unwrap());
        }
    }

    #[test]
    fn guard_trips() {
        let net = random_network(0, 30, 25, 4);
        let path = greedy_test_path(&net, 0).unwrap();
        let tree = build_tree(&net, &path).unwrap();
        let inputs = random_inputs(&net, 0);
        match contract_full(&tree, &inputs, 10.0) {
            Err(TnError::GuardTripped { .. }) => {}
            other => panic!("expected guard trip, got {other:?}"),
        }
    }

    #[test]
    fn fused_fig9_fixture() {
        let (net, path) = fixtures::fusion_span5();
        let tree = build_tree(&net, &path).unwrap();
        let stem = extract_stem(&tree).unwrap();
        let lts = all_lifetimes(&tree).unwrap();
        let intervals = restrict_lifetimes(&tree, &stem, &lts).unwrap();
        let plan = crate::fusion::plan_fusion(&tree, &stem, &intervals, 3).unwrap();
        assert_eq!(plan.groups.len(), 1);
        assert_eq!(plan.groups[0].subtask_count(), 32);

        let inputs = random_inputs(&net, 9);
        let (fused, ledger, cf) = execute_fused(&tree, &stem, &plan, &inputs, G).unwrap();
        let (full, cu) = contract_full(&tree, &inputs, G).unwrap();
        assert!(fused.max_rel_err(&full).unwrap() < 1e-10);
        assert_eq!(cf.total(), cu.total());
        assert_eq!(ledger.per_group.len(), 1);
        assert_eq!(ledger.per_group[0].subtasks, 32);
        // 2 boundary transfers for the group versus 2n step-by-step
        assert_eq!(ledger.boundary_transfers(), 2);
        let baseline = 2 * stem.step_count() as u64;
        assert_eq!(baseline - ledger.boundary_transfers(), plan.dma_saved);
    }

    #[test]
    fn fused_random_instances_match_unfused() {
        for seed in 0..6 {
            let net = random_network(seed, 10, 4, 2);
            let path = greedy_test_path(&net, seed).unwrap();
            let tree = build_tree(&net, &path).unwrap();
            let stem = extract_stem(&tree).unwrap();
            let lts = all_lifetimes(&tree).unwrap();
            let intervals = restrict_lifetimes(&tree, &stem, &lts).unwrap();
            let cap = stem
                .tensors
                .iter()
                .map(|&e| tree.rank(e))
                .max()
                .unwrap()
                .max(1);
            let plan = crate::fusion::plan_fusion(&tree, &stem, &intervals, cap).unwrap();
            let inputs = random_inputs(&net, seed + 50);
            let (fused, _, _) = execute_fused(&tree, &stem, &plan, &inputs, G).unwrap();
            let (full, _) = contract_full(&tree, &inputs, G).unwrap();
            assert!(fused.max_rel_err(&full).unwrap() < 1e-10);
        }
    }

    #[test]
    fn finder_slices_execute_equivalently() {
        for seed in 0..6 {
            let net = random_network(seed, 10, 4, 1);
            let path = greedy_test_path(&net, seed).unwrap();
            let tree = build_tree(&net, &path).unwrap();
            let stem = extract_stem(&tree).unwrap();
            let lts = all_lifetimes(&tree).unwrap();
            let intervals = restrict_lifetimes(&tree, &stem, &lts).unwrap();
            let peak = stem.tensors.iter().map(|&e| tree.rank(e)).max().unwrap();
            if peak < 2 {
                continue;
            }
            let s = find_slices(&tree, &stem, &intervals, peak - 1, FinderPool::Local).unwrap();
            let inputs = random_inputs(&net, seed);
            let (full, _) = contract_full(&tree, &inputs, G).unwrap();
            let (sl, _) = contract_sliced(&tree, &s, &inputs, G).unwrap();
            assert!(full.max_rel_err(&sl).unwrap() < 1e-10);
        }
    }

    #[test]
    fn permutation_plan_matches_tensor_permute() {
        use crate::fusion::{expand_reduced_map, plan_from_perm, reduced_map, AbsorbSide};
        let order: Vec<IndexId> = (0..6).map(|i| idx(&format!("p{i}"))).collect();
        let extents = vec![2usize; 6];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<Complex64> = (0..64)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let t = DenseTensor::new(order.clone(), extents, data).unwrap();
        let perm = vec![2usize, 0, 3, 4, 5, 1];
        let target: Vec<IndexId> = perm.iter().map(|&p| order[p].clone()).collect();
        let via_axes = t.permuted(&target).unwrap();
        let plan = plan_from_perm(perm, AbsorbSide::Front);
        let map = expand_reduced_map(&plan, &reduced_map(&plan));
        for (dest, &src) in map.iter().enumerate() {
            assert_eq!(via_axes.data()[dest], t.data()[src as usize]);
        }
    }

    #[test]
    fn shape_mismatch_detected() {
        let (net, path) = fixtures::matmul();
        let tree = build_tree(&net, &path).unwrap();
        let mut inputs = random_inputs(&net, 0);
        // swap in a tensor with the wrong index set
        inputs.insert(
            0,
            DenseTensor::zeros(vec![idx("a")], vec![2]),
        );
        assert!(matches!(
            contract_full(&tree, &inputs, G),
            Err(TnError::ShapeMismatch(_))
        ));
    }
}
