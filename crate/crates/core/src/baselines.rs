//! Independent oracles and comparison baselines: random instance
//! generation, a greedy slicer, and an exhaustive slicing search with its
//! full overhead landscape.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cost::{overhead, residual_rank, sliced_cost, Provenance, SliceSet};
use crate::error::{Result, TnError};
use crate::network::{ContractionPath, IndexId, TensorNetwork, VertexId};
use crate::tree::ContractionTree;

/// Random connected unit-weight network: a spanning tree plus `extra_edges`
/// additional closed edges and `n_open` open edges. Deterministic per seed.
pub fn random_network(
    seed: u64,
    n_vertices: usize,
    extra_edges: usize,
    n_open: usize,
) -> TensorNetwork {
    assert!(n_vertices >= 2, "need at least two vertices");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(IndexId, u64)> = Vec::new();
    let mut incidence: Vec<Vec<IndexId>> = vec![Vec::new(); n_vertices];
    let mut next = 0usize;
    let mut fresh = |edges: &mut Vec<(IndexId, u64)>| -> IndexId {
        let id = IndexId::new(format!("e{next:03}"));
        next += 1;
        edges.push((id.clone(), 1));
        id
    };
    // random spanning tree: attach each vertex to an earlier one
    for v in 1..n_vertices {
        let u = rng.gen_range(0..v);
        let id = fresh(&mut edges);
        incidence[u].push(id.clone());
        incidence[v].push(id);
    }
    for _ in 0..extra_edges {
        let a = rng.gen_range(0..n_vertices);
        let b = loop {
            let b = rng.gen_range(0..n_vertices);
            if b != a {
                break b;
            }
        };
        let id = fresh(&mut edges);
        incidence[a].push(id.clone());
        incidence[b].push(id);
    }
    for _ in 0..n_open {
        let v = rng.gen_range(0..n_vertices);
        let id = fresh(&mut edges);
        incidence[v].push(id);
    }
    let vertices: Vec<(VertexId, Vec<IndexId>)> = incidence.into_iter().enumerate().collect();
    TensorNetwork::new(vertices, edges).expect("generated networks are structurally valid")
}

/// Random valid SSA contraction path: repeatedly contracts a uniformly
/// chosen adjacent pair of live tensors. Deterministic per seed.
pub fn random_test_path(net: &TensorNetwork, seed: u64) -> Result<ContractionPath> {
    if !net.is_connected() {
        return Err(TnError::Disconnected);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut live: Vec<(VertexId, BTreeSet<IndexId>)> = net
        .vertices()
        .iter()
        .map(|v| (v.id, v.indices.clone()))
        .collect();
    let mut next_id = net.vertices().len();
    let mut steps = Vec::new();
    while live.len() > 1 {
        let mut pairs = Vec::new();
        for i in 0..live.len() {
            for j in i + 1..live.len() {
                if !live[i].1.is_disjoint(&live[j].1) {
                    pairs.push((i, j));
                }
            }
        }
        let &(i, j) = pairs.choose(&mut rng).expect("connected network has an adjacent pair");
        let (b_id, sb) = live.remove(j);
        let (a_id, sa) = live.remove(i);
        let out: BTreeSet<IndexId> = sa
            .symmetric_difference(&sb)
            .cloned()
            .chain(sa.intersection(&sb).filter(|x| net.is_open(x)).cloned())
            .collect();
        steps.push((a_id, b_id));
        live.push((next_id, out));
        next_id += 1;
    }
    Ok(ContractionPath::new(steps))
}

/// Residual memory peak over every tree edge.
pub fn residual_peak(tree: &ContractionTree, s: &SliceSet) -> u64 {
    (0..tree.edge_count())
        .map(|e| residual_rank(tree, e, s))
        .max()
        .unwrap_or(0)
}

fn unit_indices(tree: &ContractionTree) -> Vec<IndexId> {
    tree.all_indices()
        .into_iter()
        .filter(|i| tree.log2_weight(i) == 1)
        .collect()
}

/// Greedy slicer: while the residual memory peak exceeds `t`, slice the
/// single index minimizing the Eq-4 total. Candidates are restricted to
/// indices of a current peak tensor so every pick makes progress toward the
/// constraint; ties break by id.
pub fn greedy_slicer(tree: &ContractionTree, t: u64) -> Result<SliceSet> {
    let mut s = SliceSet::new(Vec::new(), t, Provenance::Manual);
    loop {
        let peak = residual_peak(tree, &s);
        if peak <= t {
            return Ok(s);
        }
        let peak_edges: Vec<usize> = (0..tree.edge_count())
            .filter(|&e| residual_rank(tree, e, &s) == peak)
            .collect();
        let mut best: Option<(num_bigint::BigUint, IndexId)> = None;
        for idx in unit_indices(tree) {
            if s.contains(&idx) {
                continue;
            }
            if !peak_edges.iter().any(|&e| tree.index_set(e).contains(&idx)) {
                continue;
            }
            let mut trial = s.clone();
            trial.push(idx.clone());
            let cost = sliced_cost(tree, &trial)?.total_flops;
            match &best {
                Some((c, _)) if *c <= cost => {}
                _ => best = Some((cost, idx)),
            }
        }
        match best {
            Some((_, idx)) => s.push(idx),
            None => return Err(TnError::PoolExhausted),
        }
    }
}

/// One valid subset and its overhead.
#[derive(Debug, Clone)]
pub struct LandscapePoint {
    pub indices: BTreeSet<IndexId>,
    pub overhead: f64,
}

/// Default pool limit for the exhaustive search.
pub const DEFAULT_MAX_POOL: usize = 14;

/// Enumerate every subset of the unit-weight index pool in size order,
/// returning the minimum-overhead subset meeting the memory constraint and
/// the full landscape of valid subsets.
pub fn exhaustive_slicer(
    tree: &ContractionTree,
    t: u64,
    max_pool: usize,
) -> Result<(SliceSet, Vec<LandscapePoint>)> {
    let pool = unit_indices(tree);
    if pool.len() > max_pool {
        return Err(TnError::PoolTooLarge {
            got: pool.len(),
            limit: max_pool,
        });
    }
    let full_peak = residual_peak(tree, &SliceSet::empty(t));
    let mut landscape = Vec::new();
    let mut best: Option<(f64, usize, Vec<IndexId>)> = None;
    for mask in 0u32..(1u32 << pool.len()) {
        let size = mask.count_ones() as usize;
        let indices: Vec<IndexId> = (0..pool.len())
            .filter(|b| mask >> b & 1 == 1)
            .map(|b| pool[b].clone())
            .collect();
        // rank-count prune: |S| below peak - t cannot satisfy the constraint
        if full_peak > t && (size as u64) < full_peak - t {
            continue;
        }
        let s = SliceSet::new(indices.clone(), t, Provenance::Manual);
        if residual_peak(tree, &s) > t {
            continue;
        }
        let oh = overhead(tree, &s)?;
        landscape.push(LandscapePoint {
            indices: indices.iter().cloned().collect(),
            overhead: oh,
        });
        let better = match &best {
            None => true,
            Some((b_oh, b_size, b_idx)) => {
                (oh, size, &indices) < (*b_oh, *b_size, b_idx)
            }
        };
        if better {
            best = Some((oh, size, indices));
        }
    }
    let (_, _, indices) = best.ok_or(TnError::PoolExhausted)?;
    Ok((SliceSet::new(indices, t, Provenance::Manual), landscape))
}

/// A witness against the smaller-set theorem: a valid n-set whose overhead
/// beats every valid (n-1)-set.
#[derive(Debug, Clone)]
pub struct Theorem1Counterexample {
    pub set: BTreeSet<IndexId>,
    pub overhead: f64,
    pub best_smaller_overhead: f64,
}

/// Audit the landscape: for every valid set of size n >= 1, some valid set
/// of size n-1 must exist with overhead <= the set's own.
pub fn theorem1_audit(landscape: &[LandscapePoint]) -> Option<Theorem1Counterexample> {
    // best overhead per subset size
    let mut best_by_size: Vec<Option<f64>> = Vec::new();
    for p in landscape {
        let n = p.indices.len();
        if best_by_size.len() <= n {
            best_by_size.resize(n + 1, None);
        }
        let slot = &mut best_by_size[n];
        *slot = Some(slot.map_or(p.overhead, |b: f64| b.min(p.overhead)));
    }
    for p in landscape {
        let n = p.indices.len();
        if n == 0 {
            continue;
        }
        if let Some(Some(best_smaller)) = best_by_size.get(n - 1) {
            if *best_smaller > p.overhead {
                return Some(Theorem1Counterexample {
                    set: p.indices.clone(),
                    overhead: p.overhead,
                    best_smaller_overhead: *best_smaller,
                });
            }
        }
    }
    None
}
