//! Index lifetimes on a contraction tree, and the stem.
//!
//! The lifetime of an index is the set of tree-edge tensors containing it.
//! On a well-formed tree this set is always a simple path: leaf to leaf for
//! a closed index, leaf to root for an open one. The stem is the
//! leaf-to-root path with the largest total contraction cost; slicing and
//! fusion both operate on lifetimes restricted to the stem.

use std::collections::BTreeMap;

use crate::cost::node_cost;
use crate::error::{Result, TnError};
use crate::network::IndexId;
use crate::tree::{ContractionTree, TreeEdgeId};

/// Where a lifetime path terminates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Leaf,
    Root,
}

/// The tensors containing one index, ordered along the tree path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lifetime {
    pub index: IndexId,
    pub tree_edges: Vec<TreeEdgeId>,
    pub endpoints: (Endpoint, Endpoint),
}

/// Consumer map: for each tree edge, the node (by position in `nodes`)
/// that consumes it as a child.
fn consumer_map(tree: &ContractionTree) -> Vec<Option<usize>> {
    let mut consumers = vec![None; tree.edge_count()];
    for (i, node) in tree.nodes().iter().enumerate() {
        consumers[node.left] = Some(i);
        consumers[node.right] = Some(i);
    }
    consumers
}

/// Compute the lifetime of one index, verifying linearity.
///
/// A violation signals a malformed tree and is raised, never repaired.
pub fn lifetime_of(tree: &ContractionTree, index: &IndexId) -> Result<Lifetime> {
    if !tree.weights().contains_key(index) {
        return Err(TnError::NoSuchIndex(index.0.clone()));
    }
    lifetime_walk(tree, index, &consumer_map(tree))
}

/// Lifetimes of every index in the tree's network.
pub fn all_lifetimes(tree: &ContractionTree) -> Result<BTreeMap<IndexId, Lifetime>> {
    let consumers = consumer_map(tree);
    tree.all_indices()
        .into_iter()
        .map(|idx| lifetime_walk(tree, &idx, &consumers).map(|lt| (idx, lt)))
        .collect()
}

fn lifetime_walk(
    tree: &ContractionTree,
    index: &IndexId,
    consumers: &[Option<usize>],
) -> Result<Lifetime> {
    let violation = || TnError::LinearityViolation(index.0.clone());
    let members: Vec<TreeEdgeId> = (0..tree.edge_count())
        .filter(|&e| tree.index_set(e).contains(index))
        .collect();
    if members.is_empty() {
        return Err(violation());
    }
    let member_count = members.len();
    let leaf_ends: Vec<TreeEdgeId> = members
        .iter()
        .copied()
        .filter(|&e| tree.is_leaf(e))
        .collect();
    let in_root = members.contains(&tree.root());

    let (start, expected_end) = match (leaf_ends.len(), in_root) {
        (2, false) => (leaf_ends[0], Endpoint::Leaf),
        (1, true) => (leaf_ends[0], Endpoint::Root),
        _ => return Err(violation()),
    };

    // Walk the path from the starting leaf, following conservation: at each
    // node the index sits in exactly two incident tree edges.
    let final_edge = tree
        .nodes()
        .last()
        .map(|n| n.out)
        .unwrap_or_else(|| tree.root().saturating_sub(1));
    let mut path = vec![start];
    let mut current = start;
    // `from_below` is true when we entered `current` at its producer side,
    // so the walk continues through its consumer.
    let mut from_below = true;
    loop {
        if from_below {
            // move up through the consumer of `current`
            let node_idx = match consumers[current] {
                Some(i) => i,
                None => {
                    // only the final intermediate has no consuming node; it
                    // hands over to the synthetic root edge
                    if current != final_edge {
                        return Err(violation());
                    }
                    if !in_root {
                        return Err(violation());
                    }
                    path.push(tree.root());
                    break;
                }
            };
            let node = tree.nodes()[node_idx];
            let sibling = if node.left == current { node.right } else { node.left };
            let in_sibling = tree.index_set(sibling).contains(index);
            let in_out = tree.index_set(node.out).contains(index);
            match (in_sibling, in_out) {
                (false, true) => {
                    path.push(node.out);
                    current = node.out;
                    from_below = true;
                }
                (true, in_out2) => {
                    if in_out2 && !tree.is_open(index) {
                        return Err(violation());
                    }
                    // contracted here (or an open index held through); for a
                    // closed index the path turns down into the sibling
                    if in_out2 {
                        // open index in both children cannot happen on simple
                        // graphs; treat as malformed
                        return Err(violation());
                    }
                    path.push(sibling);
                    current = sibling;
                    from_below = false;
                }
                (false, false) => return Err(violation()),
            }
        } else {
            // move down through the producer of `current`
            if tree.is_leaf(current) {
                break;
            }
            let node = *tree.producer(current).ok_or_else(violation)?;
            let in_left = tree.index_set(node.left).contains(index);
            let in_right = tree.index_set(node.right).contains(index);
            let next = match (in_left, in_right) {
                (true, false) => node.left,
                (false, true) => node.right,
                _ => return Err(violation()),
            };
            path.push(next);
            current = next;
        }
    }
    if path.len() != member_count {
        return Err(violation());
    }
    let end = match *path.last().expect("path is nonempty") {
        e if e == tree.root() => Endpoint::Root,
        e if tree.is_leaf(e) => Endpoint::Leaf,
        _ => return Err(violation()),
    };
    if end != expected_end {
        return Err(violation());
    }
    Ok(Lifetime {
        index: index.clone(),
        tree_edges: path,
        endpoints: (Endpoint::Leaf, end),
    })
}

// ---------------------------------------------------------------------------
// Stem extraction
// ---------------------------------------------------------------------------

/// The most computationally intensive leaf-to-root path of the tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stem {
    /// Tree edges along the path, `tensors[0]` = chosen leaf,
    /// `tensors[N-1]` = the final (root-side) tensor.
    pub tensors: Vec<TreeEdgeId>,
    /// Node position (into `tree.nodes()`) of each step; step `i` contracts
    /// `tensors[i]` with `branch_map[i]` into `tensors[i+1]`.
    pub steps: Vec<usize>,
    /// Per-step contraction cost in log2.
    pub node_costs: Vec<u64>,
    /// The pre-contracted off-stem child of each step.
    pub branch_map: Vec<TreeEdgeId>,
}

impl Stem {
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    pub fn total_cost_log2_sum(&self) -> u64 {
        self.node_costs.iter().sum()
    }
}

/// Extract the stem by exact bottom-up dynamic programming over total node
/// cost, breaking ties toward the smaller tree-edge id. Deterministic.
pub fn extract_stem(tree: &ContractionTree) -> Result<Stem> {
    if tree.nodes().is_empty() {
        return Err(TnError::Invalid(
            "tree has no contractions; stem is undefined".to_owned(),
        ));
    }
    // best[e] = (total cost of the best path from a leaf up to edge e,
    //            chosen child edge), computed in SSA order.
    let mut best: Vec<u128> = vec![0; tree.edge_count()];
    let mut choice: Vec<Option<(usize, TreeEdgeId, TreeEdgeId)>> = vec![None; tree.edge_count()];
    for (i, node) in tree.nodes().iter().enumerate() {
        // rank paths by total linear work, exactly, in wide integers
        let work = 1u128 << node_cost(tree, node).min(120);
        let (child, other) = if best[node.left] > best[node.right]
            || (best[node.left] == best[node.right] && node.left <= node.right)
        {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        best[node.out] = best[child] + work;
        choice[node.out] = Some((i, child, other));
    }
    let final_edge = tree.nodes().last().expect("nonempty").out;
    let mut tensors = vec![final_edge];
    let mut steps = Vec::new();
    let mut node_costs = Vec::new();
    let mut branch_map = Vec::new();
    let mut cur = final_edge;
    while let Some((node_idx, child, other)) = choice[cur] {
        steps.push(node_idx);
        node_costs.push(node_cost(tree, &tree.nodes()[node_idx]));
        branch_map.push(other);
        tensors.push(child);
        cur = child;
    }
    tensors.reverse();
    steps.reverse();
    node_costs.reverse();
    branch_map.reverse();
    Ok(Stem {
        tensors,
        steps,
        node_costs,
        branch_map,
    })
}

// ---------------------------------------------------------------------------
// Lifetimes restricted to the stem
// ---------------------------------------------------------------------------

/// Contiguous interval of stem positions, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StemInterval {
    pub first: usize,
    pub last: usize,
}

impl StemInterval {
    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, pos: usize) -> bool {
        pos >= self.first && pos <= self.last
    }
}

/// Restrict lifetimes to the stem: each index maps to the contiguous
/// interval of stem positions whose tensors contain it. Indices absent from
/// the stem are dropped; non-contiguous membership is raised as an error.
pub fn restrict_lifetimes(
    tree: &ContractionTree,
    stem: &Stem,
    lifetimes: &BTreeMap<IndexId, Lifetime>,
) -> Result<BTreeMap<IndexId, StemInterval>> {
    let mut out = BTreeMap::new();
    for (idx, _lt) in lifetimes {
        let positions: Vec<usize> = stem
            .tensors
            .iter()
            .enumerate()
            .filter(|(_, &e)| tree.index_set(e).contains(idx))
            .map(|(p, _)| p)
            .collect();
        if positions.is_empty() {
            continue;
        }
        let first = positions[0];
        let last = *positions.last().expect("nonempty");
        if last - first + 1 != positions.len() {
            return Err(TnError::NonContiguousInterval(idx.0.clone()));
        }
        out.insert(idx.clone(), StemInterval { first, last });
    }
    Ok(out)
}
