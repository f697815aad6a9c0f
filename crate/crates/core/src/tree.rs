//! Contraction trees built from a network and an SSA contraction path.
//!
//! Tree edges denote tensors (leaves are the network's input tensors,
//! internal edges are intermediates, and a synthetic root edge marks the
//! final result). Nodes are contractions expressed as (left, right, out)
//! triplets over tree-edge ids. A trailing pseudo-node of cost zero links
//! the last intermediate to the root edge, mirroring the extra contraction
//! that closes the tree.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Result, TnError};
use crate::network::{ContractionPath, IndexId, TensorNetwork, VertexId};

pub type TreeEdgeId = usize;

/// One pairwise contraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeNode {
    pub left: TreeEdgeId,
    pub right: TreeEdgeId,
    pub out: TreeEdgeId,
}

/// Rooted binary contraction tree.
#[derive(Debug, Clone)]
pub struct ContractionTree {
    /// Index set per tree edge. Leaves occupy `0..leaf_count`, intermediates
    /// follow in contraction order, and the last entry is the root edge.
    index_sets: Vec<BTreeSet<IndexId>>,
    nodes: Vec<TreeNode>,
    leaf_count: usize,
    /// Maps leaf tree-edge ids to the network vertex they read.
    leaf_vertices: Vec<VertexId>,
    root: TreeEdgeId,
    /// log2 weight per index, copied from the network at build time.
    weights: BTreeMap<IndexId, u64>,
    open: BTreeSet<IndexId>,
}

impl ContractionTree {
    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> TreeEdgeId {
        self.root
    }

    pub fn edge_count(&self) -> usize {
        self.index_sets.len()
    }

    pub fn index_set(&self, e: TreeEdgeId) -> &BTreeSet<IndexId> {
        &self.index_sets[e]
    }

    pub fn is_leaf(&self, e: TreeEdgeId) -> bool {
        e < self.leaf_count
    }

    pub fn leaf_vertex(&self, e: TreeEdgeId) -> Option<VertexId> {
        self.leaf_vertices.get(e).copied()
    }

    pub fn log2_weight(&self, id: &IndexId) -> u64 {
        self.weights[id]
    }

    pub fn weights(&self) -> &BTreeMap<IndexId, u64> {
        &self.weights
    }

    pub fn is_open(&self, id: &IndexId) -> bool {
        self.open.contains(id)
    }

    pub fn open_edges(&self) -> &BTreeSet<IndexId> {
        &self.open
    }

    /// All index ids appearing anywhere in the tree, in id order.
    pub fn all_indices(&self) -> BTreeSet<IndexId> {
        self.weights.keys().cloned().collect()
    }

    /// Rank of a tree edge: the summed log2 weight of its index set.
    pub fn rank(&self, e: TreeEdgeId) -> u64 {
        self.index_sets[e].iter().map(|i| self.weights[i]).sum()
    }

    /// The node that consumes tree edge `e` as a child, if any.
    pub fn consumer(&self, e: TreeEdgeId) -> Option<&TreeNode> {
        self.nodes.iter().find(|n| n.left == e || n.right == e)
    }

    /// The node that produced tree edge `e`, if it is an intermediate.
    pub fn producer(&self, e: TreeEdgeId) -> Option<&TreeNode> {
        self.nodes.iter().find(|n| n.out == e)
    }
}

/// Build a contraction tree from a validated path.
///
/// Index sets are computed bottom-up: the output of each node is the
/// symmetric difference of its children, plus any open index present in
/// both (kept until the root). The root edge carries the network's open
/// edges. Fails if the path references unknown or consumed tensors, has
/// the wrong length, or leaves components unmerged.
pub fn build_tree(net: &TensorNetwork, path: &ContractionPath) -> Result<ContractionTree> {
    let leaves = net.vertices();
    let n = leaves.len();
    let want = n.saturating_sub(1);
    if path.steps.len() != want {
        return Err(TnError::BadPathLength {
            got: path.steps.len(),
            want,
        });
    }

    // SSA ids: network vertex ids may be arbitrary but by convention are
    // 0..n-1 in path files; map them onto leaf tree edges by position.
    let mut vertex_to_edge: BTreeMap<VertexId, TreeEdgeId> = BTreeMap::new();
    let mut index_sets: Vec<BTreeSet<IndexId>> = Vec::with_capacity(2 * n);
    let mut leaf_vertices = Vec::with_capacity(n);
    for (i, v) in leaves.iter().enumerate() {
        vertex_to_edge.insert(v.id, i);
        index_sets.push(v.indices.clone());
        leaf_vertices.push(v.id);
    }

    let mut live: BTreeMap<VertexId, TreeEdgeId> = vertex_to_edge.clone();
    let mut nodes = Vec::with_capacity(n);
    let mut next_ssa = n;
    for (step, &(a, b)) in path.steps.iter().enumerate() {
        let ea = live
            .remove(&a)
            .ok_or(TnError::BadPathVertex { step, vertex: a })?;
        let eb = match live.remove(&b) {
            Some(e) => e,
            None => {
                // restore `a` so later errors stay accurate in tests
                live.insert(a, ea);
                return Err(TnError::BadPathVertex { step, vertex: b });
            }
        };
        let sa = &index_sets[ea];
        let sb = &index_sets[eb];
        let out: BTreeSet<IndexId> = sa
            .symmetric_difference(sb)
            .cloned()
            .chain(sa.intersection(sb).filter(|i| net.is_open(i)).cloned())
            .collect();
        let out_edge = index_sets.len();
        index_sets.push(out);
        nodes.push(TreeNode {
            left: ea,
            right: eb,
            out: out_edge,
        });
        live.insert(next_ssa, out_edge);
        next_ssa += 1;
    }
    if live.len() != 1 {
        return Err(TnError::UnmergedComponents(live.len()));
    }
    let final_edge = *live.values().next().expect("one live tensor remains");
    if index_sets[final_edge] != net.open_edges() {
        // can only happen on malformed input; the bottom-up rule guarantees it
        return Err(TnError::Invalid(
            "final tensor does not match the network's open edges".to_owned(),
        ));
    }
    // synthetic root edge: same index set as the final tensor
    let root = index_sets.len();
    index_sets.push(index_sets[final_edge].clone());

    let tree = ContractionTree {
        index_sets,
        nodes,
        leaf_count: n,
        leaf_vertices,
        root,
        weights: net
            .edges()
            .iter()
            .map(|(id, info)| (id.clone(), info.log2_weight))
            .collect(),
        open: net.open_edges(),
    };
    check_conservation(&tree)?;
    Ok(tree)
}

/// Assert the conservation invariant at every node: each index appears in
/// the incident tree edges of a node as {left, out}, {right, out},
/// {left, right} (contracted here), {left, right, out} (open index held
/// through), or not at all.
pub fn check_conservation(tree: &ContractionTree) -> Result<()> {
    for node in tree.nodes() {
        let l = tree.index_set(node.left);
        let r = tree.index_set(node.right);
        let o = tree.index_set(node.out);
        let union: BTreeSet<&IndexId> = l.iter().chain(r.iter()).chain(o.iter()).collect();
        for idx in union {
            let pat = (l.contains(idx), r.contains(idx), o.contains(idx));
            let ok = match pat {
                (true, false, true) | (false, true, true) | (true, true, false) => true,
                (true, true, true) => tree.is_open(idx),
                _ => false,
            };
            if !ok {
                return Err(TnError::Invalid(format!(
                    "conservation violated for index `{idx}` at node producing edge {}",
                    node.out
                )));
            }
        }
    }
    Ok(())
}
