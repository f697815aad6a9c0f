//! Small hand-built networks used by tests, benches and docs.

use std::collections::BTreeSet;

use crate::network::{ContractionPath, IndexId, TensorNetwork};

pub fn idx(s: &str) -> IndexId {
    IndexId::from(s)
}

pub fn idx_set(names: &[&str]) -> BTreeSet<IndexId> {
    names.iter().map(|s| IndexId::from(*s)).collect()
}

fn unit_net(vertices: Vec<(usize, Vec<&str>)>, edges: Vec<&str>) -> TensorNetwork {
    TensorNetwork::new(
        vertices
            .into_iter()
            .map(|(id, ix)| (id, ix.into_iter().map(IndexId::from).collect()))
            .collect(),
        edges.into_iter().map(|e| (IndexId::from(e), 1)).collect(),
    )
    .expect("fixture networks are valid")
}

/// Smallest matmul network: {v0:[a,b], v1:[b,c]}, open a and c.
pub fn matmul() -> (TensorNetwork, ContractionPath) {
    let net = unit_net(
        vec![(0, vec!["a", "b"]), (1, vec!["b", "c"])],
        vec!["a", "b", "c"],
    );
    (net, ContractionPath::new(vec![(0, 1)]))
}

/// Closed 4-tensor chain T0[a,b] T1[b,c] T2[c,d] T3[d,a]; root is a scalar.
pub fn closed_chain4() -> (TensorNetwork, ContractionPath) {
    let net = unit_net(
        vec![
            (0, vec!["a", "b"]),
            (1, vec!["b", "c"]),
            (2, vec!["c", "d"]),
            (3, vec!["d", "a"]),
        ],
        vec!["a", "b", "c", "d"],
    );
    (net, ContractionPath::new(vec![(0, 1), (2, 3), (4, 5)]))
}

/// Eight tensors over indices a..j whose contraction order reproduces the
/// intermediate list [f,h,j]x[c,e,f] -> [c,e,h,j] -> [b,e,h,j] -> [a,e,h,j]
/// -> [d,h,j]. Open edges: d, h, j. Index e touches four contractions.
pub fn grid8() -> (TensorNetwork, ContractionPath) {
    let net = unit_net(
        vec![
            (0, vec!["c", "e", "f"]),
            (1, vec!["b", "c"]),
            (2, vec!["a", "b"]),
            (3, vec!["a", "d", "e"]),
            (4, vec!["f", "g"]),
            (5, vec!["g", "h"]),
            (6, vec!["i", "j"]),
            (7, vec!["i"]),
        ],
        vec!["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"],
    );
    let path = ContractionPath::new(vec![
        (4, 5),  // -> 8  [f,h]
        (6, 7),  // -> 9  [j]
        (8, 9),  // -> 10 [f,h,j]
        (10, 0), // -> 11 [c,e,h,j]
        (11, 1), // -> 12 [b,e,h,j]
        (12, 2), // -> 13 [a,e,h,j]
        (13, 3), // -> 14 [d,h,j]
    ]);
    (net, path)
}

/// Caterpillar chain whose stem has five contraction steps. Lifetimes on the
/// stem: `a` spans steps 1-3, `b` spans 3-5, `c` spans 2-4. With target
/// rank 2, both {a,b} and {c} are valid slicing sets with per-step cost
/// multiples {2,2,1,2,2} and {2,1,1,1,2} respectively.
pub fn chain5() -> (TensorNetwork, ContractionPath) {
    let net = unit_net(
        vec![
            (0, vec!["z"]),
            (1, vec!["a"]),
            (2, vec!["c"]),
            (3, vec!["a", "b"]),
            (4, vec!["c"]),
            (5, vec!["b"]),
        ],
        vec!["z", "a", "b", "c"],
    );
    // absorb the branch leaves in order along the stem
    let path = ContractionPath::new(vec![(0, 1), (6, 2), (7, 3), (8, 4), (9, 5)]);
    (net, path)
}

/// Caterpillar stem of eleven tensors M0..M10 (ten steps) with two rank-4
/// peaks at M3 and M8 while every other stem tensor has rank <= 3. At target
/// rank 3 a valid slicing set must cover both peaks: M3 through `a` or `x`,
/// M8 through `b` or `y`. The finder's tie-breaks pick the short-lived pair
/// {a,b}; the optimum is the long-lived pair {x,y}, but both single swaps
/// {x,b} and {a,y} cost strictly more than {a,b}, so a greedy walk is stuck
/// and only an uphill (annealed) move reaches the optimum.
pub fn planted_local_min() -> (TensorNetwork, ContractionPath) {
    // index lifetimes on the stem (tensor intervals): a [3,6], b [8,10],
    // x [1,4], y [5,8]; carriers k00 [3,5], k01 [2,3], k02 [8,10],
    // k03 [8,9], k04 [10,10], k05 [0,1] shape node weights and pad the two
    // peak tensors to rank 4. b, k02 and k04 stay open.
    let net = unit_net(
        vec![
            (0, vec!["k05"]),
            (1, vec!["x"]),
            (2, vec!["k01", "k05"]),
            (3, vec!["a", "k00"]),
            (4, vec!["k01"]),
            (5, vec!["x", "y"]),
            (6, vec!["k00"]),
            (7, vec!["a"]),
            (8, vec!["b", "k02", "k03"]),
            (9, vec!["y"]),
            (10, vec!["k03", "k04"]),
        ],
        vec![
            "a", "b", "x", "y", "k00", "k01", "k02", "k03", "k04", "k05",
        ],
    );
    let mut steps = vec![(0, 1)];
    for k in 1..10 {
        steps.push((10 + k, k + 1));
    }
    (net, ContractionPath::new(steps))
}

/// Target rank that makes [`planted_local_min`] interesting.
pub const PLANTED_TARGET_RANK: u64 = 3;

/// Stem of five steps where five indices span the whole stem and the widest
/// tensor has rank 8: every stem tensor holds the five spanning indices.
/// With scratchpad capacity 3, one fused group with five secondary slices
/// covers the stem at resident rank 3.
pub fn fusion_span5() -> (TensorNetwork, ContractionPath) {
    // spanning indices p..t run from the first stem tensor to the root (kept
    // open so they are never contracted); each step absorbs a small branch
    // leaf through private closed indices, keeping every stem rank <= 8.
    let net = unit_net(
        vec![
            (0, vec!["p", "q", "r", "s", "t", "x1", "x2", "x3"]),
            (1, vec!["x1"]),
            (2, vec!["x2", "y1", "y2"]),
            (3, vec!["x3", "y3"]),
            (4, vec!["y1", "y2"]),
            (5, vec!["y3"]),
        ],
        vec![
            "p", "q", "r", "s", "t", "x1", "x2", "x3", "y1", "y2", "y3",
        ],
    );
    let path = ContractionPath::new(vec![(0, 1), (6, 2), (7, 3), (8, 4), (9, 5)]);
    (net, path)
}
