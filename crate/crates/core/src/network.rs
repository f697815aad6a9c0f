//! Tensor-network data model and file formats.
//!
//! A tensor network is an undirected multigraph: vertices are tensors and
//! edges are shared indices. Edge weights are powers of two and stored as
//! log2 values. An edge with a single endpoint is open (it survives to the
//! final result); an edge with two endpoints is closed (it is contracted
//! away). Indices shared by more than two tensors are rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TnError};

/// Version tag carried by all on-disk documents.
pub const FORMAT_TAG: &str = "tn-slicer/v1";

/// Opaque index label, unique within one network.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndexId(pub String);

impl IndexId {
    pub fn new(s: impl Into<String>) -> Self {
        IndexId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for IndexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for IndexId {
    fn from(s: &str) -> Self {
        IndexId(s.to_owned())
    }
}

pub type VertexId = usize;

/// One edge of the network: its log2 size and the vertices it touches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeInfo {
    pub log2_weight: u64,
    pub endpoints: Vec<VertexId>,
}

impl EdgeInfo {
    pub fn is_open(&self) -> bool {
        self.endpoints.len() == 1
    }
}

/// One vertex (input tensor) with its incidence set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vertex {
    pub id: VertexId,
    pub indices: BTreeSet<IndexId>,
}

/// Undirected multigraph of tensors and indices.
///
/// Immutable after construction; all validation happens in [`TensorNetwork::new`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorNetwork {
    vertices: Vec<Vertex>,
    edges: BTreeMap<IndexId, EdgeInfo>,
}

impl TensorNetwork {
    /// Build a validated network from vertex incidence sets and edge weights.
    ///
    /// Endpoints are inferred from the incidence sets. Fails on empty networks,
    /// duplicate ids, indices with zero or more than two endpoints, indices
    /// referenced by no edge declaration, and weights below 1.
    pub fn new(
        vertex_indices: Vec<(VertexId, Vec<IndexId>)>,
        edge_weights: Vec<(IndexId, u64)>,
    ) -> Result<Self> {
        if vertex_indices.is_empty() {
            return Err(TnError::EmptyNetwork);
        }
        let mut edges: BTreeMap<IndexId, EdgeInfo> = BTreeMap::new();
        for (id, w) in edge_weights {
            if w < 1 {
                return Err(TnError::BadWeight(id.0, w));
            }
            if edges
                .insert(
                    id.clone(),
                    EdgeInfo {
                        log2_weight: w,
                        endpoints: Vec::new(),
                    },
                )
                .is_some()
            {
                return Err(TnError::DuplicateIndex(id.0));
            }
        }
        let mut seen_vertices = BTreeSet::new();
        let mut vertices = Vec::with_capacity(vertex_indices.len());
        for (vid, indices) in vertex_indices {
            if !seen_vertices.insert(vid) {
                return Err(TnError::DuplicateVertex(vid));
            }
            let mut set = BTreeSet::new();
            for idx in indices {
                match edges.get_mut(&idx) {
                    None => return Err(TnError::UnknownIndex(idx.0, vid)),
                    Some(info) => {
                        if !set.insert(idx.clone()) {
                            // same index twice on one tensor (a self-loop / trace leg)
                            return Err(TnError::BadEndpointCount(idx.0, 3));
                        }
                        info.endpoints.push(vid);
                    }
                }
            }
            vertices.push(Vertex { id: vid, indices: set });
        }
        for (id, info) in &edges {
            let n = info.endpoints.len();
            if n == 0 || n > 2 {
                return Err(TnError::BadEndpointCount(id.0.clone(), n));
            }
        }
        Ok(TensorNetwork { vertices, edges })
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, id: VertexId) -> Option<&Vertex> {
        self.vertices.iter().find(|v| v.id == id)
    }

    pub fn edges(&self) -> &BTreeMap<IndexId, EdgeInfo> {
        &self.edges
    }

    pub fn edge(&self, id: &IndexId) -> Option<&EdgeInfo> {
        self.edges.get(id)
    }

    pub fn log2_weight(&self, id: &IndexId) -> Result<u64> {
        self.edges
            .get(id)
            .map(|e| e.log2_weight)
            .ok_or_else(|| TnError::NoSuchIndex(id.0.clone()))
    }

    pub fn is_open(&self, id: &IndexId) -> bool {
        self.edges.get(id).map(|e| e.is_open()).unwrap_or(false)
    }

    /// Indices with exactly one endpoint, in id order.
    pub fn open_edges(&self) -> BTreeSet<IndexId> {
        self.edges
            .iter()
            .filter(|(_, info)| info.is_open())
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// True when all edge weights are 1 (every dimension has extent 2).
    pub fn unit_weights(&self) -> bool {
        self.edges.values().all(|e| e.log2_weight == 1)
    }

    pub fn is_connected(&self) -> bool {
        if self.vertices.is_empty() {
            return false;
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.vertices[0].id];
        seen.insert(self.vertices[0].id);
        while let Some(v) = stack.pop() {
            let vtx = self.vertex(v).expect("vertex ids are validated");
            for idx in &vtx.indices {
                for &u in &self.edges[idx].endpoints {
                    if seen.insert(u) {
                        stack.push(u);
                    }
                }
            }
        }
        seen.len() == self.vertices.len()
    }
}

/// SSA-style contraction order: step k contracts two live tensors and
/// produces the new tensor id `leaf_count + k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractionPath {
    pub steps: Vec<(VertexId, VertexId)>,
}

impl ContractionPath {
    pub fn new(steps: Vec<(VertexId, VertexId)>) -> Self {
        ContractionPath { steps }
    }
}

// ---------------------------------------------------------------------------
// On-disk formats
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct EdgeDoc {
    id: String,
    #[serde(default = "default_weight")]
    log2_weight: u64,
}

fn default_weight() -> u64 {
    1
}

#[derive(Debug, Serialize, Deserialize)]
struct VertexDoc {
    id: usize,
    indices: Vec<String>,
}

/// JSON document for a tensor network.
#[derive(Debug, Serialize, Deserialize)]
pub struct NetworkDoc {
    pub format: String,
    edges: Vec<EdgeDoc>,
    vertices: Vec<VertexDoc>,
}

/// JSON document for a contraction path.
#[derive(Debug, Serialize, Deserialize)]
pub struct PathDoc {
    pub format: String,
    pub ssa_path: Vec<(usize, usize)>,
}

/// Parse a network document, validating all structural invariants.
pub fn parse_network(document: &str) -> Result<TensorNetwork> {
    let doc: NetworkDoc =
        serde_json::from_str(document).map_err(|e| TnError::Parse(e.to_string()))?;
    if doc.format != FORMAT_TAG {
        return Err(TnError::BadFormat(doc.format, FORMAT_TAG.to_owned()));
    }
    let edge_weights = doc
        .edges
        .into_iter()
        .map(|e| (IndexId(e.id), e.log2_weight))
        .collect();
    let vertex_indices = doc
        .vertices
        .into_iter()
        .map(|v| (v.id, v.indices.into_iter().map(IndexId).collect()))
        .collect();
    TensorNetwork::new(vertex_indices, edge_weights)
}

/// Serialize a network back to its document form.
pub fn serialize_network(net: &TensorNetwork) -> String {
    let doc = NetworkDoc {
        format: FORMAT_TAG.to_owned(),
        edges: net
            .edges()
            .iter()
            .map(|(id, info)| EdgeDoc {
                id: id.0.clone(),
                log2_weight: info.log2_weight,
            })
            .collect(),
        vertices: net
            .vertices()
            .iter()
            .map(|v| VertexDoc {
                id: v.id,
                indices: v.indices.iter().map(|i| i.0.clone()).collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("network docs are always serializable")
}

pub fn parse_path(document: &str) -> Result<ContractionPath> {
    let doc: PathDoc =
        serde_json::from_str(document).map_err(|e| TnError::Parse(e.to_string()))?;
    if doc.format != FORMAT_TAG {
        return Err(TnError::BadFormat(doc.format, FORMAT_TAG.to_owned()));
    }
    Ok(ContractionPath::new(doc.ssa_path))
}

pub fn serialize_path(path: &ContractionPath) -> String {
    let doc = PathDoc {
        format: FORMAT_TAG.to_owned(),
        ssa_path: path.steps.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("path docs are always serializable")
}

// ---------------------------------------------------------------------------
// Test-fixture path generator
// ---------------------------------------------------------------------------

/// Produce a valid (not necessarily good) contraction path, deterministic for
/// a given seed. Greedy on the rank of the produced tensor, with seeded
/// tie-breaking. Test plumbing only; real paths are ingested from files.
pub fn greedy_test_path(net: &TensorNetwork, seed: u64) -> Result<ContractionPath> {
    use rand::Rng;
    use rand::SeedableRng;

    if !net.is_connected() {
        return Err(TnError::Disconnected);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    // live tensors: ssa id -> index set
    let mut live: BTreeMap<VertexId, BTreeSet<IndexId>> = net
        .vertices()
        .iter()
        .map(|v| (v.id, v.indices.clone()))
        .collect();
    let n_leaves = net.vertices().len();
    let mut next_id = n_leaves;
    let mut steps = Vec::with_capacity(n_leaves.saturating_sub(1));
    while live.len() > 1 {
        let ids: Vec<VertexId> = live.keys().copied().collect();
        let mut best: Option<((VertexId, VertexId), u64)> = None;
        let mut ties: Vec<(VertexId, VertexId)> = Vec::new();
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                let sa = &live[&a];
                let sb = &live[&b];
                if sa.is_disjoint(sb) {
                    continue;
                }
                let out_rank: u64 = sa
                    .symmetric_difference(sb)
                    .map(|idx| net.log2_weight(idx).expect("validated index"))
                    .sum::<u64>()
                    + sa.intersection(sb)
                        .filter(|idx| net.is_open(idx))
                        .map(|idx| net.log2_weight(idx).expect("validated index"))
                        .sum::<u64>();
                match best {
                    Some((_, r)) if out_rank > r => {}
                    Some((_, r)) if out_rank == r => ties.push((a, b)),
                    _ => {
                        best = Some(((a, b), out_rank));
                        ties.clear();
                        ties.push((a, b));
                    }
                }
            }
        }
        let (a, b) = ties[rng.gen_range(0..ties.len())];
        let sa = live.remove(&a).expect("live tensor");
        let sb = live.remove(&b).expect("live tensor");
        let out: BTreeSet<IndexId> = sa
            .symmetric_difference(&sb)
            .cloned()
            .chain(sa.intersection(&sb).filter(|i| net.is_open(i)).cloned())
            .collect();
        live.insert(next_id, out);
        steps.push((a, b));
        next_id += 1;
    }
    Ok(ContractionPath::new(steps))
}
