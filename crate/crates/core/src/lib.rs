//! Contraction planning for tensor networks: per-index lifetime analysis,
//! lifetime-guided slice finding, simulated-annealing refinement, fused
//! kernel planning for two-level memories, and a dense reference executor
//! that serves as the ground-truth oracle for every cost claim.

pub mod baselines;
pub mod cost;
pub mod error;
pub mod exec;
pub mod fixtures;
pub mod fusion;
pub mod lifetime;
pub mod network;
pub mod refine;
pub mod slicing;
pub mod tree;

pub use cost::{
    advise_strategy, overhead, sliced_cost, tree_cost, CostReport, MemoryLevel, MemoryLevelModel,
    Provenance, SliceSet, Strategy, StrategyAdvice,
};
pub use error::{Result, TnError};
pub use exec::{
    contract_full, contract_sliced, execute_fused, random_inputs, DenseTensor, FlopCounter,
    TransferLedger, DEFAULT_GUARD_LOG2,
};
pub use fusion::{plan_fusion, plan_permutation, FusedGroup, FusedPlan, PermutationPlan};
pub use lifetime::{all_lifetimes, extract_stem, lifetime_of, restrict_lifetimes, Lifetime, Stem};
pub use network::{
    parse_network, parse_path, serialize_network, serialize_path, ContractionPath, IndexId,
    TensorNetwork, VertexId, FORMAT_TAG,
};
pub use refine::{refine, refine_chains, AnnealConfig};
pub use slicing::{find_slices, FinderPool};
pub use tree::{build_tree, ContractionTree, TreeEdgeId, TreeNode};
