//! `tn-slicer`: contraction-planning toolkit CLI.
//!
//! Reads tensor-network and contraction-path documents (JSON, format tag
//! `tn-slicer/v1`), dispatches to the planning library and writes JSON
//! reports. Reports are deterministic: no timestamps unless `--timestamps`,
//! seeds echoed, input files hashed for provenance.
//!
//! Exit codes: 0 success, 2 validation error, 3 infeasible plan.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use tn_slicer_core::baselines::{
    exhaustive_slicer, greedy_slicer, random_network, residual_peak, theorem1_audit,
};
use tn_slicer_core::cost::{flop_ratio, overhead, sliced_cost, tree_cost, Provenance, SliceSet};
use tn_slicer_core::error::TnError;
use tn_slicer_core::exec::{
    contract_full, contract_sliced, execute_fused, random_inputs, DEFAULT_GUARD_LOG2,
};
use tn_slicer_core::fusion::{plan_fusion, DEFAULT_SCRATCHPAD_RANK};
use tn_slicer_core::lifetime::{
    all_lifetimes, extract_stem, restrict_lifetimes, Endpoint, Stem, StemInterval,
};
use tn_slicer_core::network::{
    greedy_test_path, parse_network, parse_path, ContractionPath, IndexId, TensorNetwork,
    FORMAT_TAG,
};
use tn_slicer_core::refine::{refine_chains, AnnealConfig};
use tn_slicer_core::slicing::{find_slices, FinderPool};
use tn_slicer_core::tree::{build_tree, ContractionTree};

#[derive(Parser)]
#[command(name = "tn-slicer", version, about = "Tensor-network contraction planning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eq. 1 time/memory cost of a contraction tree.
    Cost(IoArgs),
    /// Per-index lifetimes (tree-edge paths with endpoints).
    Lifetimes(IoArgs),
    /// Extract the stem and the stem-restricted lifetime intervals.
    Stem(IoArgs),
    /// Run the lifetime-based slice finder (Alg. 1).
    Slice(SliceArgs),
    /// Refine a found slice set by simulated annealing (Alg. 2).
    Refine(RefineArgs),
    /// Plan fused kernel groups over the stem.
    Fuse(FuseArgs),
    /// Execute the tree on seeded random inputs with flop instrumentation.
    Exec(ExecArgs),
    /// Landscape audits over seeded random instances.
    Audit(AuditArgs),
    /// Slicer-quality comparisons over seeded random instances.
    Bench(BenchArgs),
}

#[derive(Args)]
struct IoArgs {
    /// Network document (JSON, tn-slicer/v1).
    #[arg(long)]
    net: PathBuf,
    /// Contraction path document (JSON, tn-slicer/v1).
    #[arg(long)]
    path: PathBuf,
    /// Report destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include a generation timestamp in the report.
    #[arg(long)]
    timestamps: bool,
    /// Rayon worker threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum PoolArg {
    Local,
    Global,
}

impl From<PoolArg> for FinderPool {
    fn from(p: PoolArg) -> Self {
        match p {
            PoolArg::Local => FinderPool::Local,
            PoolArg::Global => FinderPool::Global,
        }
    }
}

#[derive(Args)]
struct SliceArgs {
    #[command(flatten)]
    io: IoArgs,
    /// Target residual rank t.
    #[arg(long)]
    target: u64,
    /// Candidate pool: indices of the retained tensor, or the whole live stem.
    #[arg(long, value_enum, default_value_t = PoolArg::Local)]
    finder_pool: PoolArg,
}

#[derive(Args)]
struct RefineArgs {
    #[command(flatten)]
    io: IoArgs,
    /// Target residual rank t.
    #[arg(long)]
    target: u64,
    #[arg(long, value_enum, default_value_t = PoolArg::Local)]
    finder_pool: PoolArg,
    /// Initial annealing temperature.
    #[arg(long, default_value_t = 1.0)]
    t_initial: f64,
    /// Geometric cooling factor per outer iteration.
    #[arg(long, default_value_t = 0.95)]
    alpha: f64,
    /// Final temperature.
    #[arg(long, default_value_t = 1e-3)]
    t_final: f64,
    /// RNG seed (echoed in the report).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Outer iteration budget.
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
    /// Independent annealing chains (consecutive seeds, best kept).
    #[arg(long, default_value_t = 1)]
    chains: usize,
}

#[derive(Args)]
struct FuseArgs {
    #[command(flatten)]
    io: IoArgs,
    /// Scratchpad rank capacity.
    #[arg(long, default_value_t = DEFAULT_SCRATCHPAD_RANK)]
    capacity: u64,
    /// Also run the fused executor on seeded random inputs and report the
    /// transfer ledger plus the deviation from the unfused result.
    #[arg(long)]
    execute: bool,
    /// Seed for the random leaf tensors when `--execute` is set.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExecArgs {
    #[command(flatten)]
    io: IoArgs,
    /// Seed for the random leaf tensors (echoed in the report).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Slice these indices (comma separated) before executing.
    #[arg(long, value_delimiter = ',')]
    slices: Vec<String>,
    /// Find a slice set for this target rank, then execute it.
    #[arg(long, conflicts_with = "slices")]
    target: Option<u64>,
    /// Check measured flops and outputs against the cost-model predictions.
    #[arg(long)]
    verify: bool,
}

#[derive(Args)]
struct AuditArgs {
    #[command(subcommand)]
    what: AuditCommand,
}

#[derive(Subcommand)]
enum AuditCommand {
    /// Exhaustive-landscape audit of the Theorem 1 monotonicity property.
    Theorem1(InstanceArgs),
}

#[derive(Args)]
struct BenchArgs {
    #[command(subcommand)]
    what: BenchCommand,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Compare finder+refiner against the greedy baseline slicer.
    Slicers(SlicerBenchArgs),
}

#[derive(Args)]
struct InstanceArgs {
    /// Number of random instances.
    #[arg(long, default_value_t = 50)]
    instances: u64,
    /// Base RNG seed; instance i uses seed + i (echoed in the report).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Vertices per random network.
    #[arg(long, default_value_t = 8)]
    vertices: usize,
    /// Extra (cycle-forming) edges beyond the spanning tree.
    #[arg(long, default_value_t = 3)]
    extra_edges: usize,
    /// Open indices per network.
    #[arg(long, default_value_t = 2)]
    open: usize,
    /// Target rank = stem peak rank minus this drop (min 1).
    #[arg(long, default_value_t = 1)]
    target_drop: u64,
    /// Reject instances with more candidate indices than this.
    #[arg(long, default_value_t = 12)]
    max_pool: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    timestamps: bool,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct SlicerBenchArgs {
    #[command(flatten)]
    inst: InstanceArgs,
    /// Also write per-instance rows as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tn-slicer: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Tn(#[from] TnError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// 2 = validation error, 3 = infeasible plan.
fn exit_code(e: &CliError) -> u8 {
    let CliError::Tn(e) = e else { return 2 };
    match e {
        TnError::TargetInfeasible(_)
        | TnError::PoolExhausted
        | TnError::PoolTooLarge { .. }
        | TnError::GuardTripped { .. }
        | TnError::StepCannotFit { .. }
        | TnError::CapacityExceeded { .. }
        | TnError::ConstraintViolated { .. } => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Cost(a) => cmd_cost(a),
        Command::Lifetimes(a) => cmd_lifetimes(a),
        Command::Stem(a) => cmd_stem(a),
        Command::Slice(a) => cmd_slice(a),
        Command::Refine(a) => cmd_refine(a),
        Command::Fuse(a) => cmd_fuse(a),
        Command::Exec(a) => cmd_exec(a),
        Command::Audit(a) => match a.what {
            AuditCommand::Theorem1(i) => cmd_audit_theorem1(i),
        },
        Command::Bench(a) => match a.what {
            BenchCommand::Slicers(s) => cmd_bench_slicers(s),
        },
    }
}

// ---------------------------------------------------------------------------
// plumbing

fn read_file(path: &Path) -> Result<(String, String), CliError> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let hash: String = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    let text = String::from_utf8(bytes)
        .map_err(|e| CliError::Tn(TnError::Parse(format!("{}: {e}", path.display()))))?;
    Ok((text, hash))
}

struct Loaded {
    net: TensorNetwork,
    path: ContractionPath,
    tree: ContractionTree,
    inputs: Value,
}

fn load(io: &IoArgs) -> Result<Loaded, CliError> {
    init_workers(io.workers);
    let (net_text, net_hash) = read_file(&io.net)?;
    let (path_text, path_hash) = read_file(&io.path)?;
    let net = parse_network(&net_text)?;
    let path = parse_path(&path_text)?;
    let tree = build_tree(&net, &path)?;
    let inputs = json!({
        "net": { "file": io.net.display().to_string(), "sha256": net_hash },
        "path": { "file": io.path.display().to_string(), "sha256": path_hash },
    });
    Ok(Loaded {
        net,
        path,
        tree,
        inputs,
    })
}

fn init_workers(workers: usize) {
    // Ignore the error: the global pool can only be initialized once, which
    // matters only under `cargo test` where several commands share a process.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build_global();
}

fn guard_limit_log2() -> Result<f64, CliError> {
    match std::env::var("TN_SLICER_MAX_FLOPS") {
        Err(_) => Ok(DEFAULT_GUARD_LOG2),
        Ok(v) => {
            let flops: f64 = v.trim().parse().map_err(|_| {
                CliError::Tn(TnError::BadConfig(format!(
                    "TN_SLICER_MAX_FLOPS must be a flop count, got {v:?}"
                )))
            })?;
            if flops <= 0.0 {
                return Err(CliError::Tn(TnError::BadConfig(
                    "TN_SLICER_MAX_FLOPS must be positive".into(),
                )));
            }
            Ok(flops.log2())
        }
    }
}

fn envelope(
    command: &str,
    inputs: Value,
    seed: Option<u64>,
    timestamps: bool,
    report: Value,
) -> Value {
    let mut doc = json!({
        "format": FORMAT_TAG,
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "inputs": inputs,
        "report": report,
    });
    let map = doc.as_object_mut().expect("envelope is an object");
    if let Some(s) = seed {
        map.insert("seed".into(), json!(s));
    }
    if timestamps {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        map.insert("generated_at_unix".into(), json!(now));
    }
    doc
}

fn emit(out: &Option<PathBuf>, doc: &Value) -> Result<(), CliError> {
    let text = format!("{}\n", serde_json::to_string_pretty(doc).expect("valid JSON"));
    match out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        }),
    }
}

fn slice_set_json(tree: &ContractionTree, s: &SliceSet) -> Result<Value, CliError> {
    let provenance = match s.provenance {
        Provenance::Finder => "finder",
        Provenance::Refiner => "refiner",
        Provenance::Manual => "manual",
    };
    Ok(json!({
        "target_rank": s.target_rank,
        "indices": s.indices().iter().map(|i| i.as_str()).collect::<Vec<_>>(),
        "overhead": overhead(tree, s)?,
        "provenance": provenance,
        "residual_peak": residual_peak(tree, s),
    }))
}

fn stem_pipeline(
    tree: &ContractionTree,
) -> Result<(Stem, BTreeMap<IndexId, StemInterval>), CliError> {
    let stem = extract_stem(tree)?;
    let lifetimes = all_lifetimes(tree)?;
    let intervals = restrict_lifetimes(tree, &stem, &lifetimes)?;
    Ok((stem, intervals))
}

// ---------------------------------------------------------------------------
// commands

fn cmd_cost(io: IoArgs) -> Result<(), CliError> {
    let l = load(&io)?;
    let cost = tree_cost(&l.tree);
    let report = json!({
        "log2_flops": cost.log2_time_total,
        "log2_peak_rank": cost.log2_memory_peak,
        "overhead": 1.0,
        "per_node_log2": cost.per_node_log2,
        "total_flops": cost.total_flops.to_string(),
        "steps": l.path.steps.len(),
    });
    emit(&io.out, &envelope("cost", l.inputs, None, io.timestamps, report))
}

fn cmd_lifetimes(io: IoArgs) -> Result<(), CliError> {
    let l = load(&io)?;
    let lifetimes = all_lifetimes(&l.tree)?;
    let endpoint = |e: &Endpoint| match e {
        Endpoint::Leaf => "leaf",
        Endpoint::Root => "root",
    };
    let rows: Vec<Value> = lifetimes
        .values()
        .map(|lt| {
            json!({
                "index": lt.index.as_str(),
                "tree_edges": lt.tree_edges,
                "endpoints": [endpoint(&lt.endpoints.0), endpoint(&lt.endpoints.1)],
                "open": l.net.is_open(&lt.index),
            })
        })
        .collect();
    let report = json!({ "lifetimes": rows });
    emit(&io.out, &envelope("lifetimes", l.inputs, None, io.timestamps, report))
}

fn cmd_stem(io: IoArgs) -> Result<(), CliError> {
    let l = load(&io)?;
    let (stem, intervals) = stem_pipeline(&l.tree)?;
    let ivs: BTreeMap<&str, Value> = intervals
        .iter()
        .map(|(idx, iv)| (idx.as_str(), json!({ "first": iv.first, "last": iv.last })))
        .collect();
    let report = json!({
        "tensors": stem.tensors,
        "steps": stem.steps,
        "node_costs_log2": stem.node_costs,
        "branch_tensors": stem.branch_map,
        "peak_rank": stem.tensors.iter().map(|&e| l.tree.rank(e)).max().unwrap_or(0),
        "intervals": ivs,
    });
    emit(&io.out, &envelope("stem", l.inputs, None, io.timestamps, report))
}

fn cmd_slice(a: SliceArgs) -> Result<(), CliError> {
    let l = load(&a.io)?;
    let (stem, intervals) = stem_pipeline(&l.tree)?;
    let found = find_slices(&l.tree, &stem, &intervals, a.target, a.finder_pool.into())?;
    let report = json!({
        "slice_set": slice_set_json(&l.tree, &found)?,
        "log2_flops_sliced": sliced_cost(&l.tree, &found)?.log2_time_total,
        "subtasks": 1u64 << found.len(),
    });
    emit(&a.io.out, &envelope("slice", l.inputs, None, a.io.timestamps, report))
}

fn cmd_refine(a: RefineArgs) -> Result<(), CliError> {
    let l = load(&a.io)?;
    let (stem, intervals) = stem_pipeline(&l.tree)?;
    let found = find_slices(&l.tree, &stem, &intervals, a.target, a.finder_pool.into())?;
    let cfg = AnnealConfig {
        t_initial: a.t_initial,
        t_final: a.t_final,
        alpha: a.alpha,
        seed: a.seed,
        max_outer_iters: a.max_iters,
    };
    cfg.validate()?;
    let refined = refine_chains(&l.tree, &stem, &intervals, &found, a.target, &cfg, a.chains)?;
    let report = json!({
        "initial": slice_set_json(&l.tree, &found)?,
        "refined": slice_set_json(&l.tree, &refined)?,
        "chains": a.chains,
        "anneal": {
            "t_initial": cfg.t_initial,
            "t_final": cfg.t_final,
            "alpha": cfg.alpha,
            "max_outer_iters": cfg.max_outer_iters,
        },
    });
    emit(
        &a.io.out,
        &envelope("refine", l.inputs, Some(a.seed), a.io.timestamps, report),
    )
}

fn cmd_fuse(a: FuseArgs) -> Result<(), CliError> {
    let l = load(&a.io)?;
    let (stem, intervals) = stem_pipeline(&l.tree)?;
    let plan = plan_fusion(&l.tree, &stem, &intervals, a.capacity)?;
    let groups: Vec<Value> = plan
        .groups
        .iter()
        .map(|g| {
            json!({
                "first_step": g.first_step,
                "last_step": g.last_step,
                "secondary_slices": g.secondary_slices.iter().map(|i| i.as_str()).collect::<Vec<_>>(),
                "resident_rank": g.resident_rank,
                "subtasks": g.subtask_count(),
                "transfers_in": g.transfers_in,
                "transfers_out": g.transfers_out,
            })
        })
        .collect();
    let mut report = json!({
        "capacity": plan.capacity,
        "groups": groups,
        "dma_saved": plan.dma_saved,
        "stem_steps": stem.steps.len(),
    });
    let seed = if a.execute {
        let limit = guard_limit_log2()?;
        let inputs = random_inputs(&l.net, a.seed);
        let (full, _) = contract_full(&l.tree, &inputs, limit)?;
        let (fused, ledger, _) = execute_fused(&l.tree, &stem, &plan, &inputs, limit)?;
        let map = report.as_object_mut().expect("report is an object");
        map.insert(
            "execution".into(),
            json!({
                "boundary_transfers": ledger.boundary_transfers(),
                "total_transfers": ledger.total_transfers(),
                "max_rel_err": full.max_rel_err(&fused)?,
            }),
        );
        Some(a.seed)
    } else {
        None
    };
    emit(&a.io.out, &envelope("fuse", l.inputs, seed, a.io.timestamps, report))
}

fn cmd_exec(a: ExecArgs) -> Result<(), CliError> {
    let l = load(&a.io)?;
    let limit = guard_limit_log2()?;
    let inputs = random_inputs(&l.net, a.seed);
    let (full, full_counter) = contract_full(&l.tree, &inputs, limit)?;

    let slice_set = if let Some(t) = a.target {
        let (stem, intervals) = stem_pipeline(&l.tree)?;
        find_slices(&l.tree, &stem, &intervals, t, FinderPool::Local)?
    } else {
        let ids: Vec<IndexId> = a.slices.iter().map(|s| IndexId::new(s.clone())).collect();
        let mut s = SliceSet::new(ids, 0, Provenance::Manual);
        s.target_rank = residual_peak(&l.tree, &s);
        s
    };

    let (sliced, sliced_counter) = contract_sliced(&l.tree, &slice_set, &inputs, limit)?;
    let max_rel_err = full.max_rel_err(&sliced)?;
    let predicted_full = tree_cost(&l.tree).total_flops;
    let predicted_sliced = sliced_cost(&l.tree, &slice_set)?.total_flops;
    let overhead_predicted = overhead(&l.tree, &slice_set)?;
    let overhead_measured = flop_ratio(&sliced_counter.total(), &full_counter.total());
    let flops_exact = full_counter.total() == predicted_full
        && sliced_counter.total() == predicted_sliced;
    let verified = flops_exact && overhead_measured == overhead_predicted && max_rel_err <= 1e-10;
    if a.verify {
        println!(
            "overhead_measured == overhead_predicted: {}",
            overhead_measured == overhead_predicted
        );
    }
    let report = json!({
        "slice_set": slice_set_json(&l.tree, &slice_set)?,
        "measured_flops_full": full_counter.total().to_string(),
        "measured_flops_sliced": sliced_counter.total().to_string(),
        "predicted_flops_full": predicted_full.to_string(),
        "predicted_flops_sliced": predicted_sliced.to_string(),
        "overhead_measured": overhead_measured,
        "overhead_predicted": overhead_predicted,
        "max_rel_err": max_rel_err,
        "verified": verified,
        "guard_limit_log2": limit,
    });
    emit(
        &a.io.out,
        &envelope("exec", l.inputs, Some(a.seed), a.io.timestamps, report),
    )
}

/// Shared instance loop for audit/bench: seeded random networks with greedy
/// test paths and a target a fixed drop below the stem peak.
fn instances(
    a: &InstanceArgs,
) -> impl Iterator<Item = (u64, ContractionTree, u64)> + '_ {
    (0..a.instances).map(move |i| {
        let seed = a.seed + i;
        let net = random_network(seed, a.vertices, a.extra_edges, a.open);
        let path = greedy_test_path(&net, seed).expect("random networks are connected");
        let tree = build_tree(&net, &path).expect("greedy paths are valid");
        let stem = extract_stem(&tree).expect("non-empty trees have a stem");
        let peak = stem.tensors.iter().map(|&e| tree.rank(e)).max().unwrap_or(1);
        let t = peak.saturating_sub(a.target_drop).max(1);
        (seed, tree, t)
    })
}

fn cmd_audit_theorem1(a: InstanceArgs) -> Result<(), CliError> {
    init_workers(a.workers);
    let mut audited = 0u64;
    let mut skipped = 0u64;
    let mut counterexamples: Vec<Value> = Vec::new();
    for (seed, tree, t) in instances(&a) {
        let (_, landscape) = match exhaustive_slicer(&tree, t, a.max_pool) {
            Ok(r) => r,
            Err(TnError::PoolTooLarge { .. }) | Err(TnError::TargetInfeasible(_)) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        audited += 1;
        if let Some(cx) = theorem1_audit(&landscape) {
            counterexamples.push(json!({
                "instance_seed": seed,
                "set": cx.set.iter().map(|i| i.as_str()).collect::<Vec<_>>(),
                "overhead": cx.overhead,
                "best_smaller_overhead": cx.best_smaller_overhead,
            }));
        }
    }
    let report = json!({
        "instances_requested": a.instances,
        "instances_audited": audited,
        "instances_skipped": skipped,
        "counterexamples": counterexamples,
        "holds": counterexamples.is_empty(),
    });
    let inputs = json!({
        "generator": {
            "vertices": a.vertices,
            "extra_edges": a.extra_edges,
            "open": a.open,
            "target_drop": a.target_drop,
            "max_pool": a.max_pool,
        }
    });
    emit(
        &a.out,
        &envelope("audit theorem1", inputs, Some(a.seed), a.timestamps, report),
    )
}

fn cmd_bench_slicers(b: SlicerBenchArgs) -> Result<(), CliError> {
    let a = &b.inst;
    init_workers(a.workers);
    let cfg = AnnealConfig::default();
    let mut rows: Vec<Value> = Vec::new();
    let mut csv = String::from(
        "seed,target,overhead_finder,overhead_refined,overhead_greedy,len_refined,len_greedy\n",
    );
    let mut refined_le = 0u64;
    let mut size_le = 0u64;
    let mut total = 0u64;
    for (seed, tree, t) in instances(a) {
        let stem = extract_stem(&tree)?;
        let lifetimes = all_lifetimes(&tree)?;
        let intervals = restrict_lifetimes(&tree, &stem, &lifetimes)?;
        let found = match find_slices(&tree, &stem, &intervals, t, FinderPool::Local) {
            Ok(s) => s,
            Err(TnError::TargetInfeasible(_)) | Err(TnError::PoolExhausted) => continue,
            Err(e) => return Err(e.into()),
        };
        let refined = refine_chains(&tree, &stem, &intervals, &found, t, &cfg, 1)?;
        let greedy = match greedy_slicer(&tree, t) {
            Ok(s) => s,
            Err(TnError::PoolExhausted) => continue,
            Err(e) => return Err(e.into()),
        };
        let oh_f = overhead(&tree, &found)?;
        let oh_r = overhead(&tree, &refined)?;
        let oh_g = overhead(&tree, &greedy)?;
        total += 1;
        if oh_r <= oh_g + 1e-12 {
            refined_le += 1;
        }
        if refined.len() <= greedy.len() {
            size_le += 1;
        }
        csv.push_str(&format!(
            "{seed},{t},{oh_f},{oh_r},{oh_g},{},{}\n",
            refined.len(),
            greedy.len()
        ));
        rows.push(json!({
            "instance_seed": seed,
            "target": t,
            "overhead_finder": oh_f,
            "overhead_refined": oh_r,
            "overhead_greedy": oh_g,
            "len_refined": refined.len(),
            "len_greedy": greedy.len(),
        }));
    }
    if let Some(path) = &b.csv {
        std::fs::write(path, &csv).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
    }
    let report = json!({
        "instances_compared": total,
        "refined_overhead_le_greedy": refined_le,
        "refined_size_le_greedy": size_le,
        "fraction_overhead_le": if total > 0 { refined_le as f64 / total as f64 } else { 1.0 },
        "fraction_size_le": if total > 0 { size_le as f64 / total as f64 } else { 1.0 },
        "rows": rows,
    });
    let inputs = json!({
        "generator": {
            "vertices": a.vertices,
            "extra_edges": a.extra_edges,
            "open": a.open,
            "target_drop": a.target_drop,
        }
    });
    emit(
        &a.out,
        &envelope("bench slicers", inputs, Some(a.seed), a.timestamps, report),
    )
}
