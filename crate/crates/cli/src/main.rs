//! `ggnn` command-line harness: build, query, ground truth, benchmarks.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
//! Failures print one JSON object on stderr.

mod bench;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use ggnn::data::{load_ids, load_vectors, write_ivecs, Dataset, VecFormat};
use ggnn::eval::{brute_force_oracle, recall_at};
use ggnn::graph::{load_index, save_index};
use ggnn::search::query_batch;
use ggnn::shard::{build_sharded, query_sharded, ShardedIndex};
use ggnn::{build, BuildConfig, QueryConfig, QueryResult};

#[derive(Parser)]
#[command(name = "ggnn", version, about = "Hierarchical kNN-graph index for nearest-neighbor search")]
struct Cli {
    /// Worker threads; 1 selects the deterministic single-worker profile.
    #[arg(long, global = true, env = "GGNN_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an index (a file, or a directory when sharded).
    Build(BuildArgs),
    /// Answer queries against a saved index; writes top-k ids as ivecs.
    Query(QueryArgs),
    /// Exhaustive ground truth as ivecs.
    Gt(GtArgs),
    /// Sweep query slack (and optionally refinements); JSON/CSV reports.
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
pub struct DataArgs {
    /// Base vectors.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "fvecs")]
    pub format: VecFormat,
}

#[derive(Args, Clone)]
pub struct GraphArgs {
    #[arg(long, default_value_t = 24)]
    pub k: usize,
    #[arg(long = "knn", default_value_t = 12)]
    pub k_nn: usize,
    #[arg(long = "ksym", default_value_t = 12)]
    pub k_sym: usize,
    #[arg(long, default_value_t = 32)]
    pub s: usize,
    #[arg(long, default_value_t = 4)]
    pub g: usize,
    #[arg(long = "refine", default_value_t = 2)]
    pub refinements: usize,
    #[arg(long = "tau-build", default_value_t = 0.5)]
    pub tau_build: f32,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Build independent shards of at most this many points.
    #[arg(long = "shard-size")]
    pub shard_size: Option<usize>,
}

impl GraphArgs {
    pub fn config(&self) -> BuildConfig {
        BuildConfig {
            k: self.k,
            k_nn: self.k_nn,
            k_sym: self.k_sym,
            s: self.s,
            g: self.g,
            refinements: self.refinements,
            tau_build: self.tau_build,
            seed: self.seed,
            ..BuildConfig::default()
        }
    }
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
pub struct SearchArgs {
    #[arg(long, default_value_t = 0.6)]
    pub tau: f32,
    #[arg(long = "kout", default_value_t = 10)]
    pub k_out: usize,
}

impl SearchArgs {
    pub fn config(&self, tau: f32) -> QueryConfig {
        let d = QueryConfig::default();
        QueryConfig {
            k_out: self.k_out,
            tau,
            prioq_size: d.prioq_size.max(2 * self.k_out),
            ..d
        }
    }
}

#[derive(Args)]
struct QueryArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    queries: PathBuf,
    /// Index file or sharded index directory.
    #[arg(long)]
    index: PathBuf,
    #[command(flatten)]
    search: SearchArgs,
    /// Optional ground truth; reports R@1 and R@k_out.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GtArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    queries: PathBuf,
    /// Neighbors per query.
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long)]
    pub queries: PathBuf,
    /// Ground-truth ivecs, or `auto` to run the exhaustive oracle.
    #[arg(long, default_value = "auto")]
    pub gt: String,
    /// Slack values as `start:stop:step`, inclusive.
    #[arg(long = "tau-sweep", default_value = "0.3:0.8:0.1")]
    pub tau_sweep: String,
    /// Refinement counts as `start:stop`, inclusive; adds C@10 rows.
    #[arg(long = "refine-sweep")]
    pub refine_sweep: Option<String>,
    /// Reuse a saved index instead of building one.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long, default_value = "both")]
    pub report: bench::ReportKind,
    /// Output directory for reports.
    #[arg(long)]
    pub out: PathBuf,
}

/// A failure with its exit code.
pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

pub type CmdResult<T> = Result<T, Failure>;

pub fn usage<T>(msg: impl Into<String>) -> CmdResult<T> {
    Err(Failure::Usage(msg.into()))
}

pub fn load_dataset(path: &Path, format: VecFormat, what: &str) -> CmdResult<Dataset> {
    if !path.exists() {
        return usage(format!("{what} not found: {}", path.display()));
    }
    load_vectors(path, format)
        .with_context(|| format!("reading {what} {}", path.display()))
        .map_err(Failure::Runtime)
}

/// Prints a one-line JSON event on stderr.
pub fn log(event: &str, body: serde_json::Value) {
    eprintln!("{}", json!({ "event": event, "data": body }));
}

fn validate_build(cfg: &BuildConfig, shard_size: Option<usize>) -> CmdResult<()> {
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(size) = shard_size {
        if size < cfg.s {
            return usage(format!("shard size {size} is smaller than the segment size {}", cfg.s));
        }
    }
    Ok(())
}

fn validate_query(cfg: &QueryConfig) -> CmdResult<()> {
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))
}

pub enum Index {
    Single(ggnn::Hierarchy),
    Sharded(ShardedIndex),
}

impl Index {
    pub fn load(path: &Path, data: &Dataset) -> CmdResult<Self> {
        if !path.exists() {
            return usage(format!("index not found: {}", path.display()));
        }
        if path.is_dir() {
            let si = ShardedIndex::load(path, data).map_err(|e| Failure::Runtime(e.into()))?;
            return Ok(Index::Sharded(si));
        }
        let h = load_index(path).map_err(|e| Failure::Runtime(e.into()))?;
        if h.len() != data.len() || h.dim() != data.dim() {
            return usage(format!(
                "index covers {}x{}, dataset is {}x{}",
                h.len(),
                h.dim(),
                data.len(),
                data.dim()
            ));
        }
        Ok(Index::Single(h))
    }

    pub fn query_all(&self, data: &Dataset, queries: &Dataset, cfg: &QueryConfig) -> anyhow::Result<Vec<QueryResult>> {
        if queries.dim() != data.dim() {
            anyhow::bail!("queries have dimension {}, index expects {}", queries.dim(), data.dim());
        }
        Ok(match self {
            Index::Single(h) => query_batch(h, data, queries, cfg)?,
            Index::Sharded(si) => (0..queries.len())
                .map(|i| query_sharded(si, queries.row(i), cfg))
                .collect::<Result<_, _>>()?,
        })
    }

    pub fn query_one(&self, data: &Dataset, q: &[f32], cfg: &QueryConfig) -> anyhow::Result<QueryResult> {
        Ok(match self {
            Index::Single(h) => ggnn::query(h, data, q, cfg)?,
            Index::Sharded(si) => query_sharded(si, q, cfg)?,
        })
    }
}

/// Builds and persists; returns the index and the build wall time.
pub fn build_index(data: &Dataset, graph: &GraphArgs, out: Option<&Path>) -> CmdResult<(Index, f64, serde_json::Value)> {
    let cfg = graph.config();
    validate_build(&cfg, graph.shard_size)?;
    let t = Instant::now();
    let (index, stats) = match graph.shard_size {
        Some(size) => {
            let si = build_sharded(data, size, &cfg).map_err(|e| Failure::Runtime(e.into()))?;
            let shards = si.shards.len();
            (Index::Sharded(si), json!({ "shards": shards }))
        }
        None => {
            let (h, st) = build(data, &cfg).map_err(|e| Failure::Runtime(e.into()))?;
            (Index::Single(h), serde_json::to_value(st).expect("stats serialize"))
        }
    };
    let secs = t.elapsed().as_secs_f64();
    if let Some(out) = out {
        match &index {
            Index::Single(h) => save_index(h, out).with_context(|| format!("writing {}", out.display()))?,
            Index::Sharded(si) => si.save(out).with_context(|| format!("writing {}", out.display()))?,
        }
    }
    Ok((index, secs, stats))
}

fn cmd_build(a: &BuildArgs) -> CmdResult<()> {
    let cfg = a.graph.config();
    validate_build(&cfg, a.graph.shard_size)?;
    log(
        "config",
        json!({ "command": "build", "data": a.data.data, "format": a.data.format, "build": cfg,
                "shard_size": a.graph.shard_size, "out": a.out, "threads": rayon::current_num_threads() }),
    );
    let data = load_dataset(&a.data.data, a.data.format, "dataset")?;
    let (_, secs, stats) = build_index(&data, &a.graph, Some(&a.out))?;
    println!(
        "{}",
        json!({ "n": data.len(), "dim": data.dim(), "build_seconds": secs, "stats": stats, "out": a.out })
    );
    Ok(())
}

fn cmd_query(a: &QueryArgs) -> CmdResult<()> {
    let qcfg = a.search.config(a.search.tau);
    validate_query(&qcfg)?;
    log(
        "config",
        json!({ "command": "query", "data": a.data.data, "format": a.data.format, "queries": a.queries,
                "index": a.index, "query": qcfg, "out": a.out, "threads": rayon::current_num_threads() }),
    );
    let data = load_dataset(&a.data.data, a.data.format, "dataset")?;
    let queries = load_dataset(&a.queries, a.data.format, "query set")?;
    if qcfg.k_out > data.len() {
        return usage(format!("k_out = {} exceeds n = {}", qcfg.k_out, data.len()));
    }
    let index = Index::load(&a.index, &data)?;
    let t = Instant::now();
    let results = index.query_all(&data, &queries, &qcfg)?;
    let secs = t.elapsed().as_secs_f64();
    let ids: Vec<Vec<u32>> = results.iter().map(QueryResult::ids).collect();
    if let Some(i) = ids.iter().position(|r| r.len() != qcfg.k_out) {
        return Err(Failure::Runtime(anyhow::anyhow!(
            "query {i} reached only {} of {} neighbors",
            ids[i].len(),
            qcfg.k_out
        )));
    }
    write_ivecs(&a.out, &ids).with_context(|| format!("writing {}", a.out.display()))?;
    let nq = results.len().max(1) as f64;
    let mut summary = json!({
        "queries": results.len(),
        "mean_query_us": secs * 1e6 / nq,
        "mean_visited": results.iter().map(|r| r.visited_count as f64).sum::<f64>() / nq,
        "mean_steps": results.iter().map(|r| r.steps as f64).sum::<f64>() / nq,
        "out": a.out,
    });
    if let Some(gt_path) = &a.gt {
        if !gt_path.exists() {
            return usage(format!("ground truth not found: {}", gt_path.display()));
        }
        let gt = load_ids(gt_path).with_context(|| format!("reading {}", gt_path.display()))?;
        let got: Vec<Vec<u32>> = results.iter().map(QueryResult::ids).collect();
        let r1 = recall_at(&got, &gt, 1).map_err(|e| Failure::Usage(e.to_string()))?;
        let rk = recall_at(&got, &gt, qcfg.k_out).map_err(|e| Failure::Usage(e.to_string()))?;
        summary["recall_at_1"] = json!(r1);
        summary[format!("recall_at_{}", qcfg.k_out)] = json!(rk);
    }
    println!("{summary}");
    Ok(())
}

fn cmd_gt(a: &GtArgs) -> CmdResult<()> {
    if a.k == 0 {
        return usage("k must be at least 1");
    }
    log(
        "config",
        json!({ "command": "gt", "data": a.data.data, "format": a.data.format, "queries": a.queries,
                "k": a.k, "out": a.out, "threads": rayon::current_num_threads() }),
    );
    let data = load_dataset(&a.data.data, a.data.format, "dataset")?;
    let queries = load_dataset(&a.queries, a.data.format, "query set")?;
    if queries.dim() != data.dim() {
        return usage(format!("queries have dimension {}, dataset {}", queries.dim(), data.dim()));
    }
    if a.k > data.len() {
        return usage(format!("k = {} exceeds n = {}", a.k, data.len()));
    }
    let gt = brute_force_oracle(&data, &queries, a.k);
    gt.save_ivecs(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("{}", json!({ "queries": gt.len(), "k": gt.k, "out": a.out }));
    Ok(())
}

fn run(cli: &Cli) -> CmdResult<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return usage("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring worker pool")?;
    }
    match &cli.cmd {
        Command::Build(a) => cmd_build(a),
        Command::Query(a) => cmd_query(a),
        Command::Gt(a) => cmd_gt(a),
        Command::Bench(a) => bench::cmd_bench(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("{}", json!({ "error": msg, "kind": "usage", "exit_code": 2 }));
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("{}", json!({ "error": format!("{e:#}"), "kind": "runtime", "exit_code": 1 }));
            ExitCode::from(1)
        }
    }
}
