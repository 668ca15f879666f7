//! Slack and refinement sweeps with JSON and CSV reports.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use ggnn::data::{load_ids, Dataset, VecFormat};
use ggnn::eval::{brute_force_oracle, consensus_at_k, k_recall_at_k, oracle_knn_graph, recall_at};
use ggnn::{build, BuildConfig, QueryConfig, QueryResult};

use crate::{build_index, load_dataset, log, usage, BenchArgs, CmdResult, Failure, Index};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportKind {
    Json,
    Csv,
    Both,
}

impl FromStr for ReportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "both" => Ok(Self::Both),
            other => Err(format!("unknown report kind {other:?}; expected json, csv or both")),
        }
    }
}

/// Parses `start:stop:step` into the inclusive list of values.
pub fn parse_tau_sweep(spec: &str) -> Result<Vec<f32>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, step] = parts.as_slice() else {
        return Err(format!("sweep {spec:?} is not start:stop:step"));
    };
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    let (a, b, step) = (num(a)?, num(b)?, num(step)?);
    if !(step > 0.0) || !(a >= 0.0) || !(b >= a) || !b.is_finite() {
        return Err(format!("sweep {spec:?} needs 0 <= start <= stop and step > 0"));
    }
    let count = ((b - a) / step + 1e-6).floor() as usize + 1;
    Ok((0..count)
        .map(|i| (((a + i as f64 * step) * 1e6).round() / 1e6) as f32)
        .collect())
}

/// Parses `start:stop` into the inclusive list of refinement counts.
pub fn parse_refine_sweep(spec: &str) -> Result<Vec<usize>, String> {
    let (a, b) = spec
        .split_once(':')
        .ok_or_else(|| format!("refinement sweep {spec:?} is not start:stop"))?;
    let num = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}"));
    let (a, b) = (num(a)?, num(b)?);
    if b < a {
        return Err(format!("refinement sweep {spec:?} has stop < start"));
    }
    Ok((a..=b).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct DatasetIdentity {
    pub path: PathBuf,
    pub format: VecFormat,
    pub n: usize,
    pub dim: usize,
    pub sha256: String,
}

fn identify(path: &Path, format: VecFormat, data: &Dataset) -> anyhow::Result<DatasetIdentity> {
    let mut file = File::open(path).with_context(|| format!("hashing {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let got = file.read(&mut buf)?;
        if got == 0 {
            break;
        }
        hasher.update(&buf[..got]);
    }
    let sha256 = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok(DatasetIdentity {
        path: path.to_path_buf(),
        format,
        n: data.len(),
        dim: data.dim(),
        sha256,
    })
}

/// One slack setting.
#[derive(Clone, Debug, Serialize)]
pub struct TauRow {
    pub tau: f64,
    pub recall_at_1: f64,
    pub recall_at_10: f64,
    /// `|top-10 ∩ true top-10| / 10`, the set-overlap recall other benchmarks report.
    pub k_recall_at_10: f64,
    pub mean_visited: f64,
    pub mean_steps: f64,
    /// Batch wall time divided by the query count.
    pub mean_query_us: f64,
    pub p50_query_us: f64,
    pub p99_query_us: f64,
    pub build_seconds: f64,
}

/// One refinement count.
#[derive(Clone, Debug, Serialize)]
pub struct RefineRow {
    pub refinements: usize,
    pub consensus_at_10: f64,
    pub recall_at_1: f64,
    pub tau: f64,
    pub build_seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
struct PlotRow {
    tau: f64,
    mean_query_us: f64,
    recall_at_1: f64,
}

/// Slack as written in the sweep, without f32 widening noise.
fn report_tau(tau: f32) -> f64 {
    (f64::from(tau) * 1e6).round() / 1e6
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn ids(results: &[QueryResult]) -> Vec<Vec<u32>> {
    results.iter().map(QueryResult::ids).collect()
}

fn tau_row(
    index: &Index,
    data: &Dataset,
    queries: &Dataset,
    gt: &[Vec<u32>],
    cfg: &QueryConfig,
    build_seconds: f64,
) -> anyhow::Result<TauRow> {
    // Warm-up pass, then the timed batch.
    index.query_all(data, queries, cfg)?;
    let t = Instant::now();
    let results = index.query_all(data, queries, cfg)?;
    let batch = t.elapsed().as_secs_f64();
    let mut single = Vec::with_capacity(queries.len());
    for i in 0..queries.len() {
        let t = Instant::now();
        index.query_one(data, queries.row(i), cfg)?;
        single.push(t.elapsed().as_secs_f64() * 1e6);
    }
    single.sort_by(f64::total_cmp);
    let nq = queries.len().max(1) as f64;
    let got = ids(&results);
    Ok(TauRow {
        tau: report_tau(cfg.tau),
        recall_at_1: recall_at(&got, gt, 1)?,
        recall_at_10: recall_at(&got, gt, 10)?,
        k_recall_at_10: k_recall_at_k(&got, gt, 10)?,
        mean_visited: results.iter().map(|r| r.visited_count as f64).sum::<f64>() / nq,
        mean_steps: results.iter().map(|r| r.steps as f64).sum::<f64>() / nq,
        mean_query_us: batch * 1e6 / nq,
        p50_query_us: percentile(&single, 50.0),
        p99_query_us: percentile(&single, 99.0),
        build_seconds,
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_bench(a: &BenchArgs) -> CmdResult<()> {
    let taus = parse_tau_sweep(&a.tau_sweep).map_err(Failure::Usage)?;
    let refine = match &a.refine_sweep {
        Some(spec) => parse_refine_sweep(spec).map_err(Failure::Usage)?,
        None => Vec::new(),
    };
    let build_cfg = a.graph.config();
    build_cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    for &tau in &taus {
        a.search
            .config(tau)
            .validate()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    if a.search.k_out < 10 {
        return usage("bench reports R@10 and needs --kout >= 10");
    }
    if !refine.is_empty() && a.graph.shard_size.is_some() {
        return usage("--refine-sweep cannot be combined with --shard-size");
    }
    let started_utc = chrono::Utc::now().to_rfc3339();
    let threads = rayon::current_num_threads();
    let config = json!({
        "command": "bench",
        "build": build_cfg,
        "shard_size": a.graph.shard_size,
        "query": a.search.config(a.search.tau),
        "tau_sweep": taus,
        "refine_sweep": refine,
        "gt": a.gt,
        "index": a.index,
        "threads": threads,
    });
    log("config", config.clone());

    let data = load_dataset(&a.data.data, a.data.format, "dataset")?;
    let queries = load_dataset(&a.queries, a.data.format, "query set")?;
    if queries.dim() != data.dim() {
        return usage(format!("queries have dimension {}, dataset {}", queries.dim(), data.dim()));
    }
    let gt: Vec<Vec<u32>> = if a.gt == "auto" {
        brute_force_oracle(&data, &queries, 100.min(data.len())).ids()
    } else {
        let path = Path::new(&a.gt);
        if !path.exists() {
            return usage(format!("ground truth not found: {}", path.display()));
        }
        load_ids(path).with_context(|| format!("reading {}", path.display()))?
    };
    if gt.len() != queries.len() {
        return usage(format!("{} ground-truth rows for {} queries", gt.len(), queries.len()));
    }

    let (index, build_seconds) = match &a.index {
        Some(path) => (Index::load(path, &data)?, 0.0),
        None => {
            let (index, secs, _) = build_index(&data, &a.graph, None)?;
            (index, secs)
        }
    };

    let mut tau_rows = Vec::with_capacity(taus.len());
    for &tau in &taus {
        let row = tau_row(&index, &data, &queries, &gt, &a.search.config(tau), build_seconds)?;
        log("tau", serde_json::to_value(&row).expect("row serializes"));
        tau_rows.push(row);
    }

    let mut refine_rows = Vec::with_capacity(refine.len());
    if !refine.is_empty() {
        let k = 10.min(build_cfg.k_nn);
        let oracle = oracle_knn_graph(&data, k);
        for &r in &refine {
            let cfg = BuildConfig {
                refinements: r,
                ..build_cfg.clone()
            };
            let t = Instant::now();
            let (h, _) = build(&data, &cfg).map_err(|e| Failure::Runtime(e.into()))?;
            let secs = t.elapsed().as_secs_f64();
            let c = consensus_at_k(h.bottom(), &oracle, k).context("consensus")?;
            let qcfg = a.search.config(a.search.tau);
            let results = ggnn::search::query_batch(&h, &data, &queries, &qcfg).context("query")?;
            let row = RefineRow {
                refinements: r,
                consensus_at_10: c,
                recall_at_1: recall_at(&ids(&results), &gt, 1).context("recall")?,
                tau: report_tau(a.search.tau),
                build_seconds: secs,
            };
            log("refine", serde_json::to_value(&row).expect("row serializes"));
            refine_rows.push(row);
        }
    }

    let report = json!({
        "started_utc": started_utc,
        "finished_utc": chrono::Utc::now().to_rfc3339(),
        "config": config,
        "dataset": identify(&a.data.data, a.data.format, &data)?,
        "queries": identify(&a.queries, a.data.format, &queries)?,
        "environment": {
            "available_parallelism": std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            "threads": threads,
            "timing": "mean = batch wall time / queries after one warm-up batch; p50/p99 from sequential single queries",
        },
        "build_seconds": build_seconds,
        "tau_rows": tau_rows,
        "refine_rows": refine_rows,
    });

    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    if matches!(a.report, ReportKind::Json | ReportKind::Both) {
        let path = a.out.join("report.json");
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    if matches!(a.report, ReportKind::Csv | ReportKind::Both) {
        write_csv(&a.out.join("tau_sweep.csv"), &tau_rows)?;
        let plot: Vec<PlotRow> = tau_rows
            .iter()
            .map(|r| PlotRow {
                tau: r.tau,
                mean_query_us: r.mean_query_us,
                recall_at_1: r.recall_at_1,
            })
            .collect();
        write_csv(&a.out.join("plot.csv"), &plot)?;
        if !refine_rows.is_empty() {
            write_csv(&a.out.join("refine_sweep.csv"), &refine_rows)?;
        }
    }
    println!(
        "{}",
        json!({ "out": a.out, "build_seconds": build_seconds, "tau_rows": tau_rows, "refine_rows": refine_rows })
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sweep() {
        assert_eq!(parse_tau_sweep("0.3:0.8:0.1").unwrap(), vec![0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
        assert_eq!(parse_tau_sweep("0.5:0.5:0.1").unwrap(), vec![0.5]);
        assert!(parse_tau_sweep("0.8:0.3:0.1").is_err());
        assert!(parse_tau_sweep("0.3:0.8").is_err());
        assert!(parse_tau_sweep("0.3:0.8:0").is_err());
        assert_eq!(parse_refine_sweep("0:5").unwrap(), vec![0, 1, 2, 3, 4, 5]);
        assert!(parse_refine_sweep("3:1").is_err());
    }

    #[test]
    fn percentiles() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 50.0), 50.0);
        assert_eq!(percentile(&v, 99.0), 99.0);
        assert_eq!(percentile(&[3.0], 99.0), 3.0);
    }
}
