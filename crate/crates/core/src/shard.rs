//! Independently built sub-indices over contiguous id ranges, queried
//! together by merging per-shard results.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::build::{build, BuildConfig, BuildError};
use crate::data::Dataset;
use crate::graph::{load_index, save_index, GraphError, Hierarchy};
use crate::search::{query, Hit, QueryConfig, QueryResult, SearchError, Termination};

const MANIFEST: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ShardError {
    #[error("shard size {shard_size} is smaller than the segment size {s}")]
    ShardSize { shard_size: usize, s: usize },
    #[error("shard {shard}: {source}")]
    Build { shard: usize, source: BuildError },
    #[error("shard {shard}: {source}")]
    Graph { shard: usize, source: GraphError },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// One sub-index. Its local id `i` is global id `offset + i`.
#[derive(Clone, Debug)]
pub struct Shard {
    pub offset: u32,
    pub index: Hierarchy,
    pub data: Dataset,
}

#[derive(Clone, Debug)]
pub struct ShardedIndex {
    pub shard_size: usize,
    pub shards: Vec<Shard>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ShardEntry {
    offset: u32,
    len: usize,
    file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    n: usize,
    dim: usize,
    shard_size: usize,
    config: BuildConfig,
    shards: Vec<ShardEntry>,
}

/// Contiguous ranges covering `0..n`: `ceil(n / shard_size)` shards whose
/// sizes differ by at most one.
pub fn shard_ranges(n: usize, shard_size: usize) -> Vec<std::ops::Range<usize>> {
    let count = n.div_ceil(shard_size).max(1);
    let (q, r) = (n / count, n % count);
    let mut at = 0;
    (0..count)
        .map(|i| {
            let len = q + usize::from(i < r);
            at += len;
            at - len..at
        })
        .collect()
}

/// Seed of shard `i`'s build.
pub fn shard_seed(cfg: &BuildConfig, i: usize) -> u64 {
    cfg.seed.wrapping_add(i as u64)
}

pub fn build_sharded(data: &Dataset, shard_size: usize, cfg: &BuildConfig) -> Result<ShardedIndex, ShardError> {
    if shard_size < cfg.s {
        return Err(ShardError::ShardSize { shard_size, s: cfg.s });
    }
    let shards = shard_ranges(data.len(), shard_size)
        .into_par_iter()
        .enumerate()
        .map(|(i, range)| {
            let part = data.slice(range.clone()).map_err(|e| ShardError::Manifest(e.to_string()))?;
            let cfg = BuildConfig {
                seed: shard_seed(cfg, i),
                ..cfg.clone()
            };
            let (index, _) = build(&part, &cfg).map_err(|source| ShardError::Build { shard: i, source })?;
            Ok(Shard {
                offset: range.start as u32,
                index,
                data: part,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ShardedIndex { shard_size, shards })
}

/// Merges per-shard hit lists (local ids) into the global top `k`, ascending
/// by `(dist, global id)`.
pub fn merge_hits<'a>(lists: impl IntoIterator<Item = (u32, &'a [Hit])>, k: usize) -> Vec<Hit> {
    let mut all: Vec<Hit> = lists
        .into_iter()
        .flat_map(|(offset, hits)| {
            hits.iter().map(move |h| Hit {
                id: offset + h.id,
                dist: h.dist,
            })
        })
        .collect();
    all.sort_unstable_by(|a, b| a.dist.total_cmp(&b.dist).then(a.id.cmp(&b.id)));
    all.truncate(k);
    all
}

fn combine(parts: &[(u32, QueryResult)], k: usize) -> QueryResult {
    let hits = merge_hits(parts.iter().map(|(o, r)| (*o, r.hits.as_slice())), k);
    let by = |t: Termination| parts.iter().any(|(_, r)| r.terminated_by == t);
    QueryResult {
        hits,
        visited_count: parts.iter().map(|(_, r)| r.visited_count).sum(),
        steps: parts.iter().map(|(_, r)| r.steps).sum(),
        terminated_by: if by(Termination::IterationCap) {
            Termination::IterationCap
        } else if by(Termination::StoppingRule) {
            Termination::StoppingRule
        } else {
            Termination::QueueEmpty
        },
        unique_touched: parts.iter().map(|(_, r)| r.unique_touched).sum(),
        forgotten: parts.iter().map(|(_, r)| r.forgotten).sum(),
    }
}

impl ShardedIndex {
    pub fn len(&self) -> usize {
        self.shards.iter().map(|s| s.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes `manifest.json` and one `shard_NNNN.ggnn` per shard into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), ShardError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|source| ShardError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut entries = Vec::with_capacity(self.shards.len());
        for (i, shard) in self.shards.iter().enumerate() {
            let file = format!("shard_{i:04}.ggnn");
            save_index(&shard.index, dir.join(&file)).map_err(|source| ShardError::Graph { shard: i, source })?;
            entries.push(ShardEntry {
                offset: shard.offset,
                len: shard.data.len(),
                file,
            });
        }
        let first = self.shards.first().ok_or_else(|| ShardError::Manifest("no shards".into()))?;
        let config = first.index.config().clone();
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            n: self.len(),
            dim: first.data.dim(),
            shard_size: self.shard_size,
            config,
            shards: entries,
        };
        let path = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| ShardError::Manifest(e.to_string()))?;
        fs::write(&path, text).map_err(|source| ShardError::Io { path, source })
    }

    /// Loads every shard of `dir` over `data`, the dataset it was built from.
    pub fn load(dir: impl AsRef<Path>, data: &Dataset) -> Result<Self, ShardError> {
        let reader = ShardReader::open(dir, data)?;
        let shards = reader.iter().collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            shard_size: reader.manifest.shard_size,
            shards,
        })
    }
}

/// Queries every shard and merges to the global top `k_out`.
pub fn query_sharded(si: &ShardedIndex, q: &[f32], cfg: &QueryConfig) -> Result<QueryResult, SearchError> {
    let parts = si
        .shards
        .par_iter()
        .map(|s| query(&s.index, &s.data, q, cfg).map(|r| (s.offset, r)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(combine(&parts, cfg.k_out))
}

/// Reads a saved sharded index one shard at a time.
pub struct ShardReader<'a> {
    dir: PathBuf,
    data: &'a Dataset,
    manifest: Manifest,
}

impl<'a> ShardReader<'a> {
    pub fn open(dir: impl AsRef<Path>, data: &'a Dataset) -> Result<Self, ShardError> {
        let dir = dir.as_ref().to_path_buf();
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|source| ShardError::Io { path, source })?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| ShardError::Manifest(e.to_string()))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(ShardError::Manifest(format!("unsupported version {}", manifest.version)));
        }
        if manifest.n != data.len() || manifest.dim != data.dim() {
            return Err(ShardError::Manifest(format!(
                "index covers {}x{}, dataset is {}x{}",
                manifest.n,
                manifest.dim,
                data.len(),
                data.dim()
            )));
        }
        let mut at = 0usize;
        for e in &manifest.shards {
            if e.offset as usize != at {
                return Err(ShardError::Manifest(format!("shard at offset {} leaves a gap or overlap", e.offset)));
            }
            at += e.len;
        }
        if at != manifest.n {
            return Err(ShardError::Manifest(format!("shards cover {at} of {} points", manifest.n)));
        }
        Ok(Self { dir, data, manifest })
    }

    pub fn shard_count(&self) -> usize {
        self.manifest.shards.len()
    }

    /// Loads shards lazily in offset order; at most one is alive per step.
    pub fn iter(&self) -> impl Iterator<Item = Result<Shard, ShardError>> + '_ {
        self.manifest.shards.iter().enumerate().map(|(i, e)| {
            let index = load_index(self.dir.join(&e.file)).map_err(|source| ShardError::Graph { shard: i, source })?;
            let start = e.offset as usize;
            if index.len() != e.len {
                return Err(ShardError::Manifest(format!("shard {i} holds {} points, manifest says {}", index.len(), e.len)));
            }
            let data = self
                .data
                .slice(start..start + e.len)
                .map_err(|err| ShardError::Manifest(err.to_string()))?;
            Ok(Shard {
                offset: e.offset,
                index,
                data,
            })
        })
    }

    /// Answers all queries while holding a single shard in memory at a time.
    pub fn query_all(&self, queries: &Dataset, cfg: &QueryConfig) -> Result<Vec<QueryResult>, ShardError> {
        let mut acc: Vec<Vec<(u32, QueryResult)>> = vec![Vec::new(); queries.len()];
        for shard in self.iter() {
            let shard = shard?;
            let results: Vec<QueryResult> = (0..queries.len())
                .into_par_iter()
                .map(|qi| query(&shard.index, &shard.data, queries.row(qi), cfg))
                .collect::<Result<_, _>>()
                .map_err(|e| ShardError::Manifest(e.to_string()))?;
            for (slot, r) in acc.iter_mut().zip(results) {
                slot.push((shard.offset, r));
                let merged = combine(slot, cfg.k_out);
                slot.clear();
                slot.push((0, merged));
            }
        }
        Ok(acc.iter().map(|parts| combine(parts, cfg.k_out)).collect())
    }
}
