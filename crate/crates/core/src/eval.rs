//! Exhaustive ground truth and quality metrics.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{distance, load_ids, write_ivecs, DataError, Dataset};
use crate::graph::AdjacencyLayer;
use crate::search::Hit;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{results} result lists for {truth} ground-truth rows")]
    LengthMismatch { results: usize, truth: usize },
    #[error("k = {k} exceeds the {available} neighbors available")]
    KTooLarge { k: usize, available: usize },
    #[error("k must be positive")]
    ZeroK,
}

/// Exact nearest neighbors of each query, ascending by `(dist, id)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub k: usize,
    pub rows: Vec<Vec<Hit>>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn ids(&self) -> Vec<Vec<u32>> {
        self.rows.iter().map(|r| r.iter().map(|h| h.id).collect()).collect()
    }

    /// Writes the id lists as ivecs.
    pub fn save_ivecs(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        write_ivecs(path, &self.ids())
    }

    /// Reads published id lists; distances are recomputed against `data`.
    pub fn load_ivecs(path: impl AsRef<Path>, data: &Dataset, queries: &Dataset) -> Result<Self, DataError> {
        let ids = load_ids(path)?;
        if ids.len() != queries.len() {
            return Err(DataError::Shape(format!(
                "{} ground-truth rows for {} queries",
                ids.len(),
                queries.len()
            )));
        }
        let mut k = usize::MAX;
        let mut rows = Vec::with_capacity(ids.len());
        for (qi, row) in ids.iter().enumerate() {
            k = k.min(row.len());
            let mut hits = Vec::with_capacity(row.len());
            for &id in row {
                if id as usize >= data.len() {
                    return Err(DataError::Shape(format!("ground-truth id {id} >= n = {}", data.len())));
                }
                hits.push(Hit {
                    id,
                    dist: distance(queries.row(qi), data.row(id as usize)),
                });
            }
            rows.push(hits);
        }
        Ok(Self {
            k: if rows.is_empty() { 0 } else { k },
            rows,
        })
    }
}

fn exhaustive(data: &Dataset, q: &[f32], k: usize, skip: Option<u32>) -> Vec<Hit> {
    let mut all: Vec<Hit> = (0..data.len() as u32)
        .filter(|&i| Some(i) != skip)
        .map(|i| Hit {
            id: i,
            dist: distance(q, data.row(i as usize)),
        })
        .collect();
    let cmp = |a: &Hit, b: &Hit| a.dist.total_cmp(&b.dist).then(a.id.cmp(&b.id));
    let k = k.min(all.len());
    if k < all.len() {
        all.select_nth_unstable_by(k, cmp);
        all.truncate(k);
    }
    all.sort_unstable_by(cmp);
    all
}

/// Exhaustive top-`k` for every query.
pub fn brute_force_oracle(data: &Dataset, queries: &Dataset, k: usize) -> GroundTruth {
    let rows = (0..queries.len())
        .into_par_iter()
        .map(|qi| exhaustive(data, queries.row(qi), k, None))
        .collect();
    GroundTruth { k: k.min(data.len()), rows }
}

/// Exact kNN graph of `data` (self excluded), ids only.
pub fn oracle_knn_graph(data: &Dataset, k: usize) -> Vec<Vec<u32>> {
    let ids: Vec<u32> = (0..data.len() as u32).collect();
    oracle_rows(data, &ids, k)
}

/// Exact `k` nearest other points of each listed dataset id.
pub fn oracle_rows(data: &Dataset, ids: &[u32], k: usize) -> Vec<Vec<u32>> {
    ids.par_iter()
        .map(|&p| {
            exhaustive(data, data.row(p as usize), k, Some(p))
                .into_iter()
                .map(|h| h.id)
                .collect()
        })
        .collect()
}

/// Fraction of queries whose true nearest neighbor is among the first `k`
/// proposed ids.
pub fn recall_at(results: &[Vec<u32>], gt: &[Vec<u32>], k: usize) -> Result<f64, EvalError> {
    if results.len() != gt.len() {
        return Err(EvalError::LengthMismatch {
            results: results.len(),
            truth: gt.len(),
        });
    }
    if results.is_empty() {
        return Ok(0.0);
    }
    let hits = results
        .iter()
        .zip(gt)
        .filter(|(r, g)| g.first().is_some_and(|t| r.iter().take(k).any(|id| id == t)))
        .count();
    Ok(hits as f64 / results.len() as f64)
}

/// Mean of `|top-k proposed ∩ top-k true| / k`. Not the headline recall.
pub fn k_recall_at_k(results: &[Vec<u32>], gt: &[Vec<u32>], k: usize) -> Result<f64, EvalError> {
    if results.len() != gt.len() {
        return Err(EvalError::LengthMismatch {
            results: results.len(),
            truth: gt.len(),
        });
    }
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if results.is_empty() {
        return Ok(0.0);
    }
    let total: usize = results
        .iter()
        .zip(gt)
        .map(|(r, g)| {
            let truth = &g[..k.min(g.len())];
            r.iter().take(k).filter(|id| truth.contains(id)).count()
        })
        .sum();
    Ok(total as f64 / (k * results.len()) as f64)
}

fn overlap(layer: &AdjacencyLayer, node: u32, truth: &[u32], k: usize) -> usize {
    let truth = &truth[..k.min(truth.len())];
    layer.direct_ids(node).take(k).filter(|id| truth.contains(id)).count()
}

/// Consensus C@k: mean overlap of each node's first `k` direct links with
/// its exact `k` nearest neighbors.
pub fn consensus_at_k(layer: &AdjacencyLayer, oracle: &[Vec<u32>], k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if k > layer.k_nn() {
        return Err(EvalError::KTooLarge {
            k,
            available: layer.k_nn(),
        });
    }
    if oracle.len() != layer.node_count() {
        return Err(EvalError::LengthMismatch {
            results: layer.node_count(),
            truth: oracle.len(),
        });
    }
    let ids: Vec<u32> = (0..oracle.len() as u32).collect();
    Ok(consensus_rows(layer, &ids, oracle, k))
}

/// C@k over a node subset; `truth[i]` belongs to `ids[i]`.
pub fn consensus_rows(layer: &AdjacencyLayer, ids: &[u32], truth: &[Vec<u32>], k: usize) -> f64 {
    if ids.is_empty() || k == 0 {
        return 0.0;
    }
    let total: usize = ids.iter().zip(truth).map(|(&p, t)| overlap(layer, p, t, k)).sum();
    total as f64 / (k * ids.len()) as f64
}
