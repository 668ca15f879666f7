//! Greedy graph search with backtracking.
//!
//! A search pops the closest unvisited candidate, evaluates its unknown
//! neighbors, and keeps those within the slack margin. It stops once the
//! next candidate is farther than `d_best_k + tau * min(d_nn1_max, d_best_1)`
//! (squared distances throughout).

mod cache;

pub use cache::SearchCache;
pub use crate::config::QueryConfig;

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ConfigError;
use crate::data::{distance, Dataset};
use crate::graph::{AdjacencyLayer, GraphStats, Hierarchy, LayerPoints};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("seed id {id} invalid for layer of {node_count} nodes")]
    InvalidSeed { id: u32, node_count: usize },
    #[error("no seeds given")]
    NoSeeds,
    #[error("query has dimension {found}, index expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("start layer {start} out of range for {layers} layers")]
    StartLayer { start: usize, layers: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: u32,
    pub dist: f32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    StoppingRule,
    QueueEmpty,
    IterationCap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    /// Ascending by `(dist, id)`.
    pub hits: Vec<Hit>,
    /// Distance evaluations performed.
    pub visited_count: usize,
    /// Pop-and-expand iterations.
    pub steps: usize,
    pub terminated_by: Termination,
    /// Distinct points whose distance was evaluated.
    pub unique_touched: usize,
    /// Ids dropped from the cache by queue overflow or ring wraparound.
    pub forgotten: usize,
}

impl QueryResult {
    pub fn ids(&self) -> Vec<u32> {
        self.hits.iter().map(|h| h.id).collect()
    }
}

/// The slack stopping rule; strict inequality.
///
/// A zero min-term yields zero slack even for infinite `tau`.
#[inline]
pub fn stopping_check(d_next: f32, d_best_k: f32, d_best_1: f32, d_nn1_max: f32, tau: f32) -> bool {
    let m = d_nn1_max.min(d_best_1);
    let xi = if m == 0.0 { 0.0 } else { tau * m };
    d_next > d_best_k + xi
}

#[derive(Default)]
pub(crate) struct SearchOptions<'a> {
    /// Never inserted nor expanded.
    pub exclude: Option<u32>,
    /// Stop as soon as this id has been evaluated.
    pub target: Option<u32>,
    /// Receives every expanded `(id, dist)` in order.
    pub trace: Option<&'a mut Vec<(u32, f32)>>,
}

/// Core loop over one layer. `dist` evaluates the query against a
/// layer-local id. The cache must already be reset for this layer.
pub(crate) fn run_search<F: FnMut(u32) -> f32>(
    cache: &mut SearchCache,
    layer: &AdjacencyLayer,
    seeds: &[(u32, f32)],
    cfg: &QueryConfig,
    d_nn1_max: f32,
    mut opts: SearchOptions<'_>,
    mut dist: F,
) -> (QueryResult, bool) {
    if let Some(x) = opts.exclude {
        cache.block(x);
    }
    for &(id, d) in seeds {
        if !cache.is_known(id) {
            cache.note_touched(id);
            cache.insert(id, d);
        }
    }
    let mut reached = opts.target.is_some_and(|t| cache.was_touched(t));
    let (mut visited_count, mut unique, mut steps) = (0usize, 0usize, 0usize);
    let terminated_by = loop {
        if reached {
            break Termination::StoppingRule;
        }
        let Some((_, d_next)) = cache.peek_next() else {
            break Termination::QueueEmpty;
        };
        if steps >= cfg.max_iterations {
            break Termination::IterationCap;
        }
        if let Some((b1, bk)) = cache.best_bounds() {
            if stopping_check(d_next, bk, b1, d_nn1_max, cfg.tau) {
                break Termination::StoppingRule;
            }
        }
        let (id, d) = cache.pop_best().expect("peeked");
        if let Some(trace) = opts.trace.as_deref_mut() {
            trace.push((id, d));
        }
        steps += 1;
        for nb in layer.neighbor_iter(id) {
            if cache.is_known(nb) {
                continue;
            }
            let dn = dist(nb);
            visited_count += 1;
            if cache.note_touched(nb) {
                unique += 1;
            }
            if opts.target == Some(nb) {
                reached = true;
            }
            if cache.is_best_full() {
                let (b1, bk) = cache.best_bounds().expect("full");
                if stopping_check(dn, bk, b1, d_nn1_max, cfg.tau) {
                    cache.mark_rejected(nb);
                    continue;
                }
            }
            cache.insert(nb, dn);
        }
    };
    let result = QueryResult {
        hits: cache.best().map(|(id, dist)| Hit { id, dist }).collect(),
        visited_count,
        steps,
        terminated_by,
        unique_touched: unique,
        forgotten: cache.forgotten(),
    };
    (result, reached)
}

fn check_seeds(layer: &AdjacencyLayer, seeds: &[(u32, f32)]) -> Result<(), SearchError> {
    if seeds.is_empty() {
        return Err(SearchError::NoSeeds);
    }
    if let Some(&(id, _)) = seeds.iter().find(|s| s.0 as usize >= layer.node_count()) {
        return Err(SearchError::InvalidSeed {
            id,
            node_count: layer.node_count(),
        });
    }
    Ok(())
}

fn check_query(points: &LayerPoints<'_>, q: &[f32]) -> Result<(), SearchError> {
    let expected = points.data().dim();
    if q.len() != expected {
        return Err(SearchError::Dimension {
            expected,
            found: q.len(),
        });
    }
    Ok(())
}

/// Greedy search on a single layer from precomputed seeds.
pub fn greedy_search(
    layer: &AdjacencyLayer,
    points: LayerPoints<'_>,
    seeds: &[(u32, f32)],
    q: &[f32],
    cfg: &QueryConfig,
    stats: &GraphStats,
) -> Result<QueryResult, SearchError> {
    cfg.validate()?;
    check_query(&points, q)?;
    check_seeds(layer, seeds)?;
    let mut cache = SearchCache::new(layer.node_count(), cfg);
    let (res, _) = run_search(
        &mut cache,
        layer,
        seeds,
        cfg,
        stats.d_nn1_max,
        SearchOptions::default(),
        |id| distance(q, points.vector(id)),
    );
    Ok(res)
}

/// `(id, dist)` sorted ascending with ties by id, truncated to `k`.
fn top_k(mut all: Vec<(u32, f32)>, k: usize) -> Vec<(u32, f32)> {
    let cmp = |a: &(u32, f32), b: &(u32, f32)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    if all.len() > k {
        all.select_nth_unstable_by(k, cmp);
        all.truncate(k);
    }
    all.sort_unstable_by(cmp);
    all
}

fn scan(points: &LayerPoints<'_>, ids: Range<u32>, q: &[f32], exclude: Option<u32>, k: usize) -> Vec<(u32, f32)> {
    let all = ids
        .filter(|&id| Some(id) != exclude)
        .map(|id| (id, distance(q, points.vector(id))))
        .collect();
    top_k(all, k)
}

/// Brute force over the top layer; the `k_out` best as dataset ids.
pub fn top_layer_seeds(h: &Hierarchy, data: &Dataset, q: &[f32], k_out: usize) -> Vec<(u32, f32)> {
    let top = h.top_index();
    let points = h.points(data, top);
    scan(&points, 0..h.layer(top).node_count() as u32, q, None, k_out)
        .into_iter()
        .map(|(id, d)| (points.bottom_id(id), d))
        .collect()
}

/// Final query mode: brute force on the top layer, then a single greedy
/// search on the bottom layer seeded with those points.
pub fn query(h: &Hierarchy, data: &Dataset, q: &[f32], cfg: &QueryConfig) -> Result<QueryResult, SearchError> {
    cfg.validate()?;
    let mut cache = SearchCache::new(h.len(), cfg);
    query_with(h, data, q, cfg, &mut cache)
}

pub(crate) fn query_with(
    h: &Hierarchy,
    data: &Dataset,
    q: &[f32],
    cfg: &QueryConfig,
    cache: &mut SearchCache,
) -> Result<QueryResult, SearchError> {
    let points = h.points(data, 0);
    check_query(&points, q)?;
    let seeds = top_layer_seeds(h, data, q, cfg.k_out);
    let top_evals = h.layer(h.top_index()).node_count();
    cache.reset(h.len(), cfg);
    let (mut res, _) = run_search(
        cache,
        h.bottom(),
        &seeds,
        cfg,
        h.stats().d_nn1_max,
        SearchOptions::default(),
        |id| distance(q, points.vector(id)),
    );
    res.visited_count += top_evals;
    res.unique_touched += top_evals;
    Ok(res)
}

/// Runs [`query`] for every row of `queries` on the current rayon pool.
pub fn query_batch(
    h: &Hierarchy,
    data: &Dataset,
    queries: &Dataset,
    cfg: &QueryConfig,
) -> Result<Vec<QueryResult>, SearchError> {
    cfg.validate()?;
    (0..queries.len())
        .into_par_iter()
        .map_init(
            || SearchCache::new(h.len(), cfg),
            |cache, i| query_with(h, data, queries.row(i), cfg, cache),
        )
        .collect()
}

/// Borrowed view of a (possibly partial) layer stack.
#[derive(Clone, Copy)]
pub(crate) struct LayerStack<'a> {
    pub layers: &'a [AdjacencyLayer],
    pub to_finer: &'a [Vec<u32>],
    pub to_bottom: &'a [Vec<u32>],
    pub data: &'a Dataset,
    pub d_nn1_max: f32,
}

impl<'a> LayerStack<'a> {
    pub fn of(h: &'a Hierarchy, data: &'a Dataset) -> Self {
        Self {
            layers: &h.layers,
            to_finer: &h.to_finer,
            to_bottom: &h.to_bottom,
            data,
            d_nn1_max: h.stats.d_nn1_max,
        }
    }

    pub fn points(&self, layer: usize) -> LayerPoints<'a> {
        LayerPoints::new(self.data, layer.checked_sub(1).map(|i| self.to_bottom[i].as_slice()))
    }

    /// Brute force over `segment` of layer `start`, then greedy searches on
    /// each finer layer down to `target`, each seeded with the previous
    /// layer's best `k_out`. `exclude[i]` is an id to skip on layer `i`.
    /// Hits are local ids of layer `target`.
    #[allow(clippy::too_many_arguments)]
    pub fn descend(
        &self,
        q: &[f32],
        start: usize,
        segment: Range<u32>,
        target: usize,
        cfg: &QueryConfig,
        exclude: &[Option<u32>],
        cache: &mut SearchCache,
    ) -> QueryResult {
        let ex = |i: usize| exclude.get(i).copied().flatten();
        let points = self.points(start);
        let mut seeds = scan(&points, segment.clone(), q, ex(start), cfg.k_out);
        let mut total = QueryResult {
            hits: seeds.iter().map(|&(id, dist)| Hit { id, dist }).collect(),
            visited_count: segment.len(),
            steps: 0,
            terminated_by: Termination::QueueEmpty,
            unique_touched: segment.len(),
            forgotten: 0,
        };
        for layer in (target..start).rev() {
            let map = &self.to_finer[layer];
            for s in &mut seeds {
                s.0 = map[s.0 as usize];
            }
            if seeds.is_empty() {
                break;
            }
            let points = self.points(layer);
            cache.reset(self.layers[layer].node_count(), cfg);
            let (res, _) = run_search(
                cache,
                &self.layers[layer],
                &seeds,
                cfg,
                self.d_nn1_max,
                SearchOptions {
                    exclude: ex(layer),
                    ..Default::default()
                },
                |id| distance(q, points.vector(id)),
            );
            seeds = res.hits.iter().map(|h| (h.id, h.dist)).collect();
            total.visited_count += res.visited_count;
            total.unique_touched += res.unique_touched;
            total.forgotten += res.forgotten;
            total.steps += res.steps;
            total.terminated_by = res.terminated_by;
            total.hits = res.hits;
        }
        total
    }
}

/// Layer-by-layer descent from `start_layer` to the bottom.
///
/// The start layer is scanned exhaustively; each finer layer runs a greedy
/// search seeded with the `k_out` best of the layer above. Hits are
/// dataset ids.
pub fn hierarchical_query(
    h: &Hierarchy,
    data: &Dataset,
    q: &[f32],
    cfg: &QueryConfig,
    start_layer: usize,
) -> Result<QueryResult, SearchError> {
    cfg.validate()?;
    if start_layer >= h.layer_count() {
        return Err(SearchError::StartLayer {
            start: start_layer,
            layers: h.layer_count(),
        });
    }
    check_query(&h.points(data, 0), q)?;
    let stack = LayerStack::of(h, data);
    let mut cache = SearchCache::new(h.len(), cfg);
    let size = h.layer(start_layer).node_count() as u32;
    Ok(stack.descend(q, start_layer, 0..size, 0, cfg, &[], &mut cache))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopping_rule_substitution() {
        // xi = 0.5 * min(2, 1) = 0.5, threshold 4.5
        assert!(stopping_check(5.0, 4.0, 1.0, 2.0, 0.5));
        assert!(!stopping_check(4.5, 4.0, 1.0, 2.0, 0.5));
        assert!(!stopping_check(4.4, 4.0, 1.0, 2.0, 0.5));
    }

    #[test]
    fn stopping_rule_zero_tau() {
        assert!(stopping_check(4.0001, 4.0, 1.0, 2.0, 0.0));
        assert!(!stopping_check(4.0, 4.0, 1.0, 2.0, 0.0));
    }

    #[test]
    fn stopping_rule_infinite_tau() {
        assert!(!stopping_check(1e30, 4.0, 1.0, 2.0, f32::INFINITY));
        assert!(stopping_check(4.5, 4.0, 0.0, 2.0, f32::INFINITY));
    }

    #[test]
    fn top_k_breaks_ties_by_id() {
        let v = vec![(5, 1.0), (2, 1.0), (9, 0.5), (1, 3.0)];
        assert_eq!(top_k(v, 3), vec![(9, 0.5), (2, 1.0), (5, 1.0)]);
    }
}
