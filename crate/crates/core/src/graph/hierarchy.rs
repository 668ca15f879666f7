use serde::{Deserialize, Serialize};

use super::{AdjacencyLayer, GraphError, EMPTY};
use crate::config::BuildConfig;
use crate::data::{distance, Dataset};

/// Tree shape of a hierarchy.
///
/// The bottom layer is split into `b = g^(l-1)` batches, the largest power of
/// `g` for which `b * s <= n`, so batches hold `floor(n/b)` or `ceil(n/b)`
/// points. Layer `i >= 1` holds `b / g^i` segments of exactly `s` points; the
/// top layer is a single segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub s: usize,
    pub g: usize,
    pub l: usize,
    pub b: usize,
}

impl Geometry {
    pub fn plan(n: usize, s: usize, g: usize) -> Option<Self> {
        if s == 0 || g < 2 || n < s {
            return None;
        }
        let (mut b, mut l) = (1usize, 1usize);
        while let Some(next) = b.checked_mul(g) {
            if next.checked_mul(s).is_none_or(|pts| pts > n) {
                break;
            }
            b = next;
            l += 1;
        }
        Some(Self { s, g, l, b })
    }

    /// Number of segments in layer `i` (batches for the bottom layer).
    pub fn segments(&self, i: usize) -> usize {
        self.b / self.g.pow(i as u32)
    }

    pub fn layer_size(&self, n: usize, i: usize) -> usize {
        if i == 0 {
            n
        } else {
            self.segments(i) * self.s
        }
    }

    /// Bottom batch sizes, remainder spread over the first batches.
    pub fn batch_sizes(&self, n: usize) -> Vec<usize> {
        let (q, r) = (n / self.b, n % self.b);
        (0..self.b).map(|i| q + usize::from(i < r)).collect()
    }
}

/// Squared nearest-neighbor distance statistics of the bottom layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub d_nn1_mean: f32,
    /// Global bound used by the stopping rule.
    pub d_nn1_max: f32,
}

impl GraphStats {
    /// Statistics over nodes whose first direct slot is filled.
    pub fn from_layer(layer: &AdjacencyLayer) -> Self {
        let mut sum = 0.0f64;
        let mut max = 0.0f32;
        let mut count = 0usize;
        for &d in layer.d_nn1_all().iter().filter(|d| d.is_finite()) {
            sum += f64::from(d);
            max = max.max(d);
            count += 1;
        }
        let mean = if count == 0 { 0.0 } else { (sum / count as f64) as f32 };
        Self {
            d_nn1_mean: mean.min(max),
            d_nn1_max: max,
        }
    }
}

/// Resolves layer-local ids to dataset vectors.
#[derive(Clone, Copy)]
pub struct LayerPoints<'a> {
    data: &'a Dataset,
    to_bottom: Option<&'a [u32]>,
}

impl<'a> LayerPoints<'a> {
    pub fn new(data: &'a Dataset, to_bottom: Option<&'a [u32]>) -> Self {
        Self { data, to_bottom }
    }

    #[inline]
    pub fn bottom_id(&self, id: u32) -> u32 {
        match self.to_bottom {
            Some(map) => map[id as usize],
            None => id,
        }
    }

    #[inline]
    pub fn vector(&self, id: u32) -> &'a [f32] {
        self.data.row(self.bottom_id(id) as usize)
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }
}

/// The built search structure: a stack of layers over one dataset.
///
/// Layer 0 is the full dataset, indexed by dataset id. Every coarser layer
/// is a subset of the layer below it; `to_finer` maps its local ids one
/// level down and `to_bottom` straight to dataset ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Hierarchy {
    pub(crate) n: usize,
    pub(crate) dim: usize,
    pub(crate) layers: Vec<AdjacencyLayer>,
    pub(crate) to_finer: Vec<Vec<u32>>,
    pub(crate) to_bottom: Vec<Vec<u32>>,
    pub(crate) geometry: Geometry,
    pub(crate) stats: GraphStats,
    pub(crate) config: BuildConfig,
}

impl Hierarchy {
    /// Assembles a hierarchy, deriving dataset-id translations from the
    /// per-level maps.
    pub fn from_parts(
        n: usize,
        dim: usize,
        layers: Vec<AdjacencyLayer>,
        to_finer: Vec<Vec<u32>>,
        geometry: Geometry,
        stats: GraphStats,
        config: BuildConfig,
    ) -> Result<Self, GraphError> {
        if layers.is_empty() || layers.len() != geometry.l || to_finer.len() + 1 != layers.len() {
            return Err(GraphError::Corrupt("layer count disagrees with geometry".into()));
        }
        if layers[0].node_count() != n {
            return Err(GraphError::Corrupt("bottom layer size != n".into()));
        }
        let mut to_bottom: Vec<Vec<u32>> = Vec::with_capacity(to_finer.len());
        for (i, map) in to_finer.iter().enumerate() {
            let finer = layers[i].node_count();
            if map.len() != layers[i + 1].node_count() {
                return Err(GraphError::Corrupt(format!("translation {i} has wrong length")));
            }
            let mut seen = vec![false; finer];
            for &id in map {
                if id as usize >= finer || std::mem::replace(&mut seen[id as usize], true) {
                    return Err(GraphError::Corrupt(format!(
                        "translation {i} is not an injective map into layer {i}"
                    )));
                }
            }
            let composed = match i.checked_sub(1) {
                None => map.clone(),
                Some(prev) => map.iter().map(|&id| to_bottom[prev][id as usize]).collect(),
            };
            to_bottom.push(composed);
        }
        Ok(Self {
            n,
            dim,
            layers,
            to_finer,
            to_bottom,
            geometry,
            stats,
            config,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[AdjacencyLayer] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &AdjacencyLayer {
        &self.layers[i]
    }

    pub fn bottom(&self) -> &AdjacencyLayer {
        &self.layers[0]
    }

    pub fn top_index(&self) -> usize {
        self.layers.len() - 1
    }

    /// Layer-local id to dataset id map; `None` for the bottom layer.
    pub fn translation(&self, layer: usize) -> Option<&[u32]> {
        layer.checked_sub(1).map(|i| self.to_bottom[i].as_slice())
    }

    /// Layer-local id to next-finer-layer id; `None` for the bottom layer.
    pub fn to_finer(&self, layer: usize) -> Option<&[u32]> {
        layer.checked_sub(1).map(|i| self.to_finer[i].as_slice())
    }

    pub fn points<'a>(&'a self, data: &'a Dataset, layer: usize) -> LayerPoints<'a> {
        LayerPoints::new(data, self.translation(layer))
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn stats(&self) -> GraphStats {
        self.stats
    }

    pub fn config(&self) -> &BuildConfig {
        &self.config
    }

    /// Mean number of used inverse slots on the bottom layer.
    pub fn mean_sym_usage(&self) -> f64 {
        let b = self.bottom();
        b.sym_counts_raw().iter().map(|&c| c as f64).sum::<f64>() / b.node_count() as f64
    }

    /// Full structural check against the dataset the index was built on.
    ///
    /// Verifies slot invariants on every layer, that stored direct distances
    /// equal recomputed ones, translation injectivity, and the stats bound.
    pub fn check_invariants(&self, data: &Dataset) -> Result<(), String> {
        if data.len() != self.n || data.dim() != self.dim {
            return Err("dataset shape does not match index".into());
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.check_invariants().map_err(|e| format!("layer {i}: {e}"))?;
            let points = self.points(data, i);
            for node in 0..layer.node_count() as u32 {
                for (id, d) in layer.direct(node) {
                    let fresh = distance(points.vector(node), points.vector(id));
                    if fresh.to_bits() != d.to_bits() {
                        return Err(format!(
                            "layer {i} node {node}: stored distance {d} to {id} != {fresh}"
                        ));
                    }
                }
            }
        }
        for (i, map) in self.to_bottom.iter().enumerate() {
            let mut ids = map.clone();
            ids.sort_unstable();
            ids.dedup();
            if ids.len() != map.len() || ids.iter().any(|&id| id as usize >= self.n || id == EMPTY) {
                return Err(format!("translation of layer {} not injective", i + 1));
            }
        }
        let bottom = self.bottom();
        for node in 0..bottom.node_count() as u32 {
            let d = bottom.d_nn1(node);
            if d.is_finite() && d > self.stats.d_nn1_max {
                return Err(format!("d_nn1 of {node} exceeds d_nn1_max"));
            }
        }
        if self.stats.d_nn1_mean > self.stats.d_nn1_max || self.stats.d_nn1_mean < 0.0 {
            return Err("d_nn1 mean/max out of order".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_examples() {
        let g = Geometry::plan(2048, 32, 4).unwrap();
        assert_eq!((g.b, g.l), (64, 4));
        let sizes: Vec<usize> = (0..g.l).map(|i| g.layer_size(2048, i)).collect();
        assert_eq!(sizes, vec![2048, 512, 128, 32]);

        let one = Geometry::plan(32, 32, 4).unwrap();
        assert_eq!((one.b, one.l), (1, 1));

        let sift = Geometry::plan(10_000, 32, 4).unwrap();
        assert_eq!((sift.b, sift.l), (256, 5));
        let batches = sift.batch_sizes(10_000);
        assert_eq!(batches.iter().sum::<usize>(), 10_000);
        assert!(batches.iter().all(|&b| b == 39 || b == 40));
        assert_eq!(batches[0], 40);

        assert!(Geometry::plan(31, 32, 4).is_none());
    }

    #[test]
    fn stats_of_grid() {
        let mut layer = AdjacencyLayer::new(3, 1, 0);
        layer.insert_nn(0, 1, 1.0).unwrap();
        layer.insert_nn(1, 0, 1.0).unwrap();
        layer.insert_nn(2, 1, 4.0).unwrap();
        let s = GraphStats::from_layer(&layer);
        assert_eq!(s.d_nn1_max, 4.0);
        assert_eq!(s.d_nn1_mean, 2.0);
    }
}
