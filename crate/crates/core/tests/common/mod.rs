#![allow(dead_code)]

use std::path::PathBuf;

use ggnn::data::{load_ids, load_vectors, Dataset, VecFormat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub struct Benchmark {
    pub name: &'static str,
    pub base: Dataset,
    pub queries: Dataset,
    /// Published ground truth, present only for the real files.
    pub published_gt: Option<Vec<Vec<u32>>>,
}

/// The siftsmall files from `GGNN_SIFTSMALL_DIR`, if set and readable.
pub fn siftsmall() -> Option<Benchmark> {
    let dir = PathBuf::from(std::env::var_os("GGNN_SIFTSMALL_DIR")?);
    let base = load_vectors(dir.join("siftsmall_base.fvecs"), VecFormat::Fvecs).ok()?;
    let queries = load_vectors(dir.join("siftsmall_query.fvecs"), VecFormat::Fvecs).ok()?;
    let gt = load_ids(dir.join("siftsmall_groundtruth.ivecs")).ok()?;
    Some(Benchmark {
        name: "siftsmall",
        base,
        queries,
        published_gt: Some(gt),
    })
}

/// SIFT-shaped stand-in: 10k base and 100 query points in 128-d, drawn from
/// a 32-component Gaussian mixture on a 16-d latent space, mapped linearly
/// to 128-d with small isotropic noise and clamped to non-negative values.
/// Cluster centers have the same spread as the clusters themselves.
pub fn surrogate() -> Benchmark {
    surrogate_with(1.0)
}

/// Surrogate whose cluster centers are drawn with standard deviation
/// `spread` (in units of the within-cluster deviation).
pub fn surrogate_with(spread: f64) -> Benchmark {
    let (n, nq, d, latent, clusters) = (10_000, 100, 128, 16, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_51F7);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let centers: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..latent).map(|_| spread * normal(&mut rng)).collect())
        .collect();
    let map: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..latent).map(|_| 4.0 * normal(&mut rng)).collect())
        .collect();
    let draw = |count: usize, rng: &mut ChaCha8Rng| -> Dataset {
        let mut out = Vec::with_capacity(count * d);
        for _ in 0..count {
            let c = &centers[rng.random_range(0..clusters)];
            let z: Vec<f64> = c.iter().map(|&m| m + normal(rng)).collect();
            for row in &map {
                let v: f64 = row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + 40.0 + 2.0 * normal(rng);
                out.push(v.max(0.0).round() as f32);
            }
        }
        Dataset::new(count, d, out).unwrap()
    };
    let base = draw(n, &mut rng);
    let queries = draw(nq, &mut rng);
    Benchmark {
        name: "sift-like surrogate",
        base,
        queries,
        published_gt: None,
    }
}

/// siftsmall when available, otherwise the surrogate.
pub fn benchmark() -> Benchmark {
    siftsmall().unwrap_or_else(surrogate)
}
