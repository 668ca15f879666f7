use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::rng::{stream_rng, STREAM_SYNTH};

/// Distribution for synthetic datasets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Law {
    /// Coordinates uniform in `[0, 1)`.
    Uniform,
    /// Coordinates standard normal.
    Gaussian,
    /// `c` centers drawn from `N(0, 10^2)` per coordinate, points `N(center, 1)`.
    Clustered(usize),
}

const CENTER_SPREAD: f32 = 10.0;

/// Deterministic for a fixed `(n, d, seed, law)`.
pub fn gen_synthetic(n: usize, d: usize, seed: u64, law: Law) -> Dataset {
    assert!(n >= 1 && d >= 1, "n and d must be >= 1");
    let mut rng = stream_rng(seed, STREAM_SYNTH);
    let normal = |rng: &mut rand_chacha::ChaCha8Rng| -> f32 { StandardNormal.sample(rng) };
    let elements: Vec<f32> = match law {
        Law::Uniform => (0..n * d).map(|_| rng.random::<f32>()).collect(),
        Law::Gaussian => (0..n * d).map(|_| normal(&mut rng)).collect(),
        Law::Clustered(c) => {
            let c = c.max(1);
            let centers: Vec<f32> = (0..c * d)
                .map(|_| CENTER_SPREAD * normal(&mut rng))
                .collect();
            let mut out = Vec::with_capacity(n * d);
            for _ in 0..n {
                let k = rng.random_range(0..c);
                for j in 0..d {
                    out.push(centers[k * d + j] + normal(&mut rng));
                }
            }
            out
        }
    };
    Dataset::new(n, d, elements).expect("generated data is finite and well-shaped")
}
