//! Vector storage and the distance kernel.
//!
//! All distances in this crate are squared Euclidean distances. The argmin of
//! the true Euclidean distance is unchanged, and no square root is needed in
//! the hot loops. Square roots are taken only when reporting.

mod io;
mod synth;

pub use io::{load_ids, load_vectors, write_bvecs, write_fvecs, write_ivecs, VecFormat};
pub use synth::{gen_synthetic, Law};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset not found: {0}")]
    NotFound(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("no records")]
    NoRecords,
    #[error("truncated file at byte offset {offset}")]
    Truncated { offset: u64 },
    #[error("inconsistent dimension at byte offset {offset}: expected {expected}, found {found}")]
    InconsistentDimension { offset: u64, expected: usize, found: i64 },
    #[error("invalid dimension {found} at byte offset {offset}")]
    InvalidDimension { offset: u64, found: i64 },
    #[error("negative index {value} at byte offset {offset}")]
    NegativeIndex { offset: u64, value: i32 },
    #[error("non-finite value at byte offset {offset}")]
    NonFinite { offset: u64 },
    #[error("value {value} at row {row} cannot be stored as a byte")]
    NotAByte { row: usize, value: f32 },
    #[error("invalid shape: {0}")]
    Shape(String),
}

/// A dense, row-major `n x d` set of `f32` vectors addressed by `0..n`.
///
/// Used for both the base set and query sets.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    elements: Vec<f32>,
}

/// Query vectors share the dataset representation.
pub type QuerySet = Dataset;

impl Dataset {
    pub fn new(n: usize, d: usize, elements: Vec<f32>) -> Result<Self, DataError> {
        if n == 0 || d == 0 {
            return Err(DataError::Shape(format!("n={n} d={d}, both must be >= 1")));
        }
        if elements.len() != n * d {
            return Err(DataError::Shape(format!(
                "expected {} elements for {n}x{d}, got {}",
                n * d,
                elements.len()
            )));
        }
        if let Some(pos) = elements.iter().position(|v| !v.is_finite()) {
            return Err(DataError::Shape(format!(
                "non-finite value at row {} column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Self { n, d, elements })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self, DataError> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d) {
            return Err(DataError::Shape("rows have different lengths".into()));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.elements[i * self.d..(i + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.elements
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.elements.chunks_exact(self.d)
    }

    /// Copy of rows `range`, used to carve out shards.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self, DataError> {
        if range.start >= range.end || range.end > self.n {
            return Err(DataError::Shape(format!(
                "row range {range:?} invalid for n={}",
                self.n
            )));
        }
        Ok(Self {
            n: range.len(),
            d: self.d,
            elements: self.elements[range.start * self.d..range.end * self.d].to_vec(),
        })
    }

    /// Copy of the listed rows in the given order.
    pub fn select(&self, ids: &[usize]) -> Result<Self, DataError> {
        let mut elements = Vec::with_capacity(ids.len() * self.d);
        for &i in ids {
            if i >= self.n {
                return Err(DataError::Shape(format!("row {i} out of range")));
            }
            elements.extend_from_slice(self.row(i));
        }
        Self::new(ids.len(), self.d, elements)
    }
}

/// Squared Euclidean distance, accumulated in `f64`.
///
/// This is the only metric entry point; every distance in the crate goes
/// through here.
#[inline]
pub fn distance(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for j in 0..4 {
            let t = f64::from(x[j]) - f64::from(y[j]);
            acc[j] += t * t;
        }
    }
    let mut tail = 0.0f64;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        let t = f64::from(*x) - f64::from(*y);
        tail += t * t;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3]) + tail) as f32
}
