//! TexMex `fvecs` / `bvecs` / `ivecs` readers and writers.
//!
//! Every record is a little-endian `i32` length followed by that many
//! `f32`, `u8` or `i32` values.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VecFormat {
    Fvecs,
    Bvecs,
}

impl VecFormat {
    fn elem_size(self) -> usize {
        match self {
            VecFormat::Fvecs => 4,
            VecFormat::Bvecs => 1,
        }
    }
}

impl std::str::FromStr for VecFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fvecs" => Ok(VecFormat::Fvecs),
            "bvecs" => Ok(VecFormat::Bvecs),
            other => Err(format!("unknown vector format {other:?}")),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    match std::fs::read(path) {
        Ok(bytes) => Ok(bytes),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(DataError::NotFound(path.display().to_string()))
        }
        Err(e) => Err(e.into()),
    }
}

/// Walks the records of a TexMex file, yielding `(offset, dim, payload)`.
///
/// All records must share the dimension of the first one.
fn records(
    bytes: &[u8],
    elem_size: usize,
) -> Result<(usize, Vec<(u64, &[u8])>), DataError> {
    if bytes.is_empty() {
        return Err(DataError::NoRecords);
    }
    let mut out = Vec::new();
    let mut pos = 0usize;
    let mut dim: Option<usize> = None;
    while pos < bytes.len() {
        let offset = pos as u64;
        let Some(head) = bytes.get(pos..pos + 4) else {
            return Err(DataError::Truncated { offset });
        };
        let found = i32::from_le_bytes(head.try_into().unwrap()) as i64;
        if found <= 0 {
            return Err(DataError::InvalidDimension { offset, found });
        }
        match dim {
            None => dim = Some(found as usize),
            Some(expected) if expected as i64 != found => {
                return Err(DataError::InconsistentDimension {
                    offset,
                    expected,
                    found,
                })
            }
            _ => {}
        }
        let len = found as usize * elem_size;
        let Some(payload) = bytes.get(pos + 4..pos + 4 + len) else {
            return Err(DataError::Truncated { offset });
        };
        out.push((offset + 4, payload));
        pos += 4 + len;
    }
    Ok((dim.unwrap_or(0), out))
}

pub fn load_vectors(path: impl AsRef<Path>, format: VecFormat) -> Result<Dataset, DataError> {
    let bytes = read_file(path.as_ref())?;
    let (d, recs) = records(&bytes, format.elem_size())?;
    let mut elements = Vec::with_capacity(recs.len() * d);
    for (offset, payload) in &recs {
        match format {
            VecFormat::Fvecs => {
                for (j, c) in payload.chunks_exact(4).enumerate() {
                    let v = f32::from_le_bytes(c.try_into().unwrap());
                    if !v.is_finite() {
                        return Err(DataError::NonFinite {
                            offset: offset + 4 * j as u64,
                        });
                    }
                    elements.push(v);
                }
            }
            VecFormat::Bvecs => elements.extend(payload.iter().map(|&b| f32::from(b))),
        }
    }
    Dataset::new(recs.len(), d, elements)
}

/// Reads an `ivecs` id table, one row per record.
pub fn load_ids(path: impl AsRef<Path>) -> Result<Vec<Vec<u32>>, DataError> {
    let bytes = read_file(path.as_ref())?;
    let (_, recs) = records(&bytes, 4)?;
    recs.iter()
        .map(|(offset, payload)| {
            payload
                .chunks_exact(4)
                .enumerate()
                .map(|(j, c)| {
                    let value = i32::from_le_bytes(c.try_into().unwrap());
                    u32::try_from(value).map_err(|_| DataError::NegativeIndex {
                        offset: offset + 4 * j as u64,
                        value,
                    })
                })
                .collect()
        })
        .collect()
}

fn dim_header(d: usize) -> Result<[u8; 4], DataError> {
    i32::try_from(d)
        .map(i32::to_le_bytes)
        .map_err(|_| DataError::Shape(format!("dimension {d} does not fit an i32 header")))
}

pub fn write_fvecs(path: impl AsRef<Path>, data: &Dataset) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    let head = dim_header(data.dim())?;
    for row in data.rows() {
        w.write_all(&head)?;
        for v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes byte vectors; every element must be an integer in `0..=255`.
pub fn write_bvecs(path: impl AsRef<Path>, data: &Dataset) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    let head = dim_header(data.dim())?;
    for (row, values) in data.rows().enumerate() {
        w.write_all(&head)?;
        let mut buf = Vec::with_capacity(values.len());
        for &value in values {
            if !(0.0..=255.0).contains(&value) || value.fract() != 0.0 {
                return Err(DataError::NotAByte { row, value });
            }
            buf.push(value as u8);
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ivecs(path: impl AsRef<Path>, rows: &[Vec<u32>]) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in rows {
        w.write_all(&dim_header(row.len())?)?;
        for &id in row {
            let v = i32::try_from(id)
                .map_err(|_| DataError::Shape(format!("id {id} does not fit an i32")))?;
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}
