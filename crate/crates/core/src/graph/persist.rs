//! Binary index file.
//!
//! Layout (all little-endian):
//!
//! ```text
//! "GGNN" | version u32 | flags u32 | n d l s g k k_nn k_sym      (ints)
//! sections, each: tag [4] | byte length u64 | payload
//!   CONF  build configuration as JSON
//!   LAYR  one per layer: node_count, adjacency, nn_dists (f32),
//!         sym_count, d_nn1 (f32)
//!   TRAN  one per coarse layer: node_count, ids in the next finer layer
//!   STAT  d_nn1_mean f32, d_nn1_max f32
//! crc32 u32 over every preceding byte
//! ```
//!
//! "ints" are `u32`, or `u64` when flag bit 0 is set (counts above 2^31).
//! Empty slots are stored as the all-ones value of the int width.

use std::path::Path;

use super::{AdjacencyLayer, Geometry, GraphError, GraphStats, Hierarchy, EMPTY};
use crate::config::BuildConfig;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"GGNN";
const FLAG_WIDE: u32 = 1;

struct Writer {
    buf: Vec<u8>,
    wide: bool,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn int(&mut self, v: usize) {
        if self.wide {
            self.buf.extend_from_slice(&(v as u64).to_le_bytes());
        } else {
            self.u32(v as u32);
        }
    }

    fn id(&mut self, id: u32) {
        if id == EMPTY && self.wide {
            self.buf.extend_from_slice(&u64::MAX.to_le_bytes());
        } else {
            self.int(id as usize);
        }
    }

    fn f32s(&mut self, vals: &[f32]) {
        for v in vals {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn section(&mut self, tag: &[u8; 4], body: impl FnOnce(&mut Writer)) {
        self.buf.extend_from_slice(tag);
        let len_at = self.buf.len();
        self.buf.extend_from_slice(&0u64.to_le_bytes());
        let start = self.buf.len();
        body(self);
        let len = (self.buf.len() - start) as u64;
        self.buf[len_at..len_at + 8].copy_from_slice(&len.to_le_bytes());
    }
}

/// Serializes a hierarchy into the index byte layout.
pub fn encode_index(h: &Hierarchy) -> Vec<u8> {
    let wide = h.n > i32::MAX as usize;
    let mut w = Writer { buf: Vec::new(), wide };
    w.buf.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    w.u32(if wide { FLAG_WIDE } else { 0 });
    let geo = h.geometry;
    let top = h.bottom();
    for v in [h.n, h.dim, geo.l, geo.s, geo.g, top.k(), top.k_nn(), top.k_sym()] {
        w.int(v);
    }
    let conf = serde_json::to_vec(&h.config).expect("config serializes");
    w.section(b"CONF", |w| w.buf.extend_from_slice(&conf));
    for layer in &h.layers {
        w.section(b"LAYR", |w| {
            w.int(layer.node_count());
            for id in layer.adjacency_raw() {
                w.id(id);
            }
            w.f32s(layer.nn_dists_raw());
            for c in layer.sym_counts_raw() {
                w.int(c as usize);
            }
            w.f32s(layer.d_nn1_all());
        });
    }
    for map in &h.to_finer {
        w.section(b"TRAN", |w| {
            w.int(map.len());
            for &id in map {
                w.id(id);
            }
        });
    }
    w.section(b"STAT", |w| w.f32s(&[h.stats.d_nn1_mean, h.stats.d_nn1_max]));
    let crc = crc32fast::hash(&w.buf);
    w.u32(crc);
    w.buf
}

pub fn save_index(h: &Hierarchy, path: impl AsRef<Path>) -> Result<(), GraphError> {
    std::fs::write(path, encode_index(h))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    wide: bool,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], GraphError> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(GraphError::Truncated { offset: self.pos });
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, GraphError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, GraphError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn int(&mut self) -> Result<usize, GraphError> {
        let v = if self.wide { self.u64()? } else { u64::from(self.u32()?) };
        usize::try_from(v).map_err(|_| GraphError::Corrupt(format!("count {v} too large")))
    }

    fn id(&mut self) -> Result<u32, GraphError> {
        let (v, empty) = if self.wide {
            (self.u64()?, u64::MAX)
        } else {
            (u64::from(self.u32()?), u64::from(u32::MAX))
        };
        match v {
            v if v == empty => Ok(EMPTY),
            v if v < u64::from(EMPTY) => Ok(v as u32),
            v => Err(GraphError::Corrupt(format!("id {v} out of range"))),
        }
    }

    fn f32s(&mut self, count: usize) -> Result<Vec<f32>, GraphError> {
        let raw = self.take(count.checked_mul(4).ok_or(GraphError::Truncated { offset: self.pos })?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    /// Opens a section with the expected tag and returns a reader bounded
    /// to its declared length.
    fn section(&mut self, tag: &[u8; 4]) -> Result<Reader<'a>, GraphError> {
        let at = self.pos;
        if self.take(4)? != tag {
            return Err(GraphError::Corrupt(format!(
                "expected section {} at byte offset {at}",
                String::from_utf8_lossy(tag)
            )));
        }
        let len = usize::try_from(self.u64()?)
            .map_err(|_| GraphError::Corrupt("section length overflow".into()))?;
        let body_start = self.pos;
        let body = self.take(len)?;
        Ok(Reader {
            bytes: &self.bytes[..body_start + body.len()],
            pos: body_start,
            wide: self.wide,
        })
    }

    fn finish(&self, tag: &str) -> Result<(), GraphError> {
        if self.pos != self.bytes.len() {
            return Err(GraphError::Corrupt(format!("section {tag} length mismatch")));
        }
        Ok(())
    }
}

/// Parses the index byte layout.
pub fn decode_index(bytes: &[u8]) -> Result<Hierarchy, GraphError> {
    if bytes.len() < 4 {
        return Err(GraphError::Truncated { offset: bytes.len() });
    }
    if &bytes[..4] != MAGIC {
        return Err(GraphError::BadMagic);
    }
    let mut r = Reader { bytes, pos: 4, wide: false };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(GraphError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < 16 {
        return Err(GraphError::Truncated { offset: bytes.len() });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
        return Err(GraphError::Checksum);
    }
    let mut r = Reader { bytes: body, pos: 8, wide: false };
    r.wide = r.u32()? & FLAG_WIDE != 0;
    let mut header = [0usize; 8];
    for v in &mut header {
        *v = r.int()?;
    }
    let [n, dim, l, s, g, k, k_nn, k_sym] = header;
    if k_nn == 0 || k != k_nn + k_sym || l == 0 {
        return Err(GraphError::Corrupt("inconsistent header".into()));
    }

    let conf = r.section(b"CONF")?;
    let config: BuildConfig = serde_json::from_slice(&conf.bytes[conf.pos..])
        .map_err(|e| GraphError::Corrupt(format!("config section: {e}")))?;

    let mut layers = Vec::with_capacity(l);
    for _ in 0..l {
        let mut sec = r.section(b"LAYR")?;
        let count = sec.int()?;
        let slots = count
            .checked_mul(k)
            .ok_or_else(|| GraphError::Corrupt("layer size overflow".into()))?;
        if slots > sec.bytes.len() {
            return Err(GraphError::Truncated { offset: sec.pos });
        }
        let adjacency = (0..slots).map(|_| sec.id()).collect::<Result<Vec<_>, _>>()?;
        let nn_dists = sec.f32s(count * k_nn)?;
        let sym_count = (0..count)
            .map(|_| sec.int().map(|c| c as u32))
            .collect::<Result<Vec<_>, _>>()?;
        let d_nn1 = sec.f32s(count)?;
        sec.finish("LAYR")?;
        layers.push(AdjacencyLayer::from_parts(
            count, k_nn, k_sym, adjacency, nn_dists, sym_count, d_nn1,
        )?);
    }
    let mut to_finer = Vec::with_capacity(l - 1);
    for _ in 1..l {
        let mut sec = r.section(b"TRAN")?;
        let count = sec.int()?;
        if count > sec.bytes.len() {
            return Err(GraphError::Truncated { offset: sec.pos });
        }
        to_finer.push((0..count).map(|_| sec.id()).collect::<Result<Vec<_>, _>>()?);
        sec.finish("TRAN")?;
    }
    let mut sec = r.section(b"STAT")?;
    let st = sec.f32s(2)?;
    sec.finish("STAT")?;
    if r.pos != body.len() {
        return Err(GraphError::Corrupt("trailing bytes before checksum".into()));
    }
    let stats = GraphStats {
        d_nn1_mean: st[0],
        d_nn1_max: st[1],
    };
    let geometry = Geometry::plan(n, s, g)
        .filter(|geo| geo.l == l)
        .ok_or_else(|| GraphError::Corrupt("geometry does not match n, s, g".into()))?;
    Hierarchy::from_parts(n, dim, layers, to_finer, geometry, stats, config)
}

pub fn load_index(path: impl AsRef<Path>) -> Result<Hierarchy, GraphError> {
    decode_index(&std::fs::read(path)?)
}
