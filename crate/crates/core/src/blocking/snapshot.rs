//! Binary index snapshots.
//!
//! Layout (little endian):
//!
//! ```text
//! magic      8 bytes  "ERLSHIX1"
//! dim k l    u32 ×3
//! radius     u32
//! top_n      u64
//! seed       u64
//! family     u8       0 = regenerate from seed, 1 = explicit normals follow
//! normals    f64 × dim·k·l   (family = 1 only)
//! two_sided  u8
//! entries    u64 count, then per entry: side u8, id length u32, UTF-8 id
//! vectors    f64 × count·dim
//! tables     per table: u64 bucket count, then per bucket:
//!            code u64, member count u64, member indices u64 ×
//! ```
//!
//! Decoding recomputes every code from the stored vectors and rejects
//! snapshots whose buckets disagree.

use std::collections::BTreeMap;

use super::{sample_hyperplanes, HyperplaneFamily, IndexEntry, LshConfig, LshIndex, Side};
use crate::error::{Error, Result};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"ERLSHIX1";

const MAX_DIM: usize = 1 << 16;
const MAX_TABLES: usize = 1 << 12;
const MAX_NORMALS: usize = 1 << 24;

pub fn encode_snapshot(index: &LshIndex) -> Vec<u8> {
    let cfg = index.config();
    let fam = index.family();
    let mut out = Vec::new();
    out.extend_from_slice(SNAPSHOT_MAGIC);
    for v in [fam.dim(), cfg.k, cfg.l, cfg.probe_radius] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&(cfg.top_n as u64).to_le_bytes());
    out.extend_from_slice(&cfg.seed.to_le_bytes());
    match fam.seed() {
        Some(s) if s == cfg.seed => out.push(0),
        _ => {
            out.push(1);
            for x in fam.normals() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    out.push(index.is_two_sided() as u8);
    out.extend_from_slice(&(index.len() as u64).to_le_bytes());
    for e in index.entries() {
        out.push(match e.side {
            Side::Left => 0,
            Side::Right => 1,
        });
        out.extend_from_slice(&(e.id.len() as u32).to_le_bytes());
        out.extend_from_slice(e.id.as_bytes());
    }
    let (tables, vectors) = index.raw_parts();
    for x in vectors {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for table in tables {
        out.extend_from_slice(&(table.len() as u64).to_le_bytes());
        for (code, members) in table {
            out.extend_from_slice(&code.to_le_bytes());
            out.extend_from_slice(&(members.len() as u64).to_le_bytes());
            for m in members {
                out.extend_from_slice(&(*m as u64).to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::format(None, format!("index snapshot: {}", msg.into()))
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(corrupt("truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A count of items each at least `min_size` bytes, bounded by what is
    /// left in the buffer.
    fn count(&mut self, min_size: usize) -> Result<usize> {
        let n = self.u64()?;
        let remaining = (self.buf.len() - self.pos) as u64;
        if n.saturating_mul(min_size.max(1) as u64) > remaining {
            return Err(corrupt("count exceeds remaining data"));
        }
        Ok(n as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if n.checked_mul(8).is_none_or(|b| b > self.buf.len() - self.pos) {
            return Err(corrupt("truncated vector data"));
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<LshIndex> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != SNAPSHOT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let dim = r.u32()? as usize;
    let k = r.u32()? as usize;
    let l = r.u32()? as usize;
    let probe_radius = r.u32()? as usize;
    let top_n = usize::try_from(r.u64()?).map_err(|_| corrupt("top_n out of range"))?;
    let seed = r.u64()?;
    let cfg = LshConfig { k, l, probe_radius, top_n, seed };
    cfg.validate().map_err(|e| corrupt(e.to_string()))?;
    if dim == 0 || dim > MAX_DIM || l > MAX_TABLES || dim * k * l > MAX_NORMALS {
        return Err(corrupt("dimensions out of range"));
    }
    let family = match r.u8()? {
        0 => sample_hyperplanes(dim, k, l, seed)?,
        1 => {
            let n = dim.checked_mul(k).and_then(|x| x.checked_mul(l)).ok_or_else(|| corrupt("family too large"))?;
            let normals = r.f64s(n)?;
            HyperplaneFamily::from_normals(dim, k, l, normals).map_err(|e| corrupt(e.to_string()))?
        }
        other => return Err(corrupt(format!("unknown family kind {other}"))),
    };
    let two_sided = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(corrupt(format!("bad two_sided flag {other}"))),
    };
    let n = r.count(5)?;
    let mut left = Vec::new();
    let mut right = Vec::new();
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let side = match r.u8()? {
            0 => Side::Left,
            1 if two_sided => Side::Right,
            other => return Err(corrupt(format!("bad side tag {other}"))),
        };
        let len = r.u32()? as usize;
        let id = std::str::from_utf8(r.take(len)?).map_err(|_| corrupt("id is not UTF-8"))?.to_owned();
        order.push(IndexEntry { id, side });
    }
    let total = n.checked_mul(dim).ok_or_else(|| corrupt("vector data too large"))?;
    let vectors = r.f64s(total)?;
    if vectors.iter().any(|x| !x.is_finite()) {
        return Err(corrupt("non-finite vector component"));
    }
    // Entries must be stored left side first, matching how indices are built.
    let mut seen_right = false;
    for (e, entry) in order.iter().enumerate() {
        let v = vectors[e * dim..(e + 1) * dim].to_vec();
        match entry.side {
            Side::Left if seen_right => return Err(corrupt("left entry after right entries")),
            Side::Left => left.push((entry.id.clone(), v)),
            Side::Right => {
                seen_right = true;
                right.push((entry.id.clone(), v));
            }
        }
    }
    let index = LshIndex::with_family(family, &left, two_sided.then_some(right.as_slice()), &cfg)?;

    let mut tables = Vec::with_capacity(l);
    for _ in 0..l {
        let nb = r.count(16)?;
        let mut table = BTreeMap::new();
        for _ in 0..nb {
            let code = r.u64()?;
            let m = r.count(8)?;
            let members = (0..m)
                .map(|_| r.u64().map(|x| x as usize))
                .collect::<Result<Vec<usize>>>()?;
            if table.insert(code, members).is_some() {
                return Err(corrupt("duplicate bucket code"));
            }
        }
        tables.push(table);
    }
    if r.pos != bytes.len() {
        return Err(corrupt("trailing bytes"));
    }
    if tables.as_slice() != index.raw_parts().0 {
        return Err(Error::Integrity("snapshot buckets disagree with recomputed codes".into()));
    }
    Ok(index)
}
