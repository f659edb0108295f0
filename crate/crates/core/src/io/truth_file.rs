//! Binary container for ground-truth grids.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::sim::GroundTruthGrid;

use super::{read_bytes, write_bytes, Reader};

pub const MAGIC: &[u8; 8] = b"TRIPGT\0\0";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 56;
pub const CELL_BYTES: usize = 9;

pub fn encode_truth(gt: &GroundTruthGrid) -> Vec<u8> {
    let s = &gt.spec;
    let mut out = Vec::with_capacity(HEADER_BYTES + s.len() * CELL_BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for v in [s.resolution, s.origin[0], s.origin[1]] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(s.cols as u64).to_le_bytes());
    out.extend_from_slice(&(s.rows as u64).to_le_bytes());
    for (h, c) in gt.h_max.iter().zip(&gt.collision) {
        out.extend_from_slice(&h.unwrap_or(f64::NAN).to_le_bytes());
        out.push(u8::from(*c));
    }
    out
}

pub fn decode_truth(path: &Path, bytes: &[u8]) -> Result<GroundTruthGrid> {
    let fail = |m: String| Error::format(path, m);
    let mut r = Reader::new(bytes);
    let header = (|| {
        let magic: [u8; 8] = r.take()?;
        let version = r.u32()?;
        r.u32()?;
        Some((magic, version, r.f64()?, [r.f64()?, r.f64()?], r.u64()?, r.u64()?))
    })();
    let Some((magic, version, resolution, origin, cols, rows)) = header else {
        return Err(fail("truncated ground-truth header".into()));
    };
    if &magic != MAGIC {
        return Err(fail("not a ground-truth file (bad magic)".into()));
    }
    if version != VERSION {
        return Err(fail(format!(
            "unsupported ground-truth version {version} (expected {VERSION})"
        )));
    }
    let spec = GridSpec::new(resolution, cols as usize, rows as usize, origin).map_err(|e| fail(e.to_string()))?;
    if r.remaining() != spec.len() * CELL_BYTES {
        return Err(fail(format!(
            "expected {} cell bytes, found {}",
            spec.len() * CELL_BYTES,
            r.remaining()
        )));
    }
    let mut h_max = Vec::with_capacity(spec.len());
    let mut collision = Vec::with_capacity(spec.len());
    for _ in 0..spec.len() {
        let h = r.f64().expect("length checked");
        h_max.push((!h.is_nan()).then_some(h));
        collision.push(r.u8().expect("length checked") != 0);
    }
    Ok(GroundTruthGrid { spec, h_max, collision })
}

pub fn write_truth(gt: &GroundTruthGrid, path: &Path) -> Result<()> {
    write_bytes(path, &encode_truth(gt))
}

pub fn read_truth(path: &Path) -> Result<GroundTruthGrid> {
    decode_truth(path, &read_bytes(path)?)
}
