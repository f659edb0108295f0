//! Binary container for the fused static map.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fusion::{CellIndex, FusedCell, StaticTerrainMap};

use super::{read_bytes, write_bytes, Reader};

pub const MAGIC: &[u8; 8] = b"TRIPMAP\0";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 56;
pub const RECORD_BYTES: usize = 144;

pub fn encode_map(map: &StaticTerrainMap) -> Vec<u8> {
    let cells = map.cells();
    let mut out = Vec::with_capacity(HEADER_BYTES + cells.len() * RECORD_BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&map.resolution().to_le_bytes());
    out.extend_from_slice(&0f64.to_le_bytes());
    out.extend_from_slice(&0f64.to_le_bytes());
    out.extend_from_slice(&(map.tile_size() as u64).to_le_bytes());
    out.extend_from_slice(&(cells.len() as u64).to_le_bytes());
    for (idx, c) in &cells {
        let o = map.center(*idx);
        out.extend_from_slice(&idx.ix.to_le_bytes());
        out.extend_from_slice(&idx.iy.to_le_bytes());
        for v in [
            o[0],
            o[1],
            c.h_max,
            c.h_min,
            c.n_z,
            c.r_step,
            c.r_incl,
            c.r_coll(),
            c.var_h_max,
            c.var_h_min,
            c.var_n_z,
            c.var_r_step,
            c.var_r_incl,
            c.coll_logodds,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&c.update_count.to_le_bytes());
        out.extend_from_slice(&u64::from(c.last_rejected).to_le_bytes());
    }
    out
}

pub fn decode_map(path: &Path, bytes: &[u8]) -> Result<StaticTerrainMap> {
    let fail = |m: String| Error::format(path, m);
    let truncated = |r: &Reader| fail(format!("truncated map file at offset {}", r.position()));
    let mut r = Reader::new(bytes);
    let magic: [u8; 8] = r.take().ok_or_else(|| truncated(&r))?;
    if &magic != MAGIC {
        return Err(fail("not a terrain map file (bad magic)".into()));
    }
    let version = r.u32().ok_or_else(|| truncated(&r))?;
    if version != VERSION {
        return Err(fail(format!("unsupported map version {version} (expected {VERSION})")));
    }
    r.u32().ok_or_else(|| truncated(&r))?;
    let resolution = r.f64().ok_or_else(|| truncated(&r))?;
    let origin = [
        r.f64().ok_or_else(|| truncated(&r))?,
        r.f64().ok_or_else(|| truncated(&r))?,
    ];
    if origin != [0.0, 0.0] {
        return Err(fail(format!("unsupported lattice origin {origin:?}")));
    }
    let tile_size = r.u64().ok_or_else(|| truncated(&r))? as usize;
    let count = r.u64().ok_or_else(|| truncated(&r))? as usize;
    if r.remaining() != count.saturating_mul(RECORD_BYTES) {
        return Err(fail(format!(
            "expected {count} records ({} bytes) after the header, found {} bytes",
            count.saturating_mul(RECORD_BYTES),
            r.remaining()
        )));
    }
    let mut map = StaticTerrainMap::new(resolution, tile_size).map_err(|e| fail(e.to_string()))?;
    for chunk in bytes[HEADER_BYTES..].chunks_exact(RECORD_BYTES) {
        let mut rec = Reader::new(chunk);
        let ix = rec.i64().expect("record length checked");
        let iy = rec.i64().expect("record length checked");
        let mut f = || rec.f64().expect("record length checked");
        // cell center and realized collision risk are derived quantities
        let (_ox, _oy) = (f(), f());
        let (h_max, h_min, n_z, r_step, r_incl, _r_coll) = (f(), f(), f(), f(), f(), f());
        let (var_h_max, var_h_min, var_n_z, var_r_step, var_r_incl, coll_logodds) = (f(), f(), f(), f(), f(), f());
        let update_count = rec.u64().expect("record length checked");
        let flags = rec.u64().expect("record length checked");
        map.insert(
            CellIndex::new(ix, iy),
            FusedCell {
                h_max,
                var_h_max,
                h_min,
                var_h_min,
                n_z,
                var_n_z,
                r_step,
                var_r_step,
                r_incl,
                var_r_incl,
                coll_logodds,
                update_count,
                last_rejected: flags & 1 == 1,
            },
        );
    }
    Ok(map)
}

pub fn export_map(map: &StaticTerrainMap, path: &Path) -> Result<()> {
    write_bytes(path, &encode_map(map))
}

pub fn import_map(path: &Path) -> Result<StaticTerrainMap> {
    decode_map(path, &read_bytes(path)?)
}
