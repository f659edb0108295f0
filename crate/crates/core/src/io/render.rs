//! Layer rendering to binary PPM (`P6`), one pixel per cell, north up.
//!
//! Risk layers go through [`PALETTE`], a 256-entry ramp from yellow
//! (no risk) through orange, green, blue and purple to black (full risk).
//! Verticality is drawn as `1 − n_z` on the same ramp. Heights are drawn in
//! grayscale between the populated minimum and maximum, which are written to
//! a sidecar text file. Empty cells are white.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::LazyLock;

use crate::error::{Error, Result};
use crate::fusion::{MapSnapshot, SnapshotCell};

use super::write_bytes;

const STOPS: [[f64; 3]; 6] = [
    [255.0, 230.0, 0.0],
    [255.0, 140.0, 0.0],
    [40.0, 170.0, 60.0],
    [30.0, 80.0, 220.0],
    [120.0, 40.0, 160.0],
    [0.0, 0.0, 0.0],
];

pub static PALETTE: LazyLock<[[u8; 3]; 256]> = LazyLock::new(|| {
    let mut table = [[0u8; 3]; 256];
    for (i, entry) in table.iter_mut().enumerate() {
        let t = i as f64 / 255.0 * (STOPS.len() - 1) as f64;
        let k = (t.floor() as usize).min(STOPS.len() - 2);
        let f = t - k as f64;
        for c in 0..3 {
            entry[c] = (STOPS[k][c] + f * (STOPS[k + 1][c] - STOPS[k][c])).round() as u8;
        }
    }
    table
});

const EMPTY: [u8; 3] = [255, 255, 255];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    HMax,
    RStep,
    RIncl,
    RColl,
    NZ,
}

impl Layer {
    pub const ALL: [Layer; 5] = [Layer::HMax, Layer::RStep, Layer::RIncl, Layer::RColl, Layer::NZ];

    pub fn name(self) -> &'static str {
        match self {
            Layer::HMax => "h_max",
            Layer::RStep => "r_step",
            Layer::RIncl => "r_incl",
            Layer::RColl => "r_coll",
            Layer::NZ => "n_z",
        }
    }

    fn risk(self, c: &SnapshotCell) -> f64 {
        match self {
            Layer::HMax => c.h_max,
            Layer::RStep => c.r_step,
            Layer::RIncl => c.r_incl,
            Layer::RColl => c.r_coll,
            Layer::NZ => 1.0 - c.n_z,
        }
    }
}

impl FromStr for Layer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Layer::ALL.into_iter().find(|l| l.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown layer '{s}' (expected h_max, r_step, r_incl, r_coll or n_z)"
            ))
        })
    }
}

pub fn risk_color(r: f64) -> [u8; 3] {
    PALETTE[(r.clamp(0.0, 1.0) * 255.0).round() as usize]
}

/// Rendered image bytes and, for the height layer, its `(min, max)` range.
pub fn render_layer(map: &MapSnapshot, layer: Layer) -> (Vec<u8>, Option<(f64, f64)>) {
    let spec = &map.spec;
    let range = (layer == Layer::HMax).then(|| {
        map.cells
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                (lo.min(c.h_max), hi.max(c.h_max))
            })
    });
    let mut out = format!("P6\n{} {}\n255\n", spec.cols, spec.rows).into_bytes();
    for iy in (0..spec.rows).rev() {
        for ix in 0..spec.cols {
            let px = match map.get(ix, iy) {
                None => EMPTY,
                Some(c) => match range {
                    Some((lo, hi)) => {
                        let g = if hi > lo {
                            ((c.h_max - lo) / (hi - lo) * 255.0).round() as u8
                        } else {
                            0
                        };
                        [g, g, g]
                    }
                    None => risk_color(layer.risk(c)),
                },
            };
            out.extend_from_slice(&px);
        }
    }
    (out, range.filter(|(lo, hi)| lo <= hi))
}

/// Path of the height-range sidecar for an image path.
pub fn sidecar_path(image: &Path) -> PathBuf {
    image.with_extension("txt")
}

pub fn write_layer(map: &MapSnapshot, layer: Layer, path: &Path) -> Result<()> {
    let (image, range) = render_layer(map, layer);
    write_bytes(path, &image)?;
    if layer == Layer::HMax {
        let text = match range {
            Some((lo, hi)) => format!("layer=h_max\nmin={lo}\nmax={hi}\n"),
            None => "layer=h_max\nempty=true\n".to_string(),
        };
        write_bytes(&sidecar_path(path), text.as_bytes())?;
    }
    Ok(())
}
