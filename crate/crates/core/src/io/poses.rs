//! Pose files: one pose per line, twelve whitespace-separated reals forming
//! the row-major 3×4 matrix `[R | t]`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{nearest_rotation, orthonormality_error, Pose};

use super::{read_bytes, write_bytes};

/// Largest `|RᵀR − I|` entry accepted before projection onto a rotation.
pub const MAX_DRIFT: f64 = 1e-2;

pub fn parse_poses(path: &Path, text: &str) -> Result<Vec<Pose>> {
    let mut poses = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 12 {
            return Err(Error::format(
                path,
                format!("line {line_no}: expected 12 fields, found {}", fields.len()),
            ));
        }
        let mut v = [0.0; 12];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::format(path, format!("line {line_no}: invalid number '{f}'")))?;
        }
        let r = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        let t = Vector3::new(v[3], v[7], v[11]);
        let drift = orthonormality_error(&r);
        if drift > MAX_DRIFT || r.determinant() <= 0.0 {
            return Err(Error::format(
                path,
                format!("line {line_no}: rotation is not orthonormal (drift {drift:.3e})"),
            ));
        }
        let r = if drift > 1e-12 { nearest_rotation(&r) } else { r };
        poses.push(Pose::new(r, t).map_err(|e| Error::format(path, format!("line {line_no}: {e}")))?);
    }
    Ok(poses)
}

pub fn read_poses(path: &Path) -> Result<Vec<Pose>> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::format(path, "pose file is not UTF-8"))?;
    parse_poses(path, &text)
}

pub fn format_poses(poses: &[Pose]) -> String {
    let mut s = String::new();
    for p in poses {
        let (r, t) = (&p.rotation, &p.translation);
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {} {} {} {} {}",
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z
        );
    }
    s
}

pub fn write_poses(path: &Path, poses: &[Pose]) -> Result<()> {
    write_bytes(path, format_poses(poses).as_bytes())
}
