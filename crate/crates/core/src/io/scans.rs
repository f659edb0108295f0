//! Scan ingestion: `bin-xyzi` (little-endian `f32` quadruplets `x y z i`)
//! and `csv-xyz` (one `x,y,z` point per line).

use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::projection::RangeScan;

use super::{read_bytes, write_bytes};

const RECORD: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanFormat {
    BinXyzi,
    CsvXyz,
}

impl ScanFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ScanFormat::BinXyzi => "bin",
            ScanFormat::CsvXyz => "csv",
        }
    }
}

impl FromStr for ScanFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bin-xyzi" => Ok(ScanFormat::BinXyzi),
            "csv-xyz" => Ok(ScanFormat::CsvXyz),
            other => Err(Error::Config(format!(
                "unknown scan format '{other}' (expected bin-xyzi or csv-xyz)"
            ))),
        }
    }
}

pub fn decode_bin_xyzi(path: &Path, bytes: &[u8], timestamp: u64) -> Result<RangeScan> {
    if bytes.len() % RECORD != 0 {
        let offset = bytes.len() - bytes.len() % RECORD;
        return Err(Error::format(path, format!("truncated record at offset {offset}")));
    }
    let mut points = Vec::with_capacity(bytes.len() / RECORD);
    let mut intensity = Vec::with_capacity(bytes.len() / RECORD);
    for rec in bytes.chunks_exact(RECORD) {
        let f = |i: usize| f32::from_le_bytes(rec[4 * i..4 * i + 4].try_into().expect("4 bytes"));
        points.push(Vector3::new(f(0) as f64, f(1) as f64, f(2) as f64));
        intensity.push(f(3));
    }
    let mut scan = RangeScan::new(points, timestamp);
    scan.intensity = Some(intensity);
    Ok(scan)
}

pub fn encode_bin_xyzi(scan: &RangeScan) -> Vec<u8> {
    let mut out = Vec::with_capacity(scan.len() * RECORD);
    for (i, p) in scan.points.iter().enumerate() {
        let intensity = scan.intensity.as_ref().map_or(0.0, |v| v[i]);
        for v in [p.x as f32, p.y as f32, p.z as f32, intensity] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_bin_xyzi(path: &Path, scan: &RangeScan) -> Result<()> {
    write_bytes(path, &encode_bin_xyzi(scan))
}

/// One `x,y,z` line per point, without a header.
pub fn encode_csv_xyz(scan: &RangeScan) -> Vec<u8> {
    let mut out = String::with_capacity(scan.len() * 24);
    for p in &scan.points {
        out.push_str(&format!("{},{},{}\n", p.x, p.y, p.z));
    }
    out.into_bytes()
}

pub fn write_scan(path: &Path, format: ScanFormat, scan: &RangeScan) -> Result<()> {
    let bytes = match format {
        ScanFormat::BinXyzi => encode_bin_xyzi(scan),
        ScanFormat::CsvXyz => encode_csv_xyz(scan),
    };
    write_bytes(path, &bytes)
}

pub fn decode_csv_xyz(path: &Path, bytes: &[u8], timestamp: u64) -> Result<RangeScan> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(bytes);
    let mut points = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, format!("{e}")))?;
        if row == 0 && record.get(0).is_some_and(|f| f.eq_ignore_ascii_case("x")) {
            continue;
        }
        let line = record.position().map_or(row as u64 + 1, |p| p.line());
        if record.len() < 3 {
            return Err(Error::format(
                path,
                format!("line {line}: expected 3 fields, found {}", record.len()),
            ));
        }
        let mut xyz = [0.0; 3];
        for (k, v) in xyz.iter_mut().enumerate() {
            let field = &record[k];
            *v = field
                .parse()
                .map_err(|_| Error::format(path, format!("line {line}: non-numeric field '{field}'")))?;
        }
        points.push(Vector3::from(xyz));
    }
    Ok(RangeScan::new(points, timestamp))
}

pub fn read_scan(path: &Path, format: ScanFormat, timestamp: u64) -> Result<RangeScan> {
    let bytes = read_bytes(path)?;
    match format {
        ScanFormat::BinXyzi => decode_bin_xyzi(path, &bytes, timestamp),
        ScanFormat::CsvXyz => decode_csv_xyz(path, &bytes, timestamp),
    }
}

/// Scan files of `format` in `dir`, in lexicographic file-name order.
pub fn scan_files(dir: &Path, format: ScanFormat) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == format.extension()) {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}
