use std::fs;
use std::path::Path;

use locus_core::LocusError;
use nalgebra::DMatrix;

/// Binary 8-bit PGM of a matrix with a symmetric scale: zero maps to 128,
/// `±max|m|` to 255 and 1.
pub fn encode_pgm(m: &DMatrix<f64>) -> Vec<u8> {
    let scale = m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    let mut out = format!("P5\n{} {}\n255\n", m.ncols(), m.nrows()).into_bytes();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let level = if scale > 0.0 { 128.0 + 127.0 * m[(r, c)] / scale } else { 128.0 };
            out.push(level.round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

pub fn write_pgm(path: &Path, m: &DMatrix<f64>) -> Result<(), LocusError> {
    fs::write(path, encode_pgm(m)).map_err(|e| LocusError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
