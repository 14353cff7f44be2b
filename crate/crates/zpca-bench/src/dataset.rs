//! Dataset plumbing: loading, saving, and generating the matrices
//! experiments run on.
//!
//! Two encodings are supported. `csv-dense` is one row per line with
//! comma-separated decimal entries — easy to eyeball and to produce from
//! anywhere. `binary-f64` is a 16-byte header (`n`, `d` as little-endian
//! u64) followed by `n·d` little-endian doubles in row-major order — exact
//! and compact, round-tripping bit for bit. Both loaders reject non-finite
//! entries with the precise line or byte offset, because a single NaN
//! poisons every Frobenius norm downstream.

use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use zpca::DenseMatrix;

use crate::config::DatasetFormat;
use crate::error::{Error, Result};

fn dataset_err(path: &Path, location: String, msg: String) -> Error {
    Error::Dataset {
        path: path.display().to_string(),
        location,
        msg,
    }
}

/// Loads a matrix in the given encoding, rejecting shape defects and
/// non-finite entries with a pinpointed location.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<DenseMatrix> {
    match format {
        DatasetFormat::CsvDense => load_csv(path),
        DatasetFormat::BinaryF64 => load_binary(path),
    }
}

/// Writes a matrix in the given encoding.
pub fn save_dataset(m: &DenseMatrix, path: &Path, format: DatasetFormat) -> Result<()> {
    match format {
        DatasetFormat::CsvDense => save_csv(m, path),
        DatasetFormat::BinaryF64 => save_binary(m, path),
    }
}

fn load_csv(path: &Path) -> Result<DenseMatrix> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (col, piece) in line.split(',').enumerate() {
            let value: f64 = piece.trim().parse().map_err(|_| {
                dataset_err(
                    path,
                    format!("line {}, field {}", idx + 1, col + 1),
                    format!("unparsable entry `{}`", piece.trim()),
                )
            })?;
            if !value.is_finite() {
                return Err(dataset_err(
                    path,
                    format!("line {}, field {}", idx + 1, col + 1),
                    format!("non-finite entry {value}"),
                ));
            }
            row.push(value);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(dataset_err(
                    path,
                    format!("line {}", idx + 1),
                    format!("row has {} entries, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(dataset_err(path, "line 1".into(), "no rows".into()));
    }
    DenseMatrix::from_rows(&rows).map_err(Error::Protocol)
}

fn save_csv(m: &DenseMatrix, path: &Path) -> Result<()> {
    let mut out = String::new();
    for row in m.array().rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn load_binary(path: &Path) -> Result<DenseMatrix> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 16 {
        return Err(dataset_err(
            path,
            "offset 0".into(),
            format!("file is {} bytes, shorter than the 16-byte header", bytes.len()),
        ));
    }
    let n = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
    let d = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let expected = 16 + n
        .checked_mul(d)
        .and_then(|nd| nd.checked_mul(8))
        .ok_or_else(|| {
            dataset_err(path, "offset 0".into(), format!("declared shape {n}×{d} overflows"))
        })?;
    if bytes.len() != expected {
        return Err(dataset_err(
            path,
            "offset 16".into(),
            format!(
                "declared shape {n}×{d} needs {expected} bytes, file has {}",
                bytes.len()
            ),
        ));
    }
    let mut data = Vec::with_capacity(n * d);
    for (i, chunk) in bytes[16..].chunks_exact(8).enumerate() {
        let value = f64::from_le_bytes(chunk.try_into().unwrap());
        if !value.is_finite() {
            return Err(dataset_err(
                path,
                format!("offset {}", 16 + 8 * i),
                format!("non-finite entry {value}"),
            ));
        }
        data.push(value);
    }
    let array = Array2::from_shape_vec((n, d), data)
        .map_err(|e| dataset_err(path, "offset 16".into(), e.to_string()))?;
    DenseMatrix::new(array).map_err(Error::Protocol)
}

fn save_binary(m: &DenseMatrix, path: &Path) -> Result<()> {
    let (n, d) = (m.nrows(), m.ncols());
    let mut bytes = Vec::with_capacity(16 + 8 * n * d);
    bytes.extend_from_slice(&(n as u64).to_le_bytes());
    bytes.extend_from_slice(&(d as u64).to_le_bytes());
    for value in m.array().iter() {
        bytes.extend_from_slice(&value.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Picks the encoding from a path's extension: `.bin` means binary-f64,
/// anything else csv-dense.
pub fn format_for_extension(path: &Path) -> DatasetFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => DatasetFormat::BinaryF64,
        _ => DatasetFormat::CsvDense,
    }
}

/// Generates the standard synthetic benchmark matrix: a random rank-`rank`
/// product `U·V` (standard normal factors) plus entrywise `noise·N(0,1)`.
pub fn synthetic_low_rank(
    n: usize,
    d: usize,
    rank: usize,
    noise: f64,
    seed: u64,
) -> Result<DenseMatrix> {
    if n == 0 || d == 0 || rank == 0 || rank > n.min(d) {
        return Err(Error::Config(format!(
            "synthetic shape out of range: {n}×{d} at rank {rank}"
        )));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::Config(format!("noise must be finite and ≥ 0, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = StandardNormal;
    let u = Array2::from_shape_fn((n, rank), |_| {
        <StandardNormal as Distribution<f64>>::sample(&gauss, &mut rng)
    });
    let v = Array2::from_shape_fn((rank, d), |_| {
        <StandardNormal as Distribution<f64>>::sample(&gauss, &mut rng)
    });
    let mut a = u.dot(&v);
    for e in a.iter_mut() {
        *e += noise * <StandardNormal as Distribution<f64>>::sample(&gauss, &mut rng);
    }
    DenseMatrix::new(a).map_err(Error::Protocol)
}
