//! Seeded corruption of matrix entries — the stress fixture for the robust
//! transforms.
//!
//! Overwrites a chosen number of distinct, uniformly placed entries with
//! `±magnitude` (sign fair-coin per entry) and reports exactly where. The
//! point of the exercise: under plain PCA a handful of huge entries seize
//! the top singular directions, while a bounded-influence transform clamps
//! them back to noise level.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zpca::DenseMatrix;

use crate::error::{Error, Result};

/// One overwritten entry: where, and the value now there.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Corruption {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Returns a copy of `m` with exactly `count` distinct entries replaced by
/// `±magnitude`, plus the log of replacements sorted by position.
pub fn corrupt_entries(
    m: &DenseMatrix,
    count: usize,
    magnitude: f64,
    seed: u64,
) -> Result<(DenseMatrix, Vec<Corruption>)> {
    let (n, d) = (m.nrows(), m.ncols());
    if count > n * d {
        return Err(Error::Config(format!(
            "cannot corrupt {count} of {n}×{d} = {} entries",
            n * d
        )));
    }
    if !(magnitude.is_finite() && magnitude > 0.0) {
        return Err(Error::Config(format!(
            "corruption magnitude must be finite and > 0, got {magnitude}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut array = m.array().clone();
    let mut log: Vec<Corruption> = rand::seq::index::sample(&mut rng, n * d, count)
        .into_iter()
        .map(|flat| {
            let (row, col) = (flat / d, flat % d);
            let value = if rng.gen_bool(0.5) { magnitude } else { -magnitude };
            array[[row, col]] = value;
            Corruption { row, col, value }
        })
        .collect();
    log.sort_by_key(|c| (c.row, c.col));
    Ok((DenseMatrix::new(array)?, log))
}
