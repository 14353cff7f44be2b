//! Spreading one matrix across `s` servers.
//!
//! Experiments start from a centrally known matrix, so the harness has to
//! manufacture the distributed state the protocols assume. Two modes:
//!
//! * **row-split** — contiguous row blocks, zero-padded to full shape, so
//!   each entry lives on exactly one server.
//! * **additive-random-split** — every entry is cut into `s` random convex
//!   shares. The last share is nudged until the servers' left-to-right
//!   summation order reproduces the original entry *exactly*: the protocols
//!   see `Σ_t A^t` through that fold, and a reassembly off by one ulp would
//!   make ground-truth comparisons fuzzier than they need to be.
//!
//! The geometric-mean route is a separate preprocessing step
//! ([`gm_shares`]): servers re-encode raw slices `M^t` as `(1/s)|M^t|^p`,
//! after which the ordinary pipeline with `f(x) = x^{1/p}` computes the
//! entrywise generalized mean.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zpca::entry_functions::gm_local_share;
use zpca::DenseMatrix;

use crate::config::PartitionMode;
use crate::error::{Error, Result};

/// Splits `m` into `s` equally shaped slices whose left-to-right sum is
/// exactly `m`.
pub fn partition(
    m: &DenseMatrix,
    mode: PartitionMode,
    s: usize,
    seed: u64,
) -> Result<Vec<DenseMatrix>> {
    if s < 1 {
        return Err(Error::Config("partition needs at least one server".into()));
    }
    let shares = match mode {
        PartitionMode::RowSplit => row_split(m, s),
        PartitionMode::AdditiveRandomSplit => additive_split(m, s, seed),
    };
    shares
        .into_iter()
        .map(|a| DenseMatrix::new(a).map_err(Error::Protocol))
        .collect()
}

fn row_split(m: &DenseMatrix, s: usize) -> Vec<Array2<f64>> {
    let (n, d) = (m.nrows(), m.ncols());
    let base = n / s;
    let extra = n % s;
    let mut shares = vec![Array2::<f64>::zeros((n, d)); s];
    let mut start = 0;
    for (t, share) in shares.iter_mut().enumerate() {
        let len = base + usize::from(t < extra);
        for i in start..start + len {
            for j in 0..d {
                share[[i, j]] = m.array()[[i, j]];
            }
        }
        start += len;
    }
    shares
}

fn additive_split(m: &DenseMatrix, s: usize, seed: u64) -> Vec<Array2<f64>> {
    let (n, d) = (m.nrows(), m.ncols());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shares = vec![Array2::<f64>::zeros((n, d)); s];
    for i in 0..n {
        for j in 0..d {
            let x = m.array()[[i, j]];
            // Convex weights: s uniform draws, normalized.
            let raw: Vec<f64> = (0..s).map(|_| rng.gen_range(0.0..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let mut running = 0.0;
            for t in 0..s - 1 {
                let w = raw[t] / total * x;
                shares[t][[i, j]] = w;
                running += w;
            }
            // The last share absorbs the rounding. A couple of nudges
            // almost always land the fold exactly on `x`; when rounding
            // oscillates, fall back to handing the whole entry to the last
            // server (zeros fold exactly).
            let mut last = x - running;
            for _ in 0..4 {
                let total = running + last;
                if total == x {
                    break;
                }
                last += x - total;
            }
            if running + last != x {
                for share in shares.iter_mut().take(s - 1) {
                    share[[i, j]] = 0.0;
                }
                last = x;
            }
            shares[s - 1][[i, j]] = last;
        }
    }
    shares
}

/// Geometric-mean preprocessing: re-encodes raw per-server slices `M^t` as
/// `(1/s)|M^t|^p`, so that `x^{1/p}` of the slice sum is the entrywise
/// generalized mean of the raw slices.
pub fn gm_shares(locals: &[DenseMatrix], p: f64) -> Result<Vec<DenseMatrix>> {
    if locals.is_empty() {
        return Err(Error::Config("gm preprocessing needs at least one slice".into()));
    }
    let s = locals.len();
    locals
        .iter()
        .map(|m| {
            gm_local_share(m.array(), p, s)
                .and_then(DenseMatrix::new)
                .map_err(Error::Protocol)
        })
        .collect()
}
