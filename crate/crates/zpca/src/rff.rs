//! Gaussian random Fourier features and the uniform-sampling shortcut they
//! justify.
//!
//! The Gaussian RBF kernel `K(x, y) = e^{−‖x−y‖²/2}` is the expectation of
//! `e^{izᵀ(x−y)}` over `z ~ N(0, I)`, so `d` sampled frequencies give the
//! finite feature map `φ(x)_j = √2·cos(zⱼᵀx + bⱼ)` with phases `bⱼ` uniform
//! on `[0, 2π)`, and `⟨φ(x), φ(y)⟩/d → K(x, y)`. Every feature satisfies
//! `E[φ(x)_j²] = 1`, so by Hoeffding all `n` feature rows have
//! `‖A_i‖₂² = Θ(d)` simultaneously once `d = Θ(log n)` — the feature matrix
//! has near-equal row norms *by construction*, before anyone looks at the
//! data. Weighted row sampling is then overkill: uniform draws with reported
//! probability `Q̂ = 1/n` already satisfy the sampler contract of
//! [`crate::pca`] with a constant lower bound, and [`uniform_row_pca`] runs
//! the same collect–rescale–SVD pipeline on them.
//!
//! The frequencies and phases are generated centrally from one recorded
//! seed ([`RffSpec`]), so the expansion is reproducible everywhere without
//! shipping the `m×d` matrix. Raw `m`-word rows of `M` travel to the
//! coordinator and are expanded there (`m ≤ d` in the regimes we run), so a
//! run costs one id word plus `s·m` slice words per draw.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cluster::Cluster;
use crate::error::{Error, Result};
use crate::hashing::derive_seed;
use crate::linalg::{self, DenseMatrix, Projection};
use crate::pca::PcaParams;

/// Ledger tag for the per-draw announcement of the uniformly sampled row id.
pub const TAG_RFF_INDEX: &str = "rff-index";
/// Ledger tag for the per-draw raw-row collection (one `m`-word slice per
/// server).
pub const TAG_RFF_COLLECT: &str = "rff-collect";

/// Salt constants for this module's seed derivations.
mod salts {
    /// The coordinator's uniform row-draw stream.
    pub const UNIFORM: u64 = 0x31;
}

/// A frozen random Fourier expansion: `m×d` standard-normal frequency matrix
/// `Z` and `d` phases `b` uniform on `[0, 2π)`, both reconstructible from
/// the recorded seed alone (generation order: `Z` row-major, then `b`).
#[derive(Clone, Debug)]
pub struct RffSpec {
    z: Array2<f64>,
    b: Vec<f64>,
    seed: u64,
}

impl RffSpec {
    /// Draws the expansion for input dimension `m ≥ 1` and feature dimension
    /// `d ≥ 1` from `seed`.
    pub fn new(m: usize, d: usize, seed: u64) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::InvalidParameter(format!(
                "feature expansion needs positive dimensions, got {m}×{d}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gauss = StandardNormal;
        let z = Array2::from_shape_fn((m, d), |_| {
            <StandardNormal as Distribution<f64>>::sample(&gauss, &mut rng)
        });
        let b = (0..d)
            .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
            .collect();
        Ok(Self { z, b, seed })
    }

    /// Input dimension `m`.
    pub fn input_dim(&self) -> usize {
        self.z.nrows()
    }

    /// Feature dimension `d`.
    pub fn feature_dim(&self) -> usize {
        self.z.ncols()
    }

    /// The seed everything reconstructs from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The frequency matrix `Z` (m×d).
    pub fn frequencies(&self) -> &Array2<f64> {
        &self.z
    }

    /// The phase vector `b` (length d).
    pub fn phases(&self) -> &[f64] {
        &self.b
    }
}

/// Default feature dimension for `n` data rows: `max(512, ⌈8·ln n⌉)`. The
/// logarithmic term is what the row-norm concentration argument needs; the
/// floor keeps kernel estimates (variance `Θ(1/d)`) meaningfully tight at
/// desk scale.
pub fn default_feature_dim(n: usize) -> usize {
    let log_term = (8.0 * (n.max(1) as f64).ln()).ceil() as usize;
    log_term.max(512)
}

/// Expands one raw row: feature `j` is `√2·cos(⟨row, Z_{:,j}⟩ + b_j)`, so
/// every entry lies in `[−√2, √2]`.
pub fn rff_expand(row: &[f64], spec: &RffSpec) -> Result<Vec<f64>> {
    if row.len() != spec.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "row has {} entries, expansion expects {}",
            row.len(),
            spec.input_dim()
        )));
    }
    let sqrt2 = std::f64::consts::SQRT_2;
    Ok((0..spec.feature_dim())
        .map(|j| {
            let dot: f64 = row
                .iter()
                .zip(spec.z.column(j).iter())
                .map(|(x, z)| x * z)
                .sum();
            sqrt2 * (dot + spec.b[j]).cos()
        })
        .collect())
}

/// Low-rank approximation of the implicit feature matrix
/// `A_{ij} = √2·cos((M_i·Z)_j + b_j)`, `M = Σ_t Mᵗ`, by uniform row
/// sampling.
///
/// The coordinator draws `r` row ids uniformly (reported probability
/// `Q̂ = 1/n` — valid because feature rows share their norm up to
/// constants), collects each raw `M`-row as in the weighted pipeline (one
/// id word, then every server's `m`-word slice), expands it, scales by
/// `√(n/r)` (that is, `A_i/√(r·Q̂)`), and returns the top-`k` right
/// singular subspace of the stacked `B`.
///
/// # Errors
///
/// Dimension mismatches between the cluster and `spec`, and everything the
/// final decomposition can raise (`k` beyond the feature dimension).
pub fn uniform_row_pca(
    cluster: &mut Cluster,
    spec: &RffSpec,
    params: &PcaParams,
) -> Result<Projection> {
    if cluster.ncols() != spec.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "cluster rows have {} entries, expansion expects {}",
            cluster.ncols(),
            spec.input_dim()
        )));
    }
    let n = cluster.nrows();
    let (s, m) = (cluster.s(), cluster.ncols());
    let r = params.r();
    let d = spec.feature_dim();
    let scale = (n as f64 / r as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cluster.seed(), &[salts::UNIFORM]));
    let mut b = Array2::<f64>::zeros((r, d));
    for i in 0..r {
        let row_id = rng.gen_range(0..n);
        let ledger = cluster.ledger_mut();
        ledger.push(1, 1, 1, TAG_RFF_INDEX);
        for t in 1..=s {
            ledger.push(t, 1, m as u64, TAG_RFF_COLLECT);
        }
        let raw = cluster.aggregate_row(row_id);
        let features = rff_expand(&raw, spec)?;
        for (j, &v) in features.iter().enumerate() {
            b[[i, j]] = v * scale;
        }
    }
    linalg::top_k_right_singular(&DenseMatrix::new(b)?, params.k())
}
