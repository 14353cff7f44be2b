//! Row-sampling low-rank approximation of the implicit matrix `A = f(Σ_t Aᵗ)`.
//!
//! No server holds `A`: each stores one additive share, and materializing the
//! sum would cost `n·d` words per server. Instead the coordinator draws `r`
//! rows with probability close to their share of `‖A‖_F²` (the entry-sampling
//! protocol of [`crate::zsampler`], pointed at the flattened matrix under the
//! weight `z = f²`), collects and rescales exactly those rows into a short
//! matrix `B ∈ ℝ^{r×d}`, and takes the top-`k` right singular subspace of `B`
//! as the answer for `A`. With `r = ⌈1440·k²/(ε²·c)⌉` samples — `c` the
//! sampler's distortion constant — the returned projection `P` satisfies
//! `‖A − AP‖_F² ≤ ‖A − [A]_k‖_F² + O(ε)·‖A‖_F²` with constant probability,
//! and [`boosted_pca`] drives the failure probability below any `δ` by
//! rerunning and keeping the candidate with the largest own-run `‖BP‖_F²`.
//!
//! Two sampler backends plug into the same pipeline ([`SamplerMode`]): the
//! full distributed protocol, and a central *oracle* that draws from the
//! exact row weights. The oracle is a diagnostic — it isolates the sampling
//! noise this module adds from the estimation noise the sampler adds, and
//! its draws move no protocol traffic. Row collection is metered identically
//! in both modes, because those words genuinely move: one word announcing
//! each sampled row id, then every server's `d`-word slice of that row
//! (coordinator's own slice included, for uniform accounting).
//!
//! Every random choice derives from the cluster's master seed through fixed
//! salt chains — per-repetition, per-draw, per-backend — so a rerun over the
//! same cluster produces byte-identical samples, ledgers, and projections.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cluster::{Cluster, DistVector};
use crate::entry_functions::{self, EntryFunction};
use crate::error::{Error, Result};
use crate::hashing::derive_seed;
use crate::linalg::{self, DenseMatrix, Projection};
use crate::zsampler::{z_sample, SamplerParams, SamplerProfile};

/// Ledger tag for the per-draw announcement of the sampled row id.
pub const TAG_PCA_INDEX: &str = "pca-index";
/// Ledger tag for the per-draw row collection (one `d`-word slice per server).
pub const TAG_PCA_COLLECT: &str = "pca-collect";

/// Salt constants for this module's seed derivations (disjoint from the
/// sampler's and the recovery structure's ranges).
mod salts {
    /// One salt per boosted repetition.
    pub const RUN: u64 = 0x21;
    /// One salt per row draw within a repetition.
    pub const DRAW: u64 = 0x22;
    /// The oracle backend's central random stream.
    pub const ORACLE: u64 = 0x23;
}

/// Accuracy/confidence knobs for one low-rank run; the sample count and the
/// sampler accuracy derive from them and are never stored separately unless
/// explicitly overridden.
#[derive(Clone, Copy, Debug)]
pub struct PcaParams {
    k: usize,
    epsilon: f64,
    delta: f64,
    r: usize,
}

impl PcaParams {
    /// Budgets for target rank `k ≥ 1`, additive accuracy `epsilon ∈ (0, 1)`,
    /// overall failure probability `delta ∈ (0, 1)`, and the sampler's
    /// distortion constant `distortion ∈ (0, 1]` (row `i` is drawn with
    /// probability at least `distortion·|A_i|₂²/‖A‖_F²`; the built-in entry
    /// functions all report `1`). The sample count is the proof-grade
    /// `r = ⌈1440·k²/(ε²·distortion)⌉`; see [`PcaParams::with_sample_count`]
    /// for the empirical override.
    pub fn new(k: usize, epsilon: f64, delta: f64, distortion: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("target rank must be ≥ 1".into()));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "additive accuracy must lie in (0, 1), got {epsilon}"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "failure probability must lie in (0, 1), got {delta}"
            )));
        }
        if !(distortion > 0.0 && distortion <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "sampler distortion constant must lie in (0, 1], got {distortion}"
            )));
        }
        let r = (1440.0 * (k * k) as f64 / (epsilon * epsilon * distortion)).ceil() as usize;
        let params = Self {
            k,
            epsilon,
            delta,
            r,
        };
        params.check_sample_count()?;
        Ok(params)
    }

    /// Replaces the sample count (the analysis constant `1440` is far from
    /// tight, and the measured additive error tracks `k²/r`); `r ≥ k` is
    /// still required so `B` can span a rank-`k` subspace.
    pub fn with_sample_count(mut self, r: usize) -> Result<Self> {
        self.r = r;
        self.check_sample_count()?;
        Ok(self)
    }

    fn check_sample_count(&self) -> Result<()> {
        if self.r < self.k {
            return Err(Error::InvalidParameter(format!(
                "sample count {} cannot be below the target rank {}",
                self.r, self.k
            )));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Number of row draws per run.
    pub fn r(&self) -> usize {
        self.r
    }

    /// Accuracy demanded of each reported row probability,
    /// `γ = min(1/2, √(1/r))`: the scaling of `B` tolerates reported
    /// probabilities within `(1 ± γ)` of truth.
    pub fn gamma(&self) -> f64 {
        (1.0 / self.r as f64).sqrt().min(0.5)
    }

    /// Boosted repetition count `⌈8·ln(1/δ)⌉` (at least 1).
    pub fn boost_runs(&self) -> usize {
        ((8.0 * (1.0 / self.delta).ln()).ceil() as usize).max(1)
    }
}

/// Which sampler backs the row draws.
#[derive(Clone, Copy, Debug)]
pub enum SamplerMode {
    /// Draw centrally from the exact row weights — a billing-free diagnostic
    /// that isolates this module's own sampling noise. Row collection is
    /// still metered (those words move regardless of how the row was
    /// chosen).
    Oracle,
    /// Run the full distributed entry-sampling protocol per draw, with the
    /// given estimator confidence constant and budget profile.
    Distributed {
        /// The sampler's confidence constant `C ≥ 1`.
        confidence: f64,
        /// Budget overrides for the per-draw estimator runs.
        profile: SamplerProfile,
    },
}

/// One collected row: where it came from, the probability the sampler
/// reported for it, and the row of `A` itself (`f` applied to the summed
/// local slices — recomputable from the cluster, and tested to match).
#[derive(Clone, Debug)]
pub struct SampledRow {
    /// 0-based row index into the logical matrix.
    pub index: usize,
    /// Reported draw probability `Q̂ ∈ (0, 1]`.
    pub q_hat: f64,
    /// The full row `A_i = f(Σ_t Aᵗ_i)`, entrywise.
    pub values: Vec<f64>,
}

/// The `r` collected rows together with the rescaled matrix they induce:
/// row `i′` of `B` is `A_{i_{i′}} / √(r·Q̂_{i_{i′}})`, so `E[BᵀB] ≈ AᵀA`
/// when the reported probabilities are accurate.
#[derive(Clone, Debug)]
pub struct SampleSet {
    rows: Vec<SampledRow>,
    b: DenseMatrix,
}

impl SampleSet {
    fn assemble(rows: Vec<SampledRow>, d: usize) -> Result<Self> {
        let r = rows.len();
        let mut b = ndarray::Array2::<f64>::zeros((r, d));
        for (i, row) in rows.iter().enumerate() {
            let scale = 1.0 / (r as f64 * row.q_hat).sqrt();
            for (j, &v) in row.values.iter().enumerate() {
                b[[i, j]] = v * scale;
            }
        }
        Ok(Self {
            rows,
            b: DenseMatrix::new(b)?,
        })
    }

    /// The collected rows, in draw order (duplicates kept: draws are
    /// independent and a row sampled twice is scaled twice).
    pub fn rows(&self) -> &[SampledRow] {
        &self.rows
    }

    /// The rescaled `r×d` sample matrix `B`.
    pub fn b_matrix(&self) -> &DenseMatrix {
        &self.b
    }
}

/// Flattens the cluster's shares row-major into the additively shared vector
/// the entry sampler works on: coordinate `p = i·d + j` of server `t`'s part
/// is entry `(i, j)` of its slice.
fn flatten_shares(cluster: &Cluster) -> Result<DistVector> {
    let (n, d) = (cluster.nrows(), cluster.ncols());
    let mut parts = Vec::with_capacity(cluster.s());
    for t in 1..=cluster.s() {
        let slice = cluster.slice(t)?;
        let mut part = Vec::with_capacity(n * d);
        for i in 0..n {
            for j in 0..d {
                part.push(slice.array()[[i, j]]);
            }
        }
        parts.push(part);
    }
    DistVector::new(parts)
}

/// Exact per-row weights `Σ_j z(A_{ij})` of the aggregate matrix — the
/// oracle backend's target distribution and every oracle test's reference.
/// Central and unbilled by construction.
fn exact_row_weights(cluster: &Cluster, f: &EntryFunction) -> Vec<f64> {
    let agg = cluster.aggregate_matrix();
    (0..cluster.nrows())
        .map(|i| (0..cluster.ncols()).map(|j| f.z(agg.array()[[i, j]])).sum())
        .collect()
}

/// Bills one draw's row collection: the id announcement (one word) and every
/// server's `d`-word slice of the row, then returns the aggregate row.
fn collect_row(cluster: &mut Cluster, i: usize) -> Vec<f64> {
    let (s, d) = (cluster.s(), cluster.ncols());
    let ledger = cluster.ledger_mut();
    ledger.push(1, 1, 1, TAG_PCA_INDEX);
    for t in 1..=s {
        ledger.push(t, 1, d as u64, TAG_PCA_COLLECT);
    }
    cluster.aggregate_row(i)
}

/// One distributed row draw: entry-sample the flattened shares, map the hit
/// back to its row, collect the row, and turn the entry probability into the
/// row probability `Q̂ = (exact row weight)/Ẑ` — the numerator is exact once
/// the row is in hand, so `Q̂` inherits only the estimator's `(1 ± γ)`.
fn draw_row_distributed(
    cluster: &mut Cluster,
    flat: &DistVector,
    f: &EntryFunction,
    sampler: &SamplerParams,
    seed: u64,
) -> Result<SampledRow> {
    let d = cluster.ncols();
    let outcome = z_sample(flat, f, sampler, seed, cluster.ledger_mut())?;
    let i = outcome.index / d;
    let agg = collect_row(cluster, i);
    let row_weight: f64 = agg.iter().map(|&x| f.z(x)).sum();
    let hit_weight = f.z(agg[outcome.index % d]);
    let q_hat = (row_weight * outcome.q_hat / hit_weight).min(1.0);
    let values: Vec<f64> = agg.iter().map(|&x| f.apply(x)).collect();
    Ok(SampledRow {
        index: i,
        q_hat,
        values,
    })
}

/// One oracle row draw from precomputed exact weights; the reported
/// probability is exact, so downstream scaling carries no sampler noise.
fn draw_row_oracle(
    cluster: &mut Cluster,
    f: &EntryFunction,
    weights: &[f64],
    total: f64,
    rng: &mut impl Rng,
) -> Result<SampledRow> {
    let mut target = rng.gen_range(0.0..total);
    let mut i = weights.len() - 1;
    for (idx, &w) in weights.iter().enumerate() {
        if target < w {
            i = idx;
            break;
        }
        target -= w;
    }
    let agg = collect_row(cluster, i);
    let values: Vec<f64> = agg.iter().map(|&x| f.apply(x)).collect();
    Ok(SampledRow {
        index: i,
        q_hat: weights[i] / total,
        values,
    })
}

/// Draws one row of the implicit matrix with probability close to
/// `|A_i|₂²/‖A‖_F²` (exactly, in oracle mode) and reports `(index, Q̂)`.
///
/// `gamma ∈ (0, 1/2]` is the accuracy demanded of `Q̂`; the distributed
/// backend runs its entry sampler at that accuracy (capped below `1/2`,
/// the estimator's open bound). One call is one protocol round — the
/// multi-draw loops derive an independent seed per draw from the cluster
/// master, and so does anyone calling this directly.
///
/// # Errors
///
/// Everything the entry sampler can raise, plus an all-zero matrix (no
/// distribution to draw from) in oracle mode.
pub fn sample_row(
    cluster: &mut Cluster,
    f: &EntryFunction,
    gamma: f64,
    mode: SamplerMode,
    seed: u64,
) -> Result<(usize, f64)> {
    entry_functions::validate_default(f)?;
    if !(gamma > 0.0 && gamma <= 0.5) {
        return Err(Error::InvalidParameter(format!(
            "row-probability accuracy must lie in (0, 1/2], got {gamma}"
        )));
    }
    match mode {
        SamplerMode::Oracle => {
            let weights = exact_row_weights(cluster, f);
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                return Err(Error::InvalidParameter(
                    "every row has zero weight; there is no distribution to sample".into(),
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[salts::ORACLE]));
            let row = draw_row_oracle(cluster, f, &weights, total, &mut rng)?;
            Ok((row.index, row.q_hat))
        }
        SamplerMode::Distributed {
            confidence,
            profile,
        } => {
            let flat = flatten_shares(cluster)?;
            let sampler = SamplerParams::new(gamma.min(0.49), confidence, flat.len())?
                .with_profile(profile)?;
            let row = draw_row_distributed(cluster, &flat, f, &sampler, seed)?;
            Ok((row.index, row.q_hat))
        }
    }
}

/// Draws the full sample set for one run: `r` independent rows (with
/// replacement), collected, probability-checked, and rescaled into `B`.
///
/// `seed` is this run's root; draw `i` uses its own derived stream, so the
/// draws are independent and the sequential protocol rounds could equally
/// run batched without changing any byte of the outcome or the ledger
/// contents (ordering aside).
pub fn sample_rows(
    cluster: &mut Cluster,
    f: &EntryFunction,
    params: &PcaParams,
    mode: SamplerMode,
    seed: u64,
) -> Result<SampleSet> {
    entry_functions::validate_default(f)?;
    let d = cluster.ncols();
    let gamma = params.gamma();
    let mut rows = Vec::with_capacity(params.r());
    match mode {
        SamplerMode::Oracle => {
            let weights = exact_row_weights(cluster, f);
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                return Err(Error::InvalidParameter(
                    "every row has zero weight; there is no distribution to sample".into(),
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[salts::ORACLE]));
            for _ in 0..params.r() {
                rows.push(draw_row_oracle(cluster, f, &weights, total, &mut rng)?);
            }
        }
        SamplerMode::Distributed {
            confidence,
            profile,
        } => {
            let flat = flatten_shares(cluster)?;
            let sampler = SamplerParams::new(gamma.min(0.49), confidence, flat.len())?
                .with_profile(profile)?;
            for i in 0..params.r() {
                let draw_seed = derive_seed(seed, &[salts::DRAW, i as u64]);
                rows.push(draw_row_distributed(cluster, &flat, f, &sampler, draw_seed)?);
            }
        }
    }
    SampleSet::assemble(rows, d)
}

/// One full run: sample, collect, rescale, and return the top-`k` right
/// singular subspace of `B` as the projection for `A`.
///
/// With the proof-grade sample count the guarantee is
/// `‖A − AP‖_F² ≤ ‖A − [A]_k‖_F² + O(ε)·‖A‖_F²` with constant probability;
/// wrap with [`boosted_pca`] for an explicit failure probability.
pub fn distributed_pca(
    cluster: &mut Cluster,
    f: &EntryFunction,
    params: &PcaParams,
    mode: SamplerMode,
) -> Result<Projection> {
    let seed = derive_seed(cluster.seed(), &[salts::RUN, 0]);
    let set = sample_rows(cluster, f, params, mode, seed)?;
    linalg::top_k_right_singular(set.b_matrix(), params.k())
}

/// Runs [`distributed_pca`] `⌈8·ln(1/δ)⌉` times and keeps the candidate
/// whose projection captures the most energy of *its own run's* `B`
/// (`argmax ‖B·P‖_F²`); the failure probability drops to `δ` and the
/// ledger grows by exactly the repetition factor.
pub fn boosted_pca(
    cluster: &mut Cluster,
    f: &EntryFunction,
    params: &PcaParams,
    mode: SamplerMode,
) -> Result<Projection> {
    boosted_candidates(cluster, f, params, mode).map(|(best, _)| best)
}

/// The boosting loop with its scoreboard exposed: returns the selected
/// projection and every run's own score (`f64::NAN` marks a failed run).
fn boosted_candidates(
    cluster: &mut Cluster,
    f: &EntryFunction,
    params: &PcaParams,
    mode: SamplerMode,
) -> Result<(Projection, Vec<f64>)> {
    let runs = params.boost_runs();
    let mut best: Option<(f64, Projection)> = None;
    let mut scores = Vec::with_capacity(runs);
    let mut last_err: Option<Error> = None;
    for run in 0..runs {
        let seed = derive_seed(cluster.seed(), &[salts::RUN, run as u64]);
        let attempt = sample_rows(cluster, f, params, mode, seed).and_then(|set| {
            let p = linalg::top_k_right_singular(set.b_matrix(), params.k())?;
            let energy = linalg::frobenius_sq_view(&p.apply(&set.b_matrix().view())?.view());
            Ok((energy, p))
        });
        match attempt {
            Ok((energy, p)) => {
                scores.push(energy);
                if best.as_ref().map_or(true, |(b, _)| energy > *b) {
                    best = Some((energy, p));
                }
            }
            Err(e) => {
                scores.push(f64::NAN);
                last_err = Some(e);
            }
        }
    }
    match best {
        Some((_, p)) => Ok((p, scores)),
        None => Err(Error::AllRunsFailed {
            runs,
            last: Box::new(last_err.expect("runs ≥ 1, so a failure was recorded")),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::distributions::Distribution;

    /// Splits an aggregate matrix into `s` additive shares with non-trivial
    /// (seeded, full-support) noise, so no single share reveals the sum.
    fn share_matrix(agg: &Array2<f64>, s: usize, seed: u64) -> Cluster {
        let (n, d) = agg.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut parts = vec![Array2::<f64>::zeros((n, d)); s];
        for i in 0..n {
            for j in 0..d {
                let mut rest = 0.0;
                for part in parts.iter_mut().take(s - 1) {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    part[[i, j]] = v;
                    rest += v;
                }
                parts[s - 1][[i, j]] = agg[[i, j]] - rest;
            }
        }
        let slices = parts
            .into_iter()
            .map(|p| DenseMatrix::new(p).unwrap())
            .collect();
        Cluster::new(slices, seed).unwrap()
    }

    /// Rank-`k` signal plus entrywise noise: the standard fixture for
    /// low-rank recovery accuracy.
    fn low_rank_plus_noise(n: usize, d: usize, k: usize, noise: f64, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gauss = rand_distr::StandardNormal;
        let u = Array2::from_shape_fn((n, k), |_| {
            <rand_distr::StandardNormal as Distribution<f64>>::sample(&gauss, &mut rng)
        });
        let v = Array2::from_shape_fn((k, d), |_| {
            <rand_distr::StandardNormal as Distribution<f64>>::sample(&gauss, &mut rng)
        });
        let mut a = u.dot(&v);
        for e in a.iter_mut() {
            *e += noise * <rand_distr::StandardNormal as Distribution<f64>>::sample(&gauss, &mut rng);
        }
        a
    }

    /// Additive error of `p` on the aggregate matrix, normalized by
    /// `‖A‖_F²`: `(‖A − AP‖_F² − ‖A − [A]_k‖_F²) / ‖A‖_F²`, all terms from
    /// exact central decompositions.
    fn additive_error(agg: &Array2<f64>, p: &Projection, k: usize) -> f64 {
        let a = DenseMatrix::new(agg.clone()).unwrap();
        let resid = linalg::projection_error(&a, p).unwrap();
        let best = linalg::rank_k_error(&a, k).unwrap();
        (resid - best) / linalg::frobenius_sq(&a)
    }

    fn desk_mode() -> SamplerMode {
        SamplerMode::Distributed {
            confidence: 2.0,
            profile: SamplerProfile {
                heavy_b: Some(8.0),
                level_buckets: Some(32),
                outer_reps: Some(1),
                sketch_depth: Some(4),
                level_reps: Some(1),
                g_degree: Some(8),
                ..SamplerProfile::default()
            },
        }
    }

    #[test]
    fn sample_count_formula_and_derived_accuracy() {
        let p = PcaParams::new(5, 0.25, 0.1, 1.0).unwrap();
        assert_eq!(p.r(), 576_000);
        assert!((p.gamma() - (1.0 / 576_000f64).sqrt()).abs() < 1e-15);
        let q = PcaParams::new(3, 0.5, 0.1, 1.0).unwrap();
        assert_eq!(q.r(), 51_840);
        // A tiny sample count caps γ at 1/2.
        let tiny = PcaParams::new(1, 0.9, 0.1, 1.0)
            .unwrap()
            .with_sample_count(2)
            .unwrap();
        assert_eq!(tiny.gamma(), 0.5);
    }

    #[test]
    fn parameter_validation_rejects_out_of_range_budgets() {
        assert!(PcaParams::new(0, 0.25, 0.1, 1.0).is_err());
        assert!(PcaParams::new(3, 0.0, 0.1, 1.0).is_err());
        assert!(PcaParams::new(3, 1.0, 0.1, 1.0).is_err());
        assert!(PcaParams::new(3, 0.25, 0.0, 1.0).is_err());
        assert!(PcaParams::new(3, 0.25, 1.0, 1.0).is_err());
        assert!(PcaParams::new(3, 0.25, 0.1, 0.0).is_err());
        assert!(PcaParams::new(3, 0.25, 0.1, 1.5).is_err());
        let p = PcaParams::new(3, 0.25, 0.1, 1.0).unwrap();
        assert!(p.with_sample_count(2).is_err());
    }

    #[test]
    fn boosting_repetition_counts() {
        let mk = |delta| PcaParams::new(2, 0.25, delta, 1.0).unwrap().boost_runs();
        assert_eq!(mk(0.5), 6); // ⌈8·ln 2⌉
        assert_eq!(mk(0.01), 37); // ⌈8·ln 100⌉
        assert!(mk(0.99) >= 1);
    }

    #[test]
    fn the_only_nonzero_row_is_drawn_with_certainty() {
        let mut agg = Array2::<f64>::zeros((8, 4));
        for j in 0..4 {
            agg[[5, j]] = (j + 1) as f64;
        }
        // The shares are noisy everywhere, but the aggregate has one live row.
        let mut cluster = share_matrix(&agg, 3, 42);
        let f = EntryFunction::identity();
        let (i, q_hat) = sample_row(&mut cluster, &f, 0.25, SamplerMode::Oracle, 7).unwrap();
        assert_eq!(i, 5);
        assert_eq!(q_hat, 1.0);
        for seed in 0..10 {
            let mut cluster = share_matrix(&agg, 3, 42);
            let (i, q_hat) = sample_row(&mut cluster, &f, 0.25, desk_mode(), 900 + seed).unwrap();
            assert_eq!(i, 5, "seed {seed} drew a zero-weight row");
            assert!(q_hat > 0.0 && q_hat <= 1.0, "q̂ = {q_hat} out of range");
        }
    }

    #[test]
    fn row_frequencies_track_squared_row_norms() {
        // 2·10⁴ full-protocol draws over a 32×4 matrix: every row's
        // empirical frequency must lie within (1 ± 4γ) of its exact share
        // |A_i|₂²/‖A‖_F². (A larger draw count tightens nothing here — the
        // binomial noise at 2·10⁴ is already far inside the window.)
        let n = 32;
        let d = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(5150);
        let agg = Array2::from_shape_fn((n, d), |_| rng.gen_range(0.2..1.0));
        let mut cluster = share_matrix(&agg, 3, 31);
        let f = EntryFunction::identity();
        let gamma = 0.1;

        let exact: Vec<f64> = (0..n)
            .map(|i| (0..d).map(|j| agg[[i, j]] * agg[[i, j]]).sum())
            .collect();
        let total: f64 = exact.iter().sum();

        let draws = 20_000usize;
        let mut counts = vec![0usize; n];
        for t in 0..draws {
            let (i, _) = sample_row(&mut cluster, &f, gamma, desk_mode(), 10_000 + t as u64)
                .unwrap();
            counts[i] += 1;
        }
        for i in 0..n {
            let freq = counts[i] as f64 / draws as f64;
            let target = exact[i] / total;
            assert!(
                (freq - target).abs() <= 4.0 * gamma * target,
                "row {i}: frequency {freq:.5} vs exact {target:.5}"
            );
        }
    }

    #[test]
    fn reported_probabilities_stay_within_twice_gamma_of_truth() {
        let n = 32;
        let d = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(808);
        let agg = Array2::from_shape_fn((n, d), |_| rng.gen_range(0.2..1.0));
        let mut cluster = share_matrix(&agg, 3, 17);
        let f = EntryFunction::identity();
        let gamma = 0.25;

        let exact: Vec<f64> = (0..n)
            .map(|i| (0..d).map(|j| agg[[i, j]] * agg[[i, j]]).sum())
            .collect();
        let total: f64 = exact.iter().sum();

        for t in 0..200u64 {
            let (i, q_hat) = sample_row(&mut cluster, &f, gamma, desk_mode(), 600 + t).unwrap();
            let truth = exact[i] / total;
            assert!(
                (q_hat / truth - 1.0).abs() <= 2.0 * gamma,
                "draw {t}: q̂ = {q_hat:.5} vs Q = {truth:.5}"
            );
        }
    }

    #[test]
    fn exactly_rank_k_matrices_are_recovered_to_machine_precision() {
        let agg = low_rank_plus_noise(40, 8, 3, 0.0, 99);
        let fro: f64 = agg.iter().map(|v| v * v).sum();
        let f = EntryFunction::identity();
        let params = PcaParams::new(3, 0.25, 0.1, 1.0)
            .unwrap()
            .with_sample_count(30)
            .unwrap();
        for mode in [SamplerMode::Oracle, desk_mode()] {
            let mut cluster = share_matrix(&agg, 3, 7);
            let p = distributed_pca(&mut cluster, &f, &params, mode).unwrap();
            let a = DenseMatrix::new(agg.clone()).unwrap();
            let resid = linalg::projection_error(&a, &p).unwrap();
            assert!(
                resid <= 1e-6 * fro,
                "residual {resid:e} on an exactly rank-k matrix"
            );
        }
    }

    #[test]
    fn oracle_runs_meet_the_empirical_error_yardstick() {
        // Rank-5 signal with mild noise; the additive error of an oracle run
        // tracks k²/r with the analysis constant gone.
        let k = 3;
        let r = 144;
        let agg = low_rank_plus_noise(300, 30, k, 0.05, 2024);
        let f = EntryFunction::identity();
        let params = PcaParams::new(k, 0.25, 0.1, 1.0)
            .unwrap()
            .with_sample_count(r)
            .unwrap();
        let yardstick = (k * k) as f64 / r as f64;
        let mut within = 0;
        for seed in 0..20 {
            let mut cluster = share_matrix(&agg, 3, 5000 + seed);
            let p = distributed_pca(&mut cluster, &f, &params, SamplerMode::Oracle).unwrap();
            if additive_error(&agg, &p, k) <= yardstick {
                within += 1;
            }
        }
        assert!(within >= 18, "only {within}/20 runs within k²/r");
    }

    #[test]
    fn gram_matrices_concentrate_at_the_published_sample_count() {
        // k = 3, ε = 1/2 ⇒ r = 51 840 by the formula; Lemma-3 shape:
        // ‖AᵀA − BᵀB‖_F ≤ (ε/3k)·‖A‖_F² in at least 90% of runs.
        let k = 3;
        let eps = 0.5;
        let agg = low_rank_plus_noise(64, 8, k, 0.1, 77);
        let a = DenseMatrix::new(agg.clone()).unwrap();
        let gram_a = linalg::gram(&a);
        let fro = linalg::frobenius_sq(&a);
        let f = EntryFunction::identity();
        let params = PcaParams::new(k, eps, 0.1, 1.0).unwrap();
        assert_eq!(params.r(), 51_840);
        let mut within = 0;
        for seed in 0..20 {
            let mut cluster = share_matrix(&agg, 2, 900 + seed);
            let set = sample_rows(&mut cluster, &f, &params, SamplerMode::Oracle, seed).unwrap();
            let gram_b = linalg::gram(set.b_matrix());
            let dev: f64 = gram_a
                .array()
                .iter()
                .zip(gram_b.array().iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            if dev <= eps / (3.0 * k as f64) * fro {
                within += 1;
            }
        }
        assert!(within >= 18, "only {within}/20 runs concentrated");
    }

    #[test]
    fn rescaled_samples_are_unbiased_for_the_gram_matrix() {
        // With exact probabilities, E[BᵀB] = AᵀA exactly; the empirical mean
        // over 10³ resamples must agree entrywise within 3 standard errors.
        let agg = low_rank_plus_noise(40, 6, 2, 0.2, 11);
        let a = DenseMatrix::new(agg.clone()).unwrap();
        let gram_a = linalg::gram(&a);
        let f = EntryFunction::identity();
        let params = PcaParams::new(2, 0.25, 0.1, 1.0)
            .unwrap()
            .with_sample_count(30)
            .unwrap();
        let resamples = 1000;
        let d = 6;
        let mut sum = Array2::<f64>::zeros((d, d));
        let mut sumsq = Array2::<f64>::zeros((d, d));
        let mut cluster = share_matrix(&agg, 3, 3);
        for seed in 0..resamples {
            let set = sample_rows(&mut cluster, &f, &params, SamplerMode::Oracle, seed).unwrap();
            let gram_b = linalg::gram(set.b_matrix());
            for i in 0..d {
                for j in 0..d {
                    let v = gram_b.array()[[i, j]];
                    sum[[i, j]] += v;
                    sumsq[[i, j]] += v * v;
                }
            }
        }
        let m = resamples as f64;
        for i in 0..d {
            for j in 0..d {
                let mean = sum[[i, j]] / m;
                let var = (sumsq[[i, j]] / m - mean * mean).max(0.0);
                let se = (var / m).sqrt();
                let dev = (mean - gram_a.array()[[i, j]]).abs();
                assert!(
                    dev <= 3.0 * se + 1e-9,
                    "entry ({i},{j}): |bias| {dev:e} vs 3·SE {:e}",
                    3.0 * se
                );
            }
        }
    }

    /// Haar-ish rank-`k` projection from a QR factorization of a Gaussian
    /// matrix (test-only randomness source for projection inequalities).
    fn random_projection(d: usize, k: usize, rng: &mut ChaCha8Rng) -> Projection {
        let gauss = rand_distr::StandardNormal;
        let m = nalgebra::DMatrix::from_fn(d, k, |_, _| {
            <rand_distr::StandardNormal as Distribution<f64>>::sample(&gauss, rng)
        });
        let q = m.qr().q();
        let basis = Array2::from_shape_fn((d, k), |(i, j)| q[(i, j)]);
        Projection::new(basis).unwrap()
    }

    #[test]
    fn projection_energies_differ_by_at_most_k_times_gram_deviation() {
        // For every rank-k projection P′:
        // |‖AP′‖_F² − ‖BP′‖_F²| ≤ k·‖AᵀA − BᵀB‖_F, all terms exact.
        let k = 3;
        let agg = low_rank_plus_noise(50, 8, k, 0.3, 21);
        let a = DenseMatrix::new(agg.clone()).unwrap();
        let gram_a = linalg::gram(&a);
        let f = EntryFunction::identity();
        let params = PcaParams::new(k, 0.25, 0.1, 1.0)
            .unwrap()
            .with_sample_count(40)
            .unwrap();
        let mut cluster = share_matrix(&agg, 3, 8);
        let set = sample_rows(&mut cluster, &f, &params, SamplerMode::Oracle, 1).unwrap();
        let gram_b = linalg::gram(set.b_matrix());
        let gram_dev: f64 = gram_a
            .array()
            .iter()
            .zip(gram_b.array().iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for trial in 0..50 {
            let p = random_projection(8, k, &mut rng);
            let ea = linalg::frobenius_sq_view(&p.apply(&a.view()).unwrap().view());
            let eb = linalg::frobenius_sq_view(&p.apply(&set.b_matrix().view()).unwrap().view());
            assert!(
                (ea - eb).abs() <= k as f64 * gram_dev + 1e-9,
                "trial {trial}: |{ea:.6} − {eb:.6}| > k·‖ΔGram‖ = {:.6}",
                k as f64 * gram_dev
            );
        }
    }

    #[test]
    fn svd_of_samples_inherits_twice_the_worst_energy_discrepancy() {
        // ‖A − A·P_B‖_F² ≤ ‖A − [A]_k‖_F² + 2·max_{P′∈{P_A, P_B}}
        // |‖AP′‖_F² − ‖BP′‖_F²|, every quantity computed exactly.
        let k = 3;
        let f = EntryFunction::identity();
        for seed in 0..5 {
            let agg = low_rank_plus_noise(60, 10, k, 0.4, 300 + seed);
            let a = DenseMatrix::new(agg.clone()).unwrap();
            let params = PcaParams::new(k, 0.25, 0.1, 1.0)
                .unwrap()
                .with_sample_count(50)
                .unwrap();
            let mut cluster = share_matrix(&agg, 3, seed);
            let set = sample_rows(&mut cluster, &f, &params, SamplerMode::Oracle, seed).unwrap();
            let p_b = linalg::top_k_right_singular(set.b_matrix(), k).unwrap();
            let p_a = linalg::top_k_right_singular(&a, k).unwrap();
            let discrepancy = |p: &Projection| {
                let ea = linalg::frobenius_sq_view(&p.apply(&a.view()).unwrap().view());
                let eb =
                    linalg::frobenius_sq_view(&p.apply(&set.b_matrix().view()).unwrap().view());
                (ea - eb).abs()
            };
            let worst = discrepancy(&p_a).max(discrepancy(&p_b));
            let lhs = linalg::projection_error(&a, &p_b).unwrap();
            let rhs = linalg::rank_k_error(&a, k).unwrap() + 2.0 * worst;
            assert!(lhs <= rhs + 1e-9, "seed {seed}: {lhs:.6} > {rhs:.6}");
        }
    }

    #[test]
    fn sample_sets_expose_consistent_rows_and_scaling() {
        let agg = low_rank_plus_noise(30, 5, 2, 0.3, 63);
        let f = EntryFunction::huber(1.0).unwrap();
        let params = PcaParams::new(2, 0.25, 0.1, 1.0)
            .unwrap()
            .with_sample_count(25)
            .unwrap();
        let mut cluster = share_matrix(&agg, 3, 12);
        let set = sample_rows(&mut cluster, &f, &params, SamplerMode::Oracle, 4).unwrap();
        assert_eq!(set.rows().len(), 25);
        assert_eq!(set.b_matrix().nrows(), 25);
        assert_eq!(set.b_matrix().ncols(), 5);
        for (i, row) in set.rows().iter().enumerate() {
            assert!(row.q_hat > 0.0 && row.q_hat <= 1.0);
            // Stored values are f of the aggregate row, recomputed here.
            let expect: Vec<f64> = (0..5).map(|j| f.apply(agg[[row.index, j]])).collect();
            for (a, b) in row.values.iter().zip(&expect) {
                assert!((a - b).abs() <= 1e-12);
            }
            let scale = 1.0 / (25.0 * row.q_hat).sqrt();
            for j in 0..5 {
                assert!((set.b_matrix().array()[[i, j]] - row.values[j] * scale).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn row_collection_billing_is_exact() {
        // Tiny configuration by hand: r·(1 + s·d) = 3·(1 + 2·4) = 27 words,
        // split 3 index words / 24 collection words. The oracle draw itself
        // bills nothing.
        let agg = low_rank_plus_noise(16, 4, 2, 0.2, 1);
        let f = EntryFunction::identity();
        let params = PcaParams::new(2, 0.25, 0.1, 1.0)
            .unwrap()
            .with_sample_count(3)
            .unwrap();
        let mut cluster = share_matrix(&agg, 2, 5);
        sample_rows(&mut cluster, &f, &params, SamplerMode::Oracle, 9).unwrap();
        assert_eq!(cluster.ledger().words_with_tag(TAG_PCA_INDEX), 3);
        assert_eq!(cluster.ledger().words_with_tag(TAG_PCA_COLLECT), 24);
        assert_eq!(cluster.ledger_total_words(), 27);

        // The distributed backend adds sampler traffic but the collection
        // accounting is identical.
        let mut cluster = share_matrix(&agg, 2, 5);
        sample_rows(&mut cluster, &f, &params, desk_mode(), 9).unwrap();
        assert_eq!(cluster.ledger().words_with_tag(TAG_PCA_INDEX), 3);
        assert_eq!(cluster.ledger().words_with_tag(TAG_PCA_COLLECT), 24);
        assert!(cluster.ledger_total_words() > 27);
    }

    #[test]
    fn boosting_keeps_the_candidate_with_the_best_own_score() {
        let agg = low_rank_plus_noise(40, 6, 2, 0.4, 33);
        let f = EntryFunction::identity();
        let params = PcaParams::new(2, 0.25, 0.5, 1.0)
            .unwrap()
            .with_sample_count(20)
            .unwrap();
        assert_eq!(params.boost_runs(), 6);
        let mut cluster = share_matrix(&agg, 3, 44);
        let (best, scores) =
            boosted_candidates(&mut cluster, &f, &params, SamplerMode::Oracle).unwrap();
        assert_eq!(scores.len(), 6);
        let top = scores.iter().cloned().fold(f64::MIN, f64::max);
        // The selected projection scores `top` against its own run's B; no
        // other candidate's own score exceeds it.
        assert!(scores.iter().all(|&s| s <= top));
        assert_eq!(best.rank(), 2);
    }

    #[test]
    fn boosted_runs_are_billed_at_the_repetition_factor() {
        let agg = low_rank_plus_noise(16, 4, 2, 0.2, 2);
        let f = EntryFunction::identity();
        let params = PcaParams::new(2, 0.25, 0.01, 1.0)
            .unwrap()
            .with_sample_count(3)
            .unwrap();
        assert_eq!(params.boost_runs(), 37);
        let mut cluster = share_matrix(&agg, 2, 6);
        boosted_pca(&mut cluster, &f, &params, SamplerMode::Oracle).unwrap();
        // 37 runs × r·(1 + s·d) words each.
        assert_eq!(cluster.ledger_total_words(), 37 * 27);
    }

    #[test]
    fn boosted_failure_rate_stays_below_the_target() {
        // δ = 0.01 ⇒ 37 repetitions; over 300 boosted trials the fraction
        // whose winner misses the k²/r yardstick must stay ≤ 0.05.
        let k = 3;
        let r = 200;
        let agg = low_rank_plus_noise(64, 10, k, 0.15, 404);
        let f = EntryFunction::identity();
        let params = PcaParams::new(k, 0.25, 0.01, 1.0)
            .unwrap()
            .with_sample_count(r)
            .unwrap();
        let yardstick = (k * k) as f64 / r as f64;
        let mut failures = 0;
        for trial in 0..300 {
            let mut cluster = share_matrix(&agg, 2, 7000 + trial);
            let p = boosted_pca(&mut cluster, &f, &params, SamplerMode::Oracle).unwrap();
            if additive_error(&agg, &p, k) > yardstick {
                failures += 1;
            }
        }
        assert!(failures <= 15, "{failures}/300 boosted trials failed");
    }

    #[test]
    fn an_all_zero_matrix_cannot_be_sampled() {
        let agg = Array2::<f64>::zeros((8, 4));
        // Shares sum to zero everywhere even though each is nonzero.
        let mut cluster = share_matrix(&agg, 3, 9);
        let f = EntryFunction::identity();
        let err = sample_row(&mut cluster, &f, 0.25, SamplerMode::Oracle, 1).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
        let err = sample_row(&mut cluster, &f, 0.25, desk_mode(), 1).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }
}
