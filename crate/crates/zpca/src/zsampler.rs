//! Level-class estimation of the total weight `Z = Σ_i z(a_i)` and weighted
//! coordinate sampling across servers.
//!
//! The pipeline above this module needs to draw row indices with probability
//! proportional to `z(a_i)/Z` from a vector `a` that no single server holds.
//! This module implements that in two layers:
//!
//! * [`z_estimator`] partitions the (unseen) coordinates into geometric
//!   *weight classes* `S_i = {j : z(a_j) ∈ [(1+ε)^i, (1+ε)^{i+1})}` and
//!   estimates every class cardinality `ŝ_i`, reporting `Ẑ = Σ_i ŝ_i(1+ε)^i`
//!   together with a candidate `List` of coordinates whose exact values the
//!   coordinator has pulled. Heavy classes are counted directly from a global
//!   recovery pass; thin-but-numerous classes are counted by dyadic
//!   subsampling — keep a `2^{-j}` fraction of the domain, recover the
//!   survivors bucket by bucket, and scale an in-window census back up.
//! * [`z_sample`] draws a class with probability `ŝ_i(1+ε)^i/Ẑ`, then picks
//!   the class member minimizing a shared hash `g` — a min-hash draw that is
//!   near-uniform inside the class. Classes that are plausible but too thin
//!   to census reliably are first padded with *virtual coordinates*
//!   ([`inject_coordinates`]) so no real member hides in an unestimable
//!   class; a draw that lands on padding is retried with fresh randomness
//!   and never escapes.
//!
//! Every budget — class count `T`, heaviness threshold `B`, scatter buckets
//! `W`, repetition counts, census window — derives from `(ε, C, l)` alone
//! ([`SamplerParams`]). The published formulas are proof-grade and
//! astronomically conservative at desk scale, so [`SamplerProfile`] can
//! scale or pin individual budgets; the statistical tests in this crate
//! validate the reduced profiles against exact central oracles.
//!
//! Communication is metered like everything else: one seed block per server
//! up front (the level-selection hash, one scatter hash per level and
//! repetition, and a master word from which every recovery-call seed
//! derives), sketch uploads during recovery, and two words per server per
//! candidate when exact values are pulled. Reruns with the same seed produce
//! byte-identical ledgers and estimates.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cluster::{CommLedger, DistVector};
use crate::entry_functions::{self, EntryFunction};
use crate::error::{Error, Result};
use crate::hashing::{derive_seed, HashFn, MERSENNE_P};
use crate::heavy_hitters::{zhh_collect, ZhhPlan, ZhhScratch};

/// Ledger tag for the estimator's shared-randomness block.
pub const TAG_SAMPLER_SEEDS: &str = "sampler-seeds";
/// Ledger tag for the global recovery pass.
pub const TAG_SAMPLER_SKETCH: &str = "sampler-sketch";
/// Ledger tag for the per-(level, repetition) bucketed recovery passes.
pub const TAG_SAMPLER_LEVEL: &str = "sampler-level";
/// Ledger tag for exact-value pulls of candidate coordinates.
pub const TAG_SAMPLER_LOOKUP: &str = "sampler-lookup";

/// Scatter ranges up to this bar are bucketed through a directly indexed
/// table; wider ones fall back to an ordered map. Working profiles sit far
/// below it, published scatter ranges far above.
const DIRECT_SCATTER_MAX: u64 = 1 << 16;

/// Salts for deriving per-purpose seeds from one master word. Distinct from
/// the heavy-hitter salts so no two derivation chains can collide.
pub(crate) mod salts {
    /// Level-selection hash `g`.
    pub const G: u64 = 0x11;
    /// Scatter hash for one (level, repetition) pair.
    pub const LEVEL_HASH: u64 = 0x12;
    /// Global recovery pass.
    pub const GLOBAL: u64 = 0x13;
    /// One bucketed recovery call inside the dyadic sweep.
    pub const LEVEL_SKETCH: u64 = 0x14;
    /// Base estimate that sizes the padding.
    pub const BASE: u64 = 0x15;
    /// Estimator rerun for one sampling attempt.
    pub const ATTEMPT: u64 = 0x16;
    /// Class draw for one sampling attempt.
    pub const DRAW: u64 = 0x17;
}

/// `(1+ε)^i`, the left endpoint of weight class `i`, computed with `powi`
/// everywhere so boundary comparisons are reproducible across call sites.
pub(crate) fn class_weight(epsilon: f64, i: i64) -> f64 {
    (1.0 + epsilon).powi(i as i32)
}

/// The unique class index `i` with `(1+ε)^i ≤ z_val < (1+ε)^{i+1}`.
///
/// A logarithm gives the first guess; the guess is then walked until the
/// bracket holds under the same `powi` arithmetic [`class_weight`] uses, so
/// a value sitting exactly on `(1+ε)^i` lands in class `i` (classes are
/// closed on the left) no matter how the logarithm rounded.
///
/// # Errors
///
/// `z_val ≤ 0` or non-finite: zero-weight coordinates belong to no class and
/// are never sampled, since `z(0) = 0`. `epsilon` outside `(0, 1/2)`.
pub fn level_index(z_val: f64, epsilon: f64) -> Result<i64> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "sampling accuracy must lie in (0, 1/2), got {epsilon}"
        )));
    }
    if !(z_val > 0.0) || !z_val.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "only strictly positive finite weights have a class, got {z_val}"
        )));
    }
    let mut i = (z_val.ln() / (1.0 + epsilon).ln()).floor() as i64;
    while class_weight(epsilon, i) > z_val {
        i -= 1;
    }
    while class_weight(epsilon, i + 1) <= z_val {
        i += 1;
    }
    Ok(i)
}

/// Overrides for the published budget formulas.
///
/// The defaults (`scale = 1`, everything else `None`) reproduce the
/// published budgets exactly. Tests and desk-scale runs shrink them: `scale`
/// multiplies the heaviness threshold and the scatter-bucket count wholesale,
/// and each `Some` field pins one budget outright. Every reduced profile
/// used in this crate is validated against an exact central oracle before it
/// backs an assertion.
#[derive(Clone, Copy, Debug)]
pub struct SamplerProfile {
    /// Multiplies the derived heaviness threshold `B` and scatter-bucket
    /// count `W`. `1.0` is the published parameterization.
    pub scale: f64,
    /// Pin the heaviness threshold `B` for every recovery call.
    pub heavy_b: Option<f64>,
    /// Pin the scatter-bucket count `W` per (level, repetition).
    pub level_buckets: Option<u64>,
    /// Pin the outer repetition count of each recovery call.
    pub outer_reps: Option<usize>,
    /// Pin the inner sketch depth of each recovery call.
    pub sketch_depth: Option<usize>,
    /// Pin the number of scatter repetitions per level.
    pub level_reps: Option<usize>,
    /// Pin the census window unit `x₀`: a level count is accepted when it
    /// lies in `[4·x₀, 16·x₀)`.
    pub accept_unit: Option<f64>,
    /// Pin the padding divisor: class `i` is eligible for virtual
    /// coordinates only while `(1+ε)^i ≤ Ẑ / divisor`.
    pub pad_divisor: Option<f64>,
    /// Pin the independence degree of the level-selection hash `g`.
    pub g_degree: Option<usize>,
    /// Skip scatter rounds shallower than this level. The shallow rounds
    /// stream the densest subsample prefixes yet their census windows only
    /// cover the smallest countable classes, so on inputs whose operative
    /// classes are large they cost the bulk of the runtime for no readings.
    pub level_floor: Option<usize>,
}

impl Default for SamplerProfile {
    fn default() -> Self {
        Self {
            scale: 1.0,
            heavy_b: None,
            level_buckets: None,
            outer_reps: None,
            sketch_depth: None,
            level_reps: None,
            accept_unit: None,
            pad_divisor: None,
            g_degree: None,
            level_floor: None,
        }
    }
}

impl SamplerProfile {
    /// The published parameterization: no overrides at all.
    pub fn published() -> Self {
        Self::default()
    }

    fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "budget scale must be positive and finite, got {}",
                self.scale
            )));
        }
        if let Some(b) = self.heavy_b {
            if !(b.is_finite() && b >= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "pinned heaviness threshold must be ≥ 1, got {b}"
                )));
            }
        }
        if self.level_buckets == Some(0) {
            return Err(Error::InvalidParameter(
                "pinned scatter-bucket count must be ≥ 1".into(),
            ));
        }
        if self.outer_reps == Some(0) || self.sketch_depth == Some(0) || self.level_reps == Some(0)
        {
            return Err(Error::InvalidParameter(
                "pinned repetition counts and sketch depth must be ≥ 1".into(),
            ));
        }
        if let Some(u) = self.accept_unit {
            if !(u.is_finite() && u > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "census window unit must be positive, got {u}"
                )));
            }
        }
        if let Some(d) = self.pad_divisor {
            if !(d.is_finite() && d > 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "padding divisor must exceed 1, got {d}"
                )));
            }
        }
        if self.g_degree == Some(0) {
            return Err(Error::InvalidParameter(
                "level-selection hash degree must be ≥ 1".into(),
            ));
        }
        if self.level_floor == Some(0) {
            return Err(Error::InvalidParameter(
                "scatter-level floor must be ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

/// Accuracy/confidence knobs plus the vector dimension; every derived budget
/// is recomputed from these on demand and never stored, so the struct cannot
/// go stale or inconsistent.
#[derive(Clone, Copy, Debug)]
pub struct SamplerParams {
    epsilon: f64,
    confidence: f64,
    dimension: usize,
    profile: SamplerProfile,
}

impl SamplerParams {
    /// Published budgets for accuracy `epsilon ∈ (0, 1/2)`, confidence
    /// constant `confidence ≥ 1`, and vector dimension `dimension ≥ 1`.
    pub fn new(epsilon: f64, confidence: f64, dimension: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "sampling accuracy must lie in (0, 1/2), got {epsilon}"
            )));
        }
        if !(confidence.is_finite() && confidence >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "confidence constant must be ≥ 1, got {confidence}"
            )));
        }
        if dimension == 0 {
            return Err(Error::InvalidParameter(
                "vector dimension must be ≥ 1".into(),
            ));
        }
        Ok(Self {
            epsilon,
            confidence,
            dimension,
            profile: SamplerProfile::default(),
        })
    }

    /// Replace the budget profile.
    pub fn with_profile(mut self, profile: SamplerProfile) -> Result<Self> {
        profile.validate()?;
        self.profile = profile;
        Ok(self)
    }

    /// Same accuracy, confidence, and profile re-anchored to a new dimension
    /// (used for the estimator rerun on a padded vector).
    pub(crate) fn with_dimension(&self, dimension: usize) -> Self {
        Self { dimension, ..*self }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn profile(&self) -> &SamplerProfile {
        &self.profile
    }

    /// `ln l`, floored at `ln 2` so a singleton domain keeps positive
    /// budgets.
    fn log_l(&self) -> f64 {
        (self.dimension.max(2) as f64).ln()
    }

    /// Number of simultaneously tracked weight classes,
    /// `T = ⌈C·ln(l)/ε + 1⌉`.
    pub fn tracked_classes(&self) -> usize {
        (self.confidence * self.log_l() / self.epsilon + 1.0).ceil() as usize
    }

    /// Heaviness threshold `B = 40·ε⁻⁴·T³·ln(l)` (scaled or pinned by the
    /// profile) for every recovery call.
    pub fn heavy_b(&self) -> f64 {
        if let Some(b) = self.profile.heavy_b {
            return b;
        }
        let t = self.tracked_classes() as f64;
        (40.0 * self.epsilon.powi(-4) * t.powi(3) * self.log_l() * self.profile.scale).max(1.0)
    }

    /// Scatter-bucket count `W = (5120·C²·T²·ε⁻³·ln(l))²` (scaled or pinned
    /// by the profile), returned as a real number because the published
    /// value overflows any machine integer long before it becomes runnable.
    pub fn level_buckets(&self) -> f64 {
        if let Some(w) = self.profile.level_buckets {
            return w as f64;
        }
        let t = self.tracked_classes() as f64;
        let root = 5120.0
            * self.confidence.powi(2)
            * t.powi(2)
            * self.epsilon.powi(-3)
            * self.log_l();
        (root * root * self.profile.scale).max(1.0)
    }

    /// Failure probability handed to every recovery call, `l^(-20C)`,
    /// clamped away from zero so the inner-sketch depth formula stays
    /// finite.
    pub fn recovery_failure(&self) -> f64 {
        (self.dimension as f64)
            .powf(-20.0 * self.confidence)
            .clamp(1e-300, 0.5)
    }

    /// Number of dyadic subsampling levels, `⌈log₂(C·ε⁻¹·l)⌉`.
    pub fn levels(&self) -> usize {
        ((self.confidence * self.dimension as f64 / self.epsilon).log2().ceil() as usize).max(1)
    }

    /// Scatter repetitions per level, `⌈C·ln(l)⌉` (or pinned).
    pub fn level_reps(&self) -> usize {
        if let Some(e) = self.profile.level_reps {
            return e;
        }
        ((self.confidence * self.log_l()).ceil() as usize).max(1)
    }

    /// Shallowest scatter level that actually runs; `1` unless pinned.
    pub fn level_floor(&self) -> usize {
        self.profile.level_floor.unwrap_or(1).max(1)
    }

    /// Census window unit `x₀ = C²·ε⁻²·ln(l)` (or pinned); a level count is
    /// accepted while it lies in `[4·x₀, 16·x₀)`.
    pub fn census_unit(&self) -> f64 {
        if let Some(u) = self.profile.accept_unit {
            return u;
        }
        self.confidence.powi(2) * self.epsilon.powi(-2) * self.log_l()
    }

    /// Domain (and range) of the level-selection hash, `⌈C·ε⁻¹·l⌉`.
    pub fn g_domain(&self) -> u64 {
        (self.confidence * self.dimension as f64 / self.epsilon).ceil() as u64
    }

    /// Independence degree of the level-selection hash,
    /// `⌈20·C·ln(ε⁻¹·l)⌉` (or pinned).
    pub fn g_degree(&self) -> usize {
        if let Some(d) = self.profile.g_degree {
            return d;
        }
        ((20.0 * self.confidence * (self.dimension as f64 / self.epsilon).ln()).ceil() as usize)
            .max(1)
    }

    /// Padding divisor (or pinned): class `i` can receive virtual
    /// coordinates only while `(1+ε)^i ≤ Ẑ / divisor`. The published value
    /// is `5·ε⁻⁴·T³·ln(l)`, one eighth of [`Self::heavy_b`]'s default.
    pub fn pad_divisor(&self) -> f64 {
        if let Some(d) = self.profile.pad_divisor {
            return d;
        }
        let t = self.tracked_classes() as f64;
        5.0 * self.epsilon.powi(-4) * t.powi(3) * self.log_l()
    }

    /// Sampling attempts before giving up, `⌈C·ln(l)⌉`.
    pub fn retries(&self) -> usize {
        ((self.confidence * self.log_l()).ceil() as usize).max(1)
    }

    /// True when no weight class can be both tracked and below the padding
    /// threshold, whatever the estimate comes out to: the lowest tracked
    /// class has weight at least `Ẑ/(l^C·(1+ε))`, so once the padding
    /// divisor exceeds `l^C·(1+ε)` there is nothing to pad. [`z_sample`]
    /// then skips the base estimate that would only have sized the padding.
    /// The small slack absorbs rounding in the per-class weight arithmetic.
    pub fn injection_is_vacuous(&self) -> bool {
        let l_pow_c = (self.dimension as f64).powf(self.confidence);
        self.pad_divisor() > l_pow_c * (1.0 + self.epsilon) * (1.0 + 1e-7)
    }

    /// Recovery-call shape shared by the global pass and every bucketed
    /// pass: published formulas at this dimension, with the profile's pins
    /// applied.
    pub(crate) fn recovery_plan(&self) -> ZhhPlan {
        let mut plan = ZhhPlan::published(
            self.dimension as u64,
            self.heavy_b(),
            self.recovery_failure(),
        );
        if let Some(r) = self.profile.outer_reps {
            plan.reps = r;
        }
        if let Some(d) = self.profile.sketch_depth {
            plan.depth = d;
        }
        plan
    }
}

/// Output of [`z_estimator`]: sparse class-cardinality estimates, the total
/// they imply, the candidate coordinates with their exact values and weight
/// classes, and the level-selection hash that later breaks classes into
/// drawable members.
#[derive(Clone, Debug)]
pub struct LevelEstimate {
    epsilon: f64,
    s_hat: BTreeMap<i64, f64>,
    z_hat: f64,
    list: Vec<(u32, f64)>,
    classes: Vec<Option<i64>>,
    g: HashFn,
}

impl LevelEstimate {
    pub(crate) fn assemble(
        epsilon: f64,
        s_hat: BTreeMap<i64, f64>,
        z_hat: f64,
        list: Vec<(u32, f64)>,
        classes: Vec<Option<i64>>,
        g: HashFn,
    ) -> Self {
        debug_assert_eq!(list.len(), classes.len());
        Self {
            epsilon,
            s_hat,
            z_hat,
            list,
            classes,
            g,
        }
    }

    /// Estimated cardinality per weight class, sparse over the classes that
    /// were actually observed.
    pub fn s_hat(&self) -> &BTreeMap<i64, f64> {
        &self.s_hat
    }

    /// `Ẑ = Σ_i ŝ_i·(1+ε)^i`, summed in ascending class order.
    pub fn z_hat(&self) -> f64 {
        self.z_hat
    }

    /// Candidate coordinates with their exact aggregate values, ascending
    /// by coordinate.
    pub fn list(&self) -> &[(u32, f64)] {
        &self.list
    }

    /// Weight class per listed candidate (aligned with [`Self::list`]);
    /// `None` marks a zero-weight value.
    pub fn classes(&self) -> &[Option<i64>] {
        &self.classes
    }

    /// The level-selection hash shared by all servers for this run.
    pub fn g(&self) -> &HashFn {
        &self.g
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Left endpoint of class `i` under this estimate's accuracy.
    pub fn class_weight(&self, i: i64) -> f64 {
        class_weight(self.epsilon, i)
    }

    /// Recompute the total from the stored classes, in the same ascending
    /// order the constructor used; equal to [`Self::z_hat`] bit for bit.
    pub fn recompute_z(&self) -> f64 {
        self.s_hat
            .iter()
            .map(|(&i, &s)| s * self.class_weight(i))
            .sum()
    }
}

/// One padded class: `count` virtual coordinates of value `value` appended
/// for weight class `class`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InjectedRun {
    pub class: i64,
    pub count: usize,
    pub value: f64,
}

/// A base vector plus the virtual coordinates appended by
/// [`inject_coordinates`]. Server 1 owns every appended value; the other
/// servers' parts are extended with zeros, so aggregates over the base range
/// are untouched. Virtual coordinates are flagged by position and never
/// escape as sampler output.
#[derive(Clone, Debug)]
pub struct InjectedVector {
    vector: DistVector,
    base_len: usize,
    runs: Vec<InjectedRun>,
}

impl InjectedVector {
    /// The padded distributed vector.
    pub fn vector(&self) -> &DistVector {
        &self.vector
    }

    /// Length of the original vector; coordinates at or past this index are
    /// virtual.
    pub fn base_len(&self) -> usize {
        self.base_len
    }

    /// Total length including padding.
    pub fn padded_len(&self) -> usize {
        self.vector.len()
    }

    /// Whether coordinate `p` is padding rather than a real coordinate.
    pub fn is_injected(&self, p: usize) -> bool {
        p >= self.base_len
    }

    /// Number of virtual coordinates appended.
    pub fn injected_count(&self) -> usize {
        self.vector.len() - self.base_len
    }

    /// The per-class padding runs, in ascending class order.
    pub fn runs(&self) -> &[InjectedRun] {
        &self.runs
    }
}

/// Estimate every weight-class cardinality and the total weight of `a`.
///
/// The protocol runs in two communication rounds after a seed broadcast:
///
/// 1. **Recovery.** A global pass returns every coordinate holding an
///    `Ω(1/B)` share of the total weight. Then, per dyadic level `j`, the
///    coordinates whose level-selection hash lands below `2^{-j}` of its
///    range survive, are scattered into `W` buckets per repetition, and each
///    nonempty bucket runs its own recovery pass.
/// 2. **Exact values.** The coordinator pulls every recovered candidate's
///    share from every server (one request word, one response word per pair)
///    and aggregates centrally.
///
/// Classes are then filled two ways: every globally recovered candidate
/// counts toward its class directly, and a level-`j` class count inside the
/// census window `[4x₀, 16x₀)` is an unbiased `2^j`-scaled census that
/// overrides the direct count when larger. The result satisfies, with
/// probability `1 − l^(−Θ(C))`, `Ẑ = (1 ± Θ(ε))·Z` and
/// `ŝ_i ≤ (1+ε)·|S_i|` for every class.
///
/// # Errors
///
/// `z` failing shape validation; a dimension mismatch between `a` and
/// `params`; derived budgets exceeding the seeded hash field (published
/// budgets at desk scale — supply a [`SamplerProfile`]).
pub fn z_estimator(
    a: &DistVector,
    z: &EntryFunction,
    params: &SamplerParams,
    seed: u64,
    ledger: &mut CommLedger,
) -> Result<LevelEstimate> {
    entry_functions::validate_default(z)?;
    if a.len() != params.dimension() {
        return Err(Error::DimensionMismatch(format!(
            "vector has {} coordinates but params expect {}",
            a.len(),
            params.dimension()
        )));
    }
    let l = a.len() as u64;
    let s = a.s();
    let eps = params.epsilon();

    let plan = params.recovery_plan();
    let field = MERSENNE_P as f64;
    if plan.bucket_count as f64 >= field {
        return Err(Error::InvalidParameter(format!(
            "recovery bucket count {} exceeds the seeded hash field; supply a profile override",
            plan.bucket_count
        )));
    }
    let w_buckets_real = params.level_buckets();
    if w_buckets_real >= field {
        return Err(Error::InvalidParameter(format!(
            "scatter bucket count {w_buckets_real:.3e} exceeds the seeded hash field; supply a profile override"
        )));
    }
    let w_buckets = w_buckets_real.ceil() as u64;

    let levels = params.levels();
    let level_floor = params.level_floor();
    let e_reps = params.level_reps();
    let g_domain = params.g_domain();
    let census_lo = 4.0 * params.census_unit();
    let census_hi = 16.0 * params.census_unit();

    // Seed broadcast: the level-selection hash, one scatter hash per
    // (level, repetition), and the master word every recovery-call seed
    // derives from. Each other server receives the full blocks.
    let g = HashFn::from_seed(
        derive_seed(seed, &[salts::G]),
        params.g_degree(),
        g_domain,
        g_domain,
    )?;
    let mut scatter = Vec::with_capacity(levels.saturating_sub(level_floor - 1) * e_reps);
    for j in level_floor..=levels {
        for e in 0..e_reps {
            scatter.push(HashFn::from_seed(
                derive_seed(seed, &[salts::LEVEL_HASH, j as u64, e as u64]),
                2,
                l,
                w_buckets,
            )?);
        }
    }
    let seed_words = g.to_words().len() as u64
        + scatter
            .iter()
            .map(|h| h.to_words().len() as u64)
            .sum::<u64>()
        + 1;
    for t in 2..=s {
        ledger.push(1, t, seed_words, TAG_SAMPLER_SEEDS);
    }

    // Round 1a: global recovery of every Ω(1/B)-heavy coordinate.
    let mut scratch = ZhhScratch::new();
    let all: Vec<u32> = (0..a.len() as u32).collect();
    let mut d_global = zhh_collect(
        a,
        &all,
        &plan,
        derive_seed(seed, &[salts::GLOBAL]),
        ledger,
        TAG_SAMPLER_SKETCH,
        &mut scratch,
    );
    d_global.sort_unstable();
    d_global.dedup(); // repetitions can re-find the same member

    // Round 1b: dyadic subsampling. Level j keeps the coordinates whose
    // level-selection hash lands in the lowest 2^{-j} slice of its range,
    // scatters them, and recovers each bucket's heavy members. Coordinates
    // are pre-bucketed by the deepest slice containing them (the slices are
    // nested), so level j reads a prefix of the depth-ordered list instead
    // of rescanning the whole domain.
    let g_vals: Vec<u64> = (0..a.len() as u32)
        .map(|c| g.eval_unchecked(u64::from(c) + 1))
        .collect();
    let mut by_depth: Vec<Vec<u32>> = vec![Vec::new(); levels + 1];
    for (c, &gv) in g_vals.iter().enumerate() {
        // Hash values are 1-based, so gv ≥ 1 and the quotient is well
        // defined; depths shallower than the floor are in no round we run.
        let deepest = ((g_domain / gv).ilog2() as usize).min(levels);
        if deepest >= level_floor {
            by_depth[deepest].push(c as u32);
        }
    }
    let mut flat: Vec<u32> = Vec::with_capacity(a.len());
    let mut prefix_len = vec![0usize; levels + 1];
    for j in (level_floor..=levels).rev() {
        flat.extend_from_slice(&by_depth[j]);
        prefix_len[j] = flat.len();
    }

    let direct_scatter = w_buckets <= DIRECT_SCATTER_MAX;
    let mut bucket_lists: Vec<Vec<u32>> = if direct_scatter {
        vec![Vec::new(); w_buckets as usize + 1]
    } else {
        Vec::new()
    };
    let mut touched: Vec<u64> = Vec::new();
    let mut buckets: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
    let mut d_levels: Vec<Vec<u32>> = vec![Vec::new(); levels + 1];
    for j in level_floor..=levels {
        let cut = g_domain >> j;
        if cut == 0 {
            continue; // the slice is empty: no survivors at this depth
        }
        let survivors = &flat[..prefix_len[j]];
        for e in 0..e_reps {
            let h = &scatter[(j - level_floor) * e_reps + e];
            if direct_scatter {
                for &w in &touched {
                    bucket_lists[w as usize].clear();
                }
                touched.clear();
                for &c in survivors {
                    let w = h.eval_unchecked(u64::from(c) + 1);
                    let slot = &mut bucket_lists[w as usize];
                    if slot.is_empty() {
                        touched.push(w);
                    }
                    slot.push(c);
                }
                touched.sort_unstable();
                for &w in &touched {
                    let members = &mut bucket_lists[w as usize];
                    members.sort_unstable(); // recovery wants ascending members
                    let found = zhh_collect(
                        a,
                        members,
                        &plan,
                        derive_seed(seed, &[salts::LEVEL_SKETCH, j as u64, e as u64, w]),
                        ledger,
                        TAG_SAMPLER_LEVEL,
                        &mut scratch,
                    );
                    d_levels[j].extend(found);
                }
            } else {
                buckets.clear();
                for &c in survivors {
                    buckets
                        .entry(h.eval_unchecked(u64::from(c) + 1))
                        .or_default()
                        .push(c);
                }
                for (&w, members) in buckets.iter_mut() {
                    members.sort_unstable(); // recovery wants ascending members
                    let found = zhh_collect(
                        a,
                        members,
                        &plan,
                        derive_seed(seed, &[salts::LEVEL_SKETCH, j as u64, e as u64, w]),
                        ledger,
                        TAG_SAMPLER_LEVEL,
                        &mut scratch,
                    );
                    d_levels[j].extend(found);
                }
            }
        }
    }
    for dj in &mut d_levels {
        dj.sort_unstable();
        dj.dedup(); // repetitions of a level can re-find the same member
    }

    // Round 2: pull exact values for the union of all recovered candidates.
    // Each candidate costs one request and one response word per server;
    // the batch is billed as one entry per server and direction.
    let mut list_vec: Vec<u32> = Vec::with_capacity(
        d_global.len() + d_levels.iter().map(Vec::len).sum::<usize>(),
    );
    list_vec.extend_from_slice(&d_global);
    for dj in &d_levels {
        list_vec.extend_from_slice(dj);
    }
    list_vec.sort_unstable();
    list_vec.dedup();
    let lookups = list_vec.len() as u64;
    if lookups > 0 {
        for t in 1..=s {
            ledger.push(1, t, lookups, TAG_SAMPLER_LOOKUP);
            ledger.push(t, 1, lookups, TAG_SAMPLER_LOOKUP);
        }
    }
    // Exact values and classes aligned with `list_vec`: each member's class
    // walk happens once here, and the census passes below merely look it up
    // through a direct position table.
    let mut values: Vec<f64> = Vec::with_capacity(list_vec.len());
    let mut class_of: Vec<Option<i64>> = Vec::with_capacity(list_vec.len());
    let mut pos: Vec<u32> = vec![u32::MAX; a.len()];
    for (idx, &c) in list_vec.iter().enumerate() {
        let val = a.aggregate(c as usize);
        let zv = z.z(val);
        values.push(val);
        class_of.push(if zv > 0.0 {
            Some(level_index(zv, eps)?)
        } else {
            None
        });
        pos[c as usize] = idx as u32;
    }
    let class_at = |c: u32| class_of[pos[c as usize] as usize];

    // Direct counts: globally recovered candidates, classed by exact weight.
    let mut s_hat: BTreeMap<i64, f64> = BTreeMap::new();
    for &c in &d_global {
        if let Some(i) = class_at(c) {
            *s_hat.entry(i).or_insert(0.0) += 1.0;
        }
    }

    // Census overrides: a level-j class count inside the window is an
    // unbiased 2^j-scaled census of the class; take the largest accepted
    // reading.
    let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
    for (j, dj) in d_levels.iter().enumerate().skip(1) {
        counts.clear();
        for &c in dj {
            if let Some(i) = class_at(c) {
                *counts.entry(i).or_insert(0) += 1;
            }
        }
        for (&i, &n) in &counts {
            let n = n as f64;
            if n >= census_lo && n < census_hi {
                let scaled = 2f64.powi(j as i32) * n;
                let entry = s_hat.entry(i).or_insert(0.0);
                if scaled > *entry {
                    *entry = scaled;
                }
            }
        }
    }
    let list: Vec<(u32, f64)> = list_vec.into_iter().zip(values).collect();

    let mut estimate = LevelEstimate::assemble(eps, s_hat, 0.0, list, class_of, g);
    estimate.z_hat = estimate.recompute_z();
    Ok(estimate)
}

/// Pad thin-but-plausible classes with virtual coordinates on server 1.
///
/// A class is *tracked* when its weight ceiling `(1+ε)^{i+1}` lies in
/// `[Ẑ/l^C, (1+ε)·Ẑ]` — heavier classes cannot exist, lighter ones cannot
/// matter — and *padding-eligible* (growing) while `(1+ε)^i ≤ Ẑ/divisor`.
/// Each tracked eligible class receives `⌈ε·Ẑ/(5·T·(1+ε)^i)⌉` virtual
/// coordinates whose value is the minimal preimage of the class floor, so
/// the padded class is countable by census even if it was empty. Classes
/// whose floor has no preimage under `z` are skipped: no real coordinate
/// can occupy them either. The base vector's coordinates and aggregates are
/// untouched, so `Z(a) ≤ Z(a′) ≤ (1 + Θ(ε))·Z(a)` whenever the estimate
/// feeding the counts is sound.
///
/// Padding is a local act of server 1 (everyone else implicitly appends
/// zeros), so nothing is billed here; the padded dimension reaches the other
/// servers inside the next estimator run's seed block.
///
/// # Errors
///
/// Dimension mismatch, or padding growth past `l·B` (impossible with sound
/// estimates; kept as a hard stop rather than an assertion).
pub fn inject_coordinates(
    a: &DistVector,
    estimate: &LevelEstimate,
    z: &EntryFunction,
    params: &SamplerParams,
) -> Result<InjectedVector> {
    if a.len() != params.dimension() {
        return Err(Error::DimensionMismatch(format!(
            "vector has {} coordinates but params expect {}",
            a.len(),
            params.dimension()
        )));
    }
    let eps = params.epsilon();
    let z_hat = estimate.z_hat();
    let base_len = a.len();
    if z_hat <= 0.0 {
        return Ok(InjectedVector {
            vector: a.clone(),
            base_len,
            runs: Vec::new(),
        });
    }

    let t_classes = params.tracked_classes() as f64;
    let pad_divisor = params.pad_divisor();
    let l_pow_c = (base_len as f64).powf(params.confidence());
    let tracked = |i: i64| {
        let ceiling = class_weight(eps, i + 1);
        ceiling >= z_hat / l_pow_c && ceiling <= (1.0 + eps) * z_hat
    };
    let eligible = |i: i64| class_weight(eps, i) <= z_hat / pad_divisor;

    // Candidate range from logarithms with slack; the exact predicates
    // above make the final call per class.
    let ln_w = (1.0 + eps).ln();
    let i_lo = ((z_hat / (l_pow_c * (1.0 + eps)))
        .max(f64::MIN_POSITIVE)
        .ln()
        / ln_w)
        .floor() as i64
        - 2;
    let i_hi = (((1.0 + eps) * z_hat).ln() / ln_w).ceil() as i64 + 2;
    let (i_lo, i_hi) = (i_lo.max(-30_000), i_hi.min(30_000));

    let s = a.s();
    let mut parts: Vec<Vec<f64>> = (1..=s).map(|t| a.part(t).to_vec()).collect();
    let mut runs = Vec::new();
    for i in i_lo..=i_hi {
        if !(tracked(i) && eligible(i)) {
            continue;
        }
        let floor = class_weight(eps, i);
        let Some(value) = z.z_inverse(floor) else {
            continue; // the floor is out of z's reach: the class must be empty
        };
        if level_index(z.z(value), eps)? != i {
            continue; // preimage rounded across the boundary: nothing honest to pad with
        }
        let count = (eps * z_hat / (5.0 * t_classes * floor)).ceil() as usize;
        parts[0].extend(std::iter::repeat(value).take(count));
        for part in parts.iter_mut().skip(1) {
            part.extend(std::iter::repeat(0.0).take(count));
        }
        runs.push(InjectedRun {
            class: i,
            count,
            value,
        });
    }

    let cap = (base_len as f64) * params.heavy_b();
    if (parts[0].len() as f64) > cap {
        return Err(Error::InvalidParameter(format!(
            "padding would grow the vector to {} coordinates, past the l·B cap {cap:.0}",
            parts[0].len()
        )));
    }
    if runs.is_empty() {
        return Ok(InjectedVector {
            vector: a.clone(),
            base_len,
            runs,
        });
    }
    Ok(InjectedVector {
        vector: DistVector::new(parts)?,
        base_len,
        runs,
    })
}

/// One weighted draw: the coordinate, its estimated draw probability, and
/// how many attempts were consumed (`1` means the first try landed on a real
/// coordinate).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleOutcome {
    /// 0-based coordinate of the base vector.
    pub index: usize,
    /// `q̂ = z(a_p)/Ẑ`, the estimated probability of this draw, built from
    /// the candidate's exact value and the successful attempt's total.
    pub q_hat: f64,
    /// Attempts consumed; earlier attempts drew padding and were discarded.
    pub attempts: usize,
}

/// Draw one coordinate of `a` with probability close to `z(a_i)/Z(a)`.
///
/// The vector is first padded ([`inject_coordinates`], sized by a dedicated
/// base estimate — skipped when the profile provably pads nothing). Each
/// attempt then reruns [`z_estimator`] on the padded vector with a fresh
/// derived seed, draws a class with probability `ŝ_i(1+ε)^i/Ẑ`, and returns
/// the class member of `List` minimizing the level-selection hash `g`, ties
/// broken toward the smaller coordinate. Min-hashing over a fresh `g` is
/// near-uniform inside the class, so each real coordinate comes back with
/// probability `(1 ± Θ(ε))·z(a_i)/Z(a) ± l^(−Θ(C))`. An attempt that lands
/// on padding is discarded — virtual coordinates never escape — and after
/// `⌈C·ln l⌉` failed attempts the exhaustion is surfaced, never hidden.
///
/// # Errors
///
/// Everything [`z_estimator`] can raise; a vector with zero total weight
/// (the target distribution does not exist); [`Error::SamplerExhausted`]
/// when every attempt drew padding (probability `l^(−Θ(C))`).
pub fn z_sample(
    a: &DistVector,
    z: &EntryFunction,
    params: &SamplerParams,
    seed: u64,
    ledger: &mut CommLedger,
) -> Result<SampleOutcome> {
    entry_functions::validate_default(z)?;
    // Central diagnostic only (bills nothing): a zero-weight vector has no
    // target distribution to draw from, so fail fast instead of burning
    // every retry to learn it.
    let has_mass = (0..a.len()).any(|i| z.z(a.aggregate(i)) > 0.0);
    if !has_mass {
        return Err(Error::InvalidParameter(
            "every coordinate has zero weight; there is no distribution to sample".into(),
        ));
    }

    // When the profile provably pads nothing, sample straight off the
    // borrowed base vector instead of materializing an unpadded copy.
    let injected: Option<InjectedVector> = if params.injection_is_vacuous() {
        None
    } else {
        let base = z_estimator(a, z, params, derive_seed(seed, &[salts::BASE]), ledger)?;
        Some(inject_coordinates(a, &base, z, params)?)
    };
    let (active, padded_len) = match injected.as_ref() {
        Some(iv) => (iv.vector(), iv.padded_len()),
        None => (a, a.len()),
    };
    let padded_params = params.with_dimension(padded_len);

    let retries = params.retries();
    for attempt in 0..retries {
        let estimate = z_estimator(
            active,
            z,
            &padded_params,
            derive_seed(seed, &[salts::ATTEMPT, attempt as u64]),
            ledger,
        )?;
        if estimate.z_hat() <= 0.0 {
            continue; // recovery came back empty this round; fresh seed next
        }

        // Class draw: walk the sparse classes in ascending order until the
        // prefix sum of ŝ_i·(1+ε)^i passes a uniform target. The prefix
        // total equals Ẑ exactly (same summation order), so a class is
        // always reached.
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(seed, &[salts::DRAW, attempt as u64]));
        let target = rng.gen::<f64>() * estimate.z_hat();
        let mut drawn = *estimate
            .s_hat()
            .keys()
            .next_back()
            .expect("nonzero total implies at least one class");
        let mut prefix = 0.0;
        for (&i, &sh) in estimate.s_hat() {
            prefix += sh * estimate.class_weight(i);
            if prefix > target {
                drawn = i;
                break;
            }
        }

        // Min-hash member selection inside the drawn class; the ascending
        // scan with a strict comparison breaks ties toward the smaller
        // coordinate.
        let mut best: Option<(u64, u32, f64)> = None;
        for (idx, &(c, value)) in estimate.list().iter().enumerate() {
            if estimate.classes()[idx] != Some(drawn) {
                continue;
            }
            let gv = estimate.g().eval_unchecked(u64::from(c) + 1);
            if best.map_or(true, |(bg, _, _)| gv < bg) {
                best = Some((gv, c, value));
            }
        }
        let Some((_, c, value)) = best else {
            continue; // drawn class has no listed member this round
        };
        if injected
            .as_ref()
            .is_some_and(|iv| iv.is_injected(c as usize))
        {
            continue; // padding drew the class; retry with fresh randomness
        }
        return Ok(SampleOutcome {
            index: c as usize,
            q_hat: z.z(value) / estimate.z_hat(),
            attempts: attempt + 1,
        });
    }
    Err(Error::SamplerExhausted { attempts: retries })
}
