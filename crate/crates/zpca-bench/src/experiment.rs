//! End-to-end experiment execution: load, corrupt, partition, run the
//! protocol, measure against central oracles, and emit a CSV report.
//!
//! Measurement deliberately breaks the distribution fiction: the harness
//! reassembles the aggregate matrix centrally to compute exact errors, which
//! is legitimate for grading and never billed to the communication ledger.
//! Each report row records both error metrics, the words the run actually
//! spent, and the word budget it was allowed — a run that overruns is
//! *recorded* as over-budget rather than truncated, because protocols are
//! tuned to budgets up front (see the `tune` module), never cut off
//! mid-flight.
//!
//! Reports are deterministic: a fixed config, seed, and [`Clock`] reproduce
//! the output byte for byte.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::Array2;
use zpca::hashing::derive_seed;
use zpca::linalg::{self, DenseMatrix, Projection};
use zpca::pca::boosted_pca;
use zpca::rff::{default_feature_dim, rff_expand, uniform_row_pca, RffSpec};
use zpca::zsampler::SamplerProfile;
use zpca::{Cluster, PcaParams, SamplerMode};

use crate::config::{ExperimentConfig, FunctionSpec, RunMode};
use crate::corrupt::{corrupt_entries, Corruption};
use crate::dataset::load_dataset;
use crate::error::{Error, Result};
use crate::partition::{gm_shares, partition};

/// Harness-side seed salts (the protocol crate claims 0x01–0x3f).
mod salts {
    pub const CORRUPT: u64 = 0x41;
    pub const RUN: u64 = 0x42;
    pub const PARTITION: u64 = 0x43;
    pub const FEATURES: u64 = 0x44;
}

/// The report's fixed column schema.
pub const REPORT_HEADER: &str =
    "run_id,k,r,epsilon,words_used,budget_words,additive_error,relative_error,wall_ms,status";

/// Wall-time source, injectable so tests and replay runs can pin it.
pub trait Clock {
    /// Runs `f` and reports its result together with elapsed milliseconds.
    fn time<T>(&mut self, f: impl FnOnce() -> T) -> (T, u64);
}

/// Measures real elapsed time.
pub struct RealClock;

impl Clock for RealClock {
    fn time<T>(&mut self, f: impl FnOnce() -> T) -> (T, u64) {
        let start = Instant::now();
        let out = f();
        (out, start.elapsed().as_millis() as u64)
    }
}

/// Reports a constant instead of wall time, making report bytes
/// reproducible.
pub struct FixedClock(pub u64);

impl Clock for FixedClock {
    fn time<T>(&mut self, f: impl FnOnce() -> T) -> (T, u64) {
        (f(), self.0)
    }
}

/// How a run fared against its word budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    /// Within budget.
    Ok,
    /// Completed but spent more words than allowed.
    OverBudget,
}

impl RunStatus {
    fn render(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::OverBudget => "over-budget",
        }
    }
}

/// One (rank, repetition) run's measurements.
#[derive(Clone, Debug)]
pub struct ReportRow {
    pub run_id: usize,
    pub k: usize,
    /// Row-sample count the run used.
    pub r: usize,
    pub epsilon: f64,
    pub words_used: u64,
    pub budget_words: u64,
    /// `|‖A−AP‖²_F − ‖A−[A]_k‖²_F| / ‖A‖²_F`.
    pub additive_error: f64,
    /// `‖A−AP‖²_F / ‖A−[A]_k‖²_F`, floored as documented on [`measure`].
    pub relative_error: f64,
    pub wall_ms: u64,
    pub status: RunStatus,
}

/// A finished experiment: the config echo, the corruption log, and one row
/// per (rank, repetition) in canonical order.
#[derive(Clone, Debug)]
pub struct ErrorReport {
    pub echo: Vec<(String, String)>,
    pub corruptions: Vec<Corruption>,
    pub rows: Vec<ReportRow>,
}

impl ErrorReport {
    /// The report as CSV text: `# key=value` header echo, corruption log,
    /// the fixed column header, then the rows.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.echo {
            let _ = writeln!(out, "# {key}={value}");
        }
        for c in &self.corruptions {
            let _ = writeln!(out, "# corrupted {} {} {}", c.row, c.col, c.value);
        }
        out.push_str(REPORT_HEADER);
        out.push('\n');
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                row.run_id,
                row.k,
                row.r,
                row.epsilon,
                row.words_used,
                row.budget_words,
                row.additive_error,
                row.relative_error,
                row.wall_ms,
                row.status.render()
            );
        }
        out
    }
}

/// The word budget a config grants: `budget_ratio` times the `s·n·d` words
/// the servers collectively store.
pub fn budget_words(ratio: f64, s: usize, n: usize, d: usize) -> u64 {
    (ratio * (s * n * d) as f64).floor() as u64
}

/// Sampler profile for distributed-mode benchmark runs.
///
/// The published budget formulas size every sketch for adversarial inputs
/// and dominate interactive runtimes by orders of magnitude; this profile
/// keeps every protocol stage but pins repetition counts and widths to
/// what benchmark-scale inputs need. Its estimates stay well inside the
/// tolerances the acceptance gates check.
pub fn bench_sampler_profile() -> SamplerProfile {
    SamplerProfile {
        heavy_b: Some(4.0),
        level_buckets: Some(64),
        outer_reps: Some(1),
        sketch_depth: Some(1),
        level_reps: Some(1),
        accept_unit: Some(8.0),
        g_degree: Some(2),
        level_floor: Some(3),
        ..SamplerProfile::default()
    }
}

/// Failure-probability exponent for distributed-mode sampling: per-draw
/// failure scales as `l^{1−C}`.
const SAMPLER_CONFIDENCE: f64 = 2.0;

/// Maps a config's run mode onto the protocol's sampler backend.
pub fn sampler_mode(mode: RunMode) -> SamplerMode {
    match mode {
        RunMode::Oracle => SamplerMode::Oracle,
        RunMode::Distributed => SamplerMode::Distributed {
            confidence: SAMPLER_CONFIDENCE,
            profile: bench_sampler_profile(),
        },
    }
}

/// Both error metrics of a run against the exact central oracles.
///
/// When the best rank-k residual is numerically zero (below `1e−6·‖A‖²_F`,
/// the scale where eigenvalue round-off swamps the quotient), the relative
/// error reports `1.0` for an equally-zero achieved residual and the
/// residual against that floor otherwise — a failure on an exactly rank-k
/// input still shows up loudly.
pub fn measure(a: &DenseMatrix, p: &Projection, k: usize) -> Result<(f64, f64)> {
    const RANK_FLOOR: f64 = 1e-6;
    let fro = linalg::frobenius_sq(a);
    let best = linalg::rank_k_error(a, k)?;
    let resid = linalg::projection_error(a, p)?;
    let additive = (resid - best).abs() / fro;
    let relative = if best > RANK_FLOOR * fro {
        resid / best
    } else if resid <= RANK_FLOOR * fro {
        1.0
    } else {
        resid / (RANK_FLOOR * fro)
    };
    if !(additive >= 0.0) || relative < 1.0 - 1e-8 {
        return Err(Error::Report(format!(
            "error oracles disagree: additive {additive}, relative {relative}"
        )));
    }
    Ok((additive, relative))
}

/// The protocol outcome of one run: its projection and ledger facts.
struct RunOutcome {
    projection: Projection,
    words: u64,
    wall_ms: u64,
    ledger_csv: Option<String>,
    r: usize,
}

fn pca_params(config: &ExperimentConfig, k: usize, distortion: f64) -> Result<PcaParams> {
    let params = PcaParams::new(k, config.epsilon, config.delta, distortion)?;
    match config.samples {
        Some(r) => Ok(params.with_sample_count(r)?),
        None => Ok(params),
    }
}

/// Runs one (rank, repetition) cell and measures it.
fn run_once(
    config: &ExperimentConfig,
    raw: &DenseMatrix,
    k: usize,
    rep: usize,
    clock: &mut impl Clock,
    want_ledger: bool,
) -> Result<(RunOutcome, f64, f64)> {
    let s = config.servers;
    let run_seed = derive_seed(config.seed, &[salts::RUN, k as u64, rep as u64]);
    let locals = partition(
        raw,
        config.partition,
        s,
        derive_seed(run_seed, &[salts::PARTITION]),
    )?;

    let (outcome, truth) = match config.function {
        FunctionSpec::Rff { features } => {
            let feature_dim = features.unwrap_or_else(|| default_feature_dim(raw.nrows()));
            let spec = RffSpec::new(
                raw.ncols(),
                feature_dim,
                derive_seed(run_seed, &[salts::FEATURES]),
            )?;
            let params = pca_params(config, k, 1.0)?;
            let r = params.r();
            let mut cluster = Cluster::new(locals, run_seed)?;
            let (res, wall_ms) = clock.time(|| uniform_row_pca(&mut cluster, &spec, &params));
            let projection = res?;

            let agg = cluster.aggregate_matrix();
            let mut full = Array2::<f64>::zeros((agg.nrows(), feature_dim));
            for i in 0..agg.nrows() {
                let feats = rff_expand(&agg.array().row(i).to_vec(), &spec)?;
                for (j, &v) in feats.iter().enumerate() {
                    full[[i, j]] = v;
                }
            }
            let outcome = RunOutcome {
                projection,
                words: cluster.ledger_total_words(),
                wall_ms,
                ledger_csv: want_ledger.then(|| cluster.ledger().to_csv()),
                r,
            };
            (outcome, DenseMatrix::new(full)?)
        }
        _ => {
            let f = config.function.entry_function(s)?;
            let locals = match config.function {
                FunctionSpec::GeometricMean { p } => gm_shares(&locals, p)?,
                _ => locals,
            };
            let params = pca_params(config, k, f.distortion())?;
            let r = params.r();
            let mut cluster = Cluster::new(locals, run_seed)?;
            let mode = sampler_mode(config.mode);
            let (res, wall_ms) = clock.time(|| boosted_pca(&mut cluster, &f, &params, mode));
            let projection = res?;

            let truth =
                DenseMatrix::new(cluster.aggregate_matrix().array().mapv(|x| f.apply(x)))?;
            let outcome = RunOutcome {
                projection,
                words: cluster.ledger_total_words(),
                wall_ms,
                ledger_csv: want_ledger.then(|| cluster.ledger().to_csv()),
                r,
            };
            (outcome, truth)
        }
    };

    let (additive, relative) = measure(&truth, &outcome.projection, k)?;
    Ok((outcome, additive, relative))
}

/// Executes the configured experiment: one run per (rank, repetition),
/// measured against central oracles, reported in canonical order (ranks in
/// config order, repetitions ascending).
///
/// Side artifacts — the ledger dump and per-rank projection dumps — are
/// written to their configured paths; writing the report itself is the
/// caller's business (see [`ErrorReport::render`]).
pub fn run_experiment(config: &ExperimentConfig, clock: &mut impl Clock) -> Result<ErrorReport> {
    let raw = load_dataset(&config.dataset, config.format)?;
    let (raw, corruptions) = if config.corruptions > 0 {
        corrupt_entries(
            &raw,
            config.corruptions,
            config.corruption_magnitude,
            derive_seed(config.seed, &[salts::CORRUPT]),
        )?
    } else {
        (raw, Vec::new())
    };

    let budget = budget_words(config.budget_ratio, config.servers, raw.nrows(), raw.ncols());
    let mut rows = Vec::with_capacity(config.ks.len() * config.repetitions);
    let mut ledger_dump = config.ledger_out.as_ref().map(|_| String::new());

    for &k in &config.ks {
        for rep in 0..config.repetitions {
            let run_id = rows.len();
            let (outcome, additive, relative) =
                run_once(config, &raw, k, rep, clock, ledger_dump.is_some())?;
            if let (Some(dump), Some(csv)) = (ledger_dump.as_mut(), outcome.ledger_csv) {
                let _ = writeln!(dump, "# run {run_id}");
                dump.push_str(&csv);
            }
            if rep == config.repetitions - 1 {
                if let Some(prefix) = &config.projection_out {
                    let path = format!("{}_k{k}.csv", prefix.display());
                    std::fs::write(path, projection_csv(&outcome.projection))?;
                }
            }
            rows.push(ReportRow {
                run_id,
                k,
                r: outcome.r,
                epsilon: config.epsilon,
                words_used: outcome.words,
                budget_words: budget,
                additive_error: additive,
                relative_error: relative,
                wall_ms: outcome.wall_ms,
                status: if outcome.words > budget {
                    RunStatus::OverBudget
                } else {
                    RunStatus::Ok
                },
            });
        }
    }

    if let (Some(path), Some(dump)) = (&config.ledger_out, ledger_dump) {
        std::fs::write(path, dump)?;
    }

    Ok(ErrorReport {
        echo: config.echo(),
        corruptions,
        rows,
    })
}

/// The projection basis as CSV: `d` rows of `k` full-precision columns.
pub fn projection_csv(p: &Projection) -> String {
    let mut out = String::new();
    for row in p.basis().rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}
