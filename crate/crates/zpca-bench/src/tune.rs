//! Budget-driven parameter choice.
//!
//! Experiments are tuned to a word budget *before* running — a run is never
//! truncated mid-protocol. Row collection dominates the bill: every drawn
//! row costs one index word plus `s` row slices of `d` words, so a budget
//! of `W` words sustains `⌊W / (1 + s·d)⌋` samples. The tuner picks exactly
//! that, the largest sample count whose collection bill fits.

use crate::config::ExperimentConfig;
use crate::dataset::load_dataset;
use crate::error::{Error, Result};
use crate::experiment::budget_words;

/// A tuned experiment size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TuneOutcome {
    /// The absolute word budget the ratio grants on this dataset.
    pub budget_words: u64,
    /// Collection cost of one drawn row, `1 + s·d`.
    pub per_draw_words: u64,
    /// Largest sample count whose collection bill fits the budget.
    pub samples: usize,
}

impl TuneOutcome {
    /// Key=value lines mirroring the config syntax, ready to paste a
    /// `samples=` override from.
    pub fn render(&self) -> String {
        format!(
            "budget_words={}\nper_draw_words={}\nsamples={}\n",
            self.budget_words, self.per_draw_words, self.samples
        )
    }
}

/// Largest `r` with `r·(1 + s·d) ≤ budget`; errors when not even one draw
/// fits.
pub fn max_samples_within_budget(budget: u64, s: usize, d: usize) -> Result<usize> {
    let per_draw = 1 + (s as u64) * (d as u64);
    let samples = (budget / per_draw) as usize;
    if samples == 0 {
        return Err(Error::Config(format!(
            "budget of {budget} words cannot cover even one {per_draw}-word draw"
        )));
    }
    Ok(samples)
}

/// Tunes the config's sample count to a budget ratio: loads the dataset for
/// its shape, converts the ratio into words, and maximizes the draw count.
pub fn tune(config: &ExperimentConfig, budget_ratio: f64) -> Result<TuneOutcome> {
    if !(budget_ratio.is_finite() && budget_ratio > 0.0) {
        return Err(Error::Config("budget_ratio must be > 0".into()));
    }
    let m = load_dataset(&config.dataset, config.format)?;
    let budget = budget_words(budget_ratio, config.servers, m.nrows(), m.ncols());
    let samples = max_samples_within_budget(budget, config.servers, m.ncols())?;
    Ok(TuneOutcome {
        budget_words: budget,
        per_draw_words: 1 + (config.servers * m.ncols()) as u64,
        samples,
    })
}
