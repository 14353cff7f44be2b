//! Experiment configuration: a flat `key=value` text format, strictly
//! validated, echoed verbatim into every report header.
//!
//! The format is deliberately primitive — one assignment per line, `#`
//! comments, no sections, no escapes — so a config file round-trips through
//! the echo untouched and a report is always traceable to the exact
//! parameters that produced it. Unknown and duplicate keys are hard errors:
//! a typo must fail loudly, not silently fall back to a default.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use zpca::entry_functions::EntryFunction;

use crate::error::{Error, Result};

/// On-disk dataset encodings accepted by the loader.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetFormat {
    /// Text: one row per line, comma-separated decimal entries.
    CsvDense,
    /// Binary: `n`,`d` as little-endian u64, then `n·d` little-endian f64
    /// row-major.
    BinaryF64,
}

impl DatasetFormat {
    fn parse(text: &str) -> Result<Self> {
        match text {
            "csv-dense" => Ok(Self::CsvDense),
            "binary-f64" => Ok(Self::BinaryF64),
            other => Err(Error::Config(format!(
                "unknown dataset format `{other}` (expected csv-dense or binary-f64)"
            ))),
        }
    }

    fn render(self) -> &'static str {
        match self {
            Self::CsvDense => "csv-dense",
            Self::BinaryF64 => "binary-f64",
        }
    }
}

/// How the input matrix is spread across servers before a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PartitionMode {
    /// Disjoint contiguous row blocks, zero-padded to full shape.
    RowSplit,
    /// Every entry split into `s` random convex shares that sum back
    /// exactly.
    AdditiveRandomSplit,
}

impl PartitionMode {
    fn parse(text: &str) -> Result<Self> {
        match text {
            "row-split" => Ok(Self::RowSplit),
            "additive-random-split" => Ok(Self::AdditiveRandomSplit),
            other => Err(Error::Config(format!(
                "unknown partition mode `{other}` (expected row-split or additive-random-split)"
            ))),
        }
    }

    fn render(self) -> &'static str {
        match self {
            Self::RowSplit => "row-split",
            Self::AdditiveRandomSplit => "additive-random-split",
        }
    }
}

/// Which sampler backend the runs use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunMode {
    /// Central reference sampler: exact row weights, collection traffic
    /// still billed.
    Oracle,
    /// The full multi-round distributed sampler.
    Distributed,
}

impl RunMode {
    fn parse(text: &str) -> Result<Self> {
        match text {
            "oracle" => Ok(Self::Oracle),
            "distributed" => Ok(Self::Distributed),
            other => Err(Error::Config(format!(
                "unknown run mode `{other}` (expected oracle or distributed)"
            ))),
        }
    }

    fn render(self) -> &'static str {
        match self {
            Self::Oracle => "oracle",
            Self::Distributed => "distributed",
        }
    }
}

/// The entrywise transform an experiment applies, written `name` or
/// `name:param` (e.g. `huber:1.0`, `gm:4`, `rff:512`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FunctionSpec {
    /// `f(x) = x` — plain PCA of the summed shares.
    Identity,
    /// Huber influence with clamp `k`.
    Huber { k: f64 },
    /// L1−L2 influence.
    L1L2,
    /// Fair influence with scale `c`.
    Fair { c: f64 },
    /// Signed power `sgn(x)·|x|^p`.
    Power { p: f64 },
    /// Geometric-mean preprocessing with exponent `p`; the per-server
    /// shares become `(1/s)|M^t|^p` and the transform `x^{1/p}`.
    GeometricMean { p: f64 },
    /// Kernel route: expand rows by random Fourier features of the given
    /// dimension (the default dimension when omitted) and sample uniformly.
    Rff { features: Option<usize> },
}

impl FunctionSpec {
    fn parse(text: &str) -> Result<Self> {
        let (name, param) = match text.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (text, None),
        };
        let number = |what: &str| -> Result<f64> {
            let raw = param.ok_or_else(|| {
                Error::Config(format!("function `{name}` needs a parameter, e.g. {name}:{what}"))
            })?;
            raw.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad {name} parameter `{raw}`")))
        };
        let spec = match name {
            "identity" => Self::Identity,
            "huber" => Self::Huber { k: number("1.0")? },
            "l1l2" => Self::L1L2,
            "fair" => Self::Fair { c: number("1.345")? },
            "power" => Self::Power { p: number("0.5")? },
            "gm" => Self::GeometricMean { p: number("4")? },
            "rff" => Self::Rff {
                features: match param {
                    None => None,
                    Some(raw) => Some(raw.parse::<usize>().map_err(|_| {
                        Error::Config(format!("bad rff feature count `{raw}`"))
                    })?),
                },
            },
            other => {
                return Err(Error::Config(format!("unknown function `{other}`")));
            }
        };
        if param.is_some() && matches!(spec, Self::Identity | Self::L1L2) {
            return Err(Error::Config(format!("function `{name}` takes no parameter")));
        }
        Ok(spec)
    }

    fn render(&self) -> String {
        match self {
            Self::Identity => "identity".into(),
            Self::Huber { k } => format!("huber:{k}"),
            Self::L1L2 => "l1l2".into(),
            Self::Fair { c } => format!("fair:{c}"),
            Self::Power { p } => format!("power:{p}"),
            Self::GeometricMean { p } => format!("gm:{p}"),
            Self::Rff { features: None } => "rff".into(),
            Self::Rff {
                features: Some(d),
            } => format!("rff:{d}"),
        }
    }

    /// The protocol-side transform, except for the kernel route, which
    /// replaces the entrywise transform with a feature expansion and has no
    /// `EntryFunction` of its own.
    pub fn entry_function(&self, s: usize) -> Result<EntryFunction> {
        let f = match *self {
            Self::Identity => EntryFunction::identity(),
            Self::Huber { k } => EntryFunction::huber(k)?,
            Self::L1L2 => EntryFunction::l1l2(),
            Self::Fair { c } => EntryFunction::fair(c)?,
            Self::Power { p } => EntryFunction::power(p)?,
            Self::GeometricMean { p } => EntryFunction::geometric_mean(p, s)?,
            Self::Rff { .. } => {
                return Err(Error::Config(
                    "the rff route expands rows instead of transforming entries".into(),
                ));
            }
        };
        Ok(f)
    }
}

/// A fully validated experiment description.
///
/// Every field — including defaults the file never spelled out — is echoed
/// into the report header in the fixed order of [`ExperimentConfig::echo`],
/// so a report alone reproduces the run.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Input matrix location.
    pub dataset: PathBuf,
    /// Its encoding.
    pub format: DatasetFormat,
    /// How the matrix is spread across servers.
    pub partition: PartitionMode,
    /// Number of servers.
    pub servers: usize,
    /// Entrywise transform (or the kernel route).
    pub function: FunctionSpec,
    /// Target ranks, one report row group per value.
    pub ks: Vec<usize>,
    /// Additive-error parameter.
    pub epsilon: f64,
    /// Failure probability driving the boosting repetition count.
    pub delta: f64,
    /// Word budget as a multiple of the total stored words `s·n·d`.
    pub budget_ratio: f64,
    /// Independent runs per rank.
    pub repetitions: usize,
    /// Master seed; every run seed derives from it.
    pub seed: u64,
    /// Sampler backend.
    pub mode: RunMode,
    /// Row-sample count override; when absent the published formula sets
    /// it.
    pub samples: Option<usize>,
    /// Entries to overwrite with `±corruption_magnitude` before the run.
    pub corruptions: usize,
    /// Magnitude of those overwrites.
    pub corruption_magnitude: f64,
    /// Report destination (stdout when absent).
    pub out: Option<PathBuf>,
    /// Projection dump prefix (`<prefix>_k<rank>.csv` per rank).
    pub projection_out: Option<PathBuf>,
    /// Ledger dump destination.
    pub ledger_out: Option<PathBuf>,
}

/// Canonical key order for the echo; also the complete set of legal keys.
const KEYS: &[&str] = &[
    "dataset",
    "format",
    "partition",
    "servers",
    "function",
    "k",
    "epsilon",
    "delta",
    "budget_ratio",
    "repetitions",
    "seed",
    "mode",
    "samples",
    "corruptions",
    "corruption_magnitude",
    "out",
    "projection_out",
    "ledger_out",
];

impl ExperimentConfig {
    /// Parses the flat `key=value` text. Unknown keys, duplicate keys,
    /// missing required keys, and out-of-range values are all rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut seen: BTreeMap<&str, String> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got `{line}`", idx + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!("line {}: unknown key `{key}`", idx + 1)));
            }
            if seen.insert(key, value.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", idx + 1)));
            }
        }
        Self::from_pairs(&seen)
    }

    /// [`ExperimentConfig::parse`] applied to a file's contents.
    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn from_pairs(seen: &BTreeMap<&str, String>) -> Result<Self> {
        fn required<'m>(seen: &'m BTreeMap<&str, String>, key: &str) -> Result<&'m str> {
            seen.get(key)
                .map(String::as_str)
                .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
        }
        fn parse_num<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
            raw.parse::<T>()
                .map_err(|_| Error::Config(format!("bad value for `{key}`: `{raw}`")))
        }

        let servers: usize = parse_num("servers", required(seen, "servers")?)?;
        if servers < 1 {
            return Err(Error::Config("servers must be ≥ 1".into()));
        }
        let ks = required(seen, "k")?
            .split(',')
            .map(|piece| parse_num::<usize>("k", piece.trim()))
            .collect::<Result<Vec<_>>>()?;
        if ks.is_empty() || ks.iter().any(|&k| k == 0) {
            return Err(Error::Config("k must list one or more ranks ≥ 1".into()));
        }
        let epsilon: f64 = parse_num("epsilon", required(seen, "epsilon")?)?;
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Config("epsilon must lie in (0, 1)".into()));
        }
        let delta: f64 = parse_num("delta", required(seen, "delta")?)?;
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Config("delta must lie in (0, 1)".into()));
        }
        let budget_ratio: f64 = parse_num("budget_ratio", required(seen, "budget_ratio")?)?;
        if !(budget_ratio.is_finite() && budget_ratio > 0.0) {
            return Err(Error::Config("budget_ratio must be > 0".into()));
        }
        let repetitions: usize = parse_num("repetitions", required(seen, "repetitions")?)?;
        if repetitions < 1 {
            return Err(Error::Config("repetitions must be ≥ 1".into()));
        }
        let corruptions = match seen.get("corruptions") {
            Some(raw) => parse_num("corruptions", raw)?,
            None => 0,
        };
        let corruption_magnitude = match seen.get("corruption_magnitude") {
            Some(raw) => parse_num("corruption_magnitude", raw)?,
            None => 1e6,
        };
        let samples = match seen.get("samples") {
            Some(raw) => Some(parse_num::<usize>("samples", raw)?),
            None => None,
        };

        Ok(Self {
            dataset: PathBuf::from(required(seen, "dataset")?),
            format: DatasetFormat::parse(required(seen, "format")?)?,
            partition: PartitionMode::parse(required(seen, "partition")?)?,
            servers,
            function: FunctionSpec::parse(required(seen, "function")?)?,
            ks,
            epsilon,
            delta,
            budget_ratio,
            repetitions,
            seed: parse_num("seed", required(seen, "seed")?)?,
            mode: match seen.get("mode") {
                Some(raw) => RunMode::parse(raw)?,
                None => RunMode::Oracle,
            },
            samples,
            corruptions,
            corruption_magnitude,
            out: seen.get("out").map(PathBuf::from),
            projection_out: seen.get("projection_out").map(PathBuf::from),
            ledger_out: seen.get("ledger_out").map(PathBuf::from),
        })
    }

    /// Every field as `(key, value)` pairs in canonical order, rendered in
    /// the same syntax the parser accepts — the echo round-trips.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut pairs: Vec<(String, String)> = vec![
            ("dataset".into(), self.dataset.display().to_string()),
            ("format".into(), self.format.render().into()),
            ("partition".into(), self.partition.render().into()),
            ("servers".into(), self.servers.to_string()),
            ("function".into(), self.function.render()),
            (
                "k".into(),
                self.ks
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("epsilon".into(), self.epsilon.to_string()),
            ("delta".into(), self.delta.to_string()),
            ("budget_ratio".into(), self.budget_ratio.to_string()),
            ("repetitions".into(), self.repetitions.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("mode".into(), self.mode.render().into()),
        ];
        if let Some(r) = self.samples {
            pairs.push(("samples".into(), r.to_string()));
        }
        pairs.push(("corruptions".into(), self.corruptions.to_string()));
        pairs.push((
            "corruption_magnitude".into(),
            self.corruption_magnitude.to_string(),
        ));
        for (key, path) in [
            ("out", &self.out),
            ("projection_out", &self.projection_out),
            ("ledger_out", &self.ledger_out),
        ] {
            if let Some(p) = path {
                pairs.push((key.into(), p.display().to_string()));
            }
        }
        pairs
    }

    /// The echo as config-file text (also the report-header block minus the
    /// leading `# ` markers).
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (key, value) in self.echo() {
            let _ = writeln!(out, "{key}={value}");
        }
        out
    }
}
