//! Deterministic simulator of the star-topology server model with a
//! word-accounting ledger.
//!
//! `s` servers each hold an equally-shaped local slice `A^t`; server 1 is
//! the coordinator every message must touch. The simulation runs in one
//! process, but protocol code is written as explicit message exchanges: any
//! value that logically crosses the wire goes through [`Cluster::send`] or
//! [`Cluster::broadcast`], which append to the [`CommLedger`]. The ledger —
//! an ordered list of `(source, destination, words, tag)` — is a first-class
//! output: budget checks, protocol cost assertions, and regression
//! comparisons all read it. One word is one 64-bit quantity (a real, an
//! index, or a seed).
//!
//! Determinism: all per-server randomness derives from the cluster's master
//! seed (`seed XOR server-id` feeding a counter-based generator), so a rerun
//! with the same seed reproduces the identical message trace byte for byte.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hashing::HashFn;
use crate::linalg::DenseMatrix;

/// 1-based server identifier; server 1 is the coordinator.
pub type ServerId = usize;

/// Anything with a well-defined size in 64-bit words when serialized onto
/// the wire.
pub trait WordCount {
    fn word_count(&self) -> u64;
}

impl WordCount for f64 {
    fn word_count(&self) -> u64 {
        1
    }
}

impl WordCount for u64 {
    fn word_count(&self) -> u64 {
        1
    }
}

impl WordCount for usize {
    fn word_count(&self) -> u64 {
        1
    }
}

impl WordCount for [f64] {
    fn word_count(&self) -> u64 {
        self.len() as u64
    }
}

impl WordCount for Vec<f64> {
    fn word_count(&self) -> u64 {
        self.len() as u64
    }
}

impl WordCount for [u64] {
    fn word_count(&self) -> u64 {
        self.len() as u64
    }
}

impl WordCount for Vec<u64> {
    fn word_count(&self) -> u64 {
        self.len() as u64
    }
}

impl WordCount for HashFn {
    /// A hash function ships as its full word block `(t, p, coeffs, m, w)`.
    fn word_count(&self) -> u64 {
        self.to_words().len() as u64
    }
}

/// A payload that is pure size: `Words(n)` stands for `n` words already
/// counted by the caller (used when a message aggregates many small pieces).
#[derive(Clone, Copy, Debug)]
pub struct Words(pub u64);

impl WordCount for Words {
    fn word_count(&self) -> u64 {
        self.0
    }
}

/// One billed transfer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub source: ServerId,
    pub destination: ServerId,
    pub words: u64,
    pub tag: &'static str,
}

/// Ordered log of every transfer in a run; `total_words` is the sum of all
/// entry sizes and never decreases. Past entries are never mutated.
#[derive(Clone, Debug, Default)]
pub struct CommLedger {
    messages: Vec<Message>,
    total_words: u64,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn push(&mut self, source: ServerId, destination: ServerId, words: u64, tag: &'static str) {
        self.total_words += words;
        self.messages.push(Message {
            source,
            destination,
            words,
            tag,
        });
    }

    /// Total words billed so far.
    pub fn total_words(&self) -> u64 {
        self.total_words
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    /// Sum of words over entries carrying `tag`.
    pub fn words_with_tag(&self, tag: &str) -> u64 {
        self.messages
            .iter()
            .filter(|m| m.tag == tag)
            .map(|m| m.words)
            .sum()
    }

    /// Renders the ledger as CSV (`source,destination,words,tag`), the
    /// format used for trace comparisons between runs.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("source,destination,words,tag\n");
        for m in &self.messages {
            out.push_str(&format!(
                "{},{},{},{}\n",
                m.source, m.destination, m.words, m.tag
            ));
        }
        out
    }
}

/// The simulated cluster: `s` equally-shaped slices, a master seed, and the
/// ledger. The logical matrix a protocol works on is the entrywise slice sum
/// (usually passed through an entry function); that aggregate is *not*
/// materialized here — protocols must move data explicitly and bill it.
#[derive(Clone, Debug)]
pub struct Cluster {
    seed: u64,
    slices: Vec<DenseMatrix>,
    ledger: CommLedger,
}

impl Cluster {
    /// Builds a cluster from per-server slices (index 0 = server 1).
    pub fn new(slices: Vec<DenseMatrix>, seed: u64) -> Result<Self> {
        if slices.is_empty() {
            return Err(Error::InvalidParameter(
                "cluster needs at least one server".into(),
            ));
        }
        let (n, d) = (slices[0].nrows(), slices[0].ncols());
        if let Some((t, m)) = slices
            .iter()
            .enumerate()
            .find(|(_, m)| m.nrows() != n || m.ncols() != d)
        {
            return Err(Error::DimensionMismatch(format!(
                "server {} slice is {}×{}, expected {n}×{d}",
                t + 1,
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self {
            seed,
            slices,
            ledger: CommLedger::new(),
        })
    }

    pub fn s(&self) -> usize {
        self.slices.len()
    }

    pub fn nrows(&self) -> usize {
        self.slices[0].nrows()
    }

    pub fn ncols(&self) -> usize {
        self.slices[0].ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn check_server(&self, id: ServerId) -> Result<()> {
        if id < 1 || id > self.s() {
            return Err(Error::InvalidServer { id, s: self.s() });
        }
        Ok(())
    }

    /// Server `t`'s local slice.
    pub fn slice(&self, t: ServerId) -> Result<&DenseMatrix> {
        self.check_server(t)?;
        Ok(&self.slices[t - 1])
    }

    /// Server `t`'s private random stream, derived from the master seed.
    pub fn server_rng(&self, t: ServerId) -> Result<ChaCha8Rng> {
        self.check_server(t)?;
        Ok(ChaCha8Rng::seed_from_u64(self.seed ^ t as u64))
    }

    /// Entrywise sum of all slices at row `i` — an accounting-free helper
    /// for reference computations and for coordinator-side math *after* the
    /// data has been billed. Protocol code must never substitute this for a
    /// transfer.
    pub fn aggregate_row(&self, i: usize) -> Vec<f64> {
        let d = self.ncols();
        let mut row = vec![0.0; d];
        for slice in &self.slices {
            for (j, v) in row.iter_mut().enumerate() {
                *v += slice.array()[[i, j]];
            }
        }
        row
    }

    /// Entrywise sum of all slices — reference-computation helper, never
    /// billed (see [`Cluster::aggregate_row`]).
    pub fn aggregate_matrix(&self) -> DenseMatrix {
        let mut sum = self.slices[0].array().clone();
        for slice in &self.slices[1..] {
            sum += slice.array();
        }
        DenseMatrix::new(sum).expect("slices are finite, so is their sum")
    }

    /// Transfers `payload` from one server to another and bills it.
    ///
    /// Traffic is star-routed: if neither endpoint is the coordinator, the
    /// payload relays through server 1 and both hops are billed, each
    /// carrying one extra word for the final destination id.
    pub fn send<P: WordCount + ?Sized>(
        &mut self,
        from: ServerId,
        to: ServerId,
        payload: &P,
        tag: &'static str,
    ) -> Result<()> {
        self.check_server(from)?;
        self.check_server(to)?;
        if from == to {
            return Err(Error::InvalidParameter(format!(
                "server {from} cannot send to itself"
            )));
        }
        let words = payload.word_count();
        if from == 1 || to == 1 {
            self.ledger.push(from, to, words, tag);
        } else {
            self.ledger.push(from, 1, words + 1, tag);
            self.ledger.push(1, to, words + 1, tag);
        }
        Ok(())
    }

    /// Coordinator broadcast: each of the other `s − 1` servers receives the
    /// payload; bills `(s − 1) × word_count`.
    pub fn broadcast<P: WordCount + ?Sized>(&mut self, payload: &P, tag: &'static str) {
        let words = payload.word_count();
        for t in 2..=self.s() {
            self.ledger.push(1, t, words, tag);
        }
    }

    /// Current ledger total.
    pub fn ledger_total_words(&self) -> u64 {
        self.ledger.total_words()
    }

    pub fn ledger(&self) -> &CommLedger {
        &self.ledger
    }

    pub(crate) fn ledger_mut(&mut self) -> &mut CommLedger {
        &mut self.ledger
    }
}

/// A length-`l` vector additively shared across `s` servers: the logical
/// vector is the entrywise part sum. This is the input shape of the weighted
/// sampling protocols (a matrix is flattened into one of these).
#[derive(Clone, Debug)]
pub struct DistVector {
    parts: Vec<Vec<f64>>,
}

impl DistVector {
    pub fn new(parts: Vec<Vec<f64>>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidParameter(
                "distributed vector needs at least one part".into(),
            ));
        }
        let l = parts[0].len();
        if l == 0 {
            return Err(Error::InvalidParameter(
                "distributed vector must be non-empty".into(),
            ));
        }
        if parts.iter().any(|p| p.len() != l) {
            return Err(Error::DimensionMismatch(
                "vector parts have unequal lengths".into(),
            ));
        }
        for (t, part) in parts.iter().enumerate() {
            if let Some((i, _)) = part.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("vector part of server {} entry {i}", t + 1),
                });
            }
        }
        Ok(Self { parts })
    }

    pub fn s(&self) -> usize {
        self.parts.len()
    }

    pub fn len(&self) -> usize {
        self.parts[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Server `t`'s part (1-based id).
    pub fn part(&self, t: ServerId) -> &[f64] {
        &self.parts[t - 1]
    }

    /// Logical value at `i` (0-based): the part sum. Accounting-free helper
    /// for coordinator math after billing, and for oracles.
    pub fn aggregate(&self, i: usize) -> f64 {
        self.parts.iter().map(|p| p[i]).sum()
    }
}
