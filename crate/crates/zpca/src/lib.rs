//! Communication-metered low-rank approximation of entrywise transforms of
//! additively shared matrices.
//!
//! `s` servers each hold a slice `A^t` of the same n×d shape; the logical
//! data matrix applies an entrywise transform `f` to the slice sum,
//! `A = f(Σ_t A^t)`, so no single server can see even one entry of `A`
//! without talking to the others. The crate computes a rank-k projection `P`
//! with
//!
//! ```text
//! ‖A − AP‖²_F ≤ ‖A − [A]_k‖²_F + ε·‖A‖²_F
//! ```
//!
//! while metering every 64-bit word that crosses the star topology in a
//! replayable ledger.
//!
//! The pipeline, bottom to top:
//!
//! * [`cluster`] — the simulated server model: slices, star-routed message
//!   passing, and the word-accounting ledger.
//! * [`hashing`] — seeded t-wise independent polynomial hash families that
//!   ship as flat word blocks, so servers share randomness by broadcasting
//!   seeds instead of tables.
//! * [`entry_functions`] — transforms `f`, their sampling weights `z = f²`,
//!   inverses, and the shape rules `z` must satisfy for weighted sampling.
//! * [`heavy_hitters`] — mergeable count sketches and the bucketed protocol
//!   that recovers every coordinate carrying an Ω(1/B) share of z-mass.
//! * [`zsampler`] — the level-class estimator of `Z = Σ_i z(a_i)` and the
//!   sampler that draws coordinates with probability ∝ z(a_i)/Z across
//!   servers, padding thin classes with virtual coordinates so no class is
//!   missed.
//! * [`pca`] — weighted row sampling driving the rank-k pipeline: sampled
//!   rows are rescaled into a proxy matrix whose top right-singular space is
//!   the output projection, with independent-repetition boosting.
//! * [`rff`] — random Fourier feature expansion, where row norms are nearly
//!   uniform and plain uniform sampling drives the same pipeline.
//!
//! Everything is deterministic given the master seed: reruns produce
//! byte-identical ledgers, estimates, and projections.

pub mod cluster;
pub mod entry_functions;
pub mod error;
pub mod hashing;
pub mod heavy_hitters;
pub mod linalg;
pub mod pca;
pub mod rff;
pub mod zsampler;

pub use cluster::{Cluster, CommLedger, DistVector, Message, ServerId, WordCount, Words};
pub use entry_functions::{EntryFunction, FunctionKind, ShapeRule};
pub use error::{Error, Result};
pub use hashing::HashFn;
pub use linalg::{DenseMatrix, Projection};
pub use pca::{PcaParams, SampleSet, SampledRow, SamplerMode};
pub use rff::RffSpec;
pub use zsampler::{
    InjectedRun, InjectedVector, LevelEstimate, SampleOutcome, SamplerParams, SamplerProfile,
};
