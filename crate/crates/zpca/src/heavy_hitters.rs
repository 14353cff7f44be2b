//! Mergeable count sketches and the bucketed protocol recovering
//! z-heavy coordinates of a distributed vector.
//!
//! The primitive is a classic sign/bucket sketch ([`HhSketch`]): `depth`
//! independent repetitions, each hashing the domain into `width` buckets and
//! accumulating `sign(j)·v_j`. It is linear, so per-server sketches built
//! from shared seeds merge by counter addition into the sketch of the
//! part-sum vector — exactly, when the underlying sums are exact. From the
//! merged sketch the coordinator estimates any coordinate (median over
//! repetitions) and the squared ℓ₂ mass (median of per-repetition counter
//! energies), and reports every coordinate whose estimate clears the
//! heaviness threshold.
//!
//! [`z_heavy_hitters`] lifts this from ℓ₂-heavy to z-heavy for a weight
//! function with at-most-quadratic growth: coordinates are scattered into
//! ~4B² buckets by an outer pairwise hash (so each z-heavy coordinate is
//! usually alone in its bucket), a small sketch runs per bucket, and the
//! union over ⌈20·ln(1/δ)⌉ repetitions is returned. The weight function
//! itself never appears in the protocol body — its shape rules are what make
//! "ℓ₂-heavy within the bucket" imply "z-heavy overall", so it is validated
//! up front and then only used by callers to interpret the output.
//!
//! Execution here is sparse but exact: buckets whose restriction holds no
//! nonzero value are skipped (their sketches would be all-zero and report
//! nothing), and a bucket holding a single nonzero coordinate reports it
//! directly (a one-coordinate sketch always clears its own threshold).
//! Billing, however, follows the wire encoding of every sketch a server
//! would actually ship; the dense and sparse routes are checked against
//! each other bit for bit in the property tests.

use std::collections::BTreeSet;

use crate::cluster::{CommLedger, DistVector};
use crate::entry_functions::{self, EntryFunction};
use crate::error::{Error, Result};
use crate::hashing::{derive_seed, HashFn, PairPoly};

/// Ledger tags used by the protocols in this module.
pub const TAG_HH_SEEDS: &str = "hh-seeds";
pub const TAG_HH_SKETCH: &str = "hh-sketch";
pub const TAG_ZHH_SEEDS: &str = "zhh-seeds";
pub const TAG_ZHH_SKETCH: &str = "zhh-sketch";

/// Salts for deriving per-instance seeds from one master word. Fixed
/// constants shared by every party (they are part of the protocol, not
/// secrets).
pub(crate) mod salts {
    pub const HH_BUCKET: u64 = 0x01;
    pub const HH_SIGN: u64 = 0x02;
    pub const ZHH_OUTER: u64 = 0x03;
    pub const ZHH_INNER: u64 = 0x04;
    pub const ZHH_CALL: u64 = 0x05;
}

/// Heaviness threshold and failure probability for a heavy-hitter query:
/// report coordinates with `v_j² ≥ ‖v‖₂²/B`, succeed with probability
/// `≥ 1 − δ`.
#[derive(Clone, Copy, Debug)]
pub struct HhParams {
    b: f64,
    delta: f64,
}

impl HhParams {
    pub fn new(b: f64, delta: f64) -> Result<Self> {
        if !(b.is_finite() && b >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "heaviness threshold B must be ≥ 1, got {b}"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "failure probability must lie in (0, 1), got {delta}"
            )));
        }
        Ok(Self { b, delta })
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Sketch depth giving the standard tail bound with margin: `⌈4·ln(m/δ)⌉`.
pub fn hh_depth(m: u64, delta: f64) -> usize {
    let d = (4.0 * (m as f64 / delta).ln()).ceil();
    (d.max(1.0)) as usize
}

/// Sketch width for heaviness threshold `B`: `⌈8B⌉` buckets per repetition.
pub fn hh_width(b: f64) -> u64 {
    (8.0 * b).ceil().max(1.0) as u64
}

fn sign_of(h: &HashFn, x: u64) -> f64 {
    if h.eval_unchecked(x) == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Derives the per-repetition bucket and sign hashes of a sketch from its
/// master seed. Every server calls this with the same `(master, depth, m,
/// width)` and obtains identical functions — this is the only way sketch
/// hashes are ever created, so the dense and sparse execution paths cannot
/// drift apart.
fn sketch_hashes(master: u64, depth: usize, m: u64, width: u64) -> (Vec<HashFn>, Vec<HashFn>) {
    let mut buckets = Vec::with_capacity(depth);
    let mut signs = Vec::with_capacity(depth);
    for r in 0..depth {
        buckets.push(
            HashFn::from_seed(derive_seed(master, &[salts::HH_BUCKET, r as u64]), 2, m, width)
                .expect("sketch shape validated by caller"),
        );
        signs.push(
            HashFn::from_seed(derive_seed(master, &[salts::HH_SIGN, r as u64]), 2, m, 2)
                .expect("sketch shape validated by caller"),
        );
    }
    (buckets, signs)
}

/// Median with the even-count average convention. Exact when all inputs
/// coincide, which is the case that must stay exact (single-coordinate
/// buckets).
fn median_in_place(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite sketch values"));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    median_in_place(&mut xs)
}

/// A sign/bucket count sketch over domain `[0, m)` (0-based coordinates).
#[derive(Clone, Debug, PartialEq)]
pub struct HhSketch {
    domain: u64,
    depth: usize,
    width: u64,
    master: u64,
    counters: Vec<f64>, // depth × width, row-major
    bucket_hashes: Vec<HashFn>,
    sign_hashes: Vec<HashFn>,
}

impl HhSketch {
    /// Builds a sketch of the given entries (0-based index, value). Entries
    /// that are exactly zero are skipped — they cannot change any counter.
    pub fn build<I>(entries: I, m: u64, depth: usize, width: u64, master: u64) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        if m == 0 || depth == 0 || width == 0 {
            return Err(Error::InvalidParameter(format!(
                "sketch shape must be positive (m = {m}, depth = {depth}, width = {width})"
            )));
        }
        let (bucket_hashes, sign_hashes) = sketch_hashes(master, depth, m, width);
        let mut counters = vec![0.0; depth * width as usize];
        for (j, v) in entries {
            if v == 0.0 {
                continue;
            }
            if j as u64 >= m {
                return Err(Error::HashDomain {
                    x: j as u64 + 1,
                    m,
                });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("sketch entry {j}"),
                });
            }
            let x = j as u64 + 1;
            for r in 0..depth {
                let b = bucket_hashes[r].eval_unchecked(x);
                let s = sign_of(&sign_hashes[r], x);
                counters[r * width as usize + (b - 1) as usize] += s * v;
            }
        }
        Ok(Self {
            domain: m,
            depth,
            width,
            master,
            counters,
            bucket_hashes,
            sign_hashes,
        })
    }

    /// Builds a sketch of a server's local vector with the shape implied by
    /// the query parameters (`depth = ⌈4·ln(m/δ)⌉`, `width = ⌈8B⌉`).
    pub fn build_for(v_local: &[f64], params: &HhParams, master: u64) -> Result<Self> {
        let m = v_local.len() as u64;
        Self::build(
            v_local.iter().copied().enumerate(),
            m,
            hh_depth(m, params.delta),
            hh_width(params.b),
            master,
        )
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn width(&self) -> u64 {
        self.width
    }

    pub fn domain(&self) -> u64 {
        self.domain
    }

    pub fn counters(&self) -> &[f64] {
        &self.counters
    }

    /// Adds another sketch built from the same seed and shape. Merging is
    /// counter addition, so it is associative and commutative, and the merge
    /// of per-server sketches equals the central sketch of the part-sum
    /// vector (exactly so when the value sums are exact, e.g. integers).
    pub fn merge(&mut self, other: &HhSketch) -> Result<()> {
        if self.domain != other.domain
            || self.depth != other.depth
            || self.width != other.width
            || self.master != other.master
        {
            return Err(Error::SeedMismatch(format!(
                "cannot merge sketches of shape (m={}, depth={}, width={}, seed={:#x}) and (m={}, depth={}, width={}, seed={:#x})",
                self.domain, self.depth, self.width, self.master,
                other.domain, other.depth, other.width, other.master,
            )));
        }
        for (a, b) in self.counters.iter_mut().zip(&other.counters) {
            *a += b;
        }
        Ok(())
    }

    /// Point estimate of coordinate `j` (0-based): median over repetitions
    /// of `sign(j)·counter[bucket(j)]`.
    pub fn estimate(&self, j: usize) -> f64 {
        let x = j as u64 + 1;
        let per_row: Vec<f64> = (0..self.depth)
            .map(|r| {
                let b = self.bucket_hashes[r].eval_unchecked(x);
                let s = sign_of(&self.sign_hashes[r], x);
                s * self.counters[r * self.width as usize + (b - 1) as usize]
            })
            .collect();
        median(per_row)
    }

    /// Estimate of `‖v‖₂²`: median over repetitions of the counter energy
    /// `Σ_b counter²`.
    pub fn f2_estimate(&self) -> f64 {
        let per_row: Vec<f64> = (0..self.depth)
            .map(|r| {
                self.counters[r * self.width as usize..(r + 1) * self.width as usize]
                    .iter()
                    .map(|c| c * c)
                    .sum()
            })
            .collect();
        median(per_row)
    }

    /// Wire size in 64-bit words: header `(depth, width, m, seed)` then the
    /// counters. This is what the ledger bills per shipped sketch.
    pub fn wire_words(&self) -> u64 {
        4 + self.depth as u64 * self.width
    }

    /// Thresholds every domain coordinate: reports `j` iff the estimate is
    /// nonzero and `v̂_j² ≥ F̂₂/(2B)`. An exactly-zero estimate is never
    /// heavy (an all-zero vector reports nothing).
    pub fn heavy_indices(&self, b: f64) -> BTreeSet<usize> {
        let f2 = self.f2_estimate();
        let mut out = BTreeSet::new();
        for j in 0..self.domain as usize {
            let est = self.estimate(j);
            if est != 0.0 && est * est >= f2 / (2.0 * b) {
                out.insert(j);
            }
        }
        out
    }
}

/// Full heavy-hitter query over a distributed vector: every server sketches
/// its part with shared seeds, ships the sketch to the coordinator, and the
/// coordinator thresholds every coordinate of the merged sketch.
///
/// With probability ≥ 1 − δ over seeds, the output contains every `j` with
/// `v_j² ≥ ‖v‖₂²/B`; extra indices may appear whenever their estimate clears
/// `‖v‖₂²/(2B)` (the two-sided slack of the estimate). Billing: one seed
/// word to each of the other `s − 1` servers, then `s` sketch wire blocks
/// (`depth·width` counters plus a 4-word header each) — the coordinator's
/// own sketch is billed too, keeping collection accounting uniform across
/// servers.
pub fn hh_query(
    v: &DistVector,
    params: &HhParams,
    seed: u64,
    ledger: &mut CommLedger,
) -> Result<BTreeSet<usize>> {
    let master = derive_seed(seed, &[salts::HH_BUCKET, salts::HH_SIGN]);
    for t in 2..=v.s() {
        ledger.push(1, t, 1, TAG_HH_SEEDS);
    }
    let mut merged: Option<HhSketch> = None;
    for t in 1..=v.s() {
        let sketch = HhSketch::build_for(v.part(t), params, master)?;
        ledger.push(t, 1, sketch.wire_words(), TAG_HH_SKETCH);
        match &mut merged {
            None => merged = Some(sketch),
            Some(acc) => acc.merge(&sketch)?,
        }
    }
    let merged = merged.expect("vector has at least one part");
    Ok(merged.heavy_indices(params.b))
}

/// Shape of one bucketed z-heavy recovery pass.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ZhhPlan {
    /// Outer repetitions (fresh bucket hash each).
    pub reps: usize,
    /// Outer buckets per repetition (~4B²).
    pub bucket_count: u64,
    /// Inner sketch depth.
    pub depth: usize,
    /// Inner sketch width.
    pub width: u64,
    /// Heaviness threshold B.
    pub b: f64,
}

impl ZhhPlan {
    /// The published parameterization: `⌈20·ln(1/δ)⌉` repetitions,
    /// `⌈4B²⌉` buckets, inner sketches at failure `1/(16B²)`.
    pub fn published(m: u64, b: f64, delta: f64) -> Self {
        let inner_delta = 1.0 / (16.0 * b * b);
        Self {
            reps: ((20.0 * (1.0 / delta).ln()).ceil() as usize).max(1),
            bucket_count: ((4.0 * b * b).ceil() as u64).max(1),
            depth: hh_depth(m, inner_delta),
            width: hh_width(b),
            b,
        }
    }
}

/// Outer bucket ranges past this bar are grouped by comparison sort instead
/// of a counting pass, and inner rows wider than [`DENSE_WIDTH_MAX`] keep
/// keyed sparse counters instead of a dense array. Working plans sit far
/// below both bars; published parameterizations blow past them and simply
/// take the allocation-free-but-slower paths.
const DIRECT_GROUP_MAX: u64 = 1 << 20;
/// See [`DIRECT_GROUP_MAX`].
const DENSE_WIDTH_MAX: u64 = 1 << 16;

/// Dense accumulator over 1-based bucket ids: a generation stamp per slot
/// makes "clear" O(touched) instead of O(width), so one allocation serves
/// every sketch row of every recovery call.
struct EpochAcc {
    vals: Vec<f64>,
    stamp: Vec<u64>,
    epoch: u64,
    touched: Vec<u32>,
}

impl EpochAcc {
    fn new() -> Self {
        Self {
            vals: Vec::new(),
            stamp: Vec::new(),
            epoch: 0,
            touched: Vec::new(),
        }
    }

    /// Open a fresh logical array of `width + 1` zeroed slots.
    fn begin(&mut self, width: usize) {
        if self.vals.len() <= width {
            self.vals.resize(width + 1, 0.0);
            self.stamp.resize(width + 1, 0);
        }
        self.epoch += 1;
        self.touched.clear();
    }

    /// Fold `x` into slot `b`: a first touch assigns, later touches add —
    /// the exact sequence a sparse find-or-push list produces.
    #[inline]
    fn fold(&mut self, b: u32, x: f64) {
        let i = b as usize;
        if self.stamp[i] == self.epoch {
            self.vals[i] += x;
        } else {
            self.stamp[i] = self.epoch;
            self.vals[i] = x;
            self.touched.push(b);
        }
    }

    /// The slot's value this generation; untouched slots read as zero.
    #[inline]
    fn get(&self, b: u32) -> f64 {
        let i = b as usize;
        if self.stamp[i] == self.epoch {
            self.vals[i]
        } else {
            0.0
        }
    }
}

/// Reusable working memory for [`zhh_collect`]. One estimator pass fires
/// thousands of recovery calls, so the buffers are hoisted across calls to
/// keep the per-bucket loops allocation-free.
pub(crate) struct ZhhScratch {
    /// `(outer bucket, coordinate)` per candidate, in candidate order.
    keyed: Vec<(u64, u32)>,
    /// Candidates regrouped bucket-contiguously; `groups` slices into it.
    members: Vec<u32>,
    /// `(bucket id, start, end)` per nonempty bucket, ids ascending.
    groups: Vec<(u64, u32, u32)>,
    /// Counting-pass occupancy, generation-stamped like [`EpochAcc`].
    group_counts: Vec<u32>,
    group_stamp: Vec<u64>,
    group_epoch: u64,
    group_touched: Vec<u64>,
    /// `(group index, value)` runs, one contiguous run per server.
    server_entries: Vec<(u32, f64)>,
    server_bounds: Vec<usize>,
    /// `(inner bucket, sign)` per group member for the current row.
    placed: Vec<(u64, f64)>,
    partial: EpochAcc,
    counters: EpochAcc,
    /// Keyed fallbacks when a row is too wide for dense counters.
    sparse_partial: Vec<(u64, f64)>,
    sparse_counters: Vec<(u64, f64)>,
    /// Group-member-major, depth-minor row estimates.
    row_est: Vec<f64>,
    f2_rows: Vec<f64>,
    med_scratch: Vec<f64>,
}

impl ZhhScratch {
    pub(crate) fn new() -> Self {
        Self {
            keyed: Vec::new(),
            members: Vec::new(),
            groups: Vec::new(),
            group_counts: Vec::new(),
            group_stamp: Vec::new(),
            group_epoch: 0,
            group_touched: Vec::new(),
            server_entries: Vec::new(),
            server_bounds: Vec::new(),
            placed: Vec::new(),
            partial: EpochAcc::new(),
            counters: EpochAcc::new(),
            sparse_partial: Vec::new(),
            sparse_counters: Vec::new(),
            row_est: Vec::new(),
            f2_rows: Vec::new(),
            med_scratch: Vec::new(),
        }
    }
}

/// One bucketed recovery pass over a candidate set.
///
/// `candidates` are the 0-based coordinates the coordinator can enumerate
/// for this call (the full domain for a standalone query; a level class
/// inside the estimator), in ascending order — the grouping pass relies on
/// it. Per repetition, candidates are scattered into `bucket_count` outer
/// buckets; each nonempty bucket runs an inner sketch over its members
/// across all servers, and members whose estimate clears `F̂₂/(2B)` are
/// reported. Reports accumulate across repetitions — a member found twice
/// appears twice — so callers dedup as needed.
///
/// Execution is sparse (empty buckets skipped, singleton buckets reported
/// directly) but arithmetically identical to building every inner sketch
/// densely: per-server partial counters are folded in server order, exactly
/// as dense merging would, whichever representation holds them. Billing
/// covers what servers would ship: for each nonempty bucket, every server
/// whose restriction holds a nonzero value there bills one inner-sketch wire
/// block; one aggregated ledger entry per server records the pass.
pub(crate) fn zhh_collect(
    v: &DistVector,
    candidates: &[u32],
    plan: &ZhhPlan,
    seed: u64,
    ledger: &mut CommLedger,
    tag: &'static str,
    scratch: &mut ZhhScratch,
) -> Vec<u32> {
    let s = v.s();
    let mut reported = Vec::new();
    let mut words = vec![0u64; s + 1]; // indexed by server id
    let sketch_words = 4 + plan.depth as u64 * plan.width;
    let dense_rows = plan.width <= DENSE_WIDTH_MAX;
    let ZhhScratch {
        keyed,
        members,
        groups,
        group_counts,
        group_stamp,
        group_epoch,
        group_touched,
        server_entries,
        server_bounds,
        placed,
        partial,
        counters,
        sparse_partial,
        sparse_counters,
        row_est,
        f2_rows,
        med_scratch,
    } = scratch;

    for rep in 0..plan.reps {
        let outer = PairPoly::from_seed(
            derive_seed(seed, &[salts::ZHH_OUTER, rep as u64]),
            plan.bucket_count,
        );
        keyed.clear();
        for &c in candidates {
            keyed.push((outer.eval(u64::from(c) + 1), c));
        }

        // Group members by outer bucket: bucket ids ascending, members in
        // candidate (= ascending coordinate) order within each. Both routes
        // below produce that exact layout.
        groups.clear();
        members.clear();
        if plan.bucket_count <= DIRECT_GROUP_MAX {
            *group_epoch += 1;
            if group_counts.len() <= plan.bucket_count as usize {
                group_counts.resize(plan.bucket_count as usize + 1, 0);
                group_stamp.resize(plan.bucket_count as usize + 1, 0);
            }
            group_touched.clear();
            for &(b, _) in keyed.iter() {
                let i = b as usize;
                if group_stamp[i] != *group_epoch {
                    group_stamp[i] = *group_epoch;
                    group_counts[i] = 0;
                    group_touched.push(b);
                }
                group_counts[i] += 1;
            }
            group_touched.sort_unstable();
            members.resize(keyed.len(), 0);
            let mut off = 0u32;
            for &b in group_touched.iter() {
                let n = group_counts[b as usize];
                groups.push((b, off, off + n));
                group_counts[b as usize] = off; // becomes the write cursor
                off += n;
            }
            for &(b, c) in keyed.iter() {
                let cursor = &mut group_counts[b as usize];
                members[*cursor as usize] = c;
                *cursor += 1;
            }
        } else {
            keyed.sort_unstable();
            members.extend(keyed.iter().map(|&(_, c)| c));
            let mut lo = 0;
            while lo < keyed.len() {
                let bucket = keyed[lo].0;
                let mut hi = lo;
                while hi < keyed.len() && keyed[hi].0 == bucket {
                    hi += 1;
                }
                groups.push((bucket, lo as u32, hi as u32));
                lo = hi;
            }
        }

        for &(bucket, glo, ghi) in groups.iter() {
            let group = &members[glo as usize..ghi as usize];
            let gl = group.len();

            // Per-server nonzero members, gathered once: entries for server
            // t occupy server_entries[bounds[t−1]..bounds[t]], coordinates
            // ascending within each server. A server ships this bucket's
            // sketch iff it holds at least one nonzero value here.
            server_entries.clear();
            server_bounds.clear();
            server_bounds.push(0);
            for t in 1..=s {
                let part = v.part(t);
                for (gi, &c) in group.iter().enumerate() {
                    let val = part[c as usize];
                    if val != 0.0 {
                        server_entries.push((gi as u32, val));
                    }
                }
                server_bounds.push(server_entries.len());
            }
            for t in 1..=s {
                if server_bounds[t] > server_bounds[t - 1] {
                    words[t] += sketch_words;
                }
            }
            if server_entries.is_empty() {
                continue; // all-zero bucket: every sketch is zero, reports nothing
            }

            if gl == 1 {
                // A single-coordinate sketch estimates the value exactly and
                // its energy is the value's square, so it reports whenever
                // the value is nonzero (B ≥ 1 ⇒ v² ≥ v²/(2B)). The fold
                // order over servers matches dense merging.
                let agg = server_entries.iter().fold(0.0, |acc, &(_, val)| acc + val);
                if agg != 0.0 {
                    reported.push(group[0]);
                }
                continue;
            }

            let inner_master = derive_seed(seed, &[salts::ZHH_INNER, rep as u64, bucket]);
            row_est.clear();
            row_est.resize(gl * plan.depth, 0.0);
            f2_rows.clear();

            for r in 0..plan.depth {
                let bp = PairPoly::from_seed(
                    derive_seed(inner_master, &[salts::HH_BUCKET, r as u64]),
                    plan.width,
                );
                let sp =
                    PairPoly::from_seed(derive_seed(inner_master, &[salts::HH_SIGN, r as u64]), 2);
                placed.clear();
                for &c in group {
                    let x = u64::from(c) + 1;
                    placed.push((bp.eval(x), sp.sign(x)));
                }
                // Counters fold per server first and per-server sums merge
                // in server order, so either representation is bit-identical
                // to dense build-and-merge.
                if dense_rows {
                    counters.begin(plan.width as usize);
                    for t in 1..=s {
                        partial.begin(plan.width as usize);
                        for &(gi, val) in &server_entries[server_bounds[t - 1]..server_bounds[t]] {
                            let (b, sg) = placed[gi as usize];
                            partial.fold(b as u32, sg * val);
                        }
                        for &b in partial.touched.iter() {
                            counters.fold(b, partial.vals[b as usize]);
                        }
                    }
                    for (gi, &(b, sg)) in placed.iter().enumerate() {
                        row_est[gi * plan.depth + r] = sg * counters.get(b as u32);
                    }
                    f2_rows.push(
                        counters
                            .touched
                            .iter()
                            .map(|&b| {
                                let c = counters.vals[b as usize];
                                c * c
                            })
                            .sum::<f64>(),
                    );
                } else {
                    sparse_counters.clear();
                    for t in 1..=s {
                        sparse_partial.clear();
                        for &(gi, val) in &server_entries[server_bounds[t - 1]..server_bounds[t]] {
                            let (b, sg) = placed[gi as usize];
                            match sparse_partial.iter_mut().find(|(pb, _)| *pb == b) {
                                Some((_, acc)) => *acc += sg * val,
                                None => sparse_partial.push((b, sg * val)),
                            }
                        }
                        for &(b, sum) in sparse_partial.iter() {
                            match sparse_counters.iter_mut().find(|(cb, _)| *cb == b) {
                                Some((_, acc)) => *acc += sum,
                                None => sparse_counters.push((b, sum)),
                            }
                        }
                    }
                    for (gi, &(b, sg)) in placed.iter().enumerate() {
                        let counter = sparse_counters
                            .iter()
                            .find(|(cb, _)| *cb == b)
                            .map(|&(_, v)| v)
                            .unwrap_or(0.0);
                        row_est[gi * plan.depth + r] = sg * counter;
                    }
                    f2_rows.push(sparse_counters.iter().map(|&(_, c)| c * c).sum::<f64>());
                }
            }

            med_scratch.clear();
            med_scratch.extend_from_slice(f2_rows);
            let f2 = median_in_place(med_scratch);
            for (gi, &c) in group.iter().enumerate() {
                med_scratch.clear();
                med_scratch.extend_from_slice(&row_est[gi * plan.depth..(gi + 1) * plan.depth]);
                let est = median_in_place(med_scratch);
                if est != 0.0 && est * est >= f2 / (2.0 * plan.b) {
                    reported.push(c);
                }
            }
        }
    }

    for t in 1..=s {
        if words[t] > 0 {
            ledger.push(t, 1, words[t], tag);
        }
    }
    reported
}

/// Recovers (a superset of) the coordinates carrying an `Ω(1/B)` share of
/// the total weight `Z(v) = Σ_j z(v_j)`: with probability ≥ 1 − δ the output
/// contains every `j` with `z(v_j) ≥ Z(v)/B`.
///
/// The weight function must satisfy the sampling shape rules (validated
/// here; an unfit `z` is a configuration error). The protocol body never
/// evaluates `z` — bucketing isolates the heavy coordinates by ℓ₂ mass
/// within buckets, and the shape rules are what transfer that to z-mass.
///
/// Billing: one master seed word to each other server (every per-bucket
/// sketch seed derives from it and the public bucket indices), then the
/// sketch uploads of [`zhh_collect`].
pub fn z_heavy_hitters(
    v: &DistVector,
    z: &EntryFunction,
    b: f64,
    delta: f64,
    seed: u64,
    ledger: &mut CommLedger,
) -> Result<BTreeSet<usize>> {
    if !(b.is_finite() && b >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "heaviness threshold B must be ≥ 1, got {b}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "failure probability must lie in (0, 1), got {delta}"
        )));
    }
    entry_functions::validate_default(z)?;

    for t in 2..=v.s() {
        ledger.push(1, t, 1, TAG_ZHH_SEEDS);
    }
    let plan = ZhhPlan::published(v.len() as u64, b, delta);
    let candidates: Vec<u32> = (0..v.len() as u32).collect();
    let call_seed = derive_seed(seed, &[salts::ZHH_CALL]);
    let found = zhh_collect(
        v,
        &candidates,
        &plan,
        call_seed,
        ledger,
        TAG_ZHH_SKETCH,
        &mut ZhhScratch::new(),
    );
    Ok(found.into_iter().map(|c| c as usize).collect())
}
