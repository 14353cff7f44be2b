//! Seeded polynomial hash families over a fixed Mersenne-prime field.
//!
//! A degree-`t` polynomial with coefficients drawn uniformly from GF(p),
//! p = 2⁶¹ − 1, evaluated at `x` and folded into `[1, w]`, is a t-wise
//! independent family: any `t` distinct inputs hash jointly uniformly (up to
//! an O(w/p) rounding term that is negligible at this prime). Pairwise
//! functions are the `t = 2` case.
//!
//! Functions are immutable values. Evaluation depends only on the
//! coefficients, never on interior state, so a function reconstructed from
//! its serialized words computes the same buckets on every server. That
//! purity is what lets the protocols broadcast one seed block instead of a
//! full table.

use rand::Rng;

use crate::error::{Error, Result};

/// Fixed field modulus for every family: the Mersenne prime 2⁶¹ − 1.
///
/// Products of two residues fit in 128 bits and reduce with shifts and adds,
/// and the modulus dwarfs any domain this crate hashes, so the rounding slack
/// of the final fold into `[1, w]` is at most `w / p`.
pub const MERSENNE_P: u64 = (1 << 61) - 1;

/// `a * b mod p` via 128-bit intermediates and Mersenne folding.
#[inline]
fn mul_mod(a: u64, b: u64) -> u64 {
    let prod = u128::from(a) * u128::from(b);
    let lo = (prod & u128::from(MERSENNE_P)) as u64;
    let hi = (prod >> 61) as u64;
    let mut s = lo + hi;
    if s >= MERSENNE_P {
        s -= MERSENNE_P;
    }
    if s >= MERSENNE_P {
        s -= MERSENNE_P;
    }
    s
}

#[inline]
fn add_mod(a: u64, b: u64) -> u64 {
    let mut s = a + b; // both < 2⁶¹, no overflow in u64
    if s >= MERSENNE_P {
        s -= MERSENNE_P;
    }
    s
}

/// Fold a field element into the 1-based range `[1, w]`. For power-of-two
/// ranges the two hardware divides reduce to masking — bit-identical, and
/// the protocol inner loops run hot enough for it to matter.
#[inline]
fn fold_range(acc: u64, range: u64) -> u64 {
    if range.is_power_of_two() {
        let m = range - 1;
        (((acc & m) + m) & m) + 1
    } else {
        (acc % range + range - 1) % range + 1
    }
}

/// SplitMix64 finalizer: a fixed bijective scrambler on 64-bit words.
///
/// Used to derive independent sub-seeds from one master seed plus a path of
/// salts (server ids, repetition indices, level indices). Both ends of a
/// connection derive identical streams from the same master word, which is
/// why one broadcast word can stand in for many per-instance seeds.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a master seed with a path of salts into one derived seed.
pub fn derive_seed(master: u64, salts: &[u64]) -> u64 {
    salts
        .iter()
        .fold(mix64(master), |acc, &salt| mix64(acc ^ mix64(salt)))
}

/// Appends `t` uniform field elements derived from `seed` by
/// rejection-sampling 61-bit slices of the SplitMix64 stream. This is *the*
/// seeded-coefficient stream: every seeded constructor draws from it, so
/// different representations of the same seeded function agree bit for bit.
fn seeded_field_elems(seed: u64, t: usize, out: &mut Vec<u64>) {
    let mut ctr = seed;
    while out.len() < t {
        ctr = ctr.wrapping_add(1);
        let word = mix64(ctr) & MERSENNE_P; // 61-bit slice; == p rejected
        if word < MERSENNE_P {
            out.push(word);
        }
    }
}

/// Allocation-free pairwise hash for protocol inner loops: the degree-2
/// case of [`HashFn::from_seed`] flattened into three words. Evaluates
/// identically to the full structure (checked by test), it just skips the
/// coefficient vector and the domain bookkeeping — callers guarantee
/// `1 ≤ x ≤ m` by construction.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PairPoly {
    c0: u64,
    c1: u64,
    range: u64,
}

impl PairPoly {
    pub fn from_seed(seed: u64, w: u64) -> Self {
        debug_assert!(w >= 1 && w < MERSENNE_P);
        let mut coeffs = Vec::with_capacity(2);
        seeded_field_elems(seed, 2, &mut coeffs);
        Self {
            c0: coeffs[0],
            c1: coeffs[1],
            range: w,
        }
    }

    #[inline]
    pub fn eval(&self, x: u64) -> u64 {
        let acc = add_mod(mul_mod(self.c1, x), self.c0);
        fold_range(acc, self.range)
    }

    /// `+1.0` when the value lands in bucket 1 of a 2-bucket range, else
    /// `−1.0` — the sign convention of the count sketches.
    #[inline]
    pub fn sign(&self, x: u64) -> f64 {
        if self.eval(x) == 1 {
            1.0
        } else {
            -1.0
        }
    }
}

/// A t-wise independent hash function `[1, m] → [1, w]`.
///
/// Represented explicitly by its polynomial coefficients so it can ship over
/// the wire as a flat word block (see [`HashFn::to_words`]).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashFn {
    /// Polynomial coefficients `c_0 .. c_{t-1}`, each in `[0, p)`.
    coefficients: Vec<u64>,
    /// Domain size: valid inputs are `1..=m`.
    domain: u64,
    /// Range size: outputs land in `1..=w`.
    range: u64,
}

impl HashFn {
    /// Samples a fresh degree-`t` function `[1, m] → [1, w]` with coefficients
    /// uniform over the field.
    pub fn sample<R: Rng + ?Sized>(t: usize, m: u64, w: u64, rng: &mut R) -> Result<Self> {
        Self::check_shape(t, m, w)?;
        let coefficients = (0..t).map(|_| rng.gen_range(0..MERSENNE_P)).collect();
        Ok(Self {
            coefficients,
            domain: m,
            range: w,
        })
    }

    /// Derives a degree-`t` function deterministically from a seed word.
    ///
    /// Coefficients come from rejection-sampling 61-bit slices of a SplitMix64
    /// stream, so they are uniform over `[0, p)` exactly and any party holding
    /// the same `(seed, t, m, w)` reconstructs the identical function.
    pub fn from_seed(seed: u64, t: usize, m: u64, w: u64) -> Result<Self> {
        Self::check_shape(t, m, w)?;
        let mut coefficients = Vec::with_capacity(t);
        seeded_field_elems(seed, t, &mut coefficients);
        Ok(Self {
            coefficients,
            domain: m,
            range: w,
        })
    }

    /// Builds a function from explicit coefficients (each in `[0, p)`).
    pub fn from_coefficients(coefficients: Vec<u64>, m: u64, w: u64) -> Result<Self> {
        Self::check_shape(coefficients.len(), m, w)?;
        if let Some(&c) = coefficients.iter().find(|&&c| c >= MERSENNE_P) {
            return Err(Error::InvalidParameter(format!(
                "hash coefficient {c} outside field [0, {MERSENNE_P})"
            )));
        }
        Ok(Self {
            coefficients,
            domain: m,
            range: w,
        })
    }

    fn check_shape(t: usize, m: u64, w: u64) -> Result<()> {
        if t == 0 {
            return Err(Error::InvalidParameter(
                "hash independence degree must be at least 1".into(),
            ));
        }
        if m == 0 || w == 0 {
            return Err(Error::InvalidParameter(format!(
                "hash domain and range must be nonempty (m = {m}, w = {w})"
            )));
        }
        if m >= MERSENNE_P || w >= MERSENNE_P {
            return Err(Error::InvalidParameter(format!(
                "hash domain/range must stay below the field modulus (m = {m}, w = {w})"
            )));
        }
        Ok(())
    }

    /// Independence degree `t`.
    pub fn degree(&self) -> usize {
        self.coefficients.len()
    }

    /// Domain size `m` (inputs are `1..=m`).
    pub fn domain(&self) -> u64 {
        self.domain
    }

    /// Range size `w` (outputs are `1..=w`).
    pub fn range(&self) -> u64 {
        self.range
    }

    /// Evaluates the function, checking the domain.
    pub fn eval(&self, x: u64) -> Result<u64> {
        if x < 1 || x > self.domain {
            return Err(Error::HashDomain { x, m: self.domain });
        }
        Ok(self.eval_unchecked(x))
    }

    /// Evaluates without the domain check. Callers must guarantee
    /// `1 ≤ x ≤ m`; protocol loops do so by construction.
    #[inline]
    pub fn eval_unchecked(&self, x: u64) -> u64 {
        debug_assert!(x >= 1 && x <= self.domain);
        // Horner evaluation of Σ c_i x^i over GF(p).
        let mut acc = 0u64;
        for &c in self.coefficients.iter().rev() {
            acc = add_mod(mul_mod(acc, x), c);
        }
        // Fold into [1, w], keeping 1-based inputs fixed in the mod-free
        // regime: a linear polynomial with coefficients (0, 1) acts as the
        // identity on [1, w].
        fold_range(acc, self.range)
    }

    /// Serializes as the flat word block `(t, p, coefficients.., m, w)`.
    ///
    /// This is exactly what a seed broadcast ships, so ledger entries for
    /// shared randomness bill `words().len()` words per function.
    pub fn to_words(&self) -> Vec<u64> {
        let mut words = Vec::with_capacity(self.coefficients.len() + 4);
        words.push(self.coefficients.len() as u64);
        words.push(MERSENNE_P);
        words.extend_from_slice(&self.coefficients);
        words.push(self.domain);
        words.push(self.range);
        words
    }

    /// Reconstructs a function from a received word block, validating the
    /// layout so protocol mismatches surface as errors instead of silently
    /// desynchronized hashing.
    pub fn from_words(words: &[u64]) -> Result<Self> {
        if words.len() < 4 {
            return Err(Error::SeedMismatch(format!(
                "hash block has {} words, need at least 4",
                words.len()
            )));
        }
        let t = words[0] as usize;
        if words.len() != t + 4 {
            return Err(Error::SeedMismatch(format!(
                "hash block length {} does not match degree {t}",
                words.len()
            )));
        }
        if words[1] != MERSENNE_P {
            return Err(Error::SeedMismatch(format!(
                "hash block modulus {} differs from {MERSENNE_P}",
                words[1]
            )));
        }
        let coefficients = words[2..2 + t].to_vec();
        let m = words[2 + t];
        let w = words[3 + t];
        Self::from_coefficients(coefficients, m, w)
            .map_err(|e| Error::SeedMismatch(format!("hash block invalid: {e}")))
    }
}
