//! Entrywise transforms `f` and their sampling weights `z = f²`.
//!
//! The logical matrix is `A = f(Σ_t A^t)` for an entrywise `f`. All sampling
//! machinery works with the weight function `z(x) = f(x)²`: row sampling
//! probabilities are proportional to z-mass, and the estimator's value
//! classes are geometric ranges of z. For sampling to be sound, `z` must
//! behave like a squared scale: vanish at zero, never decrease as `|x|`
//! grows, and grow at most quadratically (`x²/z(x)` nondecreasing in `|x|`).
//! [`validate`] checks those three rules on a dense probe grid and reports
//! the first violated rule with a witness pair.
//!
//! Built-in kinds cover the common robust-statistics influence functions
//! (Huber, L1−L2, Fair), plain and fractional powers, and the geometric-mean
//! preprocessing transform. Every built-in uses `z = f²` exactly, so the
//! weight distortion constant is 1.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Which of the three sampling shape rules a weight function broke.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeRule {
    /// `z(0)` must be 0 (within 1e−12).
    VanishesAtZero,
    /// `z` must be nondecreasing in `|x|` (within 1e−12 absolute).
    WeightMonotone,
    /// `x²/z(x)` must be nondecreasing in `|x|` (within 1e−12 relative):
    /// the weight may not grow faster than quadratically.
    QuadraticGrowthCap,
}

/// The supported transform kinds with their parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FunctionKind {
    /// `f(x) = x`.
    Identity,
    /// `f(x) = sgn(x)·|x|^p`. Sampling-compatible for `0 < p ≤ 1`; larger
    /// exponents construct fine but fail [`validate`] (the weight `|x|^{2p}`
    /// then outgrows the quadratic cap), which is exactly how callers probe
    /// the validator.
    Power { p: f64 },
    /// Geometric-mean preprocessing: servers store `(1/s)|M^t|^p` locally
    /// (see [`gm_local_share`]) and the transform becomes `f(x) = x^{1/p}`
    /// on the nonnegative domain.
    GeometricMean { p: f64, s: usize },
    /// Huber influence: `f(x) = x` for `|x| ≤ k`, else `k·sgn(x)`.
    Huber { k: f64 },
    /// L1−L2 influence: `f(x) = x/(1 + x²/2)^{1/2}`; `sup z = 2`.
    L1L2,
    /// Fair influence: `f(x) = x/(1 + |x|/c)`; `sup z = c²`.
    Fair { c: f64 },
}

/// An entrywise transform together with its weight `z = f²` and inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct EntryFunction {
    kind: FunctionKind,
}

impl EntryFunction {
    /// Builds a transform, validating its parameters.
    pub fn new(kind: FunctionKind) -> Result<Self> {
        let ok = match kind {
            FunctionKind::Identity | FunctionKind::L1L2 => true,
            FunctionKind::Power { p } => p.is_finite() && p > 0.0,
            FunctionKind::GeometricMean { p, s } => p.is_finite() && p >= 1.0 && s >= 1,
            FunctionKind::Huber { k } => k.is_finite() && k > 0.0,
            FunctionKind::Fair { c } => c.is_finite() && c > 0.0,
        };
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "entry function parameters out of range: {kind:?}"
            )));
        }
        Ok(Self { kind })
    }

    pub fn identity() -> Self {
        Self {
            kind: FunctionKind::Identity,
        }
    }

    pub fn power(p: f64) -> Result<Self> {
        Self::new(FunctionKind::Power { p })
    }

    pub fn geometric_mean(p: f64, s: usize) -> Result<Self> {
        Self::new(FunctionKind::GeometricMean { p, s })
    }

    pub fn huber(k: f64) -> Result<Self> {
        Self::new(FunctionKind::Huber { k })
    }

    pub fn l1l2() -> Self {
        Self {
            kind: FunctionKind::L1L2,
        }
    }

    pub fn fair(c: f64) -> Result<Self> {
        Self::new(FunctionKind::Fair { c })
    }

    pub fn kind(&self) -> FunctionKind {
        self.kind
    }

    /// The transform `f` itself.
    pub fn apply(&self, x: f64) -> f64 {
        match self.kind {
            FunctionKind::Identity => x,
            FunctionKind::Power { p } => x.signum() * x.abs().powf(p),
            FunctionKind::GeometricMean { p, .. } => x.signum() * x.abs().powf(1.0 / p),
            FunctionKind::Huber { k } => {
                if x.abs() <= k {
                    x
                } else {
                    k * x.signum()
                }
            }
            FunctionKind::L1L2 => x / (1.0 + x * x / 2.0).sqrt(),
            FunctionKind::Fair { c } => x / (1.0 + x.abs() / c),
        }
    }

    /// The sampling weight `z(x) = f(x)²`.
    #[inline]
    pub fn z(&self, x: f64) -> f64 {
        let fx = self.apply(x);
        fx * fx
    }

    /// Weight distortion constant: how far `z` may sit from `f²`.
    ///
    /// Every built-in takes `z = f²` exactly, so this is 1. It feeds the
    /// row-count formula of the projection pipeline.
    pub fn distortion(&self) -> f64 {
        1.0
    }

    /// Whether the transform is only defined on nonnegative inputs
    /// (geometric-mean preprocessing guarantees nonnegative slices).
    pub fn nonnegative_domain(&self) -> bool {
        matches!(self.kind, FunctionKind::GeometricMean { .. })
    }

    /// Minimal `x ≥ 0` with `z(x) = y`, or `None` when `y` exceeds the
    /// weight's supremum (then no value class can contain weight `y`).
    ///
    /// Found by bisection on the nondecreasing `z` (64 halvings after
    /// doubling out a bracket). The returned point is the *smallest*
    /// preimage and approaches it from above on the weight scale, i.e.
    /// `z(x) ≥ y` up to the last-bit rounding of the bracket: on plateaus
    /// (Huber beyond its clamp) this picks the left edge, which is what
    /// keeps synthesized coordinates inside their intended value class.
    pub fn z_inverse(&self, y: f64) -> Option<f64> {
        if !y.is_finite() || y < 0.0 {
            return None;
        }
        if y == 0.0 {
            return Some(0.0);
        }
        let mut hi = 1.0f64;
        while self.z(hi) < y {
            hi *= 2.0;
            if !hi.is_finite() {
                return None; // y above sup z: no preimage
            }
        }
        let mut lo = if hi == 1.0 { 0.0 } else { hi / 2.0 };
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if self.z(mid) >= y {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }
}

/// Converts per-server raw slices `M^t` into geometric-mean shares
/// `(1/s)·|M^t|^p`, so that the slice sum is the power-mean
/// `(1/s)·Σ_t |M^t|^p` and applying `f(x) = x^{1/p}` yields the p-th power
/// mean of the magnitudes. Absolute values are taken locally, keeping every
/// share (hence every aggregate) nonnegative.
pub fn gm_local_share(m: &Array2<f64>, p: f64, s: usize) -> Result<Array2<f64>> {
    if !(p.is_finite() && p >= 1.0) || s == 0 {
        return Err(Error::InvalidParameter(format!(
            "geometric-mean share needs p ≥ 1 and s ≥ 1 (got p = {p}, s = {s})"
        )));
    }
    Ok(m.mapv(|x| x.abs().powf(p) / s as f64))
}

/// A probe grid for [`validate`]: zero plus log-spaced magnitudes spanning
/// 12 decades (1e−6 to 1e6, 100 points per decade), mirrored to negative
/// values unless the function only admits nonnegative inputs.
pub fn default_probe_grid(nonnegative: bool) -> Vec<f64> {
    let mut grid = vec![0.0];
    let (lo, hi, per_decade) = (-6.0f64, 6.0f64, 100usize);
    let steps = ((hi - lo) * per_decade as f64) as usize;
    for i in 0..=steps {
        let x = 10f64.powf(lo + i as f64 / per_decade as f64);
        grid.push(x);
        if !nonnegative {
            grid.push(-x);
        }
    }
    grid
}

/// Checks the three sampling shape rules on a probe grid.
///
/// Returns `Ok(())` when all hold within tolerance; otherwise
/// [`Error::ShapeViolation`] naming the first violated rule with a witness
/// pair. A malformed grid (missing zero, non-finite probes, fewer than two
/// points) is an [`Error::InvalidParameter`], not a violation.
///
/// The monotonicity rules are checked against running extrema over probes
/// sorted by magnitude, which is equivalent to checking all pairs
/// `|x₁| ≥ |x₂|` with a single shared tolerance: 1e−12 absolute for the
/// weight itself, 1e−12 relative for the quadratic-growth ratio `x²/z(x)`
/// (whose scale varies over many orders of magnitude).
pub fn validate(f: &EntryFunction, grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidParameter(
            "probe grid needs at least two points".into(),
        ));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(
            "probe grid contains non-finite points".into(),
        ));
    }
    if !grid.iter().any(|&x| x == 0.0) {
        return Err(Error::InvalidParameter(
            "probe grid must include zero".into(),
        ));
    }

    let z0 = f.z(0.0);
    if !(z0.abs() <= 1e-12) {
        return Err(Error::ShapeViolation {
            rule: ShapeRule::VanishesAtZero,
            detail: format!("z(0) = {z0:e}"),
        });
    }

    let mut probes: Vec<f64> = grid.iter().copied().filter(|&x| x != 0.0).collect();
    probes.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap());

    let mut max_z = f64::NEG_INFINITY;
    let mut max_z_at = 0.0f64;
    let mut max_ratio = f64::NEG_INFINITY;
    let mut max_ratio_at = 0.0f64;
    for &x in &probes {
        let zx = f.z(x);
        if !zx.is_finite() {
            return Err(Error::ShapeViolation {
                rule: ShapeRule::WeightMonotone,
                detail: format!("z({x:e}) is not finite"),
            });
        }
        if zx < max_z - 1e-12 {
            return Err(Error::ShapeViolation {
                rule: ShapeRule::WeightMonotone,
                detail: format!(
                    "z({x:e}) = {zx:e} < z({max_z_at:e}) = {max_z:e} with |x| larger"
                ),
            });
        }
        if zx > max_z {
            max_z = zx;
            max_z_at = x;
        }

        let ratio = x * x / zx; // zx = 0 gives +inf, failing every later probe
        if ratio < max_ratio * (1.0 - 1e-12) {
            return Err(Error::ShapeViolation {
                rule: ShapeRule::QuadraticGrowthCap,
                detail: format!(
                    "x²/z at {x:e} is {ratio:e}, below {max_ratio:e} at {max_ratio_at:e}"
                ),
            });
        }
        if ratio > max_ratio {
            max_ratio = ratio;
            max_ratio_at = x;
        }
    }
    Ok(())
}

/// Convenience: validates on the default probe grid for the function's
/// declared domain.
pub fn validate_default(f: &EntryFunction) -> Result<()> {
    validate(f, &default_probe_grid(f.nonnegative_domain()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn huber_clamps_beyond_k() {
        let f = EntryFunction::huber(1.0).unwrap();
        assert_eq!(f.apply(2.0), 1.0);
        assert_eq!(f.apply(0.5), 0.5);
        assert_eq!(f.apply(-3.0), -1.0);
        assert_eq!(f.apply(0.0), 0.0);
    }

    #[test]
    fn l1l2_decays_like_sqrt2_over_x() {
        let f = EntryFunction::l1l2();
        assert_eq!(f.apply(0.0), 0.0);
        let x = 1e6;
        let slope = f.apply(x) / x;
        assert_relative_eq!(slope, 2f64.sqrt() / x, max_relative = 1e-3);
    }

    #[test]
    fn gm_with_p_two_is_sqrt() {
        let f = EntryFunction::geometric_mean(2.0, 5).unwrap();
        for y in [0.0, 0.25, 1.0, 9.0, 1e4] {
            assert_relative_eq!(f.apply(y), y.sqrt(), max_relative = 1e-12);
            assert_relative_eq!(f.z(y), y, max_relative = 1e-12);
        }
        assert_abs_diff_eq!(f.z_inverse(7.5).unwrap(), 7.5, epsilon = 1e-8);
    }

    #[test]
    fn fair_and_power_params_validated() {
        assert!(EntryFunction::fair(0.0).is_err());
        assert!(EntryFunction::huber(-1.0).is_err());
        assert!(EntryFunction::power(f64::NAN).is_err());
        assert!(EntryFunction::geometric_mean(0.5, 3).is_err());
        assert!(EntryFunction::power(2.0).is_ok()); // constructs; fails validate()
    }

    #[test]
    fn gm_local_share_is_scaled_abs_power() {
        let m = ndarray::arr2(&[[-2.0, 3.0], [0.0, -1.0]]);
        let share = gm_local_share(&m, 2.0, 4).unwrap();
        assert_abs_diff_eq!(share[[0, 0]], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(share[[0, 1]], 2.25, epsilon = 1e-15);
        assert_abs_diff_eq!(share[[1, 0]], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(share[[1, 1]], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn validator_accepts_every_builtin() {
        let builtins = vec![
            EntryFunction::identity(),
            EntryFunction::power(0.5).unwrap(),
            EntryFunction::power(1.0).unwrap(),
            EntryFunction::geometric_mean(2.0, 3).unwrap(),
            EntryFunction::geometric_mean(4.0, 3).unwrap(),
            EntryFunction::huber(1.0).unwrap(),
            EntryFunction::huber(0.01).unwrap(),
            EntryFunction::l1l2(),
            EntryFunction::fair(1.345).unwrap(),
        ];
        for f in builtins {
            validate_default(&f).unwrap_or_else(|e| panic!("{:?} rejected: {e}", f.kind()));
        }
    }

    #[test]
    fn validator_rejects_quartic_weight() {
        // z(x) = x⁴ (the p = 2 power): x²/z = x⁻² is decreasing, so the
        // quadratic growth cap must fire with a concrete witness pair.
        let f = EntryFunction::power(2.0).unwrap();
        match validate_default(&f) {
            Err(Error::ShapeViolation { rule, detail }) => {
                assert_eq!(rule, ShapeRule::QuadraticGrowthCap);
                assert!(detail.contains("x²/z"), "report should carry witnesses: {detail}");
            }
            other => panic!("expected a quadratic-growth violation, got {other:?}"),
        }
    }

    #[test]
    fn validator_accepts_plain_square() {
        // z(x) = x² has x²/z ≡ 1: both monotonicity rules hold with equality.
        let f = EntryFunction::identity();
        validate_default(&f).unwrap();
    }

    #[test]
    fn validator_flags_malformed_grids() {
        let f = EntryFunction::identity();
        assert!(matches!(
            validate(&f, &[1.0, 2.0]),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            validate(&f, &[0.0]),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn z_inverse_zero_and_beyond_sup() {
        for f in [
            EntryFunction::identity(),
            EntryFunction::huber(1.0).unwrap(),
            EntryFunction::l1l2(),
            EntryFunction::fair(2.0).unwrap(),
        ] {
            assert_eq!(f.z_inverse(0.0), Some(0.0));
        }
        // Huber(1): sup z = 1, so weight 2 has no preimage.
        let huber = EntryFunction::huber(1.0).unwrap();
        assert_eq!(huber.z_inverse(2.0), None);
        // L1−L2: sup z = 2.
        let l1l2 = EntryFunction::l1l2();
        assert_eq!(l1l2.z_inverse(2.5), None);
        // Fair(c): sup z = c².
        let fair = EntryFunction::fair(3.0).unwrap();
        assert_eq!(fair.z_inverse(10.0), None);
        assert!(fair.z_inverse(8.9).is_some());
    }

    #[test]
    fn z_inverse_round_trips_within_tolerance() {
        let l1l2 = EntryFunction::l1l2();
        let x = l1l2.z_inverse(0.5).unwrap();
        assert_relative_eq!(l1l2.z(x), 0.5, max_relative = 1e-9);

        let fair = EntryFunction::fair(1.345).unwrap();
        for y in [1e-6, 0.01, 0.5, 1.0, 1.8] {
            let x = fair.z_inverse(y).unwrap();
            assert_relative_eq!(fair.z(x), y, max_relative = 1e-9);
        }
    }

    #[test]
    fn z_inverse_huber_plateau_returns_left_edge() {
        // At the plateau weight k² the minimal preimage is k itself.
        let f = EntryFunction::huber(2.0).unwrap();
        let x = f.z_inverse(4.0).unwrap();
        assert_relative_eq!(x, 2.0, max_relative = 1e-12);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn builtin_strategy() -> impl Strategy<Value = EntryFunction> {
            prop_oneof![
                Just(EntryFunction::identity()),
                (0.1f64..=1.0).prop_map(|p| EntryFunction::power(p).unwrap()),
                (1.0f64..=4.0).prop_map(|p| EntryFunction::geometric_mean(p, 3).unwrap()),
                (0.01f64..=10.0).prop_map(|k| EntryFunction::huber(k).unwrap()),
                Just(EntryFunction::l1l2()),
                (0.01f64..=10.0).prop_map(|c| EntryFunction::fair(c).unwrap()),
            ]
        }

        proptest! {
            /// Weight round-trip: wherever z_inverse finds a preimage, the
            /// forward weight matches to 1e−9 relative.
            #[test]
            fn inverse_round_trip(f in builtin_strategy(), y in 1e-9f64..1e6) {
                if let Some(x) = f.z_inverse(y) {
                    let back = f.z(x);
                    prop_assert!((back - y).abs() <= 1e-9 * y.max(back),
                        "z(z⁻¹({y})) = {back}");
                }
            }

            /// The weight is even in sign and nondecreasing in magnitude on
            /// random probe pairs (the validator's rule, point-checked).
            #[test]
            fn weight_even_and_monotone(f in builtin_strategy(), a in -1e6f64..1e6, b in -1e6f64..1e6) {
                prop_assume!(!f.nonnegative_domain() || (a >= 0.0 && b >= 0.0));
                let (small, large) = if a.abs() <= b.abs() { (a, b) } else { (b, a) };
                prop_assert!(f.z(large) >= f.z(small) - 1e-12);
                prop_assert!((f.z(a) - f.z(-a)).abs() <= 1e-12 * f.z(a).abs().max(1.0));
            }
        }
    }
}
