//! Registered compact systems `(X, T)`, exact point representations, orbit
//! stepping and samplers for registered invariant measures.

mod measure;
mod stream;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use measure::{sampler_draw, Component, Draw, Measure, MeasureKind, MeasureSpec, Orbit};
pub use stream::{ExtensionRule, SymbolStream, CHUNK};

const ROW_SUM_TOL: f64 = 1e-12;

/// A point of the circle `R/Z` stored with 64 fractional bits.
///
/// Addition wraps, so rotation by `alpha` is exact modulo 1 at this
/// resolution and long orbits accumulate no drift beyond the rounding of
/// `alpha` itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Phase(pub u64);

impl Phase {
    pub const ZERO: Phase = Phase(0);

    /// Nearest phase to `x mod 1`.
    pub fn from_f64(x: f64) -> Phase {
        let frac = x - x.floor();
        // 2^64 * frac may round up to 2^64 for frac just below 1.
        let scaled = (frac * 18_446_744_073_709_551_616.0).round();
        if scaled >= 18_446_744_073_709_551_616.0 {
            Phase(0)
        } else {
            Phase(scaled as u64)
        }
    }

    /// Exact `num/den mod 1`, rounded to the nearest representable phase.
    pub fn from_ratio(num: u64, den: u64) -> Phase {
        let num = (num % den) as u128;
        let den = den as u128;
        let scaled = ((num << 64) + den / 2) / den;
        Phase(scaled as u64)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / 18_446_744_073_709_551_616.0
    }

    #[inline]
    pub fn add(self, other: Phase) -> Phase {
        Phase(self.0.wrapping_add(other.0))
    }

    /// `k * self mod 1`, exact.
    #[inline]
    pub fn scale(self, k: u64) -> Phase {
        Phase(self.0.wrapping_mul(k))
    }

    /// Distance on the circle, in `[0, 1/2]`.
    pub fn circle_distance(self, other: Phase) -> f64 {
        let d = self.0.wrapping_sub(other.0);
        d.min(d.wrapping_neg()) as f64 / 18_446_744_073_709_551_616.0
    }
}

/// Rotation number of a circle rotation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alpha {
    /// `num/den`, kept exactly for orbit-structure questions.
    Rational { num: u64, den: u64 },
    /// Fractional part of the golden ratio.
    Golden,
    /// Raw 64-bit fixed-point value.
    Fixed { bits: u64 },
}

/// `frac(golden ratio) * 2^64`.
pub const GOLDEN_BITS: u64 = 0x9E37_79B9_7F4A_7C15;

impl Alpha {
    pub fn phase(self) -> Phase {
        match self {
            Alpha::Rational { num, den } => Phase::from_ratio(num, den),
            Alpha::Golden => Phase(GOLDEN_BITS),
            Alpha::Fixed { bits } => Phase(bits),
        }
    }

    /// Reduced denominator for rational rotations.
    pub fn period(self) -> Option<u64> {
        match self {
            Alpha::Rational { num, den } => Some(den / gcd(num % den, den)),
            _ => None,
        }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// A registered compact metric dynamical system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SystemSpec {
    /// `x -> x + alpha mod 1` on the circle.
    CircleRotation { alpha: Alpha },
    /// Left shift on `alphabet_size^N`.
    FullShift { alphabet_size: usize },
    /// Left shift on the subshift of sequences with positive transitions.
    MarkovShift { transition: Vec<Vec<f64>> },
    /// `x -> x^2` on `[0, 1]`.
    Squaring,
    /// `x -> x` on `[0, 1]`.
    Identity,
    /// Binary full shift, observed through the projection to `[0, 1)`.
    DoublingViaShift,
}

impl SystemSpec {
    pub fn golden_rotation() -> SystemSpec {
        SystemSpec::CircleRotation {
            alpha: Alpha::Golden,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SystemSpec::CircleRotation { .. } => "circle_rotation",
            SystemSpec::FullShift { .. } => "full_shift",
            SystemSpec::MarkovShift { .. } => "markov_shift",
            SystemSpec::Squaring => "squaring",
            SystemSpec::Identity => "identity",
            SystemSpec::DoublingViaShift => "doubling_via_shift",
        }
    }

    /// Alphabet size for symbolic systems.
    pub fn alphabet_size(&self) -> Option<usize> {
        match self {
            SystemSpec::FullShift { alphabet_size } => Some(*alphabet_size),
            SystemSpec::MarkovShift { transition } => Some(transition.len()),
            SystemSpec::DoublingViaShift => Some(2),
            _ => None,
        }
    }

    pub fn is_symbolic(&self) -> bool {
        self.alphabet_size().is_some()
    }

    /// Phase space is `[0, 1]` with the usual metric.
    pub fn is_interval(&self) -> bool {
        matches!(self, SystemSpec::Squaring | SystemSpec::Identity)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SystemSpec::CircleRotation { alpha } => match *alpha {
                Alpha::Rational { num, den } if den == 0 || num >= den => Err(
                    Error::InvalidSystem(format!("rotation {num}/{den} is not in [0, 1)")),
                ),
                _ => Ok(()),
            },
            SystemSpec::FullShift { alphabet_size } => {
                if (2..=256).contains(alphabet_size) {
                    Ok(())
                } else {
                    Err(Error::InvalidSystem(format!(
                        "alphabet size {alphabet_size} outside [2, 256]"
                    )))
                }
            }
            SystemSpec::MarkovShift { transition } => {
                validate_stochastic(transition).map_err(Error::InvalidSystem)
            }
            SystemSpec::Squaring | SystemSpec::Identity | SystemSpec::DoublingViaShift => Ok(()),
        }
    }

    /// Checks that `p` is a point of this system.
    pub fn check_point(&self, p: &PointState) -> Result<()> {
        let ok = match (self, p) {
            (SystemSpec::CircleRotation { .. }, PointState::Angle(_)) => true,
            (SystemSpec::Squaring | SystemSpec::Identity, PointState::Interval(x)) => {
                if !(0.0..=1.0).contains(x) {
                    return Err(Error::InvalidPoint(format!("{x} is outside [0, 1]")));
                }
                true
            }
            (_, PointState::Symbols(s)) if self.is_symbolic() => {
                let a = self.alphabet_size().unwrap_or(0);
                if s.alphabet() > a {
                    return Err(Error::InvalidPoint(format!(
                        "stream over {} symbols on a system with alphabet {a}",
                        s.alphabet()
                    )));
                }
                true
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::PointSystemMismatch {
                point: p.variant_name(),
                system: self.name(),
            })
        }
    }
}

/// Validates a square row-stochastic matrix; returns the reason on failure.
pub(crate) fn validate_stochastic(m: &[Vec<f64>]) -> std::result::Result<(), String> {
    let n = m.len();
    if !(2..=256).contains(&n) {
        return Err(format!("transition matrix has {n} rows, need 2..=256"));
    }
    for (i, row) in m.iter().enumerate() {
        if row.len() != n {
            return Err(format!("row {i} has {} entries, expected {n}", row.len()));
        }
        if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(format!("row {i} has a negative or non-finite entry"));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(format!("row {i} sums to {s}, not 1"));
        }
    }
    Ok(())
}

/// A point of a registered system.
#[derive(Clone, Debug, PartialEq)]
pub enum PointState {
    /// Circle point with 64 fractional bits.
    Angle(Phase),
    /// Point of `[0, 1]` (squaring and identity maps).
    Interval(f64),
    /// One-sided symbol sequence, materialized lazily.
    Symbols(SymbolStream),
}

impl PointState {
    pub fn angle(x: f64) -> PointState {
        PointState::Angle(Phase::from_f64(x))
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            PointState::Angle(_) => "angle",
            PointState::Interval(_) => "interval",
            PointState::Symbols(_) => "symbol_stream",
        }
    }

    /// Applies `T` in place.
    pub fn advance(&mut self, sys: &SystemSpec) -> Result<()> {
        sys.check_point(self)?;
        match (sys, self) {
            (SystemSpec::CircleRotation { alpha }, PointState::Angle(p)) => {
                *p = p.add(alpha.phase());
            }
            (SystemSpec::Squaring, PointState::Interval(x)) => *x *= *x,
            (SystemSpec::Identity, PointState::Interval(_)) => {}
            (_, PointState::Symbols(s)) => s.advance(1),
            _ => unreachable!("check_point accepted a mismatched pair"),
        }
        Ok(())
    }

    /// Binary projection `sum s_j 2^{-j}` of the first `bits` symbols.
    pub fn projection(&mut self, bits: u32) -> Option<f64> {
        match self {
            PointState::Symbols(s) if s.alphabet() == 2 => Some(s.project(bits)),
            _ => None,
        }
    }
}

impl fmt::Display for PointState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointState::Angle(p) => write!(f, "angle({})", p.to_f64()),
            PointState::Interval(x) => write!(f, "interval({x})"),
            PointState::Symbols(s) => write!(f, "stream({:?}@{})", s.rule(), s.position()),
        }
    }
}

/// Applies `T` once.
pub fn step(sys: &SystemSpec, p: &PointState) -> Result<PointState> {
    let mut next = p.clone();
    next.advance(sys)?;
    Ok(next)
}

/// A binary sequence whose symbol-1 frequency has no limit.
///
/// Block `k >= 1` repeats symbol `(k - 1) mod 2` exactly `growth^k` times, so
/// the running frequency of 1 swings between about `1/(1+growth)` and
/// `growth/(1+growth)`.
pub fn oscillating_witness(growth: u64) -> Result<PointState> {
    if growth < 2 {
        return Err(Error::InvalidPoint(format!(
            "block growth {growth} must be >= 2"
        )));
    }
    Ok(PointState::Symbols(SymbolStream::block_schedule(growth)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_rotation_step() {
        let sys = SystemSpec::CircleRotation {
            alpha: Alpha::Rational { num: 1, den: 4 },
        };
        let next = step(&sys, &PointState::angle(0.0)).unwrap();
        assert_eq!(next, PointState::Angle(Phase(1 << 62)));
        assert_eq!(Phase(1 << 62).to_f64(), 0.25);
    }

    #[test]
    fn squaring_step() {
        let next = step(&SystemSpec::Squaring, &PointState::Interval(0.5)).unwrap();
        assert_eq!(next, PointState::Interval(0.25));
    }

    #[test]
    fn shift_drops_head() {
        let sys = SystemSpec::FullShift { alphabet_size: 2 };
        let x = PointState::Symbols(SymbolStream::periodic(2, vec![0, 1, 1]).unwrap());
        let PointState::Symbols(mut s) = step(&sys, &x).unwrap() else {
            panic!("shift changed the point variant");
        };
        assert_eq!(s.prefix(6), vec![1, 1, 0, 1, 1, 0]);
    }

    #[test]
    fn mismatched_point_is_rejected() {
        let err = step(&SystemSpec::Squaring, &PointState::angle(0.1)).unwrap_err();
        assert!(matches!(err, Error::PointSystemMismatch { .. }));
        let err = step(&SystemSpec::Squaring, &PointState::Interval(1.5)).unwrap_err();
        assert!(matches!(err, Error::InvalidPoint(_)));
    }

    #[test]
    fn doubling_keeps_rational_period_exact() {
        // 1/3 = 0.010101..., 2/3 = 0.101010...
        let sys = SystemSpec::DoublingViaShift;
        let mut x = PointState::Symbols(SymbolStream::periodic(2, vec![0, 1]).unwrap());
        for n in 0..1000 {
            let v = x.projection(48).unwrap();
            let expected = if n % 2 == 0 { 1.0 / 3.0 } else { 2.0 / 3.0 };
            assert!((v - expected).abs() < 2f64.powi(-47), "n={n} v={v}");
            x.advance(&sys).unwrap();
        }
    }

    #[test]
    fn long_rotation_orbit_is_exact_for_dyadic_alpha() {
        let sys = SystemSpec::CircleRotation {
            alpha: Alpha::Rational { num: 3, den: 8 },
        };
        let mut x = PointState::angle(0.125);
        for _ in 0..8_000 {
            x.advance(&sys).unwrap();
        }
        assert_eq!(x, PointState::angle(0.125));
    }

    #[test]
    fn golden_constant_matches_golden_ratio() {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((Phase(GOLDEN_BITS).to_f64() - (phi - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn rotation_drift_stays_below_two_to_minus_forty() {
        // 1/3 is not dyadic; each step rounds alpha by at most 2^-65.
        let alpha = Phase::from_ratio(1, 3);
        let mut p = Phase::ZERO;
        for _ in 0..1_000_000 {
            p = p.add(alpha);
        }
        // 10^6 = 333333 * 3 + 1, so the exact orbit sits at 1/3.
        assert!(p.circle_distance(Phase::from_ratio(1, 3)) < 2f64.powi(-40));
    }

    #[test]
    fn witness_rejects_small_growth() {
        assert!(oscillating_witness(1).is_err());
        let PointState::Symbols(mut s) = oscillating_witness(2).unwrap() else {
            panic!("witness is symbolic");
        };
        assert!(s.prefix(500).iter().all(|&b| b < 2));
        // blocks: 0^2 1^4 0^8
        assert_eq!(s.prefix(14), [0, 0, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn system_validation() {
        assert!(SystemSpec::FullShift { alphabet_size: 1 }
            .validate()
            .is_err());
        assert!(SystemSpec::MarkovShift {
            transition: vec![vec![0.5, 0.5], vec![0.3, 0.6]]
        }
        .validate()
        .is_err());
        assert!(SystemSpec::CircleRotation {
            alpha: Alpha::Rational { num: 5, den: 4 }
        }
        .validate()
        .is_err());
        assert!(SystemSpec::golden_rotation().validate().is_ok());
    }
}
