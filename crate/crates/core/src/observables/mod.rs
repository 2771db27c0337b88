//! Test-function families, moment vectors, streaming Birkhoff averages,
//! closed-form moments of registered measures and the truncated weak metric.

mod birkhoff;
mod moments;
mod sum;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::phase_space::{Phase, PointState, SystemSpec};

pub use birkhoff::{birkhoff_moments, MAX_ORBIT};
pub use moments::{cylinder_probability, measure_moments, orbit_points_moments};
pub use sum::NeumaierSum;

/// Largest family size; weights `2^{-i}` beyond this are below `f64` resolution
/// relative to the leading terms.
pub const MAX_FAMILY: usize = 64;

/// Number of symbols used when projecting a binary stream to `[0, 1)`.
pub const PROJECTION_BITS: u32 = 48;

/// A bounded test function, `sup |f| <= 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fn", rename_all = "snake_case")]
pub enum TestFunction {
    /// `cos(2 pi k x)`
    TrigCos { k: u32 },
    /// `sin(2 pi k x)`
    TrigSin { k: u32 },
    /// `cos(pi k x)` on `[0, 1]`; separates the endpoints for odd `k`.
    HalfCos { k: u32 },
    /// Indicator of the cylinder of sequences starting with `word`.
    Cylinder { word: Vec<u8> },
    /// Indicator of the arc `[start, end)`, wrapping when `end < start`.
    /// Not continuous; only used for Borel-set checks.
    Arc { start: f64, end: f64 },
}

impl TestFunction {
    pub fn is_indicator(&self) -> bool {
        matches!(
            self,
            TestFunction::Cylinder { .. } | TestFunction::Arc { .. }
        )
    }

    fn validate(&self) -> Result<()> {
        let bad = |why: &str| Err(Error::InvalidFamily(format!("{self}: {why}")));
        match self {
            TestFunction::TrigCos { k }
            | TestFunction::TrigSin { k }
            | TestFunction::HalfCos { k }
                if *k == 0 || *k > 1024 =>
            {
                bad("frequency must be in 1..=1024")
            }
            TestFunction::Cylinder { word } if word.is_empty() || word.len() > 64 => {
                bad("cylinder word length must be in 1..=64")
            }
            TestFunction::Arc { start, end }
                if !(0.0..=1.0).contains(start) || !(0.0..=1.0).contains(end) =>
            {
                bad("arc endpoints must lie in [0, 1]")
            }
            _ => Ok(()),
        }
    }

    /// Arc length for arcs, `None` otherwise.
    pub fn arc_length(&self) -> Option<f64> {
        match *self {
            TestFunction::Arc { start, end } => Some(arc_length(start, end)),
            _ => None,
        }
    }
}

pub(crate) fn arc_length(start: f64, end: f64) -> f64 {
    if end >= start {
        end - start
    } else {
        end + 1.0 - start
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::TrigCos { k } => write!(f, "cos(2pi*{k}x)"),
            TestFunction::TrigSin { k } => write!(f, "sin(2pi*{k}x)"),
            TestFunction::HalfCos { k } => write!(f, "cos(pi*{k}x)"),
            TestFunction::Cylinder { word } => {
                write!(f, "1[")?;
                for (i, s) in word.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{s}")?;
                }
                write!(f, "]")
            }
            TestFunction::Arc { start, end } => write!(f, "1[{start},{end})"),
        }
    }
}

/// Ordered family `f_1..f_m` with weights `2^{-i}`.
///
/// The identifier is a digest of the ordered descriptors, so metric values
/// computed under different orders never compare as equal families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TestFunction>", into = "Vec<TestFunction>")]
pub struct TestFunctionFamily {
    id: String,
    entries: Vec<TestFunction>,
}

impl TryFrom<Vec<TestFunction>> for TestFunctionFamily {
    type Error = Error;

    fn try_from(entries: Vec<TestFunction>) -> Result<Self> {
        TestFunctionFamily::new(entries)
    }
}

impl From<TestFunctionFamily> for Vec<TestFunction> {
    fn from(fam: TestFunctionFamily) -> Self {
        fam.entries
    }
}

impl TestFunctionFamily {
    pub fn new(entries: Vec<TestFunction>) -> Result<Self> {
        if entries.is_empty() || entries.len() > MAX_FAMILY {
            return Err(Error::InvalidFamily(format!(
                "family size {} outside 1..={MAX_FAMILY}",
                entries.len()
            )));
        }
        for e in &entries {
            e.validate()?;
        }
        let mut hasher = Sha256::new();
        for e in &entries {
            hasher.update(e.to_string().as_bytes());
            hasher.update(b";");
        }
        let digest = hasher.finalize();
        let id = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        Ok(TestFunctionFamily { id, entries })
    }

    /// `cos(2 pi k x), sin(2 pi k x)` for `k = 1..=max_freq`, interleaved.
    pub fn circle(max_freq: u32) -> Result<Self> {
        Self::new(
            (1..=max_freq)
                .flat_map(|k| [TestFunction::TrigCos { k }, TestFunction::TrigSin { k }])
                .collect(),
        )
    }

    /// `cos(pi k x)` for `k = 1..=count`: together with constants, dense in
    /// `C[0, 1]`.
    pub fn interval(count: u32) -> Result<Self> {
        Self::new((1..=count).map(|k| TestFunction::HalfCos { k }).collect())
    }

    /// All cylinders of length `1..=max_len` in length-then-lex order.
    pub fn cylinders(alphabet: usize, max_len: usize) -> Result<Self> {
        let mut entries = Vec::new();
        for len in 1..=max_len {
            let total = alphabet.checked_pow(len as u32).unwrap_or(usize::MAX);
            if entries.len() + total > MAX_FAMILY {
                return Err(Error::InvalidFamily(format!(
                    "cylinders up to length {max_len} over {alphabet} symbols exceed {MAX_FAMILY}"
                )));
            }
            for code in 0..total {
                entries.push(TestFunction::Cylinder {
                    word: decode_word(code, alphabet, len),
                });
            }
        }
        Self::new(entries)
    }

    /// Default family for a system: 16 trig entries on the circle and the
    /// doubling projection, `cos(pi k x)` for `k <= 16` on `[0, 1]`, and all
    /// cylinders up to the longest length (at most 4) that fits in 64 entries.
    pub fn default_for(sys: &SystemSpec) -> Result<Self> {
        match sys {
            SystemSpec::CircleRotation { .. } | SystemSpec::DoublingViaShift => Self::circle(8),
            SystemSpec::Squaring | SystemSpec::Identity => Self::interval(16),
            SystemSpec::FullShift { .. } | SystemSpec::MarkovShift { .. } => {
                let a = sys.alphabet_size().unwrap_or(2);
                let mut len = 1;
                let mut total = a;
                while len < 4 {
                    let next = total + a.pow(len as u32 + 1);
                    if next > MAX_FAMILY {
                        break;
                    }
                    total = next;
                    len += 1;
                }
                Self::cylinders(a, len)
            }
        }
    }

    /// The family with `extra` entries appended at the lowest weights.
    pub fn with_appended(&self, extra: &[TestFunction]) -> Result<Self> {
        let mut entries = self.entries.clone();
        entries.extend_from_slice(extra);
        Self::new(entries)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn entries(&self) -> &[TestFunction] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Weight `2^{-(i+1)}` of the zero-based entry `i`.
    pub fn weight(i: usize) -> f64 {
        0.5f64.powi(i as i32 + 1)
    }

    pub fn position(&self, f: &TestFunction) -> Option<usize> {
        self.entries.iter().position(|e| e == f)
    }

    /// Checks that every entry can be evaluated on points of `sys`.
    pub fn check_system(&self, sys: &SystemSpec) -> Result<()> {
        for f in &self.entries {
            let ok = match f {
                TestFunction::Cylinder { word } => sys
                    .alphabet_size()
                    .is_some_and(|a| word.iter().all(|&s| (s as usize) < a)),
                TestFunction::HalfCos { .. } => sys.is_interval() || sys.alphabet_size() == Some(2),
                TestFunction::TrigCos { .. }
                | TestFunction::TrigSin { .. }
                | TestFunction::Arc { .. } => !sys.is_symbolic() || sys.alphabet_size() == Some(2),
            };
            if !ok {
                return Err(Error::UnsupportedFunction {
                    function: f.to_string(),
                    target: sys.name().to_string(),
                });
            }
        }
        Ok(())
    }
}

pub(crate) fn decode_word(mut code: usize, alphabet: usize, len: usize) -> Vec<u8> {
    let mut word = vec![0u8; len];
    for slot in word.iter_mut().rev() {
        *slot = (code % alphabet) as u8;
        code /= alphabet;
    }
    word
}

/// Upper bound `2^{1-m}` on the gap between the truncated and the full-series
/// metric: every omitted term is at most `2 * 2^{-i}`.
pub fn family_tail_bound(fam: &TestFunctionFamily) -> f64 {
    0.5f64.powi(fam.len() as i32 - 1)
}

/// How a moment vector was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// Empirical measure `delta_{x,n}`.
    Empirical {
        n: u64,
    },
    ClosedForm,
    LimitEstimate,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Empirical { n } => write!(f, "empirical({n})"),
            Provenance::ClosedForm => f.write_str("closed_form"),
            Provenance::LimitEstimate => f.write_str("limit_estimate"),
        }
    }
}

/// Coordinates `(nu[f_1], ..., nu[f_m])` of a measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    pub family: String,
    pub provenance: Provenance,
    pub values: Vec<f64>,
}

impl MomentVector {
    pub fn new(fam: &TestFunctionFamily, provenance: Provenance, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), fam.len());
        MomentVector {
            family: fam.id().to_string(),
            provenance,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Empirical sample size, if any.
    pub fn n(&self) -> Option<u64> {
        match self.provenance {
            Provenance::Empirical { n } => Some(n),
            _ => None,
        }
    }

    pub fn same_family(&self, other: &MomentVector) -> Result<()> {
        if self.family != other.family || self.values.len() != other.values.len() {
            return Err(Error::FamilyMismatch {
                left: self.family.clone(),
                right: other.family.clone(),
            });
        }
        Ok(())
    }

    /// Checks `v_i` in `[-1, 1]`, and in `[0, 1]` for indicator entries.
    pub fn check_bounds(&self, fam: &TestFunctionFamily) -> Result<()> {
        const SLACK: f64 = 1e-12;
        if self.family != fam.id() {
            return Err(Error::FamilyMismatch {
                left: self.family.clone(),
                right: fam.id().to_string(),
            });
        }
        for (v, f) in self.values.iter().zip(fam.entries()) {
            let lo = if f.is_indicator() { 0.0 } else { -1.0 };
            if !(*v >= lo - SLACK && *v <= 1.0 + SLACK) {
                return Err(Error::InvalidFamily(format!(
                    "moment {v} of {f} out of bounds"
                )));
            }
        }
        Ok(())
    }
}

/// Truncated weak metric `sum_i 2^{-i} |u_i - v_i|`.
pub fn weak_metric(u: &MomentVector, v: &MomentVector) -> Result<f64> {
    u.same_family(v)?;
    Ok(weighted_l1(&u.values, &v.values))
}

/// `rho` on raw coordinate slices of equal length, without the family check.
pub fn weighted_l1(u: &[f64], v: &[f64]) -> f64 {
    let mut w = 0.5;
    let mut acc = 0.0;
    for (a, b) in u.iter().zip(v) {
        acc += w * (a - b).abs();
        w *= 0.5;
    }
    acc
}

/// Direct evaluation `(f_1(x), ..., f_m(x))` at a single point.
pub fn evaluate(sys: &SystemSpec, x: &PointState, fam: &TestFunctionFamily) -> Result<Vec<f64>> {
    sys.check_point(x)?;
    fam.check_system(sys)?;
    let two_pi = std::f64::consts::TAU;
    match x {
        PointState::Angle(p) => fam
            .entries()
            .iter()
            .map(|f| match *f {
                TestFunction::TrigCos { k } => Ok((two_pi * p.scale(k as u64).to_f64()).cos()),
                TestFunction::TrigSin { k } => Ok((two_pi * p.scale(k as u64).to_f64()).sin()),
                TestFunction::Arc { start, end } => {
                    Ok(arc_contains_phase(start, end, *p) as u8 as f64)
                }
                _ => Err(Error::UnsupportedFunction {
                    function: f.to_string(),
                    target: "circle points".into(),
                }),
            })
            .collect(),
        PointState::Interval(v) => Ok(fam.entries().iter().map(|f| eval_real(f, *v)).collect()),
        PointState::Symbols(s) => {
            let mut s = s.clone();
            let x = if s.alphabet() == 2 {
                s.project(PROJECTION_BITS)
            } else {
                0.0
            };
            Ok(fam
                .entries()
                .iter()
                .map(|f| match f {
                    TestFunction::Cylinder { word } => {
                        (s.peek(word.len()) == &word[..]) as u8 as f64
                    }
                    other => eval_real(other, x),
                })
                .collect())
        }
    }
}

fn eval_real(f: &TestFunction, x: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    match *f {
        TestFunction::TrigCos { k } => (TAU * k as f64 * x).cos(),
        TestFunction::TrigSin { k } => (TAU * k as f64 * x).sin(),
        TestFunction::HalfCos { k } => (PI * k as f64 * x).cos(),
        TestFunction::Arc { start, end } => arc_contains_real(start, end, x) as u8 as f64,
        TestFunction::Cylinder { .. } => 0.0,
    }
}

pub(crate) fn arc_contains_real(start: f64, end: f64, x: f64) -> bool {
    if end >= 1.0 && start <= 0.0 {
        return true;
    }
    if end >= start {
        x >= start && (x < end || (end >= 1.0 && x <= 1.0))
    } else {
        x >= start || x < end
    }
}

pub(crate) fn arc_contains_phase(start: f64, end: f64, p: Phase) -> bool {
    let len = arc_length(start, end);
    if len >= 1.0 {
        return true;
    }
    let s = Phase::from_f64(start);
    let l = Phase::from_f64(len);
    p.0.wrapping_sub(s.0) < l.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trig4() -> TestFunctionFamily {
        TestFunctionFamily::new(vec![
            TestFunction::TrigCos { k: 1 },
            TestFunction::TrigSin { k: 1 },
            TestFunction::TrigCos { k: 2 },
            TestFunction::TrigSin { k: 2 },
        ])
        .unwrap()
    }

    #[test]
    fn metric_between_two_diracs() {
        let fam = trig4();
        let sys = SystemSpec::golden_rotation();
        let at = |x| {
            MomentVector::new(
                &fam,
                Provenance::ClosedForm,
                evaluate(&sys, &PointState::angle(x), &fam).unwrap(),
            )
        };
        let (u, v) = (at(0.0), at(0.5));
        assert_eq!(weak_metric(&u, &u).unwrap(), 0.0);
        // (1,0,1,0) vs (-1,0,1,0) up to sin rounding
        assert!((weak_metric(&u, &v).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn family_mismatch_is_an_error() {
        let a = MomentVector::new(&trig4(), Provenance::ClosedForm, vec![0.0; 4]);
        let fam = TestFunctionFamily::new(vec![
            TestFunction::TrigSin { k: 1 },
            TestFunction::TrigCos { k: 1 },
            TestFunction::TrigCos { k: 2 },
            TestFunction::TrigSin { k: 2 },
        ])
        .unwrap();
        // same entries in a different order is a different family
        assert_ne!(fam.id(), trig4().id());
        let b = MomentVector::new(&fam, Provenance::ClosedForm, vec![0.0; 4]);
        assert!(matches!(
            weak_metric(&a, &b),
            Err(Error::FamilyMismatch { .. })
        ));
    }

    #[test]
    fn tail_bounds() {
        let fam = |m| TestFunctionFamily::new(vec![TestFunction::TrigCos { k: 1 }; m]).unwrap();
        assert_eq!(family_tail_bound(&fam(16)), 2f64.powi(-15));
        assert_eq!(family_tail_bound(&fam(1)), 1.0);
        assert_eq!(family_tail_bound(&fam(64)), 2f64.powi(-63));
        assert!(TestFunctionFamily::new(vec![TestFunction::TrigCos { k: 1 }; 65]).is_err());
    }

    #[test]
    fn default_families() {
        let shift =
            TestFunctionFamily::default_for(&SystemSpec::FullShift { alphabet_size: 2 }).unwrap();
        assert_eq!(shift.len(), 30);
        assert_eq!(shift.entries()[0], TestFunction::Cylinder { word: vec![0] });
        assert_eq!(
            shift.entries()[5],
            TestFunction::Cylinder { word: vec![1, 1] }
        );
        assert_eq!(
            shift.entries()[29],
            TestFunction::Cylinder {
                word: vec![1, 1, 1, 1]
            }
        );
        let three =
            TestFunctionFamily::default_for(&SystemSpec::FullShift { alphabet_size: 3 }).unwrap();
        assert_eq!(three.len(), 39);
        let circle = TestFunctionFamily::default_for(&SystemSpec::golden_rotation()).unwrap();
        assert_eq!(circle.len(), 16);
        assert_eq!(circle.entries()[15], TestFunction::TrigSin { k: 8 });
    }

    #[test]
    fn family_serializes_as_entry_list() {
        let fam = trig4();
        let json = serde_json::to_string(&fam).unwrap();
        assert!(json.starts_with(r#"[{"fn":"trig_cos","k":1}"#), "{json}");
        let back: TestFunctionFamily = serde_json::from_str(&json).unwrap();
        assert_eq!(back, fam);
    }

    #[test]
    fn cylinder_evaluation_uses_prefix() {
        let fam = TestFunctionFamily::cylinders(2, 2).unwrap();
        let sys = SystemSpec::FullShift { alphabet_size: 2 };
        let x =
            PointState::Symbols(crate::phase_space::SymbolStream::periodic(2, vec![1, 0]).unwrap());
        assert_eq!(
            evaluate(&sys, &x, &fam).unwrap(),
            vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0]
        );
    }

    #[test]
    fn unsupported_pairs_are_named() {
        let fam = TestFunctionFamily::cylinders(2, 1).unwrap();
        let err = fam
            .check_system(&SystemSpec::golden_rotation())
            .unwrap_err();
        assert!(err.to_string().contains("1[0]"), "{err}");
        let fam = TestFunctionFamily::interval(2).unwrap();
        assert!(fam.check_system(&SystemSpec::golden_rotation()).is_err());
    }

    #[test]
    fn arcs() {
        assert!(arc_contains_phase(0.0, 0.5, Phase::from_f64(0.25)));
        assert!(!arc_contains_phase(0.0, 0.5, Phase::from_f64(0.5)));
        assert!(arc_contains_phase(0.75, 0.25, Phase::from_f64(0.9)));
        assert!(arc_contains_phase(0.0, 1.0, Phase::from_f64(0.999)));
        assert!(arc_contains_real(0.5, 1.0, 1.0));
        assert!(!arc_contains_real(0.0, 0.5, 0.5));
    }
}
