//! Convergence detection on empirical-measure traces, basin membership and
//! the finite-resolution `T`-invariance check.
//!
//! A point is classified from the moment vectors of `delta_{x,n}` at a
//! geometric checkpoint schedule. The trailing `window` checkpoints decide:
//! if every pair is within `cauchy_eps` in the weak metric the point is
//! [`Verdict::Converged`] and the last checkpoint is the limit estimate; if
//! some pair is at least `osc_eps` apart it is [`Verdict::NotConverged`];
//! anything in between is [`Verdict::Undecided`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::{
    birkhoff_moments, family_tail_bound, measure_moments, orbit_points_moments, weak_metric,
    weighted_l1, MomentVector, Provenance, TestFunction, TestFunctionFamily,
};
use crate::phase_space::{step, Alpha, MeasureSpec, Orbit, Phase, PointState, SystemSpec};

/// Checkpoint schedule and thresholds for the convergence detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorParams {
    /// First checkpoint `n_0`.
    pub first: u64,
    /// Geometric ratio between checkpoints.
    pub ratio: u64,
    /// Number of checkpoints `K`.
    pub count: usize,
    /// Trailing checkpoints compared pairwise.
    pub window: usize,
    pub cauchy_eps: f64,
    pub osc_eps: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            first: 1_000,
            ratio: 2,
            count: 12,
            window: 3,
            cauchy_eps: 5e-3,
            osc_eps: 3e-2,
        }
    }
}

impl DetectorParams {
    pub fn checkpoints(&self) -> Vec<u64> {
        let mut n = self.first;
        (0..self.count)
            .map(|_| {
                let cur = n;
                n = n.saturating_mul(self.ratio);
                cur
            })
            .collect()
    }

    pub fn validate(&self, fam: &TestFunctionFamily) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidDetector(msg));
        if self.first == 0 || self.ratio < 2 {
            return bad(format!(
                "schedule {}·{}^k is not increasing",
                self.first, self.ratio
            ));
        }
        if self.window < 2 || self.count < self.window + 2 {
            return bad(format!(
                "need window >= 2 and count >= window + 2, got window {} count {}",
                self.window, self.count
            ));
        }
        let tail = family_tail_bound(fam);
        if !(self.cauchy_eps > tail) {
            return bad(format!(
                "cauchy_eps {} must exceed the tail bound {tail}",
                self.cauchy_eps
            ));
        }
        if !(self.osc_eps > 2.0 * self.cauchy_eps) {
            return bad(format!(
                "osc_eps {} must exceed 2 * cauchy_eps = {}",
                self.osc_eps,
                2.0 * self.cauchy_eps
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Converged,
    NotConverged,
    Undecided,
}

impl VerdictKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictKind::Converged => "converged",
            VerdictKind::NotConverged => "not_converged",
            VerdictKind::Undecided => "undecided",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    /// `limit` is the last checkpoint; `achieved_eps` the trailing-window spread.
    Converged {
        limit: MomentVector,
        achieved_eps: f64,
    },
    /// Evidence for a point without a limit: the trailing-window spread.
    NotConverged {
        osc_lower_bound: f64,
    },
    Undecided {
        spread: f64,
    },
}

/// Classification of one point with the checkpoint trace it was read from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceVerdict {
    pub verdict: Verdict,
    pub trace: Vec<MomentVector>,
}

impl ConvergenceVerdict {
    pub fn kind(&self) -> VerdictKind {
        match self.verdict {
            Verdict::Converged { .. } => VerdictKind::Converged,
            Verdict::NotConverged { .. } => VerdictKind::NotConverged,
            Verdict::Undecided { .. } => VerdictKind::Undecided,
        }
    }

    /// The limit estimate `V(x)` for converged points.
    pub fn limit(&self) -> Option<&MomentVector> {
        match &self.verdict {
            Verdict::Converged { limit, .. } => Some(limit),
            _ => None,
        }
    }

    pub fn into_limit(self) -> Option<MomentVector> {
        match self.verdict {
            Verdict::Converged { limit, .. } => Some(limit),
            _ => None,
        }
    }

    /// Max pairwise distance over the trailing window.
    pub fn spread(&self) -> f64 {
        match self.verdict {
            Verdict::Converged { achieved_eps, .. } => achieved_eps,
            Verdict::NotConverged { osc_lower_bound } => osc_lower_bound,
            Verdict::Undecided { spread } => spread,
        }
    }
}

/// Max pairwise weak distance among the last `window` checkpoints.
pub fn window_spread(trace: &[MomentVector], window: usize) -> f64 {
    let tail = &trace[trace.len().saturating_sub(window)..];
    let mut spread = 0.0f64;
    for (i, a) in tail.iter().enumerate() {
        for b in &tail[i + 1..] {
            spread = spread.max(weighted_l1(&a.values, &b.values));
        }
    }
    spread
}

/// Verdict for an already computed checkpoint trace.
pub fn verdict_from_trace(trace: &[MomentVector], det: &DetectorParams) -> Verdict {
    let spread = window_spread(trace, det.window);
    if spread <= det.cauchy_eps {
        let mut limit = trace.last().expect("non-empty trace").clone();
        limit.provenance = Provenance::LimitEstimate;
        Verdict::Converged {
            limit,
            achieved_eps: spread,
        }
    } else if spread >= det.osc_eps {
        Verdict::NotConverged {
            osc_lower_bound: spread,
        }
    } else {
        Verdict::Undecided { spread }
    }
}

/// Classifies `x` by the behavior of `delta_{x,n}` along the schedule.
///
/// A converged verdict says nothing about ergodicity of the limit; see
/// [`ErgodicOracle`].
pub fn classify_point(
    sys: &SystemSpec,
    x: &PointState,
    fam: &TestFunctionFamily,
    det: &DetectorParams,
) -> Result<ConvergenceVerdict> {
    det.validate(fam)?;
    let trace = birkhoff_moments(sys, x, fam, &det.checkpoints())?;
    let verdict = verdict_from_trace(&trace, det);
    Ok(ConvergenceVerdict { verdict, trace })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinMembership {
    pub member: bool,
    pub verdict: VerdictKind,
    /// Distance from the limit estimate to the target, when converged.
    pub rho: Option<f64>,
}

/// Tests `x` in `B(mu)` for the measure with moments `target`: converged, and
/// the limit within `cauchy_eps + tail bound` of the target.
pub fn in_basin(
    sys: &SystemSpec,
    x: &PointState,
    target: &MomentVector,
    fam: &TestFunctionFamily,
    det: &DetectorParams,
) -> Result<BasinMembership> {
    if target.family != fam.id() {
        return Err(Error::FamilyMismatch {
            left: target.family.clone(),
            right: fam.id().to_string(),
        });
    }
    let v = classify_point(sys, x, fam, det)?;
    let rho = v.limit().map(|l| weak_metric(l, target)).transpose()?;
    Ok(BasinMembership {
        member: rho.is_some_and(|r| r <= det.cauchy_eps + family_tail_bound(fam)),
        verdict: v.kind(),
        rho,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub verdict_x: VerdictKind,
    pub verdict_tx: VerdictKind,
    pub same_variant: bool,
    /// Distance between the two limits when both converged.
    pub limit_rho: Option<f64>,
    pub passed: bool,
}

/// Classifies `x` and `Tx`; basins are `T`-invariant, so both should get the
/// same verdict and converged limits should agree within `2 cauchy_eps`.
pub fn invariance_check(
    sys: &SystemSpec,
    x: &PointState,
    fam: &TestFunctionFamily,
    det: &DetectorParams,
) -> Result<InvarianceReport> {
    let vx = classify_point(sys, x, fam, det)?;
    let vtx = classify_point(sys, &step(sys, x)?, fam, det)?;
    let limit_rho = match (vx.limit(), vtx.limit()) {
        (Some(a), Some(b)) => Some(weak_metric(a, b)?),
        _ => None,
    };
    let same_variant = vx.kind() == vtx.kind();
    Ok(InvarianceReport {
        verdict_x: vx.kind(),
        verdict_tx: vtx.kind(),
        same_variant,
        limit_rho,
        passed: same_variant && limit_rho.map_or(true, |r| r <= 2.0 * det.cauchy_eps),
    })
}

/// Whether a converged limit is recognized as an ergodic measure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErgodicLabel {
    Ergodic,
    NonErgodic,
    Unknown,
}

impl ErgodicLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ErgodicLabel::Ergodic => "ergodic",
            ErgodicLabel::NonErgodic => "non_ergodic",
            ErgodicLabel::Unknown => "unknown",
        }
    }
}

/// Registered knowledge of `Erg X` in moment coordinates.
///
/// Complete oracles know every ergodic measure of the system and can answer
/// `NonErgodic`; partial ones only recognize a manifold of ergodic measures
/// and answer `Unknown` off it.
#[derive(Clone, Debug)]
pub enum ErgodicOracle {
    /// Uniquely ergodic system with the given invariant measure.
    Unique { moments: MomentVector },
    /// Finitely many ergodic measures.
    Finite { moments: Vec<MomentVector> },
    /// Every Dirac mass is ergodic (identity map).
    DiracContinuum { sys: SystemSpec },
    /// Uniform measures on the period-`q` orbits of a rational rotation.
    RationalOrbits { alpha: Phase, period: u64 },
    /// Bernoulli (`iid`) or irreducible one-step Markov measures (partial).
    MarkovManifold {
        alphabet: usize,
        iid: bool,
        unit_entries: Vec<usize>,
        pair_entries: Vec<Vec<usize>>,
    },
    /// Lebesgue only (partial).
    Lebesgue { moments: MomentVector },
}

impl ErgodicOracle {
    pub fn for_system(sys: &SystemSpec, fam: &TestFunctionFamily) -> Option<ErgodicOracle> {
        let registered = |spec: MeasureSpec| {
            spec.register(sys)
                .ok()
                .and_then(|m| measure_moments(&m, fam).ok())
        };
        match sys {
            SystemSpec::CircleRotation { alpha } => match alpha {
                Alpha::Golden => Some(ErgodicOracle::Unique {
                    moments: registered(MeasureSpec::LebesgueCircle)?,
                }),
                Alpha::Rational { .. } => Some(ErgodicOracle::RationalOrbits {
                    alpha: alpha.phase(),
                    period: alpha.period()?,
                }),
                Alpha::Fixed { .. } => None,
            },
            SystemSpec::Squaring => {
                let dirac = |x: f64| {
                    registered(MeasureSpec::PeriodicOrbit {
                        orbit: Orbit::Points(vec![x]),
                    })
                };
                Some(ErgodicOracle::Finite {
                    moments: vec![dirac(0.0)?, dirac(1.0)?],
                })
            }
            SystemSpec::Identity => Some(ErgodicOracle::DiracContinuum { sys: sys.clone() }),
            SystemSpec::FullShift { .. } | SystemSpec::MarkovShift { .. } => {
                let a = sys.alphabet_size()?;
                let find = |w: &[u8]| fam.position(&TestFunction::Cylinder { word: w.to_vec() });
                let unit_entries = (0..a as u8)
                    .map(|s| find(&[s]))
                    .collect::<Option<Vec<_>>>()?;
                let pair_entries = (0..a as u8)
                    .map(|s| {
                        (0..a as u8)
                            .map(|t| find(&[s, t]))
                            .collect::<Option<Vec<_>>>()
                    })
                    .collect::<Option<Vec<_>>>()?;
                if fam
                    .entries()
                    .iter()
                    .any(|f| !matches!(f, TestFunction::Cylinder { .. }))
                {
                    return None;
                }
                Some(ErgodicOracle::MarkovManifold {
                    alphabet: a,
                    iid: matches!(sys, SystemSpec::FullShift { .. }),
                    unit_entries,
                    pair_entries,
                })
            }
            SystemSpec::DoublingViaShift => Some(ErgodicOracle::Lebesgue {
                moments: registered(MeasureSpec::LebesgueCircle)?,
            }),
        }
    }

    /// Labels a limit estimate; `tol` is the admissible weak distance to the
    /// nearest known ergodic measure.
    pub fn label(&self, limit: &MomentVector, fam: &TestFunctionFamily, tol: f64) -> ErgodicLabel {
        let near = |m: &MomentVector| weighted_l1(&limit.values, &m.values) <= tol;
        match self {
            ErgodicOracle::Unique { moments } => complete(near(moments)),
            ErgodicOracle::Finite { moments } => complete(moments.iter().any(near)),
            ErgodicOracle::Lebesgue { moments } => partial(near(moments)),
            ErgodicOracle::DiracContinuum { sys } => {
                let hit = dirac_candidate(limit, fam).is_some_and(|a| {
                    MeasureSpec::PeriodicOrbit {
                        orbit: Orbit::Points(vec![a]),
                    }
                    .register(sys)
                    .ok()
                    .and_then(|m| measure_moments(&m, fam).ok())
                    .is_some_and(|m| near(&m))
                });
                complete(hit)
            }
            ErgodicOracle::RationalOrbits { alpha, period } => {
                let hit = orbit_candidates(limit, fam, *period).into_iter().any(|y| {
                    let points: Vec<Phase> = (0..*period).map(|j| y.add(alpha.scale(j))).collect();
                    orbit_points_moments(&points, fam).is_ok_and(|m| near(&m))
                });
                complete(hit)
            }
            ErgodicOracle::MarkovManifold {
                alphabet,
                iid,
                unit_entries,
                pair_entries,
            } => partial(markov_fit(
                limit,
                fam,
                *alphabet,
                *iid,
                unit_entries,
                pair_entries,
                tol,
            )),
        }
    }
}

fn complete(hit: bool) -> ErgodicLabel {
    if hit {
        ErgodicLabel::Ergodic
    } else {
        ErgodicLabel::NonErgodic
    }
}

fn partial(hit: bool) -> ErgodicLabel {
    if hit {
        ErgodicLabel::Ergodic
    } else {
        ErgodicLabel::Unknown
    }
}

/// Location `a` of a Dirac mass read off the first usable entry.
fn dirac_candidate(limit: &MomentVector, fam: &TestFunctionFamily) -> Option<f64> {
    let entries = fam.entries();
    if let Some(i) = fam.position(&TestFunction::HalfCos { k: 1 }) {
        return Some(limit.values[i].clamp(-1.0, 1.0).acos() / std::f64::consts::PI);
    }
    let c = entries
        .iter()
        .position(|f| *f == TestFunction::TrigCos { k: 1 })?;
    let s = entries
        .iter()
        .position(|f| *f == TestFunction::TrigSin { k: 1 })?;
    let a = limit.values[s].atan2(limit.values[c]) / std::f64::consts::TAU;
    Some(a.rem_euclid(1.0))
}

/// Starting points `y` whose period-`q` orbit measures match the phase at
/// the smallest multiple of `q` present in the family.
fn orbit_candidates(limit: &MomentVector, fam: &TestFunctionFamily, q: u64) -> Vec<Phase> {
    let entries = fam.entries();
    let mut best: Option<(u64, usize, usize)> = None;
    for (c, f) in entries.iter().enumerate() {
        if let TestFunction::TrigCos { k } = *f {
            if k as u64 % q == 0 {
                if let Some(s) = entries
                    .iter()
                    .position(|g| *g == TestFunction::TrigSin { k })
                {
                    if best.map_or(true, |b| (k as u64) < b.0) {
                        best = Some((k as u64, c, s));
                    }
                }
            }
        }
    }
    let Some((k, c, s)) = best else {
        return vec![Phase::ZERO];
    };
    let theta = (limit.values[s].atan2(limit.values[c]) / std::f64::consts::TAU).rem_euclid(1.0);
    (0..k / q)
        .map(|j| Phase::from_f64((theta + j as f64) / k as f64))
        .collect()
}

/// Fits a Bernoulli (`iid`) or one-step Markov measure to the length-1 and
/// length-2 cylinder frequencies and compares all cylinder moments with it.
fn markov_fit(
    limit: &MomentVector,
    fam: &TestFunctionFamily,
    a: usize,
    iid: bool,
    unit: &[usize],
    pairs: &[Vec<usize>],
    tol: f64,
) -> bool {
    let pi: Vec<f64> = unit.iter().map(|&i| limit.values[i]).collect();
    let p: Vec<Vec<f64>> = (0..a)
        .map(|s| {
            (0..a)
                .map(|t| match (iid, pi[s] > 0.0) {
                    (true, _) => pi[t],
                    (false, true) => limit.values[pairs[s][t]] / pi[s],
                    (false, false) => 0.0,
                })
                .collect()
        })
        .collect();
    let support: Vec<usize> = (0..a).filter(|&s| pi[s] > 0.0).collect();
    if support.is_empty() || !strongly_connected(&p, &support) {
        return false;
    }
    let fitted: Vec<f64> = fam
        .entries()
        .iter()
        .map(|f| match f {
            TestFunction::Cylinder { word } => {
                let mut v = pi[word[0] as usize];
                for w in word.windows(2) {
                    v *= p[w[0] as usize][w[1] as usize];
                }
                v
            }
            _ => f64::NAN,
        })
        .collect();
    weighted_l1(&limit.values, &fitted) <= tol
}

fn strongly_connected(p: &[Vec<f64>], support: &[usize]) -> bool {
    let reach = |forward: bool| {
        let mut seen = vec![false; p.len()];
        let mut stack = vec![support[0]];
        seen[support[0]] = true;
        while let Some(s) = stack.pop() {
            for &t in support {
                let edge = if forward { p[s][t] } else { p[t][s] };
                if edge > 0.0 && !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        support.iter().all(|&s| seen[s])
    };
    reach(true) && reach(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{oscillating_witness, sampler_draw, SymbolStream};
    use proptest::prelude::*;

    fn shift2() -> SystemSpec {
        SystemSpec::FullShift { alphabet_size: 2 }
    }

    #[test]
    fn squaring_orbit_converges_to_zero() {
        // oracle: direct iteration of x -> x^2 from 0.7
        let mut x = 0.7f64;
        let mut k = 0;
        while x >= 1e-10 {
            x *= x;
            k += 1;
        }
        assert!(k <= 7, "took {k} squarings");

        let sys = SystemSpec::Squaring;
        let fam = TestFunctionFamily::default_for(&sys).unwrap();
        let det = DetectorParams::default();
        let v = classify_point(&sys, &PointState::Interval(0.7), &fam, &det).unwrap();
        let dirac0 = MeasureSpec::PeriodicOrbit {
            orbit: Orbit::Points(vec![0.0]),
        }
        .register(&sys)
        .unwrap();
        let target = measure_moments(&dirac0, &fam).unwrap();
        let limit = v.limit().expect("converged");
        assert!(weak_metric(limit, &target).unwrap() < 1e-5);
        assert!(v.spread() <= det.cauchy_eps);
    }

    #[test]
    fn witness_does_not_converge() {
        let sys = shift2();
        let fam = TestFunctionFamily::default_for(&sys).unwrap();
        let det = DetectorParams::default();
        let x = oscillating_witness(2).unwrap();
        let v = classify_point(&sys, &x, &fam, &det).unwrap();
        let Verdict::NotConverged { osc_lower_bound } = v.verdict else {
            panic!("expected NotConverged, got {:?}", v.kind());
        };
        assert!(osc_lower_bound >= 0.05);
        // the cylinder-[1] coordinate alone, scaled by its weight 1/4
        let i = fam
            .position(&TestFunction::Cylinder { word: vec![1] })
            .unwrap();
        let tail = &v.trace[v.trace.len() - det.window..];
        let swing = tail
            .iter()
            .flat_map(|a| tail.iter().map(move |b| (a.values[i] - b.values[i]).abs()))
            .fold(0.0, f64::max);
        assert!(TestFunctionFamily::weight(i) * swing >= 0.05, "{swing}");
    }

    #[test]
    fn identity_converges_immediately() {
        let sys = SystemSpec::Identity;
        let fam = TestFunctionFamily::default_for(&sys).unwrap();
        let v = classify_point(
            &sys,
            &PointState::Interval(0.37),
            &fam,
            &DetectorParams::default(),
        )
        .unwrap();
        let Verdict::Converged {
            limit,
            achieved_eps,
        } = &v.verdict
        else {
            panic!("identity must converge");
        };
        assert_eq!(*achieved_eps, 0.0);
        assert_eq!(v.trace[0].values, limit.values);
        let direct = crate::observables::evaluate(&sys, &PointState::Interval(0.37), &fam).unwrap();
        for (a, b) in limit.values.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn basin_membership() {
        let det = DetectorParams::default();
        let golden = SystemSpec::golden_rotation();
        let fam = TestFunctionFamily::default_for(&golden).unwrap();
        let leb = measure_moments(
            &MeasureSpec::LebesgueCircle.register(&golden).unwrap(),
            &fam,
        )
        .unwrap();
        let r = in_basin(&golden, &PointState::angle(0.3), &leb, &fam, &det).unwrap();
        assert!(r.member, "{r:?}");

        let sq = SystemSpec::Squaring;
        let fam = TestFunctionFamily::default_for(&sq).unwrap();
        let one = measure_moments(
            &MeasureSpec::PeriodicOrbit {
                orbit: Orbit::Points(vec![1.0]),
            }
            .register(&sq)
            .unwrap(),
            &fam,
        )
        .unwrap();
        let r = in_basin(&sq, &PointState::Interval(0.7), &one, &fam, &det).unwrap();
        assert!(!r.member);
        assert_eq!(r.verdict, VerdictKind::Converged);

        // self-consistency
        let x = PointState::Interval(0.7);
        let own = classify_point(&sq, &x, &fam, &det)
            .unwrap()
            .into_limit()
            .unwrap();
        assert!(in_basin(&sq, &x, &own, &fam, &det).unwrap().member);

        let other = TestFunctionFamily::interval(4).unwrap();
        assert!(matches!(
            in_basin(&sq, &x, &own, &other, &det),
            Err(Error::FamilyMismatch { .. })
        ));
    }

    #[test]
    fn invariance_at_fixed_point_and_witness() {
        let det = DetectorParams::default();
        let sq = SystemSpec::Squaring;
        let fam = TestFunctionFamily::default_for(&sq).unwrap();
        let r = invariance_check(&sq, &PointState::Interval(1.0), &fam, &det).unwrap();
        assert!(r.passed);
        assert_eq!(r.limit_rho, Some(0.0));

        let fam = TestFunctionFamily::default_for(&shift2()).unwrap();
        let r = invariance_check(&shift2(), &oscillating_witness(2).unwrap(), &fam, &det).unwrap();
        assert_eq!(r.verdict_x, VerdictKind::NotConverged);
        assert_eq!(r.verdict_tx, VerdictKind::NotConverged);
        assert!(r.passed);
    }

    #[test]
    fn invariance_on_golden_rotation() {
        let det = DetectorParams::default();
        let sys = SystemSpec::golden_rotation();
        let fam = TestFunctionFamily::default_for(&sys).unwrap();
        let leb = MeasureSpec::LebesgueCircle.register(&sys).unwrap();
        for s in 0..10 {
            let x = sampler_draw(&leb, s).point;
            assert!(invariance_check(&sys, &x, &fam, &det).unwrap().passed);
        }
    }

    #[test]
    fn detector_validation() {
        let fam = TestFunctionFamily::default_for(&shift2()).unwrap();
        let ok = DetectorParams::default();
        assert!(ok.validate(&fam).is_ok());
        assert_eq!(ok.checkpoints().last(), Some(&2_048_000));
        let bad_osc = DetectorParams {
            osc_eps: 0.01,
            ..ok.clone()
        };
        assert!(bad_osc.validate(&fam).is_err());
        let bad_k = DetectorParams {
            count: 4,
            ..ok.clone()
        };
        assert!(bad_k.validate(&fam).is_err());
        let tiny = TestFunctionFamily::cylinders(2, 1).unwrap();
        // tail bound 1/2 exceeds cauchy_eps
        assert!(ok.validate(&tiny).is_err());
    }

    #[test]
    fn oracles_label_known_measures() {
        let det = DetectorParams::default();
        let sys = shift2();
        let fam = TestFunctionFamily::default_for(&sys).unwrap();
        let oracle = ErgodicOracle::for_system(&sys, &fam).unwrap();
        let tol = 2.0 * det.cauchy_eps + family_tail_bound(&fam);
        let bern = MeasureSpec::bernoulli(&[0.2, 0.8]).register(&sys).unwrap();
        let x = sampler_draw(&bern, 4).point;
        let lim = classify_point(&sys, &x, &fam, &det)
            .unwrap()
            .into_limit()
            .unwrap();
        assert_eq!(oracle.label(&lim, &fam, tol), ErgodicLabel::Ergodic);
        // a mixture's moments are off the Markov manifold
        let mix = MeasureSpec::mixture(vec![
            (0.5, MeasureSpec::bernoulli(&[0.2, 0.8])),
            (0.5, MeasureSpec::bernoulli(&[0.8, 0.2])),
        ])
        .register(&sys)
        .unwrap();
        let mm = measure_moments(&mix, &fam).unwrap();
        assert_eq!(oracle.label(&mm, &fam, tol), ErgodicLabel::Unknown);

        // invariant measures of a quarter rotation differ only at frequencies
        // divisible by 4, so those lead the family
        let rot = SystemSpec::CircleRotation {
            alpha: Alpha::Rational { num: 1, den: 4 },
        };
        let fam = TestFunctionFamily::new(
            [4, 8, 1, 2, 3]
                .into_iter()
                .flat_map(|k| [TestFunction::TrigCos { k }, TestFunction::TrigSin { k }])
                .collect(),
        )
        .unwrap();
        let oracle = ErgodicOracle::for_system(&rot, &fam).unwrap();
        let lim = classify_point(&rot, &PointState::angle(0.137), &fam, &det)
            .unwrap()
            .into_limit()
            .unwrap();
        assert_eq!(oracle.label(&lim, &fam, tol), ErgodicLabel::Ergodic);
        let leb =
            measure_moments(&MeasureSpec::LebesgueCircle.register(&rot).unwrap(), &fam).unwrap();
        assert_eq!(oracle.label(&leb, &fam, tol), ErgodicLabel::NonErgodic);

        let id = SystemSpec::Identity;
        let fam = TestFunctionFamily::default_for(&id).unwrap();
        let oracle = ErgodicOracle::for_system(&id, &fam).unwrap();
        let lim = classify_point(&id, &PointState::Interval(0.61), &fam, &det)
            .unwrap()
            .into_limit()
            .unwrap();
        assert_eq!(oracle.label(&lim, &fam, tol), ErgodicLabel::Ergodic);
        let leb =
            measure_moments(&MeasureSpec::LebesgueCircle.register(&id).unwrap(), &fam).unwrap();
        assert_eq!(oracle.label(&leb, &fam, tol), ErgodicLabel::NonErgodic);
    }

    #[test]
    fn markov_stream_limit_is_on_the_manifold() {
        let p = vec![vec![0.9, 0.1], vec![0.4, 0.6]];
        let sys = SystemSpec::MarkovShift {
            transition: p.clone(),
        };
        let fam = TestFunctionFamily::default_for(&sys).unwrap();
        let det = DetectorParams::default();
        let oracle = ErgodicOracle::for_system(&sys, &fam).unwrap();
        let x = PointState::Symbols(SymbolStream::markov(p, vec![0.8, 0.2], 21).unwrap());
        let lim = classify_point(&sys, &x, &fam, &det)
            .unwrap()
            .into_limit()
            .unwrap();
        let tol = 2.0 * det.cauchy_eps + family_tail_bound(&fam);
        assert_eq!(oracle.label(&lim, &fam, tol), ErgodicLabel::Ergodic);
    }

    fn trace_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 6), 5..9)
    }

    proptest! {
        #[test]
        fn enlarging_cauchy_eps_keeps_converged(rows in trace_strategy(), scale in 0.0f64..0.2, grow in 1.0f64..5.0) {
            let fam = TestFunctionFamily::circle(3).unwrap();
            let trace: Vec<MomentVector> = rows
                .into_iter()
                .enumerate()
                .map(|(i, r)| {
                    let v = r.into_iter().map(|x| x * scale).collect();
                    MomentVector::new(&fam, Provenance::Empirical { n: 1 << i }, v)
                })
                .collect();
            let det = DetectorParams { cauchy_eps: 0.05, osc_eps: 0.2, ..DetectorParams::default() };
            let wider = DetectorParams {
                cauchy_eps: det.cauchy_eps * grow,
                osc_eps: det.osc_eps * grow,
                ..det.clone()
            };
            let v = verdict_from_trace(&trace, &det);
            if matches!(v, Verdict::Converged { .. }) {
                let still = matches!(verdict_from_trace(&trace, &wider), Verdict::Converged { .. });
                prop_assert!(still);
            }
            // stored bounds are recomputable from the trace
            let spread = window_spread(&trace, det.window);
            match v {
                Verdict::Converged { achieved_eps, .. } => {
                    prop_assert!(achieved_eps <= det.cauchy_eps);
                    prop_assert_eq!(achieved_eps, spread);
                }
                Verdict::NotConverged { osc_lower_bound } => {
                    prop_assert!(osc_lower_bound >= det.osc_eps);
                    prop_assert_eq!(osc_lower_bound, spread);
                }
                Verdict::Undecided { spread: s } => prop_assert_eq!(s, spread),
            }
        }
    }
}
