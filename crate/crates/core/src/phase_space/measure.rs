use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{validate_stochastic, Phase, PointState, SymbolStream, SystemSpec};
use crate::error::{Error, Result};

const WEIGHT_TOL: f64 = 1e-12;
const ORBIT_TOL: f64 = 1e-12;

/// An invariant measure as written in a configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MeasureSpec {
    /// Lebesgue measure on the circle (or on `[0, 1]`, or the fair coin on
    /// binary expansions for the doubling map).
    LebesgueCircle,
    Bernoulli {
        probs: Vec<f64>,
    },
    MarkovStationary {
        transition: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stationary: Option<Vec<f64>>,
    },
    /// Uniform measure on a periodic orbit.
    PeriodicOrbit {
        orbit: Orbit,
    },
    Mixture {
        components: Vec<Component>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orbit {
    /// Periodic symbol sequence `word word word ...` and its shifts.
    Word(Vec<u8>),
    /// Points `x, Tx, ..., T^{p-1}x` with `T^p x = x`.
    Points(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub measure: MeasureSpec,
}

impl MeasureSpec {
    pub fn bernoulli(probs: &[f64]) -> MeasureSpec {
        MeasureSpec::Bernoulli {
            probs: probs.to_vec(),
        }
    }

    pub fn mixture(parts: Vec<(f64, MeasureSpec)>) -> MeasureSpec {
        MeasureSpec::Mixture {
            components: parts
                .into_iter()
                .map(|(weight, measure)| Component { weight, measure })
                .collect(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MeasureSpec::LebesgueCircle => "lebesgue",
            MeasureSpec::Bernoulli { .. } => "bernoulli",
            MeasureSpec::MarkovStationary { .. } => "markov_stationary",
            MeasureSpec::PeriodicOrbit { .. } => "periodic_orbit",
            MeasureSpec::Mixture { .. } => "mixture",
        }
    }

    /// Validates the measure against `sys` and checks its invariance.
    pub fn register(&self, sys: &SystemSpec) -> Result<Measure> {
        sys.validate()?;
        let fail = |reason: String| Error::Registration {
            measure: self.name().to_string(),
            system: sys.name(),
            reason,
        };
        let kind = match self {
            MeasureSpec::LebesgueCircle => match sys {
                SystemSpec::CircleRotation { .. }
                | SystemSpec::Identity
                | SystemSpec::DoublingViaShift => MeasureKind::Lebesgue,
                _ => return Err(fail("Lebesgue measure is not invariant here".into())),
            },
            MeasureSpec::Bernoulli { probs } => {
                let a = match sys {
                    SystemSpec::FullShift { alphabet_size } => *alphabet_size,
                    SystemSpec::DoublingViaShift => 2,
                    _ => return Err(fail("Bernoulli measures live on full shifts".into())),
                };
                check_probability_vector(probs).map_err(fail)?;
                if probs.len() != a {
                    return Err(fail(format!(
                        "{} probabilities for alphabet {a}",
                        probs.len()
                    )));
                }
                MeasureKind::Bernoulli {
                    probs: probs.clone(),
                }
            }
            MeasureSpec::MarkovStationary {
                transition,
                stationary,
            } => {
                let a = sys
                    .alphabet_size()
                    .ok_or_else(|| fail("Markov measures live on shift spaces".into()))?;
                validate_stochastic(transition).map_err(fail)?;
                if transition.len() != a {
                    return Err(fail(format!(
                        "{} states for alphabet {a}",
                        transition.len()
                    )));
                }
                if let SystemSpec::MarkovShift {
                    transition: allowed,
                } = sys
                {
                    for (i, row) in transition.iter().enumerate() {
                        for (j, &p) in row.iter().enumerate() {
                            if p > 0.0 && allowed[i][j] == 0.0 {
                                return Err(fail(format!(
                                    "transition {i}->{j} is forbidden by the subshift"
                                )));
                            }
                        }
                    }
                }
                let stationary = match stationary {
                    Some(pi) => {
                        check_probability_vector(pi).map_err(fail)?;
                        check_stationary(transition, pi).map_err(fail)?;
                        pi.clone()
                    }
                    None => stationary_vector(transition).map_err(fail)?,
                };
                MeasureKind::Markov {
                    transition: transition.clone(),
                    stationary,
                }
            }
            MeasureSpec::PeriodicOrbit { orbit } => register_orbit(sys, orbit).map_err(fail)?,
            MeasureSpec::Mixture { components } => {
                if components.is_empty() {
                    return Err(fail("empty mixture".into()));
                }
                if components.iter().any(|c| !(c.weight > 0.0)) {
                    return Err(fail("mixture weights must be positive".into()));
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if (total - 1.0).abs() > WEIGHT_TOL {
                    return Err(fail(format!("mixture weights sum to {total}")));
                }
                let parts = components
                    .iter()
                    .map(|c| Ok((c.weight, c.measure.register(sys)?)))
                    .collect::<Result<Vec<_>>>()?;
                MeasureKind::Mixture { components: parts }
            }
        };
        Ok(Measure {
            system: sys.clone(),
            spec: self.clone(),
            kind,
        })
    }
}

fn check_probability_vector(p: &[f64]) -> std::result::Result<(), String> {
    if p.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err("negative or non-finite probability".into());
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > WEIGHT_TOL {
        return Err(format!("probabilities sum to {s}"));
    }
    Ok(())
}

fn check_stationary(m: &[Vec<f64>], pi: &[f64]) -> std::result::Result<(), String> {
    if pi.len() != m.len() {
        return Err("stationary vector has the wrong length".into());
    }
    for j in 0..m.len() {
        let v: f64 = (0..m.len()).map(|i| pi[i] * m[i][j]).sum();
        if (v - pi[j]).abs() > 1e-10 {
            return Err(format!("pi P differs from pi at state {j}"));
        }
    }
    Ok(())
}

/// Solves `pi P = pi`, `sum pi = 1`.
fn stationary_vector(m: &[Vec<f64>]) -> std::result::Result<Vec<f64>, String> {
    let n = m.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(j, i)] = m[i][j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or("stationary vector is not unique; supply it explicitly")?;
    let mut pi: Vec<f64> = pi.iter().map(|x| x.max(0.0)).collect();
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= s);
    check_stationary(m, &pi)?;
    Ok(pi)
}

fn register_orbit(sys: &SystemSpec, orbit: &Orbit) -> std::result::Result<MeasureKind, String> {
    match (sys, orbit) {
        (_, Orbit::Word(word)) if sys.is_symbolic() => {
            let a = sys.alphabet_size().unwrap_or(0);
            if word.is_empty() {
                return Err("empty orbit word".into());
            }
            if word.iter().any(|&s| s as usize >= a) {
                return Err(format!("orbit word uses symbols outside alphabet {a}"));
            }
            if let SystemSpec::MarkovShift { transition } = sys {
                let p = word.len();
                for i in 0..p {
                    let (s, t) = (word[i] as usize, word[(i + 1) % p] as usize);
                    if transition[s][t] == 0.0 {
                        return Err(format!("orbit uses forbidden transition {s}->{t}"));
                    }
                }
            }
            Ok(MeasureKind::OrbitWord { word: word.clone() })
        }
        (SystemSpec::CircleRotation { alpha }, Orbit::Points(points)) => {
            let first = points.first().ok_or("empty orbit")?;
            let alpha = alpha.phase();
            let mut phases = vec![Phase::from_f64(*first)];
            for &x in &points[1..] {
                let next = phases.last().unwrap().add(alpha);
                if next.circle_distance(Phase::from_f64(x)) > ORBIT_TOL {
                    return Err(format!("{x} is not the rotation image of its predecessor"));
                }
                phases.push(next);
            }
            if phases.last().unwrap().add(alpha).circle_distance(phases[0]) > ORBIT_TOL {
                return Err("rotation orbit does not close".into());
            }
            Ok(MeasureKind::OrbitAngles { points: phases })
        }
        (SystemSpec::Squaring | SystemSpec::Identity, Orbit::Points(points)) => {
            if points.is_empty() {
                return Err("empty orbit".into());
            }
            if points.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err("orbit point outside [0, 1]".into());
            }
            let image = |x: f64| {
                if *sys == SystemSpec::Squaring {
                    x * x
                } else {
                    x
                }
            };
            let p = points.len();
            for i in 0..p {
                if (image(points[i]) - points[(i + 1) % p]).abs() > ORBIT_TOL {
                    return Err(format!("orbit is not periodic at {}", points[i]));
                }
            }
            Ok(MeasureKind::OrbitInterval {
                points: points.clone(),
            })
        }
        _ => Err("orbit type does not match the phase space".into()),
    }
}

/// A measure validated against its system.
#[derive(Clone, Debug, PartialEq)]
pub struct Measure {
    system: SystemSpec,
    spec: MeasureSpec,
    kind: MeasureKind,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeasureKind {
    Lebesgue,
    Bernoulli {
        probs: Vec<f64>,
    },
    Markov {
        transition: Vec<Vec<f64>>,
        stationary: Vec<f64>,
    },
    OrbitWord {
        word: Vec<u8>,
    },
    OrbitAngles {
        points: Vec<Phase>,
    },
    OrbitInterval {
        points: Vec<f64>,
    },
    Mixture {
        components: Vec<(f64, Measure)>,
    },
}

impl Measure {
    pub fn system(&self) -> &SystemSpec {
        &self.system
    }

    pub fn spec(&self) -> &MeasureSpec {
        &self.spec
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    /// Lebesgue measure under the identity or a periodic rotation is the one
    /// registered measure with a continuum of components.
    pub fn is_ergodic(&self) -> bool {
        match (&self.kind, &self.system) {
            (MeasureKind::Mixture { .. }, _) => false,
            (MeasureKind::Lebesgue, SystemSpec::Identity) => false,
            (MeasureKind::Lebesgue, SystemSpec::CircleRotation { alpha }) => {
                alpha.period().is_none()
            }
            _ => true,
        }
    }

    /// Listed components with their total weights, nested mixtures flattened.
    /// A non-ergodic Lebesgue measure is returned as a single entry.
    pub fn ergodic_components(&self) -> Vec<(f64, Measure)> {
        match &self.kind {
            MeasureKind::Mixture { components } => components
                .iter()
                .flat_map(|(w, m)| {
                    m.ergodic_components()
                        .into_iter()
                        .map(move |(v, c)| (w * v, c))
                })
                .collect(),
            _ => vec![(1.0, self.clone())],
        }
    }
}

/// A sampled point with the index of the top-level mixture component it came
/// from, when the measure is a mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct Draw {
    pub point: PointState,
    pub component: Option<usize>,
}

/// Draws a `m`-distributed point; deterministic in `seed`.
pub fn sampler_draw(m: &Measure, seed: u64) -> Draw {
    match &m.kind {
        MeasureKind::Mixture { components } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = components.len() - 1;
            for (i, (w, _)) in components.iter().enumerate() {
                acc += w;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            let sub = rng.gen::<u64>();
            Draw {
                point: sampler_draw(&components[pick].1, sub).point,
                component: Some(pick),
            }
        }
        kind => Draw {
            point: draw_ergodic(&m.system, kind, seed),
            component: None,
        },
    }
}

fn draw_ergodic(sys: &SystemSpec, kind: &MeasureKind, seed: u64) -> PointState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alphabet = sys.alphabet_size().unwrap_or(2);
    let stream = |rule| {
        PointState::Symbols(
            SymbolStream::from_rule(alphabet, rule).expect("rule validated at registration"),
        )
    };
    match kind {
        MeasureKind::Lebesgue => match sys {
            SystemSpec::CircleRotation { .. } => PointState::Angle(Phase(rng.gen())),
            SystemSpec::DoublingViaShift => stream(super::ExtensionRule::Iid {
                probs: vec![0.5, 0.5],
                seed,
            }),
            _ => PointState::Interval(rng.gen::<f64>()),
        },
        MeasureKind::Bernoulli { probs } => stream(super::ExtensionRule::Iid {
            probs: probs.clone(),
            seed,
        }),
        MeasureKind::Markov {
            transition,
            stationary,
        } => stream(super::ExtensionRule::Markov {
            transition: transition.clone(),
            initial: stationary.clone(),
            seed,
        }),
        MeasureKind::OrbitWord { word } => {
            let r = rng.gen_range(0..word.len());
            let mut rotated = word[r..].to_vec();
            rotated.extend_from_slice(&word[..r]);
            stream(super::ExtensionRule::Periodic { word: rotated })
        }
        MeasureKind::OrbitAngles { points } => {
            PointState::Angle(points[rng.gen_range(0..points.len())])
        }
        MeasureKind::OrbitInterval { points } => {
            PointState::Interval(points[rng.gen_range(0..points.len())])
        }
        MeasureKind::Mixture { .. } => unreachable!("mixtures handled by sampler_draw"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::ExtensionRule;

    fn shift2() -> SystemSpec {
        SystemSpec::FullShift { alphabet_size: 2 }
    }

    #[test]
    fn bernoulli_draw_is_iid_stream_with_same_seed() {
        let m = MeasureSpec::bernoulli(&[0.5, 0.5])
            .register(&shift2())
            .unwrap();
        let d = sampler_draw(&m, 1234);
        let expected = SymbolStream::from_rule(
            2,
            ExtensionRule::Iid {
                probs: vec![0.5, 0.5],
                seed: 1234,
            },
        )
        .unwrap();
        assert_eq!(d.point, PointState::Symbols(expected));
        assert_eq!(d.component, None);
    }

    #[test]
    fn mixture_component_frequency() {
        let m = MeasureSpec::mixture(vec![
            (0.3, MeasureSpec::bernoulli(&[0.8, 0.2])),
            (0.7, MeasureSpec::bernoulli(&[0.2, 0.8])),
        ])
        .register(&shift2())
        .unwrap();
        let n = 10_000;
        let first = (0..n)
            .filter(|&s| sampler_draw(&m, crate::seed::derive(11, 0, s)).component == Some(0))
            .count() as f64
            / n as f64;
        // binomial sd at n = 1e4 is 0.0046; 0.015 is over 3 sd
        assert!((first - 0.3).abs() <= 0.015, "{first}");
    }

    #[test]
    fn periodic_orbit_draw_is_a_rotation_of_the_word() {
        let m = MeasureSpec::PeriodicOrbit {
            orbit: Orbit::Word(vec![0, 1, 1]),
        }
        .register(&shift2())
        .unwrap();
        let mut starts = std::collections::BTreeSet::new();
        for seed in 0..200 {
            let PointState::Symbols(mut s) = sampler_draw(&m, seed).point else {
                panic!("expected a stream");
            };
            let p = s.prefix(6);
            assert_eq!(p[..3], p[3..]);
            assert!([[0, 1, 1], [1, 1, 0], [1, 0, 1]]
                .iter()
                .any(|w| w[..] == p[..3]));
            starts.insert(p[..3].to_vec());
        }
        assert_eq!(starts.len(), 3);
    }

    #[test]
    fn draws_are_deterministic() {
        let m = MeasureSpec::LebesgueCircle
            .register(&SystemSpec::golden_rotation())
            .unwrap();
        assert_eq!(sampler_draw(&m, 5), sampler_draw(&m, 5));
        assert_ne!(sampler_draw(&m, 5), sampler_draw(&m, 6));
    }

    #[test]
    fn registration_rejects_non_invariant_measures() {
        assert!(MeasureSpec::LebesgueCircle
            .register(&SystemSpec::Squaring)
            .is_err());
        assert!(MeasureSpec::bernoulli(&[0.5, 0.5])
            .register(&SystemSpec::golden_rotation())
            .is_err());
        assert!(MeasureSpec::bernoulli(&[0.2, 0.3, 0.5])
            .register(&shift2())
            .is_err());
        let bad_weights = MeasureSpec::mixture(vec![
            (0.3, MeasureSpec::bernoulli(&[0.8, 0.2])),
            (0.6, MeasureSpec::bernoulli(&[0.2, 0.8])),
        ]);
        assert!(bad_weights.register(&shift2()).is_err());
        let not_periodic = MeasureSpec::PeriodicOrbit {
            orbit: Orbit::Points(vec![0.5]),
        };
        assert!(not_periodic.register(&SystemSpec::Squaring).is_err());
        let rot = SystemSpec::CircleRotation {
            alpha: crate::phase_space::Alpha::Rational { num: 1, den: 4 },
        };
        let orbit = MeasureSpec::PeriodicOrbit {
            orbit: Orbit::Points(vec![0.1, 0.35, 0.6, 0.85]),
        };
        assert!(orbit.register(&rot).is_ok());
        let open = MeasureSpec::PeriodicOrbit {
            orbit: Orbit::Points(vec![0.1, 0.35, 0.6]),
        };
        assert!(open.register(&rot).is_err());
    }

    #[test]
    fn markov_stationary_vector_is_solved() {
        let p = vec![vec![0.9, 0.1], vec![0.4, 0.6]];
        let m = MeasureSpec::MarkovStationary {
            transition: p.clone(),
            stationary: None,
        }
        .register(&SystemSpec::MarkovShift { transition: p })
        .unwrap();
        let MeasureKind::Markov { stationary, .. } = m.kind() else {
            panic!("expected Markov kind");
        };
        assert!((stationary[0] - 0.8).abs() < 1e-14);
        assert!((stationary[1] - 0.2).abs() < 1e-14);
    }

    #[test]
    fn markov_support_must_fit_the_subshift() {
        let sys = SystemSpec::MarkovShift {
            transition: vec![vec![0.0, 1.0], vec![0.5, 0.5]],
        };
        let m = MeasureSpec::MarkovStationary {
            transition: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            stationary: None,
        };
        assert!(m.register(&sys).is_err());
        let word = MeasureSpec::PeriodicOrbit {
            orbit: Orbit::Word(vec![0, 0, 1]),
        };
        assert!(word.register(&sys).is_err());
    }

    #[test]
    fn nested_mixture_components_flatten() {
        let m = MeasureSpec::mixture(vec![
            (0.5, MeasureSpec::bernoulli(&[0.5, 0.5])),
            (
                0.5,
                MeasureSpec::mixture(vec![
                    (0.4, MeasureSpec::bernoulli(&[0.2, 0.8])),
                    (0.6, MeasureSpec::bernoulli(&[0.8, 0.2])),
                ]),
            ),
        ])
        .register(&shift2())
        .unwrap();
        let comps = m.ergodic_components();
        let w: Vec<f64> = comps.iter().map(|c| c.0).collect();
        assert_eq!(w, vec![0.5, 0.2, 0.3]);
        assert!(comps.iter().all(|c| c.1.is_ergodic()));
    }
}
