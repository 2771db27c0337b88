//! Closed-form moments of registered measures.

use std::f64::consts::{PI, TAU};

use super::{
    arc_contains_phase, arc_contains_real, arc_length, MomentVector, Provenance, TestFunction,
    TestFunctionFamily,
};
use crate::error::{Error, Result};
use crate::phase_space::{Measure, MeasureKind, Phase, SystemSpec};

/// Exact moments `(mu[f_1], ..., mu[f_m])` of a registered measure.
pub fn measure_moments(m: &Measure, fam: &TestFunctionFamily) -> Result<MomentVector> {
    let values = fam
        .entries()
        .iter()
        .map(|f| moment(m, f))
        .collect::<Result<Vec<_>>>()?;
    Ok(MomentVector::new(fam, Provenance::ClosedForm, values))
}

fn unsupported(m: &Measure, f: &TestFunction) -> Error {
    Error::UnsupportedFunction {
        function: f.to_string(),
        target: format!("{} on {}", m.spec().name(), m.system().name()),
    }
}

fn moment(m: &Measure, f: &TestFunction) -> Result<f64> {
    let sys = m.system();
    match m.kind() {
        MeasureKind::Mixture { components } => {
            let mut acc = 0.0;
            for (w, c) in components {
                acc += w * moment(c, f)?;
            }
            Ok(acc)
        }
        MeasureKind::Lebesgue => match f {
            // integer frequencies integrate to zero over a full period
            TestFunction::TrigCos { .. } | TestFunction::TrigSin { .. } => Ok(0.0),
            TestFunction::HalfCos { .. } if !matches!(sys, SystemSpec::CircleRotation { .. }) => {
                Ok(0.0)
            }
            TestFunction::Arc { start, end } => Ok(arc_length(*start, *end)),
            TestFunction::Cylinder { word } if *sys == SystemSpec::DoublingViaShift => {
                Ok(0.5f64.powi(word.len() as i32))
            }
            _ => Err(unsupported(m, f)),
        },
        MeasureKind::Bernoulli { probs } => match f {
            TestFunction::Cylinder { word } => {
                Ok(word.iter().map(|&s| probs[s as usize]).product())
            }
            TestFunction::TrigCos { k } | TestFunction::TrigSin { k } if probs.len() == 2 => {
                let (re, im) = bernoulli_fourier(probs[1], 2 * *k as u64);
                Ok(if matches!(f, TestFunction::TrigCos { .. }) {
                    re
                } else {
                    im
                })
            }
            TestFunction::HalfCos { k } if probs.len() == 2 => {
                Ok(bernoulli_fourier(probs[1], *k as u64).0)
            }
            _ => Err(unsupported(m, f)),
        },
        MeasureKind::Markov {
            transition,
            stationary,
        } => match f {
            TestFunction::Cylinder { word } => Ok(markov_cylinder(transition, stationary, word)),
            _ => Err(unsupported(m, f)),
        },
        MeasureKind::OrbitWord { word } => match f {
            TestFunction::Cylinder { word: w } => Ok(periodic_cylinder(word, w)),
            TestFunction::Arc { .. }
            | TestFunction::TrigCos { .. }
            | TestFunction::TrigSin { .. }
            | TestFunction::HalfCos { .. } => {
                let p = word.len();
                let total: f64 = (0..p)
                    .map(|r| eval_real(f, project_periodic(word, r)))
                    .sum();
                Ok(total / p as f64)
            }
        },
        MeasureKind::OrbitAngles { points } => {
            let mut acc = 0.0;
            for p in points {
                acc += match *f {
                    TestFunction::TrigCos { k } => (TAU * p.scale(k as u64).to_f64()).cos(),
                    TestFunction::TrigSin { k } => (TAU * p.scale(k as u64).to_f64()).sin(),
                    TestFunction::Arc { start, end } => {
                        arc_contains_phase(start, end, *p) as u8 as f64
                    }
                    _ => return Err(unsupported(m, f)),
                };
            }
            Ok(acc / points.len() as f64)
        }
        MeasureKind::OrbitInterval { points } => match f {
            TestFunction::Cylinder { .. } => Err(unsupported(m, f)),
            _ => Ok(points.iter().map(|&x| eval_real(f, x)).sum::<f64>() / points.len() as f64),
        },
    }
}

fn eval_real(f: &TestFunction, x: f64) -> f64 {
    match *f {
        TestFunction::TrigCos { k } => (TAU * k as f64 * x).cos(),
        TestFunction::TrigSin { k } => (TAU * k as f64 * x).sin(),
        TestFunction::HalfCos { k } => (PI * k as f64 * x).cos(),
        TestFunction::Arc { start, end } => arc_contains_real(start, end, x) as u8 as f64,
        TestFunction::Cylinder { .. } => 0.0,
    }
}

/// Projection of the periodic point `word` rotated by `r`, to 53 bits.
fn project_periodic(word: &[u8], r: usize) -> f64 {
    let p = word.len();
    let mut code = 0u64;
    for j in 0..53 {
        code = (code << 1) | (word[(r + j) % p] & 1) as u64;
    }
    code as f64 / (1u64 << 53) as f64
}

/// `int exp(i pi m x) dmu` for the Bernoulli measure on binary digits with
/// `P(1) = q`: the Riesz product `prod_j (1 - q + q exp(i pi m 2^{-j}))`.
fn bernoulli_fourier(q: f64, m: u64) -> (f64, f64) {
    let (mut re, mut im) = (1.0, 0.0);
    for j in 1..=62u32 {
        // m 2^{-j} mod 2, exact in f64
        let reduced = (m % (1u64 << (j + 1))) as f64 / (1u64 << j) as f64;
        let (s, c) = (PI * reduced).sin_cos();
        let (a, b) = (1.0 - q + q * c, q * s);
        (re, im) = (re * a - im * b, re * b + im * a);
    }
    (re, im)
}

fn markov_cylinder(transition: &[Vec<f64>], stationary: &[f64], word: &[u8]) -> f64 {
    let mut p = stationary[word[0] as usize];
    for w in word.windows(2) {
        p *= transition[w[0] as usize][w[1] as usize];
    }
    p
}

/// Fraction of rotations of the periodic sequence `orbit^∞` that begin with `w`.
fn periodic_cylinder(orbit: &[u8], w: &[u8]) -> f64 {
    let p = orbit.len();
    let hits = (0..p)
        .filter(|&r| w.iter().enumerate().all(|(j, &s)| orbit[(r + j) % p] == s))
        .count();
    hits as f64 / p as f64
}

/// Probability of the cylinder `[word]` under a registered shift measure.
pub fn cylinder_probability(m: &Measure, word: &[u8]) -> Result<f64> {
    moment(
        m,
        &TestFunction::Cylinder {
            word: word.to_vec(),
        },
    )
}

/// Moments of the uniform measure on explicit circle points.
pub fn orbit_points_moments(points: &[Phase], fam: &TestFunctionFamily) -> Result<MomentVector> {
    let n = points.len() as f64;
    let values = fam
        .entries()
        .iter()
        .map(|f| {
            let total: f64 = points
                .iter()
                .map(|p| match *f {
                    TestFunction::TrigCos { k } => Ok((TAU * p.scale(k as u64).to_f64()).cos()),
                    TestFunction::TrigSin { k } => Ok((TAU * p.scale(k as u64).to_f64()).sin()),
                    TestFunction::Arc { start, end } => {
                        Ok(arc_contains_phase(start, end, *p) as u8 as f64)
                    }
                    _ => Err(Error::UnsupportedFunction {
                        function: f.to_string(),
                        target: "circle orbit".into(),
                    }),
                })
                .sum::<Result<f64>>()?;
            Ok(total / n)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MomentVector::new(fam, Provenance::ClosedForm, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{MeasureSpec, Orbit};

    fn shift2() -> SystemSpec {
        SystemSpec::FullShift { alphabet_size: 2 }
    }

    /// Exhaustive oracle: sum of iid word probabilities over all extensions.
    fn enumerate_cylinder(q1: f64, word: &[u8], len: usize) -> f64 {
        (0..1usize << len)
            .map(|code| {
                let w: Vec<u8> = (0..len)
                    .map(|j| ((code >> (len - 1 - j)) & 1) as u8)
                    .collect();
                let p: f64 = w
                    .iter()
                    .map(|&s| if s == 1 { q1 } else { 1.0 - q1 })
                    .product();
                if w.starts_with(word) {
                    p
                } else {
                    0.0
                }
            })
            .sum()
    }

    #[test]
    fn lebesgue_trig_moments_vanish() {
        let m = MeasureSpec::LebesgueCircle
            .register(&SystemSpec::golden_rotation())
            .unwrap();
        let fam = TestFunctionFamily::circle(8).unwrap();
        assert!(measure_moments(&m, &fam)
            .unwrap()
            .values
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn bernoulli_cylinders() {
        let m = MeasureSpec::bernoulli(&[0.2, 0.8])
            .register(&shift2())
            .unwrap();
        let fam = TestFunctionFamily::cylinders(2, 2).unwrap();
        let v = measure_moments(&m, &fam).unwrap().values;
        assert!((v[1] - 0.8).abs() < 1e-15);
        assert!((v[5] - 0.64).abs() < 1e-15);
        for (i, f) in fam.entries().iter().enumerate() {
            let TestFunction::Cylinder { word } = f else {
                unreachable!()
            };
            assert!((v[i] - enumerate_cylinder(0.8, word, 2)).abs() < 1e-15);
        }
    }

    #[test]
    fn mixture_is_convex_combination() {
        let a = MeasureSpec::bernoulli(&[0.2, 0.8]);
        let b = MeasureSpec::bernoulli(&[0.5, 0.5]);
        let mix = MeasureSpec::mixture(vec![(0.5, a.clone()), (0.5, b.clone())])
            .register(&shift2())
            .unwrap();
        let fam = TestFunctionFamily::default_for(&shift2()).unwrap();
        let v = measure_moments(&mix, &fam).unwrap();
        assert!((v.values[1] - 0.65).abs() < 1e-15);
        let va = measure_moments(&a.register(&shift2()).unwrap(), &fam).unwrap();
        let vb = measure_moments(&b.register(&shift2()).unwrap(), &fam).unwrap();
        for i in 0..fam.len() {
            assert_eq!(v.values[i], 0.5 * va.values[i] + 0.5 * vb.values[i]);
        }
        // oracle: exhaustive enumeration of length-2 words
        let oracle =
            0.5 * enumerate_cylinder(0.8, &[1], 2) + 0.5 * enumerate_cylinder(0.5, &[1], 2);
        assert!((v.values[1] - oracle).abs() < 1e-15);
    }

    #[test]
    fn markov_cylinder_probabilities_are_consistent() {
        let p = vec![vec![0.9, 0.1], vec![0.4, 0.6]];
        let sys = SystemSpec::MarkovShift {
            transition: p.clone(),
        };
        let m = MeasureSpec::MarkovStationary {
            transition: p,
            stationary: None,
        }
        .register(&sys)
        .unwrap();
        let fam = TestFunctionFamily::default_for(&sys).unwrap();
        let v = measure_moments(&m, &fam).unwrap().values;
        // [w] = [w0] + [w1]
        assert!((v[0] - (v[2] + v[3])).abs() < 1e-15);
        assert!((v[0] + v[1] - 1.0).abs() < 1e-15);
        assert!((v[5] - 0.2 * 0.6).abs() < 1e-15);
    }

    #[test]
    fn periodic_word_moments() {
        let m = MeasureSpec::PeriodicOrbit {
            orbit: Orbit::Word(vec![0, 1, 1]),
        }
        .register(&shift2())
        .unwrap();
        assert!((cylinder_probability(&m, &[1]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((cylinder_probability(&m, &[1, 1]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(cylinder_probability(&m, &[0, 0]).unwrap(), 0.0);
        let d = MeasureSpec::PeriodicOrbit {
            orbit: Orbit::Word(vec![0, 1]),
        }
        .register(&SystemSpec::DoublingViaShift)
        .unwrap();
        let fam = TestFunctionFamily::new(vec![TestFunction::TrigCos { k: 1 }]).unwrap();
        assert!((measure_moments(&d, &fam).unwrap().values[0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn riesz_product_matches_fair_coin_and_monte_carlo() {
        let fair = bernoulli_fourier(0.5, 2);
        assert!(fair.0.abs() < 1e-15 && fair.1.abs() < 1e-15);
        // Monte Carlo oracle over 53-bit expansions with P(1) = 0.8
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let mut x = 0.0;
            let mut w = 0.5;
            for _ in 0..53 {
                if rng.gen::<f64>() < 0.8 {
                    x += w;
                }
                w *= 0.5;
            }
            acc += (TAU * x).cos();
        }
        let mc = acc / n as f64;
        let closed = bernoulli_fourier(0.8, 2).0;
        assert!((mc - closed).abs() < 0.01, "{mc} vs {closed}");
    }

    #[test]
    fn unsupported_pair_is_named() {
        let m = MeasureSpec::MarkovStationary {
            transition: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            stationary: None,
        }
        .register(&shift2())
        .unwrap();
        let fam = TestFunctionFamily::new(vec![TestFunction::TrigCos { k: 1 }]).unwrap();
        let err = measure_moments(&m, &fam).unwrap_err();
        assert!(err.to_string().contains("markov_stationary"), "{err}");
    }

    #[test]
    fn rotation_orbit_moments() {
        let sys = SystemSpec::CircleRotation {
            alpha: crate::phase_space::Alpha::Rational { num: 1, den: 4 },
        };
        let m = MeasureSpec::PeriodicOrbit {
            orbit: Orbit::Points(vec![0.1, 0.35, 0.6, 0.85]),
        }
        .register(&sys)
        .unwrap();
        let fam = TestFunctionFamily::circle(4).unwrap();
        let v = measure_moments(&m, &fam).unwrap().values;
        for (i, f) in fam.entries().iter().enumerate() {
            let expected = match f {
                TestFunction::TrigCos { k: 4 } => (TAU * 0.4).cos(),
                TestFunction::TrigSin { k: 4 } => (TAU * 0.4).sin(),
                _ => 0.0,
            };
            assert!((v[i] - expected).abs() < 1e-12, "{f}: {}", v[i]);
        }
    }
}
