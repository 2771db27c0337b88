//! Single-pass streaming Birkhoff averages over a checkpoint schedule.

use super::{
    arc_contains_phase, arc_contains_real, MomentVector, NeumaierSum, Provenance, TestFunction,
    TestFunctionFamily, PROJECTION_BITS,
};
use crate::error::{Error, Result};
use crate::phase_space::{Phase, PointState, SymbolStream, SystemSpec, CHUNK};

/// Longest orbit a single pass will follow.
pub const MAX_ORBIT: u64 = 100_000_000;

/// Largest cylinder window table; longer words fall back to direct comparison.
const MAX_WINDOW_TABLE: usize = 1 << 16;

/// Emits the moment vector of `delta_{x,n}` at every checkpoint `n`.
///
/// One pass over the orbit; real-valued entries are accumulated with
/// compensated summation and indicator entries as exact counts.
pub fn birkhoff_moments(
    sys: &SystemSpec,
    x: &PointState,
    fam: &TestFunctionFamily,
    checkpoints: &[u64],
) -> Result<Vec<MomentVector>> {
    sys.check_point(x)?;
    fam.check_system(sys)?;
    check_checkpoints(checkpoints)?;
    let mut engine = Engine::new(fam, matches!(x, PointState::Angle(_)));
    let mut out = Vec::with_capacity(checkpoints.len());
    match x {
        PointState::Angle(p) => {
            let SystemSpec::CircleRotation { alpha } = sys else {
                unreachable!("check_point pairs angles with rotations");
            };
            run_angle(&mut engine, *p, alpha.phase(), fam, checkpoints, &mut out);
        }
        PointState::Interval(v) => run_interval(&mut engine, sys, *v, fam, checkpoints, &mut out),
        PointState::Symbols(s) => run_symbols(&mut engine, s.clone(), fam, checkpoints, &mut out),
    }
    Ok(out)
}

fn check_checkpoints(checkpoints: &[u64]) -> Result<()> {
    let Some(&last) = checkpoints.last() else {
        return Err(Error::InvalidCheckpoints("empty checkpoint list".into()));
    };
    if checkpoints[0] == 0 || checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidCheckpoints(
            "checkpoints must be positive and strictly increasing".into(),
        ));
    }
    if last > MAX_ORBIT {
        return Err(Error::OrbitTooLong {
            requested: last,
            limit: MAX_ORBIT,
        });
    }
    Ok(())
}

/// Evaluation plan and accumulators for one family.
struct Engine {
    m: usize,
    /// `(entry, is_sin, multiple of the base frequency)`
    trig: Vec<(usize, bool, usize)>,
    max_mult: usize,
    /// Base angular frequency: `2 pi` on the circle, `pi` on `[0, 1]`.
    unit: f64,
    trig_sums: Vec<NeumaierSum>,
    powers: Vec<(f64, f64)>,
    arcs: Vec<(usize, f64, f64)>,
    arc_counts: Vec<u64>,
    cylinders: Vec<(usize, Vec<u8>)>,
    max_word: usize,
    scratch: Vec<f64>,
}

impl Engine {
    fn new(fam: &TestFunctionFamily, circle: bool) -> Self {
        let mut trig = Vec::new();
        let mut arcs = Vec::new();
        let mut cylinders = Vec::new();
        let scale = if circle { 1 } else { 2 };
        for (i, f) in fam.entries().iter().enumerate() {
            match f {
                TestFunction::TrigCos { k } => trig.push((i, false, scale * *k as usize)),
                TestFunction::TrigSin { k } => trig.push((i, true, scale * *k as usize)),
                // rejected on the circle by check_system
                TestFunction::HalfCos { k } => trig.push((i, false, *k as usize)),
                TestFunction::Arc { start, end } => arcs.push((i, *start, *end)),
                TestFunction::Cylinder { word } => cylinders.push((i, word.clone())),
            }
        }
        let max_mult = trig.iter().map(|t| t.2).max().unwrap_or(0);
        let max_word = cylinders.iter().map(|c| c.1.len()).max().unwrap_or(0);
        Engine {
            m: fam.len(),
            trig_sums: vec![NeumaierSum::new(); trig.len()],
            trig,
            max_mult,
            unit: if circle {
                std::f64::consts::TAU
            } else {
                std::f64::consts::PI
            },
            powers: vec![(1.0, 0.0); max_mult + 1],
            arc_counts: vec![0; arcs.len()],
            arcs,
            cylinders,
            max_word,
            scratch: Vec::new(),
        }
    }

    fn needs_coordinate(&self) -> bool {
        !self.trig.is_empty() || !self.arcs.is_empty()
    }

    #[inline]
    fn fill_powers(&mut self, x: f64) {
        if self.max_mult == 0 {
            return;
        }
        let (s, c) = (self.unit * x).sin_cos();
        self.powers[1] = (c, s);
        for k in 2..=self.max_mult {
            let (a, b) = self.powers[k - 1];
            self.powers[k] = (a * c - b * s, a * s + b * c);
        }
    }

    /// Adds `weight` copies of the trig values for the current powers.
    #[inline]
    fn add_trig(&mut self, weight: f64) {
        for (slot, &(_, is_sin, mult)) in self.trig.iter().enumerate() {
            let (c, s) = self.powers[mult];
            self.trig_sums[slot].add(weight * if is_sin { s } else { c });
        }
    }

    #[inline]
    fn add_real(&mut self, x: f64, copies: u64) {
        self.fill_powers(x);
        self.add_trig(copies as f64);
        for (slot, &(_, start, end)) in self.arcs.iter().enumerate() {
            if arc_contains_real(start, end, x) {
                self.arc_counts[slot] += copies;
            }
        }
    }

    #[inline]
    fn count_arcs(&mut self, p: Phase, copies: u64) {
        for (slot, &(_, start, end)) in self.arcs.iter().enumerate() {
            if arc_contains_phase(start, end, p) {
                self.arc_counts[slot] += copies;
            }
        }
    }

    /// Moment vector after `n` orbit points; `cylinder_counts` are indexed
    /// like `self.cylinders`.
    fn emit(&mut self, fam: &TestFunctionFamily, n: u64, cylinder_counts: &[u64]) -> MomentVector {
        self.scratch.clear();
        self.scratch.resize(self.m, 0.0);
        let nf = n as f64;
        for (slot, &(i, _, _)) in self.trig.iter().enumerate() {
            self.scratch[i] = self.trig_sums[slot].value() / nf;
        }
        for (slot, &(i, _, _)) in self.arcs.iter().enumerate() {
            self.scratch[i] = self.arc_counts[slot] as f64 / nf;
        }
        for (slot, (i, _)) in self.cylinders.iter().enumerate() {
            self.scratch[*i] = cylinder_counts[slot] as f64 / nf;
        }
        MomentVector::new(fam, Provenance::Empirical { n }, self.scratch.clone())
    }
}

fn run_angle(
    engine: &mut Engine,
    start: Phase,
    alpha: Phase,
    fam: &TestFunctionFamily,
    checkpoints: &[u64],
    out: &mut Vec<MomentVector>,
) {
    let mut p = start;
    let mut t = 0u64;
    for &cp in checkpoints {
        if engine.arcs.is_empty() || alpha == Phase::ZERO {
            if !engine.arcs.is_empty() {
                engine.count_arcs(p, cp - t);
            }
            t = cp;
        }
        while t < cp {
            engine.count_arcs(p, 1);
            p = p.add(alpha);
            t += 1;
        }
        for slot in 0..engine.trig.len() {
            let (_, is_sin, mult) = engine.trig[slot];
            let (c, s) = rotation_sum(start, alpha, mult as u64, cp);
            engine.trig_sums[slot] = NeumaierSum::new();
            engine.trig_sums[slot].add(if is_sin { s } else { c });
        }
        out.push(engine.emit(fam, cp, &[]));
    }
}

/// `sin(pi * b)` for `b` in `[0, 1)`, using whichever of `b`, `1 - b` is
/// exactly representable as the smaller value.
fn sin_pi(b: Phase) -> f64 {
    let near = Phase(b.0.min(b.0.wrapping_neg()));
    (std::f64::consts::PI * near.to_f64()).sin()
}

/// `sum_{j < n} exp(2 pi i k (x + j alpha))` as `(re, im)`.
///
/// Geometric series with ratio `z = exp(2 pi i k alpha)`:
/// `exp(i(theta_0 + pi(a - b))) sin(pi a) / sin(pi b)` where `a = k n alpha`
/// and `b = k alpha` are reduced exactly in fixed point.
fn rotation_sum(x: Phase, alpha: Phase, k: u64, n: u64) -> (f64, f64) {
    let theta0 = x.scale(k);
    let b = alpha.scale(k);
    if b == Phase::ZERO {
        let (s, c) = (std::f64::consts::TAU * theta0.to_f64()).sin_cos();
        return (n as f64 * c, n as f64 * s);
    }
    let a = b.scale(n);
    let phase = theta0
        .add(Phase(a.0 >> 1))
        .add(Phase((b.0 >> 1).wrapping_neg()));
    let ratio = sin_pi(a) / sin_pi(b);
    let (s, c) = (std::f64::consts::TAU * phase.to_f64()).sin_cos();
    (ratio * c, ratio * s)
}

fn run_interval(
    engine: &mut Engine,
    sys: &SystemSpec,
    mut x: f64,
    fam: &TestFunctionFamily,
    checkpoints: &[u64],
    out: &mut Vec<MomentVector>,
) {
    let squaring = *sys == SystemSpec::Squaring;
    let mut t = 0u64;
    let mut fixed = !squaring;
    for &cp in checkpoints {
        while t < cp {
            if fixed {
                // the rest of the orbit sits at x
                engine.add_real(x, cp - t);
                t = cp;
                break;
            }
            engine.add_real(x, 1);
            let next = x * x;
            fixed = next == x;
            x = next;
            t += 1;
        }
        out.push(engine.emit(fam, cp, &[]));
    }
}

/// Counting of cylinder hits along a symbol stream.
enum CylinderCounter {
    /// Counts of every length-`len` window code; cylinder counts are range
    /// sums over the table.
    Table {
        alphabet: usize,
        len: usize,
        high: usize,
        counts: Vec<u64>,
    },
    Direct {
        counts: Vec<u64>,
    },
    None,
}

fn run_symbols(
    engine: &mut Engine,
    mut stream: SymbolStream,
    fam: &TestFunctionFamily,
    checkpoints: &[u64],
    out: &mut Vec<MomentVector>,
) {
    let alphabet = stream.alphabet();
    let project = engine.needs_coordinate();
    let proj_len = if project { PROJECTION_BITS as usize } else { 0 };
    let word_len = engine.max_word;
    let mut counter = if engine.cylinders.is_empty() {
        CylinderCounter::None
    } else {
        match alphabet.checked_pow(word_len as u32) {
            Some(size) if size <= MAX_WINDOW_TABLE => CylinderCounter::Table {
                alphabet,
                len: word_len,
                high: size / alphabet,
                counts: vec![0; size],
            },
            _ => CylinderCounter::Direct {
                counts: vec![0; engine.cylinders.len()],
            },
        }
    };
    let look = word_len.max(proj_len);
    let proj_mask = (1u64 << PROJECTION_BITS) - 1;
    let proj_scale = 1.0 / (1u64 << PROJECTION_BITS) as f64;
    let mut cyl_counts = vec![0u64; engine.cylinders.len()];
    let mut t = 0u64;
    for &cp in checkpoints {
        while t < cp {
            let batch = ((cp - t) as usize).min(CHUNK);
            let window = stream.peek(batch + look);
            match &mut counter {
                CylinderCounter::Table {
                    alphabet,
                    len,
                    high,
                    counts,
                } => {
                    let a = *alphabet;
                    let mut code = window[..*len]
                        .iter()
                        .fold(0usize, |acc, &s| acc * a + s as usize);
                    for i in 0..batch {
                        counts[code] += 1;
                        code = (code - window[i] as usize * *high) * a + window[i + *len] as usize;
                    }
                }
                CylinderCounter::Direct { counts } => {
                    for i in 0..batch {
                        for (slot, (_, word)) in engine.cylinders.iter().enumerate() {
                            if window[i..i + word.len()] == word[..] {
                                counts[slot] += 1;
                            }
                        }
                    }
                }
                CylinderCounter::None => {}
            }
            if project {
                let mut code = window[..proj_len]
                    .iter()
                    .fold(0u64, |acc, &s| (acc << 1) | (s & 1) as u64);
                for i in 0..batch {
                    engine.add_real(code as f64 * proj_scale, 1);
                    code = ((code << 1) & proj_mask) | (window[i + proj_len] & 1) as u64;
                }
            }
            stream.advance(batch);
            t += batch as u64;
        }
        match &counter {
            CylinderCounter::Table {
                alphabet,
                len,
                counts,
                ..
            } => {
                let mut prefix = Vec::with_capacity(counts.len() + 1);
                prefix.push(0u64);
                for c in counts {
                    prefix.push(prefix.last().unwrap() + c);
                }
                for (slot, (_, word)) in engine.cylinders.iter().enumerate() {
                    let span = alphabet.pow((*len - word.len()) as u32);
                    let lo = word
                        .iter()
                        .fold(0usize, |acc, &s| acc * alphabet + s as usize)
                        * span;
                    cyl_counts[slot] = prefix[lo + span] - prefix[lo];
                }
            }
            CylinderCounter::Direct { counts } => cyl_counts.copy_from_slice(counts),
            CylinderCounter::None => {}
        }
        out.push(engine.emit(fam, cp, &cyl_counts));
    }
}
