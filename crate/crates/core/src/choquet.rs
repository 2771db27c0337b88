//! Sampling estimate of the Choquet distribution `mu* = V(mu)` and the
//! barycenter checks built on it.
//!
//! Points are drawn from `mu`, classified, and the converged limits are
//! grouped by single linkage at `cluster_eps`. Each group becomes an atom
//! weighted by its share of converged samples. When the limits form a
//! continuum (identity map, periodic rotation) no gap separates the groups
//! and the raw limits are kept instead.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basin::{classify_point, DetectorParams, VerdictKind};
use crate::error::{Error, Result};
use crate::observables::{
    cylinder_probability, measure_moments, weighted_l1, MomentVector, NeumaierSum, Provenance,
    TestFunction, TestFunctionFamily,
};
use crate::phase_space::{sampler_draw, Measure};
use crate::seed;

/// Seed stream reserved for measure sampling.
pub const SAMPLE_STREAM: u64 = 0x5341_4d50;

/// Below this gap statistic the limits are treated as a continuum.
pub const MIN_GAP: f64 = 2.0;

/// Residual caps used by acceptance runs.
pub const CLOSED_FORM_CAP: f64 = 0.02;
pub const MONTE_CARLO_CAP: f64 = 0.05;

/// One classified sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: u64,
    /// Top-level mixture component the sampler picked.
    pub component: Option<usize>,
    pub verdict: VerdictKind,
    pub spread: f64,
    pub limit: Option<MomentVector>,
}

/// Classified draws from a measure, ordered by sample index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub family: String,
    pub seed: u64,
    pub records: Vec<SampleRecord>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, kind: VerdictKind) -> usize {
        self.records.iter().filter(|r| r.verdict == kind).count()
    }

    pub fn limits(&self) -> impl Iterator<Item = &MomentVector> {
        self.records.iter().filter_map(|r| r.limit.as_ref())
    }

    pub fn diagnostics(&self, cluster_eps: f64) -> Diagnostics {
        let n = self.len();
        let frac = |k| {
            if n == 0 {
                0.0
            } else {
                self.count(k) as f64 / n as f64
            }
        };
        Diagnostics {
            samples: n,
            converged: self.count(VerdictKind::Converged),
            undecided: self.count(VerdictKind::Undecided),
            not_converged: self.count(VerdictKind::NotConverged),
            converged_fraction: frac(VerdictKind::Converged),
            undecided_fraction: frac(VerdictKind::Undecided),
            not_converged_fraction: frac(VerdictKind::NotConverged),
            cluster_eps,
            gap_statistic: None,
        }
    }

    fn require_converged(&self, cluster_eps: f64) -> Result<()> {
        let diag = self.diagnostics(cluster_eps);
        if diag.samples > 0 && diag.converged_fraction < 0.5 {
            return Err(Error::DecompositionFailed(Box::new(diag)));
        }
        Ok(())
    }

    /// Per-entry mean and standard deviation of the converged limits.
    fn limit_stats(&self, m: usize) -> (usize, Vec<f64>, Vec<f64>) {
        let limits: Vec<&MomentVector> = self.limits().collect();
        let nc = limits.len();
        let mean: Vec<f64> = (0..m)
            .map(|i| {
                limits
                    .iter()
                    .map(|l| l.values[i])
                    .collect::<NeumaierSum>()
                    .value()
                    / nc as f64
            })
            .collect();
        let std = (0..m)
            .map(|i| {
                let ss: NeumaierSum = limits
                    .iter()
                    .map(|l| (l.values[i] - mean[i]).powi(2))
                    .collect();
                (ss.value() / nc as f64).sqrt()
            })
            .collect();
        (nc, mean, std)
    }
}

/// Draws `n` points from `mu` and classifies each; sample `i` uses the seed
/// derived from `(seed, SAMPLE_STREAM, i)`, so results do not depend on the
/// thread count.
pub fn sample_limits(
    mu: &Measure,
    fam: &TestFunctionFamily,
    det: &DetectorParams,
    n: usize,
    seed: u64,
) -> Result<SampleSet> {
    let sys = mu.system();
    fam.check_system(sys)?;
    det.validate(fam)?;
    let records = (0..n as u64)
        .into_par_iter()
        .map(|index| {
            let draw = sampler_draw(mu, seed::derive(seed, SAMPLE_STREAM, index));
            let v = classify_point(sys, &draw.point, fam, det)?;
            Ok(SampleRecord {
                index,
                component: draw.component,
                verdict: v.kind(),
                spread: v.spread(),
                limit: v.into_limit(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleSet {
        family: fam.id().to_string(),
        seed,
        records,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub samples: usize,
    pub converged: usize,
    pub undecided: usize,
    pub not_converged: usize,
    pub converged_fraction: f64,
    pub undecided_fraction: f64,
    pub not_converged_fraction: f64,
    pub cluster_eps: f64,
    /// `cluster_eps / (2 * largest atom radius)`; infinite gaps are `None`.
    pub gap_statistic: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub weight: f64,
    /// Mean of the member limits.
    pub center: MomentVector,
    pub members: usize,
    /// Largest distance from a member to the center.
    pub radius: f64,
    /// Sample index of the first member.
    pub first_index: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Atomic,
    Diffuse,
}

/// Finite-sample estimate of `mu*`.
///
/// In atomic mode `atoms` carries the clusters and `limits` is empty; in
/// diffuse mode `atoms` is empty and `limits` holds every converged limit,
/// each with weight `1 / N_c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteChoquetDistribution {
    pub family: String,
    pub mode: Mode,
    pub atoms: Vec<Atom>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub limits: Vec<MomentVector>,
    pub diagnostics: Diagnostics,
}

impl DiscreteChoquetDistribution {
    pub fn is_diffuse(&self) -> bool {
        self.mode == Mode::Diffuse
    }

    pub fn total_weight(&self) -> f64 {
        match self.mode {
            Mode::Atomic => self
                .atoms
                .iter()
                .map(|a| a.weight)
                .collect::<NeumaierSum>()
                .value(),
            Mode::Diffuse => 1.0,
        }
    }

    /// `(weight, moments)` pairs, raw limits included in diffuse mode.
    pub fn weighted_points(&self) -> Vec<(f64, &MomentVector)> {
        match self.mode {
            Mode::Atomic => self.atoms.iter().map(|a| (a.weight, &a.center)).collect(),
            Mode::Diffuse => {
                let w = 1.0 / self.limits.len() as f64;
                self.limits.iter().map(|l| (w, l)).collect()
            }
        }
    }

    /// `sum_k w_k nu_k[f_i]` for each family entry.
    pub fn barycenter(&self) -> Vec<f64> {
        let pts = self.weighted_points();
        let m = pts.first().map_or(0, |p| p.1.len());
        (0..m)
            .map(|i| {
                pts.iter()
                    .map(|(w, v)| w * v.values[i])
                    .collect::<NeumaierSum>()
                    .value()
            })
            .collect()
    }

    /// Smallest distance between atom centers.
    pub fn min_separation(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for (i, a) in self.atoms.iter().enumerate() {
            for b in &self.atoms[i + 1..] {
                let d = weighted_l1(&a.center.values, &b.center.values);
                best = Some(best.map_or(d, |x| x.min(d)));
            }
        }
        best
    }
}

/// Samples `mu`, classifies and clusters; see the module docs.
pub fn decompose(
    mu: &Measure,
    fam: &TestFunctionFamily,
    det: &DetectorParams,
    n: usize,
    cluster_eps: f64,
    seed: u64,
) -> Result<DiscreteChoquetDistribution> {
    check_cluster_eps(det, cluster_eps)?;
    let samples = sample_limits(mu, fam, det, n, seed)?;
    cluster_samples(&samples, fam, cluster_eps)
}

fn check_cluster_eps(det: &DetectorParams, cluster_eps: f64) -> Result<()> {
    if !(cluster_eps > 2.0 * det.cauchy_eps) {
        return Err(Error::InvalidDecomposition(format!(
            "cluster_eps {cluster_eps} must exceed 2 * cauchy_eps = {}",
            2.0 * det.cauchy_eps
        )));
    }
    Ok(())
}

/// Clusters an existing sample set.
pub fn cluster_samples(
    samples: &SampleSet,
    fam: &TestFunctionFamily,
    cluster_eps: f64,
) -> Result<DiscreteChoquetDistribution> {
    if samples.family != fam.id() {
        return Err(Error::FamilyMismatch {
            left: samples.family.clone(),
            right: fam.id().to_string(),
        });
    }
    samples.require_converged(cluster_eps)?;
    let mut diagnostics = samples.diagnostics(cluster_eps);
    let members: Vec<(u64, &MomentVector)> = samples
        .records
        .iter()
        .filter_map(|r| r.limit.as_ref().map(|l| (r.index, l)))
        .collect();
    let nc = members.len();
    if nc == 0 {
        return Err(Error::DecompositionFailed(Box::new(diagnostics)));
    }
    let vectors: Vec<&[f64]> = members.iter().map(|(_, l)| l.values.as_slice()).collect();
    let groups = single_linkage(&vectors, cluster_eps);

    let m = fam.len();
    let mut atoms: Vec<Atom> = groups
        .iter()
        .map(|g| {
            let center: Vec<f64> = (0..m)
                .map(|i| {
                    g.iter()
                        .map(|&j| vectors[j][i])
                        .collect::<NeumaierSum>()
                        .value()
                        / g.len() as f64
                })
                .collect();
            let radius = g
                .iter()
                .map(|&j| weighted_l1(vectors[j], &center))
                .fold(0.0, f64::max);
            Atom {
                weight: g.len() as f64 / nc as f64,
                center: MomentVector::new(fam, Provenance::LimitEstimate, center),
                members: g.len(),
                radius,
                first_index: members[g[0]].0,
            }
        })
        .collect();
    atoms.sort_by_key(|a| a.first_index);

    let max_radius = atoms.iter().map(|a| a.radius).fold(0.0, f64::max);
    let gap = (max_radius > 0.0).then(|| cluster_eps / (2.0 * max_radius));
    diagnostics.gap_statistic = gap;
    if gap.is_some_and(|g| g < MIN_GAP) {
        return Ok(DiscreteChoquetDistribution {
            family: fam.id().to_string(),
            mode: Mode::Diffuse,
            atoms: Vec::new(),
            limits: members.iter().map(|(_, l)| (*l).clone()).collect(),
            diagnostics,
        });
    }
    Ok(DiscreteChoquetDistribution {
        family: fam.id().to_string(),
        mode: Mode::Atomic,
        atoms,
        limits: Vec::new(),
        diagnostics,
    })
}

/// Connected components of the graph with edges `rho <= eps`, each sorted
/// ascending, listed by smallest member.
fn single_linkage(vectors: &[&[f64]], eps: f64) -> Vec<Vec<usize>> {
    let n = vectors.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    // rho >= |u_0 - v_0| / 2, so pairs further apart than 2 eps in the first
    // coordinate can be skipped.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vectors[a][0].total_cmp(&vectors[b][0]).then(a.cmp(&b)));
    for (pos, &a) in order.iter().enumerate() {
        for &b in &order[pos + 1..] {
            if vectors[b][0] - vectors[a][0] > 2.0 * eps {
                break;
            }
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb && weighted_l1(vectors[a], vectors[b]) <= eps {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryClass {
    /// The estimate barely varies across samples.
    ClosedForm,
    /// The estimate carries sampling noise over `mu`.
    MonteCarlo,
}

impl EntryClass {
    fn from_spread(spread: f64, cauchy_eps: f64) -> EntryClass {
        if spread <= cauchy_eps {
            EntryClass::ClosedForm
        } else {
            EntryClass::MonteCarlo
        }
    }

    pub fn cap(self) -> f64 {
        match self {
            EntryClass::ClosedForm => CLOSED_FORM_CAP,
            EntryClass::MonteCarlo => MONTE_CARLO_CAP,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EntryClass::ClosedForm => "closed_form",
            EntryClass::MonteCarlo => "monte_carlo",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub name: String,
    pub expected: f64,
    pub estimate: f64,
    /// `expected - estimate`.
    pub signed: f64,
    pub residual: f64,
    pub spread: f64,
    pub tol: f64,
    pub class: EntryClass,
    pub pass: bool,
}

impl ResidualEntry {
    fn new(
        name: String,
        expected: f64,
        estimate: f64,
        spread: f64,
        tol: f64,
        class: EntryClass,
    ) -> Self {
        let signed = expected - estimate;
        ResidualEntry {
            name,
            expected,
            estimate,
            signed,
            residual: signed.abs(),
            spread,
            tol,
            class,
            pass: signed.abs() <= tol,
        }
    }

    /// Within both the statistical tolerance and the class cap.
    pub fn within_cap(&self) -> bool {
        self.pass && self.residual <= self.class.cap()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub check: String,
    /// Converged samples behind the estimate.
    pub samples: usize,
    pub entries: Vec<ResidualEntry>,
}

impl ResidualReport {
    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn max_residual(&self) -> f64 {
        self.entries.iter().map(|e| e.residual).fold(0.0, f64::max)
    }

    pub fn entry(&self, name: &str) -> Option<&ResidualEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

fn moment_report(
    check: &str,
    fam: &TestFunctionFamily,
    expected: &MomentVector,
    estimate: &[f64],
    spread: &[f64],
    nc: usize,
    cauchy_eps: f64,
) -> ResidualReport {
    let entries = fam
        .entries()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let tol = cauchy_eps + 1.5 * spread[i] / (nc as f64).sqrt();
            let class = EntryClass::from_spread(spread[i], cauchy_eps);
            ResidualEntry::new(
                f.to_string(),
                expected.values[i],
                estimate[i],
                spread[i],
                tol,
                class,
            )
        })
        .collect();
    ResidualReport {
        check: check.to_string(),
        samples: nc,
        entries,
    }
}

/// Compares `mu[f_i]` with the average of the converged limits.
pub fn verify_barycenter_sampled(
    mu: &Measure,
    fam: &TestFunctionFamily,
    det: &DetectorParams,
    n: usize,
    seed: u64,
) -> Result<ResidualReport> {
    let samples = sample_limits(mu, fam, det, n, seed)?;
    barycenter_from_samples(&samples, mu, fam, det)
}

/// [`verify_barycenter_sampled`] on samples already drawn.
pub fn barycenter_from_samples(
    samples: &SampleSet,
    mu: &Measure,
    fam: &TestFunctionFamily,
    det: &DetectorParams,
) -> Result<ResidualReport> {
    let expected = measure_moments(mu, fam)?;
    samples.require_converged(0.0)?;
    let (nc, mean, std) = samples.limit_stats(fam.len());
    if nc == 0 {
        return Err(Error::DecompositionFailed(Box::new(
            samples.diagnostics(0.0),
        )));
    }
    Ok(moment_report(
        "barycenter_sampled",
        fam,
        &expected,
        &mean,
        &std,
        nc,
        det.cauchy_eps,
    ))
}

/// Compares `mu[f_i]` with `sum_k w_k atom_k[f_i]`. The spread entering the
/// tolerance is the weighted spread of the atoms around the barycenter.
pub fn verify_barycenter_clustered(
    dist: &DiscreteChoquetDistribution,
    mu: &Measure,
    fam: &TestFunctionFamily,
    det: &DetectorParams,
) -> Result<ResidualReport> {
    if dist.family != fam.id() {
        return Err(Error::FamilyMismatch {
            left: dist.family.clone(),
            right: fam.id().to_string(),
        });
    }
    let expected = measure_moments(mu, fam)?;
    let bary = dist.barycenter();
    let pts = dist.weighted_points();
    let spread: Vec<f64> = (0..fam.len())
        .map(|i| {
            pts.iter()
                .map(|(w, v)| w * (v.values[i] - bary[i]).powi(2))
                .collect::<NeumaierSum>()
                .value()
                .sqrt()
        })
        .collect();
    Ok(moment_report(
        "barycenter_clustered",
        fam,
        &expected,
        &bary,
        &spread,
        dist.diagnostics.converged,
        det.cauchy_eps,
    ))
}

/// A set whose indicator is integrated in [`borel_extension_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "snake_case")]
pub enum BorelSet {
    Cylinder {
        word: Vec<u8>,
    },
    /// `[start, end)` on the circle or the unit interval.
    Arc {
        start: f64,
        end: f64,
    },
    Whole,
}

impl BorelSet {
    pub fn name(&self) -> String {
        match self {
            BorelSet::Whole => "whole".to_string(),
            other => other.indicator().expect("indicator").to_string(),
        }
    }

    pub fn indicator(&self) -> Option<TestFunction> {
        match self {
            BorelSet::Cylinder { word } => Some(TestFunction::Cylinder { word: word.clone() }),
            BorelSet::Arc { start, end } => Some(TestFunction::Arc {
                start: *start,
                end: *end,
            }),
            BorelSet::Whole => None,
        }
    }
}

/// `|mu(A) - sum_k w_k nu_k(A)|` per set. `mu(A)` is closed form; the atom
/// side reads the indicator's coordinate, so every non-trivial set must be
/// an entry of the distribution's family.
pub fn borel_extension_check(
    mu: &Measure,
    dist: &DiscreteChoquetDistribution,
    fam: &TestFunctionFamily,
    sets: &[BorelSet],
    tol: f64,
) -> Result<ResidualReport> {
    if dist.family != fam.id() {
        return Err(Error::FamilyMismatch {
            left: dist.family.clone(),
            right: fam.id().to_string(),
        });
    }
    let pts = dist.weighted_points();
    let entries = sets
        .iter()
        .map(|set| {
            let Some(f) = set.indicator() else {
                let total = pts.iter().map(|(w, _)| *w).collect::<NeumaierSum>().value();
                return Ok(ResidualEntry::new(
                    set.name(),
                    1.0,
                    total,
                    0.0,
                    tol,
                    EntryClass::ClosedForm,
                ));
            };
            let unsupported = || Error::UnsupportedSet {
                set: set.name(),
                target: mu.spec().name().to_string(),
            };
            let i = fam.position(&f).ok_or_else(unsupported)?;
            let expected = match set {
                BorelSet::Cylinder { word } => cylinder_probability(mu, word),
                _ => {
                    let single = TestFunctionFamily::new(vec![f.clone()])?;
                    measure_moments(mu, &single).map(|m| m.values[0])
                }
            }
            .map_err(|_| unsupported())?;
            let estimate = pts
                .iter()
                .map(|(w, v)| w * v.values[i])
                .collect::<NeumaierSum>()
                .value();
            let spread = pts
                .iter()
                .map(|(w, v)| w * (v.values[i] - estimate).powi(2))
                .collect::<NeumaierSum>()
                .value()
                .sqrt();
            let class = if spread > 0.0 {
                EntryClass::MonteCarlo
            } else {
                EntryClass::ClosedForm
            };
            Ok(ResidualEntry::new(
                set.name(),
                expected,
                estimate,
                spread,
                tol,
                class,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualReport {
        check: "borel_extension".to_string(),
        samples: dist.diagnostics.converged,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{MeasureSpec, Orbit, SystemSpec};

    fn fast_det(cauchy: f64) -> DetectorParams {
        DetectorParams {
            first: 1_000,
            ratio: 2,
            count: 6,
            window: 3,
            cauchy_eps: cauchy,
            osc_eps: 2.5 * cauchy,
        }
    }

    fn two_bernoulli() -> (SystemSpec, Measure) {
        let sys = SystemSpec::FullShift { alphabet_size: 2 };
        let mu = MeasureSpec::mixture(vec![
            (0.3, MeasureSpec::bernoulli(&[0.2, 0.8])),
            (0.7, MeasureSpec::bernoulli(&[0.8, 0.2])),
        ])
        .register(&sys)
        .unwrap();
        (sys, mu)
    }

    #[test]
    fn mixture_gives_two_atoms_matching_labels() {
        let (sys, mu) = two_bernoulli();
        let fam = TestFunctionFamily::default_for(&sys).unwrap();
        let det = fast_det(0.02);
        let samples = sample_limits(&mu, &fam, &det, 2000, 11).unwrap();
        let dist = cluster_samples(&samples, &fam, 0.1).unwrap();
        assert_eq!(dist.mode, Mode::Atomic);
        assert_eq!(dist.atoms.len(), 2);
        assert!((dist.total_weight() - 1.0).abs() <= 1e-12);
        assert!(dist.min_separation().unwrap() > 0.1);

        // oracle: component labels recorded by the sampler
        let label_share = samples
            .records
            .iter()
            .filter(|r| r.component == Some(0))
            .count() as f64
            / samples.len() as f64;
        let one = fam
            .position(&TestFunction::Cylinder { word: vec![1] })
            .unwrap();
        let heavy = dist
            .atoms
            .iter()
            .find(|a| a.center.values[one] > 0.5)
            .expect("atom near Bern(0.2,0.8)");
        assert!((heavy.weight - label_share).abs() < 0.01);
        assert!((heavy.weight - 0.3).abs() <= 0.03);
        assert!((heavy.center.values[one] - 0.8).abs() <= 0.01);
        let light = dist
            .atoms
            .iter()
            .find(|a| a.center.values[one] < 0.5)
            .unwrap();
        assert!((light.center.values[one] - 0.2).abs() <= 0.01);

        let r = verify_barycenter_clustered(&dist, &mu, &fam, &det).unwrap();
        assert!(r.entry("1[1]").unwrap().residual <= 0.02, "{r:?}");
        let s = barycenter_from_samples(&samples, &mu, &fam, &det).unwrap();
        assert!(s.pass(), "{s:?}");
        // the two modes agree on finite-atom systems
        for (a, b) in r.entries.iter().zip(&s.entries) {
            assert!((a.estimate - b.estimate).abs() <= 2.0 * det.cauchy_eps);
        }

        let sets = [BorelSet::Cylinder { word: vec![1, 1] }, BorelSet::Whole];
        let b = borel_extension_check(&mu, &dist, &fam, &sets, 0.02).unwrap();
        assert!((b.entries[0].expected - 0.22).abs() < 1e-15);
        assert!(b.entries[0].pass);
        assert!(b.entries[1].residual <= 1e-12);
    }

    #[test]
    fn fixed_point_mixture_on_squaring() {
        let sys = SystemSpec::Squaring;
        let dirac = |x: f64| MeasureSpec::PeriodicOrbit {
            orbit: Orbit::Points(vec![x]),
        };
        let mu = MeasureSpec::mixture(vec![(0.5, dirac(0.0)), (0.5, dirac(1.0))])
            .register(&sys)
            .unwrap();
        let fam = TestFunctionFamily::default_for(&sys).unwrap();
        let det = fast_det(0.02);
        let dist = decompose(&mu, &fam, &det, 400, 0.1, 3).unwrap();
        assert_eq!(dist.atoms.len(), 2);
        assert!(dist.atoms.iter().all(|a| a.radius == 0.0));
        let w0 = dist.atoms[0].weight;
        // binomial 4-sigma band around 1/2
        assert!((w0 - 0.5).abs() <= 4.0 * (0.25f64 / 400.0).sqrt());
        assert!(verify_barycenter_clustered(&dist, &mu, &fam, &det)
            .unwrap()
            .pass());
    }

    #[test]
    fn identity_lebesgue_is_diffuse() {
        let sys = SystemSpec::Identity;
        let mu = MeasureSpec::LebesgueCircle.register(&sys).unwrap();
        let fam = TestFunctionFamily::default_for(&sys).unwrap();
        let det = fast_det(0.02);
        let dist = decompose(&mu, &fam, &det, 500, 0.1, 5).unwrap();
        assert!(dist.is_diffuse());
        assert_eq!(dist.limits.len(), 500);
        let r = verify_barycenter_clustered(&dist, &mu, &fam, &det).unwrap();
        assert!(r.max_residual() <= 0.15, "{r:?}");
    }

    #[test]
    fn golden_rotation_single_atom_with_arc() {
        let sys = SystemSpec::golden_rotation();
        let mu = MeasureSpec::LebesgueCircle.register(&sys).unwrap();
        let half = TestFunction::Arc {
            start: 0.0,
            end: 0.5,
        };
        let fam = TestFunctionFamily::default_for(&sys)
            .unwrap()
            .with_appended(&[half])
            .unwrap();
        let det = fast_det(0.01);
        let dist = decompose(&mu, &fam, &det, 100, 0.05, 9).unwrap();
        assert_eq!(dist.atoms.len(), 1);
        assert_eq!(dist.atoms[0].weight, 1.0);
        let b = borel_extension_check(
            &mu,
            &dist,
            &fam,
            &[BorelSet::Arc {
                start: 0.0,
                end: 0.5,
            }],
            0.02,
        )
        .unwrap();
        assert!(b.pass(), "{b:?}");
        let missing = borel_extension_check(
            &mu,
            &dist,
            &fam,
            &[BorelSet::Arc {
                start: 0.0,
                end: 0.25,
            }],
            0.02,
        );
        assert!(matches!(missing, Err(Error::UnsupportedSet { .. })));
    }

    #[test]
    fn seeds_are_deterministic() {
        let (sys, mu) = two_bernoulli();
        let fam = TestFunctionFamily::default_for(&sys).unwrap();
        let det = fast_det(0.02);
        let run =
            || serde_json::to_string(&decompose(&mu, &fam, &det, 50, 0.1, 77).unwrap()).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a, b);
    }

    #[test]
    fn strict_detector_fails_with_diagnostics() {
        let sys = SystemSpec::golden_rotation();
        let mu = MeasureSpec::LebesgueCircle.register(&sys).unwrap();
        let fam = TestFunctionFamily::default_for(&sys).unwrap();
        let det = DetectorParams {
            first: 2,
            ratio: 2,
            count: 5,
            window: 3,
            cauchy_eps: 1e-4,
            osc_eps: 1e-3,
        };
        match decompose(&mu, &fam, &det, 20, 0.01, 1) {
            Err(Error::DecompositionFailed(d)) => {
                assert_eq!(d.samples, 20);
                assert!(d.converged_fraction < 0.5);
            }
            other => panic!("expected failure, got {other:?}"),
        }
        assert!(matches!(
            decompose(&mu, &fam, &fast_det(0.02), 20, 0.03, 1),
            Err(Error::InvalidDecomposition(_))
        ));
    }

    #[test]
    fn single_linkage_chains() {
        let pts: Vec<Vec<f64>> = vec![vec![0.0], vec![0.03], vec![0.06], vec![0.5]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        // weight 1/2 on the only coordinate
        let g = single_linkage(&refs, 0.02);
        assert_eq!(g, vec![vec![0, 1, 2], vec![3]]);
    }
}
