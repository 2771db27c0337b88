//! Command execution over a prepared config.

use std::path::{Path, PathBuf};

use ergodec_core::choquet::{cluster_samples, SAMPLE_STREAM};
use ergodec_core::observables::weighted_l1 as rho_values;
use ergodec_core::{
    barycenter_from_samples, borel_extension_check, classify_point, family_tail_bound,
    sample_limits, sampler_draw, seed, step, verify_affine_decomposition,
    verify_barycenter_clustered, AffineFunctional, Decomposition, DiscreteChoquetDistribution,
    ErgodicLabel, ErgodicOracle, Mode, ResidualReport, TestFunction, VerdictKind,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Check, ExperimentConfig, Prepared};
use crate::output::{ensure_dir, real, write_csv, write_json, write_text};
use crate::{exit, svg, CliError};

/// Seed stream separating experiments under one master seed.
const EXPERIMENT_STREAM: u64 = 0x4558_5052;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Classify,
    Decompose,
    Verify,
    Witness,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Decompose => "decompose",
            Command::Verify => "verify",
            Command::Witness => "witness",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub svg: bool,
}

/// Result of a run: exit code, files written and one summary line per
/// experiment.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub code: u8,
    pub files: Vec<PathBuf>,
    pub lines: Vec<String>,
}

/// Runs `cmd` over every experiment and writes outputs into `opts.out_dir`.
pub fn run(cmd: Command, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    let prepared = cfg.prepare()?;
    ensure_dir(&opts.out_dir)?;
    let mut out = Outcome {
        code: exit::PASS,
        files: vec![write_text(
            &opts.out_dir.join("config.json"),
            &cfg.to_json(),
        )?],
        lines: Vec::new(),
    };
    let seed_of = |p: &Prepared| seed::derive(cfg.seed, EXPERIMENT_STREAM, p.index as u64);
    match cmd {
        Command::Classify => classify(&prepared, seed_of, opts, &mut out)?,
        Command::Decompose => decompose(&prepared, seed_of, opts, &mut out)?,
        Command::Verify => verify(&prepared, seed_of, &mut out, &opts.out_dir)?,
        Command::Witness => witness(&prepared, opts, &mut out)?,
    }
    Ok(out)
}

fn header_with_family(fixed: &[&str], p: &Prepared) -> Vec<String> {
    fixed
        .iter()
        .map(|s| s.to_string())
        .chain(p.family.entries().iter().map(|f| f.to_string()))
        .collect()
}

#[derive(Serialize)]
struct ClassifySummary {
    experiment: String,
    points: usize,
    converged: usize,
    not_converged: usize,
    undecided: usize,
    converged_fraction: f64,
    not_converged_fraction: f64,
    undecided_fraction: f64,
    ergodic: usize,
    non_ergodic: usize,
    unknown: usize,
}

struct Classified {
    source: &'static str,
    kind: VerdictKind,
    spread: f64,
    label: Option<ErgodicLabel>,
    limit: Option<Vec<f64>>,
    /// Distance from each checkpoint to the last one, against `log2 n`.
    trace: Vec<(f64, f64)>,
}

fn classify(
    prepared: &[Prepared],
    seed_of: impl Fn(&Prepared) -> u64,
    opts: &RunOptions,
    out: &mut Outcome,
) -> Result<(), CliError> {
    let mut summaries = Vec::new();
    for p in prepared {
        let sys = &p.exp.system;
        let det = &p.exp.detector;
        let oracle = ErgodicOracle::for_system(sys, &p.family);
        let tol = 2.0 * det.cauchy_eps + family_tail_bound(&p.family);
        let sampled = match (&p.measure, p.exp.samples) {
            (Some(_), n) => n,
            (None, _) => 0,
        };
        let total = p.points.len() + sampled;
        let exp_seed = seed_of(p);
        let results = (0..total)
            .into_par_iter()
            .map(|i| {
                let (source, x) = if i < p.points.len() {
                    ("config", p.points[i].clone())
                } else {
                    let m = p.measure.as_ref().expect("sampled points need a measure");
                    let j = (i - p.points.len()) as u64;
                    (
                        "sample",
                        sampler_draw(m, seed::derive(exp_seed, SAMPLE_STREAM, j)).point,
                    )
                };
                let v = classify_point(sys, &x, &p.family, det)?;
                let last = v.trace.last().expect("non-empty trace").values.clone();
                let trace = v
                    .trace
                    .iter()
                    .map(|t| {
                        (
                            (t.n().unwrap_or(1) as f64).log2(),
                            rho_values(&t.values, &last),
                        )
                    })
                    .collect();
                let label = v
                    .limit()
                    .and_then(|l| oracle.as_ref().map(|o| o.label(l, &p.family, tol)));
                Ok(Classified {
                    source,
                    kind: v.kind(),
                    spread: v.spread(),
                    label,
                    limit: v.into_limit().map(|l| l.values),
                    trace,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;

        let header = header_with_family(&["point", "source", "verdict", "spread", "label"], p);
        let rows: Vec<Vec<String>> = results
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut row = vec![
                    i.to_string(),
                    r.source.to_string(),
                    r.kind.as_str().to_string(),
                    real(r.spread),
                    r.label.map_or("", |l| l.as_str()).to_string(),
                ];
                match &r.limit {
                    Some(v) => row.extend(v.iter().map(|&x| real(x))),
                    None => row.extend(std::iter::repeat(String::new()).take(p.family.len())),
                }
                row
            })
            .collect();
        out.files.push(write_csv(
            &opts.out_dir.join(format!("classify_{}.csv", p.exp.name)),
            &header,
            &rows,
        )?);
        if opts.svg && !results.is_empty() {
            let series: Vec<(String, Vec<(f64, f64)>)> = results
                .iter()
                .take(8)
                .enumerate()
                .map(|(i, r)| (format!("point {i}"), r.trace.clone()))
                .collect();
            let title = format!("{}: distance to last checkpoint vs log2 n", p.exp.name);
            out.files.push(write_text(
                &opts.out_dir.join(format!("classify_{}.svg", p.exp.name)),
                &svg::trace_plot(&title, &series),
            )?);
        }

        let count = |k| results.iter().filter(|r| r.kind == k).count();
        let labels = |l| results.iter().filter(|r| r.label == Some(l)).count();
        let frac = |c: usize| {
            if total == 0 {
                0.0
            } else {
                c as f64 / total as f64
            }
        };
        let s = ClassifySummary {
            experiment: p.exp.name.clone(),
            points: total,
            converged: count(VerdictKind::Converged),
            not_converged: count(VerdictKind::NotConverged),
            undecided: count(VerdictKind::Undecided),
            converged_fraction: frac(count(VerdictKind::Converged)),
            not_converged_fraction: frac(count(VerdictKind::NotConverged)),
            undecided_fraction: frac(count(VerdictKind::Undecided)),
            ergodic: labels(ErgodicLabel::Ergodic),
            non_ergodic: labels(ErgodicLabel::NonErgodic),
            unknown: labels(ErgodicLabel::Unknown),
        };
        out.lines.push(format!(
            "{}: {} points, converged {}, not_converged {}, undecided {}",
            s.experiment, s.points, s.converged, s.not_converged, s.undecided
        ));
        summaries.push(s);
    }
    out.files.push(write_json(
        &opts.out_dir.join("classify_summary.json"),
        &summaries,
    )?);
    Ok(())
}

fn require_measure<'a>(p: &'a Prepared, what: &str) -> Result<&'a ergodec_core::Measure, CliError> {
    p.measure.as_ref().ok_or_else(|| {
        CliError::Config(format!(
            "experiment {} needs a measure for {what}",
            p.exp.name
        ))
    })
}

fn require_samples(p: &Prepared, what: &str) -> Result<usize, CliError> {
    if p.exp.samples == 0 {
        return Err(CliError::Config(format!(
            "experiment {} needs samples > 0 for {what}",
            p.exp.name
        )));
    }
    Ok(p.exp.samples)
}

#[derive(Serialize)]
struct DecomposeSummary {
    experiment: String,
    mode: Option<Mode>,
    atoms: usize,
    weights: Vec<f64>,
    failed: bool,
}

fn decompose(
    prepared: &[Prepared],
    seed_of: impl Fn(&Prepared) -> u64,
    opts: &RunOptions,
    out: &mut Outcome,
) -> Result<(), CliError> {
    let mut summaries = Vec::new();
    for p in prepared {
        let mu = require_measure(p, "decompose")?;
        let n = require_samples(p, "decompose")?;
        let samples = sample_limits(mu, &p.family, &p.exp.detector, n, seed_of(p))?;
        let dist = match cluster_samples(&samples, &p.family, p.cluster_eps) {
            Ok(d) => d,
            Err(ergodec_core::Error::DecompositionFailed(diag)) => {
                out.files.push(write_json(
                    &opts
                        .out_dir
                        .join(format!("decompose_{}_failed.json", p.exp.name)),
                    &diag,
                )?);
                out.lines.push(format!(
                    "{}: decomposition failed, converged fraction {}",
                    p.exp.name, diag.converged_fraction
                ));
                out.code = exit::DECOMPOSITION_FAILED;
                summaries.push(DecomposeSummary {
                    experiment: p.exp.name.clone(),
                    mode: None,
                    atoms: 0,
                    weights: Vec::new(),
                    failed: true,
                });
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        out.files.push(write_json(
            &opts.out_dir.join(format!("decompose_{}.json", p.exp.name)),
            &dist,
        )?);
        let header = header_with_family(&["atom", "weight", "members", "radius"], p);
        let rows: Vec<Vec<String>> = dist
            .atoms
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let mut row = vec![
                    k.to_string(),
                    real(a.weight),
                    a.members.to_string(),
                    real(a.radius),
                ];
                row.extend(a.center.values.iter().map(|&x| real(x)));
                row
            })
            .collect();
        out.files.push(write_csv(
            &opts.out_dir.join(format!("decompose_{}.csv", p.exp.name)),
            &header,
            &rows,
        )?);
        if opts.svg && dist.mode == Mode::Atomic {
            let bars: Vec<(String, f64)> = dist
                .atoms
                .iter()
                .enumerate()
                .map(|(k, a)| (format!("atom {k}"), a.weight))
                .collect();
            out.files.push(write_text(
                &opts.out_dir.join(format!("decompose_{}.svg", p.exp.name)),
                &svg::histogram(&format!("{}: atom weights", p.exp.name), &bars),
            )?);
        }
        out.lines.push(match dist.mode {
            Mode::Atomic => format!("{}: {} atoms", p.exp.name, dist.atoms.len()),
            Mode::Diffuse => format!("{}: diffuse ({} limits)", p.exp.name, dist.limits.len()),
        });
        summaries.push(DecomposeSummary {
            experiment: p.exp.name.clone(),
            mode: Some(dist.mode),
            atoms: dist.atoms.len(),
            weights: dist.atoms.iter().map(|a| a.weight).collect(),
            failed: false,
        });
    }
    out.files.push(write_json(
        &opts.out_dir.join("decompose_summary.json"),
        &summaries,
    )?);
    Ok(())
}

/// One row of `verify.csv`.
#[derive(Clone, Debug, Serialize)]
struct VerifyRow {
    experiment: String,
    check: String,
    entry: String,
    expected: f64,
    estimate: f64,
    residual: f64,
    tol: f64,
    class: String,
    pass: bool,
}

fn report_rows(exp: &str, r: &ResidualReport) -> Vec<VerifyRow> {
    r.entries
        .iter()
        .map(|e| VerifyRow {
            experiment: exp.to_string(),
            check: r.check.clone(),
            entry: e.name.clone(),
            expected: e.expected,
            estimate: e.estimate,
            residual: e.residual,
            tol: e.tol,
            class: e.class.as_str().to_string(),
            pass: e.pass,
        })
        .collect()
}

#[derive(Serialize)]
struct CheckSummary {
    experiment: String,
    check: String,
    entries: usize,
    max_residual: f64,
    pass: bool,
}

fn verify(
    prepared: &[Prepared],
    seed_of: impl Fn(&Prepared) -> u64,
    out: &mut Outcome,
    dir: &Path,
) -> Result<(), CliError> {
    let mut rows: Vec<VerifyRow> = Vec::new();
    let mut summaries: Vec<CheckSummary> = Vec::new();
    let mut decomposition_failed = false;
    for p in prepared.iter().filter(|p| !p.exp.checks.is_empty()) {
        let name = p.exp.name.as_str();
        let target = p.target.as_ref().ok_or_else(|| {
            CliError::Config(format!(
                "experiment {name} needs a measure or target for verify"
            ))
        })?;
        let det = &p.exp.detector;
        let samples = if p.exp.checks.iter().any(Check::needs_samples) {
            let mu = require_measure(p, "verify")?;
            let n = require_samples(p, "verify")?;
            Some(sample_limits(mu, &p.family, det, n, seed_of(p))?)
        } else {
            None
        };
        let samples_ref = || samples.as_ref().expect("samples drawn for this check");
        let dist: Option<DiscreteChoquetDistribution> =
            if p.exp.checks.iter().any(Check::needs_distribution) {
                match cluster_samples(samples_ref(), &p.family, p.cluster_eps) {
                    Ok(d) => Some(d),
                    Err(ergodec_core::Error::DecompositionFailed(diag)) => {
                        out.lines.push(format!(
                            "{name}: decomposition failed, converged fraction {}",
                            diag.converged_fraction
                        ));
                        decomposition_failed = true;
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                }
            } else {
                None
            };
        let dist_ref = || dist.as_ref().expect("distribution built for this check");
        for check in &p.exp.checks {
            let new_rows = match check {
                Check::BarycenterSampled => report_rows(
                    name,
                    &barycenter_from_samples(samples_ref(), target, &p.family, det)?,
                ),
                Check::BarycenterClustered => report_rows(
                    name,
                    &verify_barycenter_clustered(dist_ref(), target, &p.family, det)?,
                ),
                Check::Borel { sets, tol } => report_rows(
                    name,
                    &borel_extension_check(target, dist_ref(), &p.family, sets, *tol)?,
                ),
                Check::EntropyRate { block_length, tol } => {
                    let tau = AffineFunctional::EntropyRate {
                        block_length: *block_length,
                    };
                    // weights and components from the registered mixture labels
                    let labels = Decomposition::Labels(target.ergodic_components());
                    let r = verify_affine_decomposition(&tau, target, &labels, &p.family)?;
                    vec![VerifyRow {
                        experiment: name.to_string(),
                        check: "affine_entropy_rate".into(),
                        entry: r.functional,
                        expected: r.tau_mu,
                        estimate: r.combined,
                        residual: r.residual,
                        tol: *tol,
                        class: "closed_form".into(),
                        pass: r.residual <= *tol,
                    }]
                }
                Check::Linear { coefficients } => {
                    let tau = AffineFunctional::LinearFunctional {
                        coefficients: coefficients.clone(),
                    };
                    let d = dist_ref();
                    let r = verify_affine_decomposition(
                        &tau,
                        target,
                        &Decomposition::Clustered {
                            dist: d,
                            cluster_eps: p.cluster_eps,
                        },
                        &p.family,
                    )?;
                    let bary = verify_barycenter_clustered(d, target, &p.family, det)?;
                    let tol: f64 = coefficients
                        .iter()
                        .zip(&bary.entries)
                        .map(|(c, e)| c.abs() * e.tol)
                        .sum();
                    vec![VerifyRow {
                        experiment: name.to_string(),
                        check: "affine_linear".into(),
                        entry: r.functional,
                        expected: r.tau_mu,
                        estimate: r.combined,
                        residual: r.residual,
                        tol,
                        class: "monte_carlo".into(),
                        pass: r.residual <= tol,
                    }]
                }
            };
            let check_name = new_rows
                .first()
                .map_or_else(String::new, |r| r.check.clone());
            summaries.push(CheckSummary {
                experiment: name.to_string(),
                check: check_name,
                entries: new_rows.len(),
                max_residual: new_rows.iter().map(|r| r.residual).fold(0.0, f64::max),
                pass: new_rows.iter().all(|r| r.pass),
            });
            rows.extend(new_rows);
        }
    }
    for s in &summaries {
        out.lines.push(format!(
            "{} {}: {} (max residual {:.3e})",
            s.experiment,
            s.check,
            if s.pass { "pass" } else { "FAIL" },
            s.max_residual
        ));
    }
    let header: Vec<String> = [
        "experiment",
        "check",
        "entry",
        "expected",
        "estimate",
        "residual",
        "tol",
        "class",
        "pass",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.experiment.clone(),
                r.check.clone(),
                r.entry.clone(),
                real(r.expected),
                real(r.estimate),
                real(r.residual),
                real(r.tol),
                r.class.clone(),
                r.pass.to_string(),
            ]
        })
        .collect();
    out.files
        .push(write_csv(&dir.join("verify.csv"), &header, &table)?);
    out.files
        .push(write_json(&dir.join("verify_summary.json"), &summaries)?);
    if decomposition_failed {
        out.code = exit::DECOMPOSITION_FAILED;
    } else if rows.iter().any(|r| !r.pass) {
        out.code = exit::CHECK_FAILED;
    }
    Ok(())
}

#[derive(Serialize)]
struct WitnessSummary {
    experiment: String,
    growth: u64,
    verdict_x: VerdictKind,
    verdict_tx: VerdictKind,
    osc_x: f64,
    osc_tx: f64,
    not_converged: usize,
}

fn witness(prepared: &[Prepared], opts: &RunOptions, out: &mut Outcome) -> Result<(), CliError> {
    let mut summaries = Vec::new();
    for p in prepared {
        let Some(spec) = &p.exp.witness else { continue };
        let x = ergodec_core::oscillating_witness(spec.growth)?;
        p.exp.system.check_point(&x)?;
        let tx = step(&p.exp.system, &x)?;
        let one = p.family.position(&TestFunction::Cylinder { word: vec![1] });
        let mut rows = Vec::new();
        let mut series = Vec::new();
        let mut verdicts = Vec::new();
        for (label, point) in [("x", &x), ("Tx", &tx)] {
            let v = classify_point(&p.exp.system, point, &p.family, &p.exp.detector)?;
            let mut prev: Option<&[f64]> = None;
            let mut pts = Vec::new();
            for t in &v.trace {
                let n = t.n().unwrap_or(0);
                let freq = one.map(|i| t.values[i]);
                rows.push(vec![
                    label.to_string(),
                    n.to_string(),
                    freq.map_or_else(String::new, real),
                    prev.map_or_else(String::new, |q| real(rho_values(q, &t.values))),
                ]);
                if let Some(f) = freq {
                    pts.push(((n as f64).log2(), f));
                }
                prev = Some(&t.values);
            }
            series.push((format!("{label}: frequency of [1]"), pts));
            verdicts.push(v);
        }
        let header: Vec<String> = ["point", "n", "cylinder_1", "rho_to_previous"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        out.files.push(write_csv(
            &opts.out_dir.join(format!("witness_{}.csv", p.exp.name)),
            &header,
            &rows,
        )?);
        if opts.svg {
            out.files.push(write_text(
                &opts.out_dir.join(format!("witness_{}.svg", p.exp.name)),
                &svg::trace_plot(&format!("{}: block-schedule witness", p.exp.name), &series),
            )?);
        }
        let s = WitnessSummary {
            experiment: p.exp.name.clone(),
            growth: spec.growth,
            verdict_x: verdicts[0].kind(),
            verdict_tx: verdicts[1].kind(),
            osc_x: verdicts[0].spread(),
            osc_tx: verdicts[1].spread(),
            not_converged: verdicts
                .iter()
                .filter(|v| v.kind() == VerdictKind::NotConverged)
                .count(),
        };
        if s.not_converged < 2 {
            out.code = exit::CHECK_FAILED;
        }
        out.lines.push(format!(
            "{}: x {} (spread {:.4}), Tx {} (spread {:.4})",
            s.experiment,
            s.verdict_x.as_str(),
            s.osc_x,
            s.verdict_tx.as_str(),
            s.osc_tx
        ));
        summaries.push(s);
    }
    out.files.push(write_json(
        &opts.out_dir.join("witness_summary.json"),
        &summaries,
    )?);
    Ok(())
}
