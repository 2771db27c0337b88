//! Experiment configuration: JSON, schema-versioned.

use std::path::PathBuf;

use ergodec_core::choquet::CLOSED_FORM_CAP;
use ergodec_core::phase_space::ExtensionRule;
use ergodec_core::{
    oscillating_witness, BorelSet, DetectorParams, Measure, MeasureSpec, PointState, SymbolStream,
    SystemSpec, TestFunction, TestFunctionFamily,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub experiments: Vec<Experiment>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub name: String,
    pub system: SystemSpec,
    /// Measure sampled by `decompose`, `verify` and sampled `classify` runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureSpec>,
    /// Measure whose closed forms the checks compare against; defaults to
    /// `measure`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<MeasureSpec>,
    /// Explicit family; the system default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Vec<TestFunction>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub append: Vec<TestFunction>,
    #[serde(default)]
    pub detector: DetectorParams,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<PointSpec>,
    #[serde(default)]
    pub samples: usize,
    /// Defaults to `5 * cauchy_eps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "point", rename_all = "snake_case", deny_unknown_fields)]
pub enum PointSpec {
    Angle {
        x: f64,
    },
    Interval {
        x: f64,
    },
    Symbols {
        alphabet: usize,
        extension: ExtensionRule,
    },
    Witness {
        growth: u64,
    },
}

impl PointSpec {
    pub fn build(&self) -> ergodec_core::Result<PointState> {
        match self {
            PointSpec::Angle { x } => Ok(PointState::angle(*x)),
            PointSpec::Interval { x } => Ok(PointState::Interval(*x)),
            PointSpec::Symbols {
                alphabet,
                extension,
            } => Ok(PointState::Symbols(SymbolStream::from_rule(
                *alphabet,
                extension.clone(),
            )?)),
            PointSpec::Witness { growth } => oscillating_witness(*growth),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    BarycenterSampled,
    BarycenterClustered,
    Borel {
        sets: Vec<BorelSet>,
        #[serde(default = "default_borel_tol")]
        tol: f64,
    },
    EntropyRate {
        block_length: usize,
        #[serde(default = "default_borel_tol")]
        tol: f64,
    },
    Linear {
        coefficients: Vec<f64>,
    },
}

fn default_borel_tol() -> f64 {
    CLOSED_FORM_CAP
}

impl Check {
    /// Entropy checks use exact cylinder probabilities only.
    pub fn needs_samples(&self) -> bool {
        !matches!(self, Check::EntropyRate { .. })
    }

    pub fn needs_distribution(&self) -> bool {
        matches!(
            self,
            Check::BarycenterClustered | Check::Borel { .. } | Check::Linear { .. }
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessSpec {
    pub growth: u64,
}

/// An experiment with its system, measures and family validated.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub index: usize,
    pub exp: Experiment,
    pub family: TestFunctionFamily,
    pub measure: Option<Measure>,
    pub target: Option<Measure>,
    pub points: Vec<PointState>,
    pub cluster_eps: f64,
}

impl ExperimentConfig {
    /// Parses and checks the schema version; serde errors carry line and
    /// column.
    pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported version {} (expected {SCHEMA_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn prepare(&self) -> Result<Vec<Prepared>, CliError> {
        let mut seen = std::collections::BTreeSet::new();
        self.experiments
            .iter()
            .enumerate()
            .map(|(index, exp)| {
                if !seen.insert(exp.name.as_str()) {
                    return Err(CliError::Config(format!(
                        "duplicate experiment name {:?}",
                        exp.name
                    )));
                }
                exp.prepare(index).map_err(|e| {
                    CliError::Config(format!("experiments[{index}] ({}): {e}", exp.name))
                })
            })
            .collect()
    }
}

impl Experiment {
    fn prepare(&self, index: usize) -> ergodec_core::Result<Prepared> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(ergodec_core::Error::InvalidSystem(format!(
                "experiment name {:?} must be non-empty ASCII letters, digits, '_' or '-'",
                self.name
            )));
        }
        self.system.validate()?;
        let base = match &self.family {
            Some(entries) => TestFunctionFamily::new(entries.clone())?,
            None => TestFunctionFamily::default_for(&self.system)?,
        };
        // indicators of requested Borel sets become family entries
        let mut extra = self.append.clone();
        for check in &self.checks {
            if let Check::Borel { sets, .. } = check {
                extra.extend(sets.iter().filter_map(BorelSet::indicator));
            }
        }
        let mut missing = Vec::new();
        for f in extra {
            if base.position(&f).is_none() && !missing.contains(&f) {
                missing.push(f);
            }
        }
        let family = base.with_appended(&missing)?;
        family.check_system(&self.system)?;
        self.detector.validate(&family)?;
        let measure = self
            .measure
            .as_ref()
            .map(|m| m.register(&self.system))
            .transpose()?;
        let target = self
            .target
            .as_ref()
            .or(self.measure.as_ref())
            .map(|m| m.register(&self.system))
            .transpose()?;
        let points = self
            .points
            .iter()
            .map(|p| {
                let x = p.build()?;
                self.system.check_point(&x)?;
                Ok(x)
            })
            .collect::<ergodec_core::Result<Vec<_>>>()?;
        let cluster_eps = self.cluster_eps.unwrap_or(5.0 * self.detector.cauchy_eps);
        if !(cluster_eps > 2.0 * self.detector.cauchy_eps) {
            return Err(ergodec_core::Error::InvalidDecomposition(format!(
                "cluster_eps {cluster_eps} must exceed 2 * cauchy_eps"
            )));
        }
        Ok(Prepared {
            index,
            exp: self.clone(),
            family,
            measure,
            target,
            points,
            cluster_eps,
        })
    }
}
