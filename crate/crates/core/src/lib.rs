//! Numerical ergodic-support machinery for concrete compact dynamical systems.
//!
//! The crate follows one pipeline: a registered system `(X, T)` and a point
//! `x` produce empirical measures `δ_{x,n}` (as [`MomentVector`]s over a
//! [`TestFunctionFamily`]); a detector turns a checkpoint trace into a
//! [`ConvergenceVerdict`]; sampling an invariant measure and clustering the
//! converged limits gives a [`DiscreteChoquetDistribution`] whose barycenter
//! can be checked against closed-form moments.
//!
//! Modules:
//!
//! - [`phase_space`]: systems, points, invariant measures and samplers.
//! - [`observables`]: test-function families, Birkhoff averaging, closed-form
//!   moments and the truncated weak metric.
//! - [`basin`]: convergence verdicts, basin membership and invariance checks.
//! - [`choquet`]: decomposition by sampling and barycenter verification.
//! - [`functionals`]: entropy rate and the affine decomposition identity.

pub mod basin;
pub mod choquet;
mod error;
pub mod functionals;
pub mod observables;
pub mod phase_space;
pub mod seed;

pub use basin::{
    classify_point, in_basin, invariance_check, verdict_from_trace, BasinMembership,
    ConvergenceVerdict, DetectorParams, ErgodicLabel, ErgodicOracle, InvarianceReport, Verdict,
    VerdictKind,
};
pub use choquet::{
    barycenter_from_samples, borel_extension_check, cluster_samples, decompose, sample_limits,
    verify_barycenter_clustered, verify_barycenter_sampled, Atom, BorelSet, Diagnostics,
    DiscreteChoquetDistribution, EntryClass, Mode, ResidualEntry, ResidualReport, SampleRecord,
    SampleSet,
};
pub use error::{Error, Result};
pub use functionals::{
    entropy_rate, verify_affine_decomposition, AffineFunctional, AffineReport, Decomposition,
};
pub use observables::{
    birkhoff_moments, evaluate, family_tail_bound, measure_moments, weak_metric, MomentVector,
    Provenance, TestFunction, TestFunctionFamily,
};
pub use phase_space::{
    oscillating_witness, sampler_draw, step, Alpha, Draw, Measure, MeasureSpec, Orbit, Phase,
    PointState, SymbolStream, SystemSpec,
};
