//! Affine functionals on invariant measures and the decomposition identity
//! `tau(mu) = sum_k w_k tau(nu_k)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choquet::DiscreteChoquetDistribution;
use crate::error::{Error, Result};
use crate::observables::{
    cylinder_probability, decode_word, measure_moments, weighted_l1, MomentVector, NeumaierSum,
    TestFunctionFamily,
};
use crate::phase_space::Measure;

/// Largest number of words enumerated by [`entropy_rate`].
pub const MAX_WORDS: usize = 1 << 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "functional", rename_all = "snake_case")]
pub enum AffineFunctional {
    /// `H_{L+1} - H_L` in bits.
    EntropyRate { block_length: usize },
    /// `nu -> sum_i c_i nu[f_i]` over the family in use.
    LinearFunctional { coefficients: Vec<f64> },
}

impl AffineFunctional {
    pub fn descriptor(&self) -> String {
        match self {
            AffineFunctional::EntropyRate { block_length } => {
                format!("entropy_rate(L={block_length})")
            }
            AffineFunctional::LinearFunctional { coefficients } => {
                format!("linear({} coefficients)", coefficients.len())
            }
        }
    }

    fn on_moments(&self, v: &[f64]) -> f64 {
        match self {
            AffineFunctional::LinearFunctional { coefficients } => coefficients
                .iter()
                .zip(v)
                .map(|(c, x)| c * x)
                .collect::<NeumaierSum>()
                .value(),
            AffineFunctional::EntropyRate { .. } => unreachable!("entropy needs a measure"),
        }
    }

    fn on_measure(&self, m: &Measure, fam: &TestFunctionFamily) -> Result<f64> {
        match self {
            AffineFunctional::EntropyRate { block_length } => entropy_rate(m, *block_length),
            AffineFunctional::LinearFunctional { .. } => {
                Ok(self.on_moments(&measure_moments(m, fam)?.values))
            }
        }
    }
}

/// Block entropy `H_L = -sum_{|w| = L} mu[w] log2 mu[w]`.
fn block_entropy(mu: &Measure, alphabet: usize, len: usize) -> Result<f64> {
    let words = alphabet.pow(len as u32);
    // partition by prefix; partial sums are combined in prefix order
    let prefix_len = len.min(2);
    let prefixes = alphabet.pow(prefix_len as u32);
    let per_prefix = words / prefixes;
    let partials = (0..prefixes)
        .into_par_iter()
        .map(|pre| {
            let mut acc = NeumaierSum::new();
            for code in pre * per_prefix..(pre + 1) * per_prefix {
                let p = cylinder_probability(mu, &decode_word(code, alphabet, len))?;
                if p > 0.0 {
                    acc.add(-p * p.log2());
                }
            }
            Ok(acc.value())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(partials.into_iter().collect::<NeumaierSum>().value())
}

/// Entropy rate estimate `H_{L+1} - H_L` in bits from exact cylinder
/// probabilities. Nonincreasing in `L`, converging to the entropy of `mu`.
pub fn entropy_rate(mu: &Measure, block_length: usize) -> Result<f64> {
    let alphabet = mu.system().alphabet_size().ok_or_else(|| {
        Error::InvalidSystem(format!(
            "entropy rate needs a shift, got {}",
            mu.system().name()
        ))
    })?;
    if block_length == 0 {
        return Err(Error::InvalidSystem(
            "entropy block length must be at least 1".into(),
        ));
    }
    let len = block_length + 1;
    let too_large = Error::WordSpaceTooLarge {
        alphabet,
        length: len,
    };
    match alphabet.checked_pow(len as u32) {
        Some(w) if w <= MAX_WORDS => {}
        _ => return Err(too_large),
    }
    Ok(block_entropy(mu, alphabet, len)? - block_entropy(mu, alphabet, block_length)?)
}

/// Weights and components `nu_k` in the right-hand side of the identity.
#[derive(Clone, Debug)]
pub enum Decomposition<'a> {
    /// Atoms of a sampled distribution, matched to the registered components
    /// of `mu` by nearest weak distance within `cluster_eps`.
    Clustered {
        dist: &'a DiscreteChoquetDistribution,
        cluster_eps: f64,
    },
    /// Known components, e.g. from the sampler's mixture labels.
    Labels(Vec<(f64, Measure)>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineReport {
    pub functional: String,
    pub tau_mu: f64,
    pub combined: f64,
    /// `tau_mu - combined`.
    pub signed: f64,
    pub residual: f64,
    /// Component index matched to each atom, in atom order.
    pub matches: Vec<usize>,
}

/// Residual `|tau(mu) - sum_k w_k tau(nu_k)|`.
///
/// A linear functional is applied to the atom moments directly. Entropy rate
/// is undefined on raw moment vectors, so each atom must first be matched to
/// a registered component of `mu`.
pub fn verify_affine_decomposition(
    tau: &AffineFunctional,
    mu: &Measure,
    decomposition: &Decomposition<'_>,
    fam: &TestFunctionFamily,
) -> Result<AffineReport> {
    if let AffineFunctional::LinearFunctional { coefficients } = tau {
        if coefficients.len() != fam.len() {
            return Err(Error::InvalidDecomposition(format!(
                "{} coefficients for a family of {} functions",
                coefficients.len(),
                fam.len()
            )));
        }
    }
    let tau_mu = tau.on_measure(mu, fam)?;
    let mut matches = Vec::new();
    let terms: Vec<f64> = match decomposition {
        Decomposition::Labels(parts) => parts
            .iter()
            .map(|(w, m)| Ok(w * tau.on_measure(m, fam)?))
            .collect::<Result<_>>()?,
        Decomposition::Clustered { dist, cluster_eps } => {
            let points = dist.weighted_points();
            match tau {
                AffineFunctional::LinearFunctional { .. } => points
                    .iter()
                    .map(|(w, v)| w * tau.on_moments(&v.values))
                    .collect(),
                AffineFunctional::EntropyRate { .. } => {
                    let comps = mu.ergodic_components();
                    let comp_moments: Vec<MomentVector> = comps
                        .iter()
                        .map(|(_, c)| measure_moments(c, fam))
                        .collect::<Result<_>>()?;
                    let comp_tau: Vec<f64> = comps
                        .iter()
                        .map(|(_, c)| tau.on_measure(c, fam))
                        .collect::<Result<_>>()?;
                    points
                        .iter()
                        .enumerate()
                        .map(|(k, (w, v))| {
                            let (j, d) = comp_moments
                                .iter()
                                .map(|c| weighted_l1(&v.values, &c.values))
                                .enumerate()
                                .min_by(|a, b| a.1.total_cmp(&b.1))
                                .expect("at least one component");
                            if d > *cluster_eps {
                                return Err(Error::UnmatchedAtom {
                                    atom: k,
                                    eps: *cluster_eps,
                                });
                            }
                            matches.push(j);
                            Ok(w * comp_tau[j])
                        })
                        .collect::<Result<_>>()?
                }
            }
        }
    };
    let combined = terms.into_iter().collect::<NeumaierSum>().value();
    let signed = tau_mu - combined;
    Ok(AffineReport {
        functional: tau.descriptor(),
        tau_mu,
        combined,
        signed,
        residual: signed.abs(),
        matches,
    })
}
