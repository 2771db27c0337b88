use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::validate_stochastic;
use crate::error::{Error, Result};

/// Symbols are generated lazily in chunks of this many.
pub const CHUNK: usize = 4096;

/// Deterministic rule producing the symbols of a stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ExtensionRule {
    Periodic {
        word: Vec<u8>,
    },
    Iid {
        probs: Vec<f64>,
        seed: u64,
    },
    Markov {
        transition: Vec<Vec<f64>>,
        initial: Vec<f64>,
        seed: u64,
    },
    /// Block `k >= 1` is symbol `(k - 1) mod 2` repeated `growth^k` times.
    BlockSchedule {
        growth: u64,
    },
}

#[derive(Clone, Debug)]
enum Generator {
    Periodic {
        next: usize,
    },
    Iid {
        rng: ChaCha8Rng,
        cdf: Arc<[f64]>,
    },
    Markov {
        rng: ChaCha8Rng,
        initial: Arc<[f64]>,
        rows: Arc<[Vec<f64>]>,
        last: Option<u8>,
    },
    Block {
        growth: u64,
        block: u32,
        remaining: u64,
    },
}

/// A one-sided symbol sequence with a materialized prefix.
///
/// The prefix buffer is extended from the rule as needed; shifting drops the
/// head. Two streams compare equal when they follow the same rule and have
/// been shifted the same number of times.
#[derive(Clone, Debug)]
pub struct SymbolStream {
    alphabet: usize,
    rule: Arc<ExtensionRule>,
    gen: Generator,
    buf: Vec<u8>,
    head: usize,
    position: u64,
}

impl PartialEq for SymbolStream {
    fn eq(&self, other: &Self) -> bool {
        self.alphabet == other.alphabet
            && self.position == other.position
            && self.rule == other.rule
    }
}

fn cdf(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = f64::INFINITY;
    }
    out
}

fn validate_probs(probs: &[f64]) -> Result<()> {
    if probs.len() < 2 || probs.len() > 256 {
        return Err(Error::InvalidPoint(format!(
            "probability vector of length {}",
            probs.len()
        )));
    }
    if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidPoint("negative probability".into()));
    }
    let s: f64 = probs.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidPoint(format!("probabilities sum to {s}")));
    }
    Ok(())
}

#[inline]
fn draw(cdf: &[f64], u: f64) -> u8 {
    let mut i = 0;
    while u >= cdf[i] {
        i += 1;
    }
    i as u8
}

impl SymbolStream {
    pub fn from_rule(alphabet: usize, rule: ExtensionRule) -> Result<SymbolStream> {
        if !(2..=256).contains(&alphabet) {
            return Err(Error::InvalidPoint(format!("alphabet size {alphabet}")));
        }
        let gen = match &rule {
            ExtensionRule::Periodic { word } => {
                if word.is_empty() {
                    return Err(Error::InvalidPoint("empty periodic word".into()));
                }
                if let Some(&s) = word.iter().find(|&&s| s as usize >= alphabet) {
                    return Err(Error::InvalidPoint(format!(
                        "symbol {s} outside alphabet of size {alphabet}"
                    )));
                }
                Generator::Periodic { next: 0 }
            }
            ExtensionRule::Iid { probs, seed } => {
                validate_probs(probs)?;
                if probs.len() > alphabet {
                    return Err(Error::InvalidPoint(
                        "iid vector longer than alphabet".into(),
                    ));
                }
                Generator::Iid {
                    rng: ChaCha8Rng::seed_from_u64(*seed),
                    cdf: cdf(probs).into(),
                }
            }
            ExtensionRule::Markov {
                transition,
                initial,
                seed,
            } => {
                validate_stochastic(transition).map_err(Error::InvalidPoint)?;
                validate_probs(initial)?;
                if transition.len() > alphabet || initial.len() != transition.len() {
                    return Err(Error::InvalidPoint("Markov rule dimension mismatch".into()));
                }
                Generator::Markov {
                    rng: ChaCha8Rng::seed_from_u64(*seed),
                    initial: cdf(initial).into(),
                    rows: transition.iter().map(|r| cdf(r)).collect::<Vec<_>>().into(),
                    last: None,
                }
            }
            ExtensionRule::BlockSchedule { growth } => {
                if *growth < 2 || alphabet < 2 {
                    return Err(Error::InvalidPoint(format!("block growth {growth}")));
                }
                Generator::Block {
                    growth: *growth,
                    block: 1,
                    remaining: *growth,
                }
            }
        };
        Ok(SymbolStream {
            alphabet,
            rule: Arc::new(rule),
            gen,
            buf: Vec::new(),
            head: 0,
            position: 0,
        })
    }

    pub fn periodic(alphabet: usize, word: Vec<u8>) -> Result<SymbolStream> {
        Self::from_rule(alphabet, ExtensionRule::Periodic { word })
    }

    pub fn iid(probs: Vec<f64>, seed: u64) -> Result<SymbolStream> {
        Self::from_rule(probs.len(), ExtensionRule::Iid { probs, seed })
    }

    pub fn markov(transition: Vec<Vec<f64>>, initial: Vec<f64>, seed: u64) -> Result<SymbolStream> {
        Self::from_rule(
            transition.len(),
            ExtensionRule::Markov {
                transition,
                initial,
                seed,
            },
        )
    }

    pub fn block_schedule(growth: u64) -> SymbolStream {
        Self::from_rule(2, ExtensionRule::BlockSchedule { growth })
            .expect("growth >= 2 checked by caller")
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn rule(&self) -> &ExtensionRule {
        &self.rule
    }

    /// Number of shifts applied since construction.
    pub fn position(&self) -> u64 {
        self.position
    }

    fn generate_chunk(&mut self) {
        let buf = &mut self.buf;
        match (&mut self.gen, &*self.rule) {
            (Generator::Periodic { next }, ExtensionRule::Periodic { word }) => {
                for _ in 0..CHUNK {
                    buf.push(word[*next]);
                    *next += 1;
                    if *next == word.len() {
                        *next = 0;
                    }
                }
            }
            (Generator::Iid { rng, cdf }, _) => {
                buf.extend((0..CHUNK).map(|_| draw(cdf, rng.gen::<f64>())));
            }
            (
                Generator::Markov {
                    rng,
                    initial,
                    rows,
                    last,
                },
                _,
            ) => {
                for _ in 0..CHUNK {
                    let u = rng.gen::<f64>();
                    let s = match *last {
                        None => draw(initial, u),
                        Some(prev) => draw(&rows[prev as usize], u),
                    };
                    *last = Some(s);
                    buf.push(s);
                }
            }
            (
                Generator::Block {
                    growth,
                    block,
                    remaining,
                },
                _,
            ) => {
                let mut left = CHUNK as u64;
                while left > 0 {
                    let take = left.min(*remaining);
                    let symbol = ((*block - 1) % 2) as u8;
                    buf.extend(std::iter::repeat(symbol).take(take as usize));
                    left -= take;
                    *remaining -= take;
                    if *remaining == 0 {
                        *block += 1;
                        *remaining = growth.saturating_pow(*block);
                    }
                }
            }
            _ => unreachable!("generator state always matches its rule"),
        }
    }

    /// Makes at least `len` symbols available past the head.
    pub fn ensure(&mut self, len: usize) {
        if self.buf.len() - self.head >= len {
            return;
        }
        if self.head >= CHUNK {
            self.buf.drain(..self.head);
            self.head = 0;
        }
        while self.buf.len() - self.head < len {
            self.generate_chunk();
        }
    }

    /// The next `len` symbols, starting at the current head.
    pub fn peek(&mut self, len: usize) -> &[u8] {
        self.ensure(len);
        &self.buf[self.head..self.head + len]
    }

    pub fn prefix(&mut self, len: usize) -> Vec<u8> {
        self.peek(len).to_vec()
    }

    /// Shifts `k` times.
    pub fn advance(&mut self, k: usize) {
        self.ensure(k);
        self.head += k;
        self.position += k as u64;
    }

    /// `sum_{j=1..bits} s_j 2^{-j}` for a binary stream.
    pub fn project(&mut self, bits: u32) -> f64 {
        let bits = bits.min(53);
        let code = self
            .peek(bits as usize)
            .iter()
            .fold(0u64, |acc, &s| (acc << 1) | (s & 1) as u64);
        code as f64 / (1u64 << bits) as f64
    }
}
