//! Sampling distributions over the unaudited transactions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::population::Population;
use crate::rng::AuditRng;
use crate::scalar::{compensated_sum, Scalar};

/// How the next transaction is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "uniform")]
    Uniform,
    /// Proportional to reported value.
    #[serde(rename = "propM")]
    PropM,
    /// Proportional to reported value times score.
    #[serde(rename = "propMS")]
    PropMS,
    /// Proportional to weight times true misstated fraction. Simulation only.
    #[serde(rename = "oracle")]
    Oracle,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Uniform,
        Strategy::PropM,
        Strategy::PropMS,
        Strategy::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Uniform => "uniform",
            Strategy::PropM => "propM",
            Strategy::PropMS => "propMS",
            Strategy::Oracle => "oracle",
        }
    }

    /// Checks that the population carries what this strategy needs.
    pub fn check_population<T: Scalar>(self, population: &Population<T>) -> Result<()> {
        match self {
            Strategy::PropMS if population.scores().is_none() => Err(AuditError::Config(
                "strategy propMS requires a score column".into(),
            )),
            Strategy::Oracle if population.truth().is_none() => Err(AuditError::Config(
                "strategy oracle requires true misstated fractions".into(),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = AuditError;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                AuditError::Config(format!(
                    "unknown strategy {s:?} (expected uniform, propM, propMS or oracle)"
                ))
            })
    }
}

/// Probability distribution over the remaining indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution<T: Scalar> {
    support: Vec<usize>,
    probs: Vec<T>,
}

impl<T: Scalar> Distribution<T> {
    /// Builds a distribution from unnormalized non-negative masses.
    pub fn from_masses(support: Vec<usize>, masses: Vec<T>) -> Result<Self> {
        if support.is_empty() {
            return Err(AuditError::Exhausted);
        }
        let total = compensated_sum(masses.iter().copied());
        if !(total > T::zero()) || !total.is_finite() {
            return Err(AuditError::DegenerateDistribution(
                "all sampling masses are zero".into(),
            ));
        }
        let probs = masses.into_iter().map(|m| m / total).collect();
        Ok(Self { support, probs })
    }

    pub fn uniform(support: Vec<usize>) -> Result<Self> {
        let masses = vec![T::one(); support.len()];
        Self::from_masses(support, masses)
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.support.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn prob_of(&self, index: usize) -> Option<T> {
        self.support
            .iter()
            .position(|&i| i == index)
            .map(|p| self.probs[p])
    }

    /// Expectation of `values[i]` under the distribution.
    pub fn expect(&self, values: &[T]) -> T {
        compensated_sum(self.iter().map(|(i, q)| q * values[i]))
    }

    /// This distribution restricted to the support minus `excluded`,
    /// renormalized.
    pub fn restricted(&self, excluded: &[usize]) -> Result<Self> {
        let (support, masses): (Vec<_>, Vec<_>) =
            self.iter().filter(|(i, _)| !excluded.contains(i)).unzip();
        Self::from_masses(support, masses)
    }
}

/// Strict constructor: fails on an all-zero propMS/oracle numerator.
pub fn try_make_distribution<T: Scalar>(
    strategy: Strategy,
    population: &Population<T>,
    remaining: &[usize],
) -> Result<Distribution<T>> {
    strategy.check_population(population)?;
    if remaining.is_empty() {
        return Err(AuditError::Exhausted);
    }
    let w = population.weights();
    let masses: Vec<T> = match strategy {
        Strategy::Uniform => return Distribution::uniform(remaining.to_vec()),
        Strategy::PropM => remaining.iter().map(|&i| w[i]).collect(),
        Strategy::PropMS => {
            let s = population.scores().expect("checked above");
            remaining.iter().map(|&i| w[i] * s[i]).collect()
        }
        Strategy::Oracle => {
            let f = population.truth().expect("checked above");
            remaining.iter().map(|&i| w[i] * f[i]).collect()
        }
    };
    Distribution::from_masses(remaining.to_vec(), masses)
}

/// Sampling distribution for `strategy` over `remaining`. When every
/// remaining propMS (or oracle) mass is zero, falls back to propM.
pub fn make_distribution<T: Scalar>(
    strategy: Strategy,
    population: &Population<T>,
    remaining: &[usize],
) -> Result<Distribution<T>> {
    match try_make_distribution(strategy, population, remaining) {
        Err(AuditError::DegenerateDistribution(_)) => {
            try_make_distribution(Strategy::PropM, population, remaining)
        }
        other => other,
    }
}

/// Draws one index by inverting the cumulative distribution.
pub fn draw_index<T: Scalar>(dist: &Distribution<T>, rng: &mut AuditRng) -> usize {
    let u = T::lit(rng.unit());
    let mut cum = T::zero();
    let mut last_positive = dist.support[0];
    for (i, q) in dist.iter() {
        if q > T::zero() {
            last_positive = i;
            cum = cum + q;
            if u < cum {
                return i;
            }
        }
    }
    // rounding left u above the final cumulative mass
    last_positive
}
