//! Population-level histograms: the only state an agent ever sees.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};

/// A point of the state grid: `K` proportions `c_i / N` with `sum c_i = N`.
///
/// Stored as integer counts so that the sum-to-one invariant is exact.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateHistogram {
    counts: Vec<u32>,
    population: u32,
}

impl StateHistogram {
    pub fn from_counts(counts: Vec<u32>) -> Result<Self> {
        if counts.is_empty() {
            return Err(input("histogram needs at least one bin"));
        }
        let population: u64 = counts.iter().map(|&c| u64::from(c)).sum();
        if population == 0 {
            return Err(input("histogram population must be positive"));
        }
        let population =
            u32::try_from(population).map_err(|_| input("histogram population overflows u32"))?;
        Ok(Self { counts, population })
    }

    /// Builds a histogram from proportions that must lie on the `1/N` grid.
    pub fn from_proportions(values: &[f64], population: u32) -> Result<Self> {
        if population == 0 {
            return Err(input("population must be positive"));
        }
        let n = f64::from(population);
        let mut counts = Vec::with_capacity(values.len());
        for &v in values {
            let c = (v * n).round();
            if !v.is_finite() || c < 0.0 || (v * n - c).abs() > 1e-9 {
                return Err(input(format!("{v} is not a multiple of 1/{population}")));
            }
            counts.push(c as u32);
        }
        let hist = Self::from_counts(counts)?;
        if hist.population != population {
            return Err(input("proportions do not sum to one"));
        }
        Ok(hist)
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn population(&self) -> u32 {
        self.population
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn value(&self, i: usize) -> f64 {
        f64::from(self.counts[i]) / f64::from(self.population)
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.bins()).map(|i| self.value(i)).collect()
    }

    /// Returns true when every bin is strictly positive.
    pub fn is_interior(&self) -> bool {
        self.counts.iter().all(|&c| c > 0)
    }

    pub fn linf_distance(&self, other: &Self) -> f64 {
        self.values()
            .iter()
            .zip(other.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for StateHistogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.counts.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}/{}", self.population)?;
        }
        write!(f, ")")
    }
}
