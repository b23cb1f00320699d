//! Projected Laplace mechanism for grid histograms.
//!
//! Laplace noise with scale `2 / (N * eps)` is added to every bin, the noisy
//! vector is projected onto the probability simplex with the sort-based
//! method, and the projection is snapped onto the `1/N` grid.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::state::StateHistogram;

/// Laplace(0, `scale`) by inverse CDF.
pub fn laplace_sample<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<f64> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(input(format!("Laplace scale must be positive and finite, got {scale}")));
    }
    loop {
        let u = rng.gen::<f64>() - 0.5;
        if u > -0.5 {
            return Ok(laplace_from_uniform(u, scale));
        }
    }
}

/// Maps `u` in `(-1/2, 1/2)` to the Laplace quantile.
pub fn laplace_from_uniform(u: f64, scale: f64) -> f64 {
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Euclidean projection onto `{x >= 0, sum x = 1}`.
pub fn simplex_project(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    for (m, &x) in sorted.iter().enumerate() {
        cumulative += x;
        let candidate = (cumulative - 1.0) / (m + 1) as f64;
        // The condition holds for a prefix of m, so the last hit is the max.
        if x - candidate > 0.0 {
            threshold = candidate;
        }
    }
    v.iter().map(|&x| (x - threshold).max(0.0)).collect()
}

fn round_half_away(x: f64) -> f64 {
    let floor = x.floor();
    // Products such as 0.7 * 5 land a hair below the half.
    if x - floor >= 0.5 - 1e-9 {
        floor + 1.0
    } else {
        floor
    }
}

/// Snaps a simplex point onto the `1/N` grid.
///
/// Every coordinate is rounded to the nearest grid value except the one with
/// the largest rounding residual (smallest index on ties), which absorbs the
/// correction so the result sums to one. If that coordinate would go
/// negative, the nearest valid grid point in the `3^K` neighbourhood of the
/// rounded point is used instead.
pub fn grid_snap(point: &[f64], population: u32) -> Result<StateHistogram> {
    if point.is_empty() {
        return Err(input("cannot snap an empty vector"));
    }
    if population == 0 {
        return Err(input("population must be positive"));
    }
    let n = f64::from(population);
    let rounded: Vec<i64> = point.iter().map(|&x| round_half_away(x * n) as i64).collect();

    let mut excluded = 0;
    let mut largest = f64::NEG_INFINITY;
    for (i, (&r, &x)) in rounded.iter().zip(point).enumerate() {
        let residual = (r as f64 / n - x).abs();
        if residual > largest + 1e-12 {
            largest = residual;
            excluded = i;
        }
    }
    let others: i64 = rounded
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != excluded)
        .map(|(_, &r)| r)
        .sum();
    let absorbed = i64::from(population) - others;
    if absorbed >= 0 {
        let mut counts: Vec<u32> = rounded.iter().map(|&r| r as u32).collect();
        counts[excluded] = absorbed as u32;
        return StateHistogram::from_counts(counts);
    }
    neighbourhood_fallback(point, &rounded, population)
}

fn neighbourhood_fallback(point: &[f64], rounded: &[i64], population: u32) -> Result<StateHistogram> {
    let k = point.len();
    let n = f64::from(population);
    let mut best: Option<(f64, Vec<u32>)> = None;
    let mut offsets = vec![-1i64; k];
    loop {
        let candidate: Vec<i64> = rounded.iter().zip(&offsets).map(|(r, o)| r + o).collect();
        if candidate.iter().all(|&c| c >= 0) && candidate.iter().sum::<i64>() == i64::from(population) {
            let dist: f64 = candidate
                .iter()
                .zip(point)
                .map(|(&c, &x)| (c as f64 / n - x).powi(2))
                .sum();
            if best.as_ref().map_or(true, |(d, _)| dist < *d - 1e-15) {
                best = Some((dist, candidate.iter().map(|&c| c as u32).collect()));
            }
        }
        // Odometer over {-1, 0, 1}^K.
        let mut i = 0;
        while i < k && offsets[i] == 1 {
            offsets[i] = -1;
            i += 1;
        }
        if i == k {
            break;
        }
        offsets[i] += 1;
    }
    let (_, counts) = best.ok_or_else(|| input("no valid grid point near the rounded vector"))?;
    StateHistogram::from_counts(counts)
}

/// Per-step budget and the sensitivity it is calibrated to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismParams {
    epsilon_step: f64,
    population: u32,
}

impl MechanismParams {
    pub fn new(epsilon_step: f64, population: u32) -> Result<Self> {
        if !(epsilon_step > 0.0) || !epsilon_step.is_finite() {
            return Err(input(format!("per-step epsilon must be positive and finite, got {epsilon_step}")));
        }
        if population == 0 {
            return Err(input("population must be positive"));
        }
        Ok(Self {
            epsilon_step,
            population,
        })
    }

    pub fn epsilon_step(&self) -> f64 {
        self.epsilon_step
    }

    pub fn population(&self) -> u32 {
        self.population
    }

    /// `2 / N`: replacing one individual moves two bins by `1/N`.
    pub fn sensitivity(&self) -> f64 {
        2.0 / f64::from(self.population)
    }

    pub fn scale(&self) -> f64 {
        2.0 / (f64::from(self.population) * self.epsilon_step)
    }
}

/// Noise, simplex projection, grid snap.
pub fn projected_laplace<R: Rng + ?Sized>(
    s: &StateHistogram,
    params: &MechanismParams,
    rng: &mut R,
) -> Result<StateHistogram> {
    if s.population() != params.population() {
        return Err(input(format!(
            "histogram over {} individuals, mechanism calibrated for {}",
            s.population(),
            params.population()
        )));
    }
    let scale = params.scale();
    let mut noisy = s.values();
    for x in &mut noisy {
        *x += laplace_sample(scale, rng)?;
    }
    grid_snap(&simplex_project(&noisy), params.population())
}

/// A state privatization mechanism whose output stays on the state grid.
pub trait StateMechanism {
    fn privatize(&self, s: &StateHistogram, rng: &mut dyn RngCore) -> StateHistogram;

    /// Per-invocation privacy loss; infinite for mechanisms with no guarantee.
    fn epsilon_step(&self) -> f64;
}

#[derive(Clone, Copy, Debug)]
pub struct ProjectedLaplace(pub MechanismParams);

impl StateMechanism for ProjectedLaplace {
    fn privatize(&self, s: &StateHistogram, rng: &mut dyn RngCore) -> StateHistogram {
        projected_laplace(s, &self.0, rng).expect("histogram matches mechanism population")
    }

    fn epsilon_step(&self) -> f64 {
        self.0.epsilon_step()
    }
}

/// Releases the state unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityMechanism;

impl StateMechanism for IdentityMechanism {
    fn privatize(&self, s: &StateHistogram, _rng: &mut dyn RngCore) -> StateHistogram {
        s.clone()
    }

    fn epsilon_step(&self) -> f64 {
        f64::INFINITY
    }
}

/// Ignores its input entirely.
#[derive(Clone, Debug)]
pub struct ConstantMechanism(pub StateHistogram);

impl StateMechanism for ConstantMechanism {
    fn privatize(&self, _s: &StateHistogram, _rng: &mut dyn RngCore) -> StateHistogram {
        self.0.clone()
    }

    fn epsilon_step(&self) -> f64 {
        0.0
    }
}
