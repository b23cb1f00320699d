use rand::RngCore;
use serde::Serialize;

use crate::dpmech::{projected_laplace, MechanismParams};
use crate::error::{input, Result};
use crate::StateHistogram;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailRow {
    pub alpha: f64,
    /// `alpha + 1 / (sqrt(2) N)`
    pub threshold: f64,
    pub empirical: f64,
    pub standard_error: f64,
    /// `K exp(-N alpha eps' / (2 sqrt(K)))`
    pub bound: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailReport {
    pub population: u32,
    pub bins: usize,
    pub epsilon_step: f64,
    pub trials: u64,
    pub source: StateHistogram,
    pub rows: Vec<TailRow>,
    pub passed: bool,
}

pub fn tail_bound(population: u32, bins: usize, epsilon_step: f64, alpha: f64) -> f64 {
    let k = bins as f64;
    k * (-(population as f64) * alpha * epsilon_step / (2.0 * k.sqrt())).exp()
}

/// Interior state with counts as equal as possible, remainder to the first bins.
pub fn balanced_state(population: u32, bins: usize) -> Result<StateHistogram> {
    if (population as usize) < bins || bins == 0 {
        return Err(input(format!("no interior state with N = {population}, K = {bins}")));
    }
    let base = population / bins as u32;
    let extra = population as usize % bins;
    StateHistogram::from_counts((0..bins).map(|i| base + u32::from(i < extra)).collect())
}

/// Frequency of `||s - s~||_inf >= alpha + 1/(sqrt(2) N)` from the balanced
/// interior state, against the tail bound; the same draws serve every alpha.
pub fn tail_bound_check(
    population: u32,
    bins: usize,
    epsilon_step: f64,
    alphas: &[f64],
    trials: u64,
    rng: &mut dyn RngCore,
) -> Result<TailReport> {
    let source = balanced_state(population, bins)?;
    let params = MechanismParams::new(epsilon_step, population)?;
    if trials == 0 {
        return Err(input("need at least one trial"));
    }
    let offset = 1.0 / (2f64.sqrt() * population as f64);
    let thresholds: Vec<f64> = alphas.iter().map(|a| a + offset).collect();
    let mut hits = vec![0u64; alphas.len()];
    for _ in 0..trials {
        let out = projected_laplace(&source, &params, rng)?;
        let d = source.linf_distance(&out);
        for (h, t) in hits.iter_mut().zip(&thresholds) {
            // Distances are multiples of 1/N; allow for rounding in the threshold.
            if d >= t - 1e-12 {
                *h += 1;
            }
        }
    }
    let rows: Vec<TailRow> = alphas
        .iter()
        .zip(&thresholds)
        .zip(&hits)
        .map(|((&alpha, &threshold), &h)| {
            let p = h as f64 / trials as f64;
            let se = (p * (1.0 - p) / trials as f64).sqrt();
            let bound = tail_bound(population, bins, epsilon_step, alpha);
            TailRow {
                alpha,
                threshold,
                empirical: p,
                standard_error: se,
                bound,
                passed: p <= bound + 3.0 * se,
            }
        })
        .collect();
    Ok(TailReport {
        population,
        bins,
        epsilon_step,
        trials,
        source,
        passed: rows.iter().all(|r| r.passed),
        rows,
    })
}
