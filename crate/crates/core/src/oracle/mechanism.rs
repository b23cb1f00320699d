use rand::{Rng, RngCore};
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use super::grid::{enumerate_states, index_of, DEFAULT_STATE_CAP};
use super::mdp::check_stochastic;
use crate::dpmech::{MechanismParams, ProjectedLaplace, StateMechanism};
use crate::error::{input, Result};
use crate::StateHistogram;

pub const MIN_TRIALS: u64 = 10_000;

/// `P_M(s~ | s)` over an enumerated grid; row `i` is the output law for
/// source state `i`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MechanismMatrix {
    pub states: Vec<StateHistogram>,
    pub probs: Vec<f64>,
    /// Trials per row when estimated; `None` for exact matrices.
    pub trials: Option<u64>,
}

impl MechanismMatrix {
    pub fn identity(states: Vec<StateHistogram>) -> Self {
        let n = states.len();
        let mut probs = vec![0.0; n * n];
        for i in 0..n {
            probs[i * n + i] = 1.0;
        }
        Self { states, probs, trials: None }
    }

    pub fn from_rows(states: Vec<StateHistogram>, probs: Vec<f64>) -> Result<Self> {
        let n = states.len();
        if probs.len() != n * n {
            return Err(input("mechanism matrix has the wrong size"));
        }
        check_stochastic(&probs, n, "mechanism")?;
        Ok(Self { states, probs, trials: None })
    }

    pub fn size(&self) -> usize {
        self.states.len()
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.probs[from * self.states.len() + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        let n = self.states.len();
        &self.probs[from * n..(from + 1) * n]
    }

    /// `sqrt(p (1 - p) / trials)`, zero for exact matrices.
    pub fn standard_error(&self, from: usize, to: usize) -> f64 {
        match self.trials {
            Some(t) => {
                let p = self.get(from, to);
                (p * (1.0 - p) / t as f64).sqrt()
            }
            None => 0.0,
        }
    }

    /// Resamples every row as a multinomial draw with the estimated
    /// probabilities; exact matrices are returned unchanged.
    pub fn resample<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let Some(trials) = self.trials else {
            return self.clone();
        };
        let n = self.states.len();
        let mut probs = vec![0.0; n * n];
        for i in 0..n {
            let mut left = trials;
            let mut mass = 1.0;
            for j in 0..n {
                let p = self.get(i, j);
                let draw = if j == n - 1 || mass <= 0.0 {
                    left
                } else {
                    let q = (p / mass).clamp(0.0, 1.0);
                    Binomial::new(left, q).expect("valid binomial").sample(rng)
                };
                probs[i * n + j] = draw as f64 / trials as f64;
                left -= draw;
                mass -= p;
            }
        }
        Self {
            states: self.states.clone(),
            probs,
            trials: self.trials,
        }
    }
}

/// Empirical output frequencies of `mechanism` from every grid state.
pub fn estimate_matrix(
    states: &[StateHistogram],
    mechanism: &dyn StateMechanism,
    trials: u64,
    rng: &mut dyn RngCore,
) -> Result<MechanismMatrix> {
    if trials < MIN_TRIALS {
        return Err(input(format!("need at least {MIN_TRIALS} trials per row, got {trials}")));
    }
    let index = index_of(states);
    let n = states.len();
    let mut probs = vec![0.0; n * n];
    for (i, s) in states.iter().enumerate() {
        let mut counts = vec![0u64; n];
        for _ in 0..trials {
            let out = mechanism.privatize(s, rng);
            counts[*index.get(&out).ok_or_else(|| input("mechanism output is off the grid"))?] += 1;
        }
        for j in 0..n {
            probs[i * n + j] = counts[j] as f64 / trials as f64;
        }
    }
    Ok(MechanismMatrix {
        states: states.to_vec(),
        probs,
        trials: Some(trials),
    })
}

/// Projected-Laplace matrix on the full `(N, K)` grid.
pub fn estimate_mechanism_matrix(
    population: u32,
    bins: usize,
    epsilon_step: f64,
    trials: u64,
    rng: &mut dyn RngCore,
) -> Result<MechanismMatrix> {
    let states = enumerate_states(population, bins, DEFAULT_STATE_CAP)?;
    let mech = ProjectedLaplace(MechanismParams::new(epsilon_step, population)?);
    estimate_matrix(&states, &mech, trials, rng)
}

/// Standard deviation of `f` over `reps` multinomial resamples of `pm`.
/// This is the Monte Carlo standard error `f(pm)` inherits from the
/// estimation of `pm`.
pub fn bootstrap_se<F>(pm: &MechanismMatrix, reps: usize, rng: &mut dyn RngCore, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&MechanismMatrix) -> Result<Vec<f64>>,
{
    if pm.trials.is_none() {
        return Ok(vec![0.0; f(pm)?.len()]);
    }
    if reps < 2 {
        return Err(input("bootstrap needs at least two replicates"));
    }
    let mut sum: Vec<f64> = Vec::new();
    let mut sum_sq: Vec<f64> = Vec::new();
    for _ in 0..reps {
        let values = f(&pm.resample(rng))?;
        if sum.is_empty() {
            sum = vec![0.0; values.len()];
            sum_sq = vec![0.0; values.len()];
        }
        for (k, v) in values.iter().enumerate() {
            sum[k] += v;
            sum_sq[k] += v * v;
        }
    }
    let r = reps as f64;
    Ok(sum
        .iter()
        .zip(&sum_sq)
        .map(|(s, q)| ((q - s * s / r) / (r - 1.0)).max(0.0).sqrt())
        .collect())
}
