use rand::RngCore;
use serde::Serialize;

use super::fixtures::Family;
use super::induced::induced_transition;
use super::mdp::{sup_diff, uniform_policy, value_iteration};
use super::mechanism::{bootstrap_se, estimate_mechanism_matrix};
use crate::error::{input, Result};

pub const VALUE_TOL: f64 = 1e-10;
/// Value iteration error allowance when comparing two optimal value tables.
pub const NUMERICAL_FLOOR: f64 = 1e-8;
/// Epsilon at or above which the mechanism is treated as the identity.
pub const IDENTITY_EPS: f64 = 1e9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrendCell {
    pub population: u32,
    pub epsilon: f64,
    /// `|| Q* - Q~* ||_inf`
    pub gap: f64,
    pub standard_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrendReport {
    pub family: Family,
    pub cells: Vec<TrendCell>,
    pub fixed_epsilon: f64,
    pub monotone_in_epsilon: bool,
    pub monotone_in_population: bool,
    pub identity_limit: bool,
    pub passed: bool,
}

/// Optimal-value gap between a fixture MDP and its privatized model under a uniform behaviour policy, with a bootstrap standard error
/// over the mechanism-matrix estimate.
pub fn optimal_value_gap(
    family: Family,
    population: u32,
    epsilon: f64,
    trials: u64,
    reps: usize,
    rng: &mut dyn RngCore,
) -> Result<TrendCell> {
    let mdp = family.build(population)?;
    let q_star = value_iteration(&mdp, VALUE_TOL)?;
    let policy = uniform_policy(mdp.state_count(), mdp.actions);
    let pm = estimate_mechanism_matrix(population, 2, epsilon, trials, rng)?;
    let gap_for = |pm: &super::mechanism::MechanismMatrix| -> Result<Vec<f64>> {
        let induced = induced_transition(&mdp, &policy, pm)?;
        let q_tilde = value_iteration(&induced.mdp, VALUE_TOL)?;
        Ok(vec![sup_diff(&q_star, &q_tilde)])
    };
    let gap = gap_for(&pm)?[0];
    let standard_error = bootstrap_se(&pm, reps, rng, gap_for)?[0];
    Ok(TrendCell {
        population,
        epsilon,
        gap,
        standard_error,
    })
}

fn not_above(later: &TrendCell, earlier: &TrendCell) -> bool {
    let se = (later.standard_error.powi(2) + earlier.standard_error.powi(2)).sqrt();
    later.gap <= earlier.gap + 3.0 * se + NUMERICAL_FLOOR
}

/// Gap table over `populations x epsilons`. Passes when the gap does not
/// increase with epsilon at every population, does not increase with the
/// population at `fixed_epsilon`, and vanishes at the identity limit.
pub fn theorem2_trend(
    family: Family,
    populations: &[u32],
    epsilons: &[f64],
    fixed_epsilon: f64,
    trials: u64,
    reps: usize,
    rng: &mut dyn RngCore,
) -> Result<TrendReport> {
    let mut eps = epsilons.to_vec();
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    let mut pops = populations.to_vec();
    pops.sort_unstable();
    pops.dedup();
    if !eps.contains(&fixed_epsilon) {
        return Err(input("fixed epsilon must be one of the listed epsilons"));
    }
    let mut cells = Vec::with_capacity(pops.len() * eps.len());
    for &n in &pops {
        for &e in &eps {
            cells.push(optimal_value_gap(family, n, e, trials, reps, rng)?);
        }
    }
    let at = |i: usize, j: usize| &cells[i * eps.len() + j];
    let monotone_in_epsilon = (0..pops.len()).all(|i| (1..eps.len()).all(|j| not_above(at(i, j), at(i, j - 1))));
    let fixed = eps.iter().position(|&e| e == fixed_epsilon).unwrap();
    let monotone_in_population = (1..pops.len()).all(|i| not_above(at(i, fixed), at(i - 1, fixed)));
    let identity_limit = cells
        .iter()
        .filter(|c| c.epsilon >= IDENTITY_EPS)
        .all(|c| c.gap <= 3.0 * c.standard_error + NUMERICAL_FLOOR);
    Ok(TrendReport {
        family,
        passed: monotone_in_epsilon && monotone_in_population && identity_limit,
        cells,
        fixed_epsilon,
        monotone_in_epsilon,
        monotone_in_population,
        identity_limit,
    })
}
