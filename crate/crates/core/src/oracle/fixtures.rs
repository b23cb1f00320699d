//! Reference family of tiny MDPs with exact rational dynamics.
//!
//! States are two-bin histograms `(N - c, c)` where `c / N` is the infected
//! proportion. Each step at most one individual changes status:
//!
//! * up (`c -> c + 1`) with probability `u(a) (N - c)(c + 1) / (N (N + 1))`
//! * down (`c -> c - 1`) with probability `(1/5) c / N`
//!
//! where `u(0) = 4/5` (no quarantine) and `u(1) = 1/5` (half the population
//! quarantined). The reward is `-(4/5 x + 1/5 f(a))` with `f(0) = 0`,
//! `f(1) = 1/2`, and the discount is `9/10`.
//!
//! The second family, [`mixture`], keeps the same states, actions, reward and
//! discount, but draws the next infected count from one of two fixed binomial
//! regimes: `Bin(N, 3/4)` with probability `w(x, a) = v(a) x + 1/10` and
//! `Bin(N, 1/8)` otherwise, with `v(0) = 4/5`, `v(1) = 2/5`. Its rows move by
//! `O(1/N)` in l1 between neighbouring states, so its Lipschitz constant does
//! not grow with `N`. The birth-death rows of neighbouring states are nearly
//! disjoint, giving a constant of order `N`.

use num_rational::Ratio;

use super::grid::{enumerate_states, DEFAULT_STATE_CAP};
use super::mdp::FiniteMdp;
use crate::error::Result;

pub type Q64 = Ratio<i64>;

pub const ACTIONS: usize = 2;

fn q(n: i64, d: i64) -> Q64 {
    Ratio::new(n, d)
}

pub fn up_rate(action: usize) -> Q64 {
    [q(4, 5), q(1, 5)][action]
}

pub fn down_rate() -> Q64 {
    q(1, 5)
}

pub fn quarantine_fraction(action: usize) -> Q64 {
    [q(0, 1), q(1, 2)][action]
}

pub fn discount() -> Q64 {
    q(9, 10)
}

/// Exact transition table, rows `s * ACTIONS + a`. State index `s` holds
/// `N - s` infected, matching the lexicographic grid order.
pub fn exact_transition(population: u32) -> Vec<Q64> {
    let n = population as i64;
    let size = population as usize + 1;
    let mut p = vec![q(0, 1); size * ACTIONS * size];
    for s in 0..size {
        let c = n - s as i64;
        for a in 0..ACTIONS {
            let up = if c < n { up_rate(a) * q((n - c) * (c + 1), n * (n + 1)) } else { q(0, 1) };
            let down = down_rate() * q(c, n);
            let row = (s * ACTIONS + a) * size;
            if c < n {
                p[row + s - 1] = up;
            }
            if c > 0 {
                p[row + s + 1] = down;
            }
            p[row + s] = q(1, 1) - up - down;
        }
    }
    p
}

pub fn reward(population: u32, s: usize, action: usize) -> f64 {
    let infected = q(population as i64 - s as i64, population as i64);
    let r = -(q(4, 5) * infected + q(1, 5) * quarantine_fraction(action));
    *r.numer() as f64 / *r.denom() as f64
}

pub fn to_f64(x: Q64) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    BirthDeath,
    Mixture,
}

impl Family {
    pub fn build(self, population: u32) -> Result<FiniteMdp> {
        match self {
            Family::BirthDeath => birth_death(population),
            Family::Mixture => mixture(population),
        }
    }
}

pub fn birth_death(population: u32) -> Result<FiniteMdp> {
    from_table(population, exact_transition(population).into_iter().map(to_f64).collect())
}

pub type Q128 = Ratio<i128>;

pub fn mixture_pressure(action: usize) -> Q128 {
    [Ratio::new(4, 5), Ratio::new(2, 5)][action]
}

fn binomial(n: u32, p: Q128) -> Vec<Q128> {
    let one = Q128::from_integer(1);
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut choose = 1i128;
    for k in 0..=n {
        out.push(Q128::from_integer(choose) * p.pow(k as i32) * (one - p).pow((n - k) as i32));
        choose = choose * (n - k) as i128 / (k + 1) as i128;
    }
    out
}

/// Exact mixture transition table, same layout as [`exact_transition`].
/// Denominators are `5N 2^(3N)`; `N` up to 36 stays inside `i128`.
pub fn exact_mixture_transition(population: u32) -> Result<Vec<Q128>> {
    if population == 0 || population > 36 {
        return Err(crate::error::input(format!("mixture fixture needs 1 <= N <= 36, got {population}")));
    }
    let n = population as i128;
    let size = population as usize + 1;
    let high = binomial(population, Ratio::new(3, 4));
    let low = binomial(population, Ratio::new(1, 8));
    let mut p = Vec::with_capacity(size * ACTIONS * size);
    for s in 0..size {
        let x = Ratio::new(n - s as i128, n);
        for a in 0..ACTIONS {
            let w = mixture_pressure(a) * x + Ratio::new(1, 10);
            let rest = Q128::from_integer(1) - w;
            // Index s2 holds N - s2 infected.
            p.extend((0..size).map(|s2| w * high[size - 1 - s2] + rest * low[size - 1 - s2]));
        }
    }
    Ok(p)
}

pub fn mixture(population: u32) -> Result<FiniteMdp> {
    let table = exact_mixture_transition(population)?;
    from_table(population, table.iter().map(|x| *x.numer() as f64 / *x.denom() as f64).collect())
}

fn from_table(population: u32, transition: Vec<f64>) -> Result<FiniteMdp> {
    let states = enumerate_states(population, 2, DEFAULT_STATE_CAP)?;
    let size = states.len();
    let reward = (0..size)
        .flat_map(|s| (0..ACTIONS).map(move |a| reward(population, s, a)))
        .collect();
    FiniteMdp::new(states, ACTIONS, transition, reward, to_f64(discount()))
}

/// Largest `||P(.|s,a) - P(.|s',a)||_1 / ||s - s'||_1` over neighbouring
/// states, with histograms normalised to proportions.
pub fn neighbour_lipschitz(mdp: &FiniteMdp) -> f64 {
    let n = mdp.state_count();
    let step = 2.0 / (n - 1) as f64;
    let mut worst = 0.0f64;
    for s in 1..n {
        for a in 0..mdp.actions {
            let d: f64 = mdp.row(s, a).iter().zip(mdp.row(s - 1, a)).map(|(x, y)| (x - y).abs()).sum();
            worst = worst.max(d / step);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_sum_to_one_exactly() {
        for n in [1u32, 5, 10, 20] {
            let p = exact_transition(n);
            for row in p.chunks(n as usize + 1) {
                assert_eq!(row.iter().copied().sum::<Q64>(), q(1, 1));
                assert!(row.iter().all(|x| *x >= q(0, 1)));
            }
        }
    }

    #[test]
    fn hand_values_for_n5() {
        let p = exact_transition(5);
        // s = 5 is c = 0: up = 4/5 * 5 * 1 / 30 = 2/15 under no quarantine.
        let row = &p[(5 * ACTIONS) * 6..(5 * ACTIONS + 1) * 6];
        assert_eq!(row[4], q(2, 15));
        assert_eq!(row[5], q(13, 15));
        // s = 3 is c = 2 under quarantine: up = 1/5 * 3 * 3 / 30 = 3/50, down = 2/25.
        let row = &p[(3 * ACTIONS + 1) * 6..(3 * ACTIONS + 2) * 6];
        assert_eq!((row[2], row[4], row[3]), (q(3, 50), q(2, 25), q(43, 50)));
        assert!((reward(5, 3, 1) + 0.42).abs() < 1e-15);
    }

    #[test]
    fn mixture_rows_sum_to_one_exactly() {
        for n in [1u32, 5, 10, 20, 36] {
            let p = exact_mixture_transition(n).unwrap();
            for row in p.chunks(n as usize + 1) {
                assert_eq!(row.iter().copied().sum::<Q128>(), Q128::from_integer(1));
                assert!(row.iter().all(|x| *x > Q128::from_integer(0)));
            }
        }
        assert!(exact_mixture_transition(37).is_err());
    }

    #[test]
    fn mixture_hand_values_for_n1() {
        // c = 1, no quarantine: w = 9/10, P(c' = 1) = 9/10 * 3/4 + 1/10 * 1/8 = 11/16.
        let p = exact_mixture_transition(1).unwrap();
        assert_eq!(p[0], Ratio::new(11, 16));
        // c = 0 under quarantine: w = 1/10, P(c' = 0) = 1/10 * 1/4 + 9/10 * 7/8 = 13/16.
        assert_eq!(p[7], Ratio::new(13, 16));
    }

    #[test]
    fn lipschitz_constants_scale_as_documented() {
        let bd: Vec<f64> = [5, 10, 20].iter().map(|&n| neighbour_lipschitz(&birth_death(n).unwrap())).collect();
        let mx: Vec<f64> = [5, 10, 20].iter().map(|&n| neighbour_lipschitz(&mixture(n).unwrap())).collect();
        assert!(bd[2] > 1.5 * bd[1] && bd[1] > 1.5 * bd[0], "{bd:?}");
        assert!(mx.iter().all(|&l| l <= 0.8 + 1e-12), "{mx:?}");
    }

    #[test]
    fn builds_valid_mdp() {
        let mdp = birth_death(5).unwrap();
        assert_eq!(mdp.state_count(), 6);
        assert_eq!(mdp.states[0].counts(), &[0, 5]);
        assert_eq!(mdp.discount, 0.9);
    }
}
