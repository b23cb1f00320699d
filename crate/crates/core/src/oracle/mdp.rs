use serde::Serialize;

use crate::error::{input, Result};
use crate::StateHistogram;

/// Dense finite MDP. Transition rows are indexed by `s * actions + a`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiniteMdp {
    pub states: Vec<StateHistogram>,
    pub actions: usize,
    pub transition: Vec<f64>,
    pub reward: Vec<f64>,
    pub discount: f64,
}

pub(crate) fn check_stochastic(rows: &[f64], width: usize, what: &str) -> Result<()> {
    for (i, row) in rows.chunks(width).enumerate() {
        if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(input(format!("{what} row {i} has an invalid entry")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(input(format!("{what} row {i} sums to {sum}")));
        }
    }
    Ok(())
}

impl FiniteMdp {
    pub fn new(
        states: Vec<StateHistogram>,
        actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        let n = states.len();
        if n == 0 || actions == 0 {
            return Err(input("MDP needs at least one state and one action"));
        }
        if transition.len() != n * actions * n || reward.len() != n * actions {
            return Err(input("transition or reward table has the wrong size"));
        }
        check_stochastic(&transition, n, "transition")?;
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(input("rewards must be finite"));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(input(format!("discount {discount} outside [0, 1)")));
        }
        Ok(Self {
            states,
            actions,
            transition,
            reward,
            discount,
        })
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let n = self.states.len();
        let start = (s * self.actions + a) * n;
        &self.transition[start..start + n]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.actions + a]
    }

    fn backup(&self, v: &[f64], q: &mut [f64]) {
        for s in 0..self.states.len() {
            for a in 0..self.actions {
                let ev: f64 = self.row(s, a).iter().zip(v).map(|(p, v)| p * v).sum();
                q[s * self.actions + a] = self.reward(s, a) + self.discount * ev;
            }
        }
    }
}

/// Q table, `s * actions + a`.
pub type QTable = Vec<f64>;

pub fn state_values_greedy(q: &[f64], actions: usize) -> Vec<f64> {
    q.chunks(actions)
        .map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

pub fn state_values_policy(q: &[f64], policy: &[f64], actions: usize) -> Vec<f64> {
    q.chunks(actions)
        .zip(policy.chunks(actions))
        .map(|(q, p)| q.iter().zip(p).map(|(q, p)| q * p).sum())
        .collect()
}

/// Iterates `Q <- r + gamma P max Q` until successive iterates are within
/// `tol`; the returned table then has Bellman residual at most `tol`.
pub fn value_iteration(mdp: &FiniteMdp, tol: f64) -> Result<QTable> {
    if !(tol > 0.0) {
        return Err(input("tolerance must be positive"));
    }
    let mut q = mdp.reward.clone();
    let mut next = q.clone();
    loop {
        mdp.backup(&state_values_greedy(&q, mdp.actions), &mut next);
        let diff = sup_diff(&q, &next);
        std::mem::swap(&mut q, &mut next);
        if diff <= tol {
            return Ok(q);
        }
    }
}

/// `Q^pi` for a stochastic policy given as `pi(a|s)` rows.
pub fn policy_evaluation(mdp: &FiniteMdp, policy: &[f64], tol: f64) -> Result<QTable> {
    if policy.len() != mdp.reward.len() {
        return Err(input("policy table has the wrong size"));
    }
    check_stochastic(policy, mdp.actions, "policy")?;
    if !(tol > 0.0) {
        return Err(input("tolerance must be positive"));
    }
    let mut q = mdp.reward.clone();
    let mut next = q.clone();
    loop {
        mdp.backup(&state_values_policy(&q, policy, mdp.actions), &mut next);
        let diff = sup_diff(&q, &next);
        std::mem::swap(&mut q, &mut next);
        if diff <= tol {
            return Ok(q);
        }
    }
}

pub fn bellman_residual(mdp: &FiniteMdp, q: &[f64]) -> f64 {
    let mut next = vec![0.0; q.len()];
    mdp.backup(&state_values_greedy(q, mdp.actions), &mut next);
    sup_diff(q, &next)
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

/// Deterministic greedy policy as `pi(a|s)` rows; ties go to the smallest action.
pub fn greedy_policy(q: &[f64], actions: usize) -> Vec<f64> {
    let mut pi = vec![0.0; q.len()];
    for (s, row) in q.chunks(actions).enumerate() {
        pi[s * actions + crate::agent::greedy(row)] = 1.0;
    }
    pi
}

pub fn uniform_policy(states: usize, actions: usize) -> Vec<f64> {
    vec![1.0 / actions as f64; states * actions]
}

#[cfg(test)]
pub(crate) mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::oracle::grid::{enumerate_states, DEFAULT_STATE_CAP};

    pub(crate) fn random_mdp(states: usize, actions: usize, discount: f64, rng: &mut ChaCha8Rng) -> FiniteMdp {
        let grid = enumerate_states(states as u32 - 1, 2, DEFAULT_STATE_CAP).unwrap();
        let mut p = Vec::new();
        for _ in 0..states * actions {
            let row: Vec<f64> = (0..states).map(|_| rng.gen_range(0.0..1.0f64).powi(3)).collect();
            let sum: f64 = row.iter().sum();
            p.extend(row.iter().map(|x| x / sum));
        }
        let r = (0..states * actions).map(|_| rng.gen_range(-1.0..0.0)).collect();
        FiniteMdp::new(grid, actions, p, r, discount).unwrap()
    }

    fn single(r: f64, discount: f64) -> FiniteMdp {
        let s = enumerate_states(1, 1, 10).unwrap();
        FiniteMdp::new(s, 1, vec![1.0], vec![r], discount).unwrap()
    }

    #[test]
    fn geometric_series() {
        let q = value_iteration(&single(-0.45, 0.999), 1e-10).unwrap();
        assert!((q[0] + 450.0).abs() < 1e-6, "{}", q[0]);
        let q = value_iteration(&single(-0.45, 0.0), 1e-10).unwrap();
        assert_eq!(q[0], -0.45);
    }

    #[test]
    fn rejects_bad_models() {
        let s = enumerate_states(1, 1, 10).unwrap();
        assert!(FiniteMdp::new(s.clone(), 1, vec![1.0], vec![0.0], 1.0).is_err());
        assert!(FiniteMdp::new(s.clone(), 1, vec![0.9], vec![0.0], 0.5).is_err());
        assert!(FiniteMdp::new(s, 1, vec![1.0], vec![f64::NAN], 0.5).is_err());
    }

    #[test]
    fn optimal_policy_is_unimprovable() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..10 {
            let mdp = random_mdp(5, 3, 0.9, &mut rng);
            let q = value_iteration(&mdp, 1e-12).unwrap();
            assert!(bellman_residual(&mdp, &q) <= 1e-12);
            let pi = greedy_policy(&q, 3);
            let q_pi = policy_evaluation(&mdp, &pi, 1e-12).unwrap();
            assert!(sup_diff(&q, &q_pi) < 1e-9);
            // One step of improvement on Q^pi picks the same actions.
            assert_eq!(greedy_policy(&q_pi, 3), pi);
        }
    }

    #[test]
    fn policy_evaluation_matches_linear_solve_for_two_states() {
        let states = enumerate_states(1, 2, 10).unwrap();
        let p = vec![0.5, 0.5, 0.2, 0.8];
        let r = vec![1.0, -1.0];
        let mdp = FiniteMdp::new(states, 1, p, r, 0.8).unwrap();
        let q = policy_evaluation(&mdp, &[1.0, 1.0], 1e-13).unwrap();
        // (I - 0.8 P) v = r solved by hand.
        let (a, b, c, d) = (1.0 - 0.4, -0.4, -0.16, 1.0 - 0.64);
        let det = a * d - b * c;
        let v0 = (d * 1.0 - b * -1.0) / det;
        let v1 = (a * -1.0 - c * 1.0) / det;
        assert!((q[0] - v0).abs() < 1e-11 && (q[1] - v1).abs() < 1e-11);
    }
}
