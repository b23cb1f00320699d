use std::collections::VecDeque;

use rand::{Rng, RngCore};
use serde::Serialize;

use super::grid::index_of;
use super::mdp::{check_stochastic, policy_evaluation, state_values_policy, FiniteMdp};
use super::mechanism::MechanismMatrix;
use crate::dpmech::StateMechanism;
use crate::error::{input, Error, Result};

pub const STATIONARY_TOL: f64 = 1e-12;
pub const STATIONARY_MAX_ITERS: usize = 1_000_000;

/// The privatized model seen by a learner acting on released states.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InducedModel {
    /// Behaviour policy `pi(a | s~)`.
    pub policy: Vec<f64>,
    /// Stationary law of the joint chain, indexed `s * n + s~`.
    pub joint_stationary: Vec<f64>,
    /// `nu(s | a)`, indexed `a * n + s`.
    pub state_given_action: Vec<f64>,
    /// `nu(s | s~, a)`, indexed `(s~ * actions + a) * n + s`.
    pub posterior: Vec<f64>,
    /// Same states, actions, rewards and discount as the base MDP, with the
    /// induced transitions.
    pub mdp: FiniteMdp,
    /// `|| mu P - mu ||_1` of the returned stationary law.
    pub stationary_residual: f64,
}

/// One step of the joint chain from `mu`. With
/// `w(s, a) = sum_{s~} mu(s, s~) pi(a | s~)` and
/// `m(s') = sum_{s, a} w(s, a) P(s' | s, a)`, the next law is
/// `m(s') P_M(s~' | s')`.
fn joint_step(mdp: &FiniteMdp, policy: &[f64], pm: &MechanismMatrix, mu: &[f64], out: &mut [f64]) {
    let n = mdp.state_count();
    let k = mdp.actions;
    let mut m = vec![0.0; n];
    for s in 0..n {
        for a in 0..k {
            let w: f64 = (0..n).map(|t| mu[s * n + t] * policy[t * k + a]).sum();
            if w == 0.0 {
                continue;
            }
            for (next, p) in m.iter_mut().zip(mdp.row(s, a)) {
                *next += w * p;
            }
        }
    }
    for s in 0..n {
        for t in 0..n {
            out[s * n + t] = m[s] * pm.get(s, t);
        }
    }
}

/// Checks that the joint chain restricted to pairs the mechanism can emit
/// is irreducible and aperiodic.
fn check_ergodic(mdp: &FiniteMdp, pm: &MechanismMatrix) -> Result<()> {
    let n = mdp.state_count();
    // With a full-support policy, (s, s~) -> (s', s~') is possible iff some
    // action moves s to s' and the mechanism can emit s~' from s'.
    let reach: Vec<Vec<usize>> = (0..n)
        .map(|s| (0..n).filter(|&s2| (0..mdp.actions).any(|a| mdp.row(s, a)[s2] > 0.0)).collect())
        .collect();
    let emits: Vec<Vec<usize>> = (0..n).map(|s| (0..n).filter(|&t| pm.get(s, t) > 0.0).collect()).collect();
    let nodes: Vec<usize> = (0..n).flat_map(|s| emits[s].iter().map(move |&t| s * n + t)).collect();
    let successors = |node: usize| {
        let s = node / n;
        reach[s]
            .iter()
            .flat_map(|&s2| emits[s2].iter().map(move |&t| s2 * n + t))
            .collect::<Vec<_>>()
    };
    let start = nodes[0];
    let bfs = |forward: bool| {
        let mut level = vec![usize::MAX; n * n];
        level[start] = 0;
        let mut queue = VecDeque::from([start]);
        let preds: Vec<Vec<usize>> = if forward {
            Vec::new()
        } else {
            let mut p = vec![Vec::new(); n * n];
            for &u in &nodes {
                for v in successors(u) {
                    p[v].push(u);
                }
            }
            p
        };
        while let Some(u) = queue.pop_front() {
            let next = if forward { successors(u) } else { preds[u].clone() };
            for v in next {
                if level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        level
    };
    let fwd = bfs(true);
    let bwd = bfs(false);
    if nodes.iter().any(|&v| fwd[v] == usize::MAX || bwd[v] == usize::MAX) {
        return Err(Error::NotErgodic("joint chain is reducible".into()));
    }
    let mut period = 0usize;
    for &u in &nodes {
        for v in successors(u) {
            let d = (fwd[u] + 1).abs_diff(fwd[v]);
            period = gcd(period, d);
        }
    }
    if period != 1 {
        return Err(Error::NotErgodic(format!("joint chain has period {period}")));
    }
    Ok(())
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Builds the induced transition model for behaviour policy `pi(a | s~)`.
///
/// The posterior `nu(s | s~, a)` follows the Bayes form
/// `P_M(s~ | s) nu(s | a) / sum_s' P_M(s~ | s') nu(s' | a)`. When `s~` has
/// zero probability under `a` the posterior is taken to be the point mass
/// on `s = s~`.
pub fn induced_transition(mdp: &FiniteMdp, policy: &[f64], pm: &MechanismMatrix) -> Result<InducedModel> {
    let n = mdp.state_count();
    let k = mdp.actions;
    if pm.size() != n || pm.states != mdp.states {
        return Err(input("mechanism matrix and MDP use different state grids"));
    }
    if policy.len() != n * k {
        return Err(input("policy table has the wrong size"));
    }
    check_stochastic(policy, k, "policy")?;
    if policy.iter().any(|&p| p <= 0.0) {
        return Err(Error::Assumption("behaviour policy must give every action positive probability".into()));
    }
    check_ergodic(mdp, pm)?;

    let mut mu = vec![0.0; n * n];
    for s in 0..n {
        for t in 0..n {
            mu[s * n + t] = pm.get(s, t) / n as f64;
        }
    }
    let mut next = vec![0.0; n * n];
    let mut converged = false;
    for _ in 0..STATIONARY_MAX_ITERS {
        joint_step(mdp, policy, pm, &mu, &mut next);
        let diff: f64 = mu.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut mu, &mut next);
        if diff <= STATIONARY_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotErgodic("power iteration did not converge".into()));
    }
    let total: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|x| *x /= total);
    joint_step(mdp, policy, pm, &mu, &mut next);
    let stationary_residual: f64 = mu.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();

    let mut nu_a = vec![0.0; k * n];
    for a in 0..k {
        for s in 0..n {
            nu_a[a * n + s] = (0..n).map(|t| mu[s * n + t] * policy[t * k + a]).sum();
        }
        let z: f64 = nu_a[a * n..(a + 1) * n].iter().sum();
        nu_a[a * n..(a + 1) * n].iter_mut().for_each(|x| *x /= z);
    }

    let mut posterior = vec![0.0; n * k * n];
    for t in 0..n {
        for a in 0..k {
            let row = &mut posterior[(t * k + a) * n..(t * k + a + 1) * n];
            for s in 0..n {
                row[s] = pm.get(s, t) * nu_a[a * n + s];
            }
            let z: f64 = row.iter().sum();
            if z > 0.0 {
                row.iter_mut().for_each(|x| *x /= z);
            } else {
                row[t] = 1.0;
            }
        }
    }

    // P_bar(. | s, a) = sum_s' P(s' | s, a) P_M(. | s')
    let mut p_bar = vec![0.0; n * k * n];
    for s in 0..n {
        for a in 0..k {
            let out = &mut p_bar[(s * k + a) * n..(s * k + a + 1) * n];
            for (s2, p) in mdp.row(s, a).iter().enumerate() {
                if *p == 0.0 {
                    continue;
                }
                for (o, m) in out.iter_mut().zip(pm.row(s2)) {
                    *o += p * m;
                }
            }
        }
    }
    let mut transition = vec![0.0; n * k * n];
    for t in 0..n {
        for a in 0..k {
            let out = &mut transition[(t * k + a) * n..(t * k + a + 1) * n];
            for s in 0..n {
                let w = posterior[(t * k + a) * n + s];
                if w == 0.0 {
                    continue;
                }
                for (o, p) in out.iter_mut().zip(&p_bar[(s * k + a) * n..(s * k + a + 1) * n]) {
                    *o += w * p;
                }
            }
        }
    }
    let induced = FiniteMdp::new(mdp.states.clone(), k, transition, mdp.reward.clone(), mdp.discount)?;
    Ok(InducedModel {
        policy: policy.to_vec(),
        joint_stationary: mu,
        state_given_action: nu_a,
        posterior,
        mdp: induced,
        stationary_residual,
    })
}

/// Empirical `P(s~' | s~, a)` from one long trajectory of the real process.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryEstimate {
    pub steps: u64,
    /// Indexed like the induced transition table.
    pub probs: Vec<f64>,
    /// Batch-means standard error per entry; `NaN` where `(s~, a)` was never
    /// visited.
    pub standard_error: Vec<f64>,
    pub visits: Vec<u64>,
}

fn sample_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// Simulates `s_t`, releases `s~_t` with the actual mechanism, acts with
/// `pi(. | s~_t)` and counts released-state transitions per action.
pub fn trajectory_estimate(
    mdp: &FiniteMdp,
    policy: &[f64],
    mechanism: &dyn StateMechanism,
    steps: u64,
    batches: u64,
    rng: &mut dyn RngCore,
) -> Result<TrajectoryEstimate> {
    let n = mdp.state_count();
    let k = mdp.actions;
    if batches < 2 || steps < batches {
        return Err(input("need at least two batches and one step per batch"));
    }
    let index = index_of(&mdp.states);
    let release = |s: usize, rng: &mut dyn RngCore| -> Result<usize> {
        let out = mechanism.privatize(&mdp.states[s], rng);
        index.get(&out).copied().ok_or_else(|| input("mechanism output is off the grid"))
    };
    let per_batch = steps / batches;
    let cells = n * k;
    let mut counts = vec![vec![0u64; cells * n]; batches as usize];
    let mut visits = vec![vec![0u64; cells]; batches as usize];
    let mut s = 0usize;
    let mut released = release(s, rng)?;
    // Burn in so the trajectory starts near stationarity.
    for _ in 0..10_000 {
        let a = sample_row(&policy[released * k..(released + 1) * k], rng);
        s = sample_row(mdp.row(s, a), rng);
        released = release(s, rng)?;
    }
    for b in 0..batches as usize {
        for _ in 0..per_batch {
            let a = sample_row(&policy[released * k..(released + 1) * k], rng);
            s = sample_row(mdp.row(s, a), rng);
            let next = release(s, rng)?;
            let cell = released * k + a;
            visits[b][cell] += 1;
            counts[b][cell * n + next] += 1;
            released = next;
        }
    }
    let nb = batches as f64;
    let mut probs = vec![0.0; cells * n];
    let mut standard_error = vec![f64::NAN; cells * n];
    let mut total_visits = vec![0u64; cells];
    for cell in 0..cells {
        let d: u64 = visits.iter().map(|v| v[cell]).sum();
        total_visits[cell] = d;
        if d == 0 {
            continue;
        }
        let d_mean = d as f64 / nb;
        for j in 0..n {
            let c: u64 = counts.iter().map(|c| c[cell * n + j]).sum();
            let p = c as f64 / d as f64;
            probs[cell * n + j] = p;
            let ss: f64 = (0..batches as usize)
                .map(|b| {
                    let e = counts[b][cell * n + j] as f64 - p * visits[b][cell] as f64;
                    (e / d_mean).powi(2)
                })
                .sum();
            standard_error[cell * n + j] = (ss / (nb * (nb - 1.0))).sqrt();
        }
    }
    Ok(TrajectoryEstimate {
        steps: per_batch * batches,
        probs,
        standard_error,
        visits: total_visits,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationLemmaReport {
    /// `|| Q^pi - Q~^pi ||_inf`
    pub lhs: f64,
    /// `gamma / (1 - gamma) || (P - P~) V^pi ||_inf`
    pub rhs: f64,
    pub holds: bool,
}

pub const EVAL_TOL: f64 = 1e-12;

/// `|| (P - P~) V ||_inf` over all `(s, a)`.
pub fn model_gap(base: &FiniteMdp, other: &FiniteMdp, v: &[f64]) -> f64 {
    let n = base.state_count();
    let mut worst = 0.0f64;
    for s in 0..n {
        for a in 0..base.actions {
            let d: f64 = base
                .row(s, a)
                .iter()
                .zip(other.row(s, a))
                .zip(v)
                .map(|((p, q), v)| (p - q) * v)
                .sum();
            worst = worst.max(d.abs());
        }
    }
    worst
}

/// Both sides of the simulation lemma for evaluation policy `pi_bar`.
pub fn check_simulation_lemma(mdp: &FiniteMdp, induced: &InducedModel, pi_bar: &[f64]) -> Result<SimulationLemmaReport> {
    let q = policy_evaluation(mdp, pi_bar, EVAL_TOL)?;
    let q_tilde = policy_evaluation(&induced.mdp, pi_bar, EVAL_TOL)?;
    let v = state_values_policy(&q, pi_bar, mdp.actions);
    let lhs = super::mdp::sup_diff(&q, &q_tilde);
    let g = mdp.discount;
    let rhs = if g == 0.0 { 0.0 } else { g / (1.0 - g) * model_gap(mdp, &induced.mdp, &v) };
    // Both value tables are within EVAL_TOL / (1 - gamma) of their fixed points.
    let slack = 2.0 * EVAL_TOL / (1.0 - g) + 1e-12 * rhs;
    Ok(SimulationLemmaReport {
        lhs,
        rhs,
        holds: lhs <= rhs + slack,
    })
}
