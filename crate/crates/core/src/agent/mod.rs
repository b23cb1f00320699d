//! Agents that learn from privatized transitions.

pub mod mlp;
pub mod replay;

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::dprl::PrivatizedTransition;
use crate::error::{Error, Result};
use crate::StateHistogram;
pub use mlp::{Activation, Mlp, RmsProp};
pub use replay::ReplayBuffer;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub batch_size: usize,
    pub target_period: u64,
    pub discount: f64,
    pub eps_start: f64,
    pub kappa: f64,
    pub eps_floor: f64,
    pub buffer_capacity: usize,
    pub learning_rate: f64,
    pub rms_smoothing: f64,
    pub rms_floor: f64,
    pub hidden_width: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            target_period: 800,
            discount: 0.999,
            eps_start: 0.9999,
            kappa: 1e-5,
            eps_floor: 0.03,
            buffer_capacity: 100_000,
            learning_rate: 0.01,
            rms_smoothing: 0.99,
            rms_floor: 1e-8,
            hidden_width: 64,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 || self.target_period == 0 || self.buffer_capacity == 0 || self.hidden_width == 0 {
            return bad("batch_size, target_period, buffer_capacity and hidden_width must be positive".into());
        }
        if !(0.0..1.0).contains(&self.discount) {
            return bad(format!("discount {} outside [0, 1)", self.discount));
        }
        if !(self.eps_floor >= 0.0 && self.eps_start > self.eps_floor && self.eps_start <= 1.0) {
            return bad(format!(
                "need 0 <= eps_floor < eps_start <= 1, got {} and {}",
                self.eps_floor, self.eps_start
            ));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa {} must be positive", self.kappa));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.rms_smoothing) || !(self.rms_floor > 0.0) {
            return bad("rms_smoothing must be in [0, 1) and rms_floor positive".into());
        }
        Ok(())
    }
}

/// `eps_floor + (eps_start - eps_floor) e^{-kappa t}`.
pub fn decay_exploration(t: u64, cfg: &AgentConfig) -> f64 {
    cfg.eps_floor + (cfg.eps_start - cfg.eps_floor) * (-cfg.kappa * t as f64).exp()
}

/// `r + gamma * max_next`.
pub fn td_target(reward: f64, discount: f64, max_next: f64) -> f64 {
    if discount == 0.0 {
        reward
    } else {
        reward + discount * max_next
    }
}

/// Index of the largest value; the smallest index wins ties.
pub fn greedy(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Q-table over (histogram, action); unseen entries read as zero.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularQ {
    actions: usize,
    table: BTreeMap<StateHistogram, Vec<f64>>,
}

impl TabularQ {
    pub fn new(actions: usize) -> Self {
        Self {
            actions,
            table: BTreeMap::new(),
        }
    }

    pub fn get(&self, s: &StateHistogram, a: usize) -> f64 {
        self.table.get(s).map_or(0.0, |row| row[a])
    }

    pub fn set(&mut self, s: &StateHistogram, a: usize, value: f64) {
        let actions = self.actions;
        self.table.entry(s.clone()).or_insert_with(|| vec![0.0; actions])[a] = value;
    }

    pub fn row(&self, s: &StateHistogram) -> Vec<f64> {
        self.table.get(s).cloned().unwrap_or_else(|| vec![0.0; self.actions])
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&StateHistogram, &[f64])> {
        self.table.iter().map(|(s, v)| (s, v.as_slice()))
    }
}

/// Network plus its optimizer state.
#[derive(Clone, Debug)]
pub struct MlpQ {
    pub net: Mlp,
    pub optimizer: RmsProp,
}

#[derive(Clone, Debug)]
pub enum QFunction {
    Mlp(MlpQ),
    Tabular(TabularQ),
}

impl QFunction {
    pub fn mlp<R: Rng + ?Sized>(bins: usize, actions: usize, cfg: &AgentConfig, rng: &mut R) -> Result<Self> {
        let net = Mlp::q_network(bins, actions, cfg.hidden_width, rng)?;
        let optimizer = RmsProp::new(&net, cfg.learning_rate, cfg.rms_smoothing, cfg.rms_floor);
        Ok(QFunction::Mlp(MlpQ { net, optimizer }))
    }

    pub fn tabular(actions: usize) -> Self {
        QFunction::Tabular(TabularQ::new(actions))
    }

    pub fn action_count(&self) -> usize {
        match self {
            QFunction::Mlp(m) => m.net.output_dim(),
            QFunction::Tabular(t) => t.actions,
        }
    }

    pub fn values(&self, s: &StateHistogram) -> Vec<f64> {
        match self {
            QFunction::Mlp(m) => m.net.forward_one(&s.values()),
            QFunction::Tabular(t) => t.row(s),
        }
    }

    /// Largest absolute parameter difference; infinite when the kinds or
    /// shapes differ.
    pub fn max_abs_diff(&self, other: &QFunction) -> f64 {
        match (self, other) {
            (QFunction::Mlp(a), QFunction::Mlp(b)) if a.net.sizes() == b.net.sizes() => a
                .net
                .layers()
                .iter()
                .zip(b.net.layers())
                .flat_map(|(x, y)| {
                    x.weights
                        .iter()
                        .zip(y.weights.iter())
                        .chain(x.bias.iter().zip(y.bias.iter()))
                })
                .fold(0.0, |m, (p, q)| f64::max(m, (p - q).abs())),
            (QFunction::Tabular(a), QFunction::Tabular(b)) => {
                let mut m = 0.0f64;
                for s in a.table.keys().chain(b.table.keys()) {
                    for i in 0..a.actions.max(b.actions) {
                        m = m.max((a.get(s, i) - b.get(s, i)).abs());
                    }
                }
                m
            }
            _ => f64::INFINITY,
        }
    }
}

/// Greedy with probability `1 - eps_explore`, otherwise a uniform action.
pub fn select_action(q: &QFunction, state: &StateHistogram, eps_explore: f64, rng: &mut dyn RngCore) -> usize {
    let p: f64 = rng.gen();
    if p < eps_explore {
        rng.gen_range(0..q.action_count())
    } else {
        greedy(&q.values(state))
    }
}

/// One optimizer step on a batch of `B` transitions drawn with replacement.
/// Returns `None` without touching anything unless the buffer holds more
/// than `B` transitions.
pub fn train_step(
    q: &mut QFunction,
    target: &QFunction,
    buffer: &ReplayBuffer,
    cfg: &AgentConfig,
    rng: &mut dyn RngCore,
) -> Option<f64> {
    let b = cfg.batch_size;
    if buffer.len() <= b {
        return None;
    }
    let batch: Vec<&PrivatizedTransition> = (0..b).map(|_| buffer.sample(rng)).collect();
    let targets: Vec<f64> = batch
        .iter()
        .map(|t| {
            let next = target.values(&t.next_state);
            td_target(t.reward, cfg.discount, next[greedy(&next)])
        })
        .collect();
    match q {
        QFunction::Mlp(m) => {
            let k = m.net.input_dim();
            let mut states = Array2::<f64>::zeros((b, k));
            for (i, t) in batch.iter().enumerate() {
                for j in 0..k {
                    states[[i, j]] = t.state.value(j);
                }
            }
            let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
            let (loss, grads) = m.net.td_gradient(states.view(), &actions, &targets);
            m.optimizer.step(&mut m.net, &grads);
            Some(loss)
        }
        QFunction::Tabular(table) => {
            let mut loss = 0.0;
            for (t, &y) in batch.iter().zip(&targets) {
                let old = table.get(&t.state, t.action);
                loss += 0.5 * (old - y) * (old - y);
                table.set(&t.state, t.action, old + cfg.learning_rate * (y - old));
            }
            Some(loss / b as f64)
        }
    }
}

/// Copies the online parameters into the target at multiples of `D`.
pub fn sync_target(q: &QFunction, target: &mut QFunction, t: u64, cfg: &AgentConfig) -> bool {
    if t % cfg.target_period == 0 {
        *target = q.clone();
        true
    } else {
        false
    }
}

/// The learner side of the loop. Implementations only ever receive
/// privatized data.
pub trait Agent {
    fn act(&mut self, state: &StateHistogram, rng: &mut dyn RngCore) -> usize;

    /// Returns the training loss when an optimizer step ran.
    fn update(&mut self, transition: &PrivatizedTransition, rng: &mut dyn RngCore) -> Option<f64>;

    /// Exploration rate used by the next call to `act`.
    fn exploration(&self) -> f64 {
        0.0
    }
}

/// Epsilon-greedy Q-learning with replay and a periodically synced target.
#[derive(Clone, Debug)]
pub struct DqnAgent {
    cfg: AgentConfig,
    online: QFunction,
    target: QFunction,
    buffer: ReplayBuffer,
    t: u64,
    eps_explore: f64,
}

impl DqnAgent {
    pub fn new(online: QFunction, cfg: AgentConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            target: online.clone(),
            online,
            buffer: ReplayBuffer::new(cfg.buffer_capacity)?,
            t: 0,
            eps_explore: cfg.eps_start,
            cfg,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn online(&self) -> &QFunction {
        &self.online
    }

    pub fn target(&self) -> &QFunction {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

impl Agent for DqnAgent {
    fn act(&mut self, state: &StateHistogram, rng: &mut dyn RngCore) -> usize {
        select_action(&self.online, state, self.eps_explore, rng)
    }

    fn update(&mut self, transition: &PrivatizedTransition, rng: &mut dyn RngCore) -> Option<f64> {
        self.buffer.push(transition.clone());
        let loss = if self.t > self.cfg.batch_size as u64 {
            train_step(&mut self.online, &self.target, &self.buffer, &self.cfg, rng)
        } else {
            None
        };
        sync_target(&self.online, &mut self.target, self.t, &self.cfg);
        self.t += 1;
        self.eps_explore = decay_exploration(self.t, &self.cfg);
        loss
    }

    fn exploration(&self) -> f64 {
        self.eps_explore
    }
}

/// Uniformly random actions; never learns.
#[derive(Clone, Copy, Debug)]
pub struct RandomAgent {
    pub actions: usize,
}

impl Agent for RandomAgent {
    fn act(&mut self, _state: &StateHistogram, rng: &mut dyn RngCore) -> usize {
        rng.gen_range(0..self.actions)
    }

    fn update(&mut self, _transition: &PrivatizedTransition, _rng: &mut dyn RngCore) -> Option<f64> {
        None
    }

    fn exploration(&self) -> f64 {
        1.0
    }
}

/// Always plays the same action.
#[derive(Clone, Copy, Debug)]
pub struct FixedActionAgent {
    pub action: usize,
}

impl Agent for FixedActionAgent {
    fn act(&mut self, _state: &StateHistogram, _rng: &mut dyn RngCore) -> usize {
        self.action
    }

    fn update(&mut self, _transition: &PrivatizedTransition, _rng: &mut dyn RngCore) -> Option<f64> {
        None
    }
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array1};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::mlp::Layer;
    use super::*;

    fn h(c: &[u32]) -> StateHistogram {
        StateHistogram::from_counts(c.to_vec()).unwrap()
    }

    fn tr(s: &StateHistogram, a: usize, r: f64, s2: &StateHistogram) -> PrivatizedTransition {
        PrivatizedTransition {
            state: s.clone(),
            action: a,
            reward: r,
            next_state: s2.clone(),
            tainted: false,
        }
    }

    fn table_q(rows: &[(&StateHistogram, Vec<f64>)]) -> QFunction {
        let mut t = TabularQ::new(rows[0].1.len());
        for (s, v) in rows {
            for (a, &x) in v.iter().enumerate() {
                t.set(s, a, x);
            }
        }
        QFunction::Tabular(t)
    }

    #[test]
    fn defaults_match_reference_configuration() {
        let cfg = AgentConfig::default();
        assert_eq!((cfg.batch_size, cfg.target_period), (128, 800));
        assert_eq!((cfg.discount, cfg.eps_start, cfg.kappa), (0.999, 0.9999, 1e-5));
        cfg.validate().unwrap();
        let broken = AgentConfig { discount: 1.0, ..cfg };
        assert!(broken.validate().is_err());
        let broken = AgentConfig { eps_start: 0.02, ..cfg };
        assert!(broken.validate().is_err());
        let broken = AgentConfig { batch_size: 0, ..cfg };
        assert!(broken.validate().is_err());
    }

    #[test]
    fn greedy_choice_and_ties() {
        let s = h(&[1, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = table_q(&[(&s, vec![-1.0, -0.5, -2.0])]);
        assert_eq!(select_action(&q, &s, 0.0, &mut rng), 1);
        let q = table_q(&[(&s, vec![3.0, 3.0, 3.0])]);
        assert_eq!(select_action(&q, &s, 0.0, &mut rng), 0);
        // Unseen states read as all zeros.
        assert_eq!(select_action(&q, &h(&[0, 1]), 0.0, &mut rng), 0);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let s = h(&[1, 0]);
        let q = table_q(&[(&s, vec![0.0, 9.0, 0.0, 0.0, 0.0])]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            counts[select_action(&q, &s, 1.0, &mut rng)] += 1;
        }
        let e = n as f64 / 5.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 0.999 quantile, 4 degrees of freedom.
        assert!(chi2 < 18.47, "{chi2} {counts:?}");
    }

    #[test]
    fn exploration_schedule() {
        let cfg = AgentConfig::default();
        assert_eq!(decay_exploration(0, &cfg), 0.9999);
        assert!((decay_exploration(100_000, &cfg) - 0.386_806_27).abs() < 1e-8);
        assert!((decay_exploration(u64::MAX, &cfg) - 0.03).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for t in (0..2_000_000).step_by(10_000) {
            let e = decay_exploration(t, &cfg);
            assert!(e < prev);
            prev = e;
        }
    }

    #[test]
    fn td_targets() {
        assert!((td_target(-0.45, 0.999, -10.0) - (-10.44)).abs() < 1e-9);
        assert_eq!(td_target(-0.45, 0.0, f64::NAN), -0.45);
    }

    #[test]
    fn train_step_gate_and_target_untouched() {
        let cfg = AgentConfig { batch_size: 4, ..AgentConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut q = QFunction::mlp(2, 3, &cfg, &mut rng).unwrap();
        let target = q.clone();
        let mut buf = ReplayBuffer::new(10).unwrap();
        let (a, b) = (h(&[1, 1]), h(&[2, 0]));
        for i in 0..4 {
            buf.push(tr(&a, i % 3, -0.5, &b));
        }
        assert_eq!(train_step(&mut q, &target, &buf, &cfg, &mut rng), None);
        assert_eq!(q.max_abs_diff(&target), 0.0);
        buf.push(tr(&b, 0, -1.0, &a));
        let before = target.clone();
        assert!(train_step(&mut q, &target, &buf, &cfg, &mut rng).is_some());
        assert!(q.max_abs_diff(&target) > 0.0);
        assert_eq!(target.max_abs_diff(&before), 0.0);
    }

    #[test]
    fn tabular_unit_rate_reaches_target_in_one_step() {
        // The gate needs more than B entries, so the same transition is
        // stored twice with B = 1.
        let cfg = AgentConfig {
            batch_size: 1,
            discount: 0.999,
            learning_rate: 1.0,
            ..AgentConfig::default()
        };
        let (s, s2) = (h(&[3, 1]), h(&[2, 2]));
        let target = table_q(&[(&s2, vec![-10.0, -12.0])]);
        let mut q = QFunction::tabular(2);
        let mut buf = ReplayBuffer::new(4).unwrap();
        buf.push(tr(&s, 1, -0.45, &s2));
        buf.push(tr(&s, 1, -0.45, &s2));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = td_target(-0.45, 0.999, -10.0);
        for _ in 0..3 {
            train_step(&mut q, &target, &buf, &cfg, &mut rng).unwrap();
            let QFunction::Tabular(t) = &q else { unreachable!() };
            assert_eq!(t.get(&s, 1), y);
            assert_eq!(t.get(&s, 0), 0.0);
        }
        let loss = train_step(&mut q, &target, &buf, &cfg, &mut rng).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn target_sync_schedule() {
        let cfg = AgentConfig { target_period: 5, ..AgentConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = QFunction::mlp(3, 2, &cfg, &mut rng).unwrap();
        let mut target = QFunction::mlp(3, 2, &cfg, &mut rng).unwrap();
        assert!(q.max_abs_diff(&target) > 0.0);
        assert!(sync_target(&q, &mut target, 0, &cfg));
        assert_eq!(q.max_abs_diff(&target), 0.0);
        let other = QFunction::mlp(3, 2, &cfg, &mut rng).unwrap();
        assert!(sync_target(&other, &mut target, 5, &cfg));
        assert_eq!(other.max_abs_diff(&target), 0.0);
        assert!(!sync_target(&q, &mut target, 6, &cfg));
        assert_eq!(other.max_abs_diff(&target), 0.0);
    }

    /// Small ReLU network with a random batch, as used by the gradient check.
    fn gradient_check(seed: u64) -> mlp::FiniteDifference {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::new(&[3, 6, 5, 4, 3, 5, 2], Activation::Relu, &mut rng).unwrap();
        let states = Array2::from_shape_fn((5, 3), |_| rng.gen_range(0.0..1.0));
        let actions: Vec<usize> = (0..5).map(|_| rng.gen_range(0..2)).collect();
        let targets: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        mlp::finite_difference_error(&net, states.view(), &actions, &targets, 1e-5)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..20 {
            let check = gradient_check(seed);
            assert!(check.worst <= 1e-4, "seed {seed}: {check:?}");
            assert!(check.checked > 0);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let run = |seed: u64| {
            let cfg = AgentConfig { batch_size: 8, target_period: 5, ..AgentConfig::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut agent = DqnAgent::new(QFunction::tabular(3), AgentConfig { learning_rate: 0.2, ..cfg }).unwrap();
            let states = [h(&[2, 0]), h(&[1, 1]), h(&[0, 2])];
            let mut s = states[0].clone();
            let mut acts = Vec::new();
            for _ in 0..300 {
                let a = agent.act(&s, &mut rng);
                let s2 = states[rng.gen_range(0..3)].clone();
                agent.update(&tr(&s, a, -(a as f64) * 0.1 - s2.value(1), &s2), &mut rng);
                acts.push(a);
                s = s2;
            }
            let QFunction::Tabular(t) = agent.online().clone() else { unreachable!() };
            (acts, t)
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7).0, run(8).0);
    }

    #[test]
    fn dqn_agent_bookkeeping() {
        let cfg = AgentConfig { batch_size: 3, target_period: 4, kappa: 0.1, ..AgentConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = QFunction::mlp(2, 2, &cfg, &mut rng).unwrap();
        let mut agent = DqnAgent::new(q, cfg).unwrap();
        assert_eq!(agent.exploration(), cfg.eps_start);
        let (a, b) = (h(&[1, 1]), h(&[2, 0]));
        let mut losses = Vec::new();
        for t in 0..10u64 {
            losses.push(agent.update(&tr(&a, (t % 2) as usize, -0.3, &b), &mut rng).is_some());
            assert_eq!(agent.exploration(), decay_exploration(t + 1, &cfg));
        }
        // Training starts once t exceeds B.
        assert_eq!(losses, [false, false, false, false, true, true, true, true, true, true]);
        // Last sync happened at t = 8; one optimizer step (t = 9) since.
        assert!(agent.online().max_abs_diff(agent.target()) > 0.0);
    }

    #[test]
    fn tabular_learning_reaches_value_iteration_fixed_point() {
        // Two states, two actions, exact transition probabilities in quarters;
        // the buffer holds transitions in exactly those proportions.
        let states = [h(&[1, 0]), h(&[0, 1])];
        let p = [[[3, 1], [1, 3]], [[2, 2], [0, 4]]]; // p[s][a][s'] in quarters
        let r = [[-0.2, -0.5], [-1.0, -0.3]];
        let gamma = 0.5;
        let mut exact = [[0.0f64; 2]; 2];
        for _ in 0..200 {
            let v = [exact[0][0].max(exact[0][1]), exact[1][0].max(exact[1][1])];
            let mut next = exact;
            for s in 0..2 {
                for a in 0..2 {
                    next[s][a] = r[s][a] + gamma * (0..2).map(|t| p[s][a][t] as f64 / 4.0 * v[t]).sum::<f64>();
                }
            }
            exact = next;
        }
        let mut buf = ReplayBuffer::new(64).unwrap();
        for s in 0..2 {
            for a in 0..2 {
                for s2 in 0..2 {
                    for _ in 0..p[s][a][s2] {
                        buf.push(tr(&states[s], a, r[s][a], &states[s2]));
                    }
                }
            }
        }
        let mut cfg = AgentConfig {
            batch_size: 15,
            target_period: 1,
            discount: gamma,
            ..AgentConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut q = QFunction::tabular(2);
        let mut target = q.clone();
        for k in 0..40_000u64 {
            cfg.learning_rate = 1.0 / (1.0 + k as f64 / 50.0);
            train_step(&mut q, &target, &buf, &cfg, &mut rng).unwrap();
            sync_target(&q, &mut target, k, &cfg);
        }
        let mut worst = 0.0f64;
        for s in 0..2 {
            for a in 0..2 {
                worst = worst.max((q.values(&states[s])[a] - exact[s][a]).abs());
            }
        }
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn checkpoint_restores_identical_policy() {
        let cfg = AgentConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let QFunction::Mlp(m) = QFunction::mlp(4, 5, &cfg, &mut rng).unwrap() else { unreachable!() };
        let back = Mlp::from_bytes(&m.net.to_bytes(), Activation::Relu).unwrap();
        let s = h(&[10, 20, 30, 40]);
        assert_eq!(back.forward_one(&s.values()), m.net.forward_one(&s.values()));
    }

    #[test]
    fn handmade_network_forward() {
        let net = Mlp::from_layers(
            vec![
                Layer { weights: array![[1.0, -1.0], [0.5, 0.5]], bias: Array1::zeros(2) },
                Layer { weights: array![[1.0, 2.0]], bias: array![0.25] },
            ],
            Activation::Relu,
        )
        .unwrap();
        // hidden = relu((0.2 - 0.8, 0.5)) = (0, 0.5); out = 1.0 + 0.25
        assert_eq!(net.forward_one(&[0.2, 0.8]), vec![1.25]);
    }

    proptest! {
        #[test]
        fn decay_stays_within_bounds(t in 0u64..10_000_000, start in 0.05f64..1.0, kappa in 1e-7f64..1e-2) {
            let cfg = AgentConfig { eps_start: start, kappa, ..AgentConfig::default() };
            let e = decay_exploration(t, &cfg);
            prop_assert!(e >= cfg.eps_floor && e <= start);
        }
    }
}
