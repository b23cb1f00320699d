//! The privatized interaction loop.
//!
//! Every state the agent sees, and every reward it learns from, is computed
//! from a mechanism output. Raw states are kept in a separate diagnostics
//! record for evaluation only. Values carry a taint bit that records whether
//! they were derived from raw data, so a miswired loop is caught by
//! [`taint_audit`] rather than by inspection.

use rand::RngCore;
use serde::Serialize;

use crate::accounting::{advanced_composition, PrivacyBudget};
use crate::agent::Agent;
use crate::dpmech::{IdentityMechanism, MechanismParams, ProjectedLaplace, StateMechanism};
use crate::error::{Error, Result};
use crate::popproc::{EpidemicEnv, Status};
use crate::seed::rng_from;
use crate::StateHistogram;

/// One agent-visible step. `action` indexes the environment's action set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrivatizedTransition {
    pub state: StateHistogram,
    pub action: usize,
    pub reward: f64,
    pub next_state: StateHistogram,
    pub tainted: bool,
}

#[derive(Clone, Copy, Debug)]
pub enum Privacy {
    /// No mechanism; the agent sees the curator's histogram directly.
    Off,
    Private {
        mechanism: MechanismParams,
        budget: PrivacyBudget,
    },
}

impl Privacy {
    /// Projected Laplace at the per-step budget of `budget`.
    pub fn from_budget(budget: PrivacyBudget, population: u32) -> Result<Self> {
        Ok(Privacy::Private {
            mechanism: MechanismParams::new(budget.epsilon_step(), population)?,
            budget,
        })
    }
}

/// Deliberate miswirings, for exercising [`taint_audit`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Leak {
    /// The agent observes the raw next state instead of the released one.
    RawObservation,
    /// The reward is computed from the raw next state.
    RawReward,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: u64,
    pub action: usize,
    pub action_fraction: f64,
    pub reward_privatized: f64,
    /// Released state the action was chosen on.
    pub state_privatized: StateHistogram,
    pub eps_explore: f64,
    pub loss: Option<f64>,
}

/// Evaluation-only record; nothing here is reachable from the agent.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Curator histograms `s_0 ..= s_T`.
    pub raw_states: Vec<StateHistogram>,
    /// `r(s_{t+1}, a_t)` on the raw histogram.
    pub reward_true: Vec<f64>,
    /// Whole-population exposed plus infected proportion after each step.
    pub infected_prop_true: Vec<f64>,
    /// `r(s_0, a_{-1})` with `a_{-1}` the no-quarantine action.
    pub initial_reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunLog {
    pub steps: Vec<StepRecord>,
    /// Every transition handed to `Agent::update`.
    pub transitions: Vec<PrivatizedTransition>,
    /// Taint bits of the states handed to `Agent::act`.
    pub observation_taint: Vec<bool>,
    pub mechanism_calls: u64,
    pub epsilon_per_call: Vec<f64>,
    pub budget: Option<PrivacyBudget>,
    #[serde(skip)]
    pub diagnostics: Diagnostics,
}

impl RunLog {
    /// `advanced_composition(eps', calls - 1, delta)`, or `None` without privacy.
    pub fn achieved_epsilon(&self) -> Option<f64> {
        let budget = self.budget?;
        let calls = self.mechanism_calls.saturating_sub(1);
        Some(advanced_composition(budget.epsilon_step(), calls, budget.delta()).expect("validated budget"))
    }
}

#[derive(Clone, Debug)]
struct Tracked<T> {
    value: T,
    tainted: bool,
}

fn raw<T>(value: T) -> Tracked<T> {
    Tracked { value, tainted: true }
}

fn released<T>(value: T) -> Tracked<T> {
    Tracked { value, tainted: false }
}

/// Independent streams for the environment, the mechanism and the agent.
pub fn stream_seeds(seed: u64) -> [u64; 3] {
    [0, 1, 2].map(|i| crate::seed::derive_seed(seed, i))
}

pub fn run(env: &mut EpidemicEnv, agent: &mut dyn Agent, privacy: &Privacy, horizon: u64, seed: u64) -> Result<RunLog> {
    run_inner(env, agent, privacy, horizon, seed, None)
}

/// [`run`] with a deliberate leak wired in.
pub fn run_leaky(
    env: &mut EpidemicEnv,
    agent: &mut dyn Agent,
    privacy: &Privacy,
    horizon: u64,
    seed: u64,
    leak: Leak,
) -> Result<RunLog> {
    run_inner(env, agent, privacy, horizon, seed, Some(leak))
}

fn run_inner(
    env: &mut EpidemicEnv,
    agent: &mut dyn Agent,
    privacy: &Privacy,
    horizon: u64,
    seed: u64,
    leak: Option<Leak>,
) -> Result<RunLog> {
    let (mechanism, budget): (Box<dyn StateMechanism>, Option<PrivacyBudget>) = match *privacy {
        Privacy::Off => (Box::new(IdentityMechanism), None),
        Privacy::Private { mechanism, budget } => {
            let (got, want) = (mechanism.epsilon_step(), budget.epsilon_step());
            if (got - want).abs() > 1e-12 * want {
                return Err(Error::Config(format!(
                    "mechanism epsilon {got} differs from the per-step budget {want}"
                )));
            }
            if mechanism.population() as usize != env.sample_size() {
                return Err(Error::Config(format!(
                    "mechanism population {} differs from sample size {}",
                    mechanism.population(),
                    env.sample_size()
                )));
            }
            if horizon > budget.horizon() {
                return Err(Error::Config(format!(
                    "run of {horizon} steps exceeds the budgeted horizon {}",
                    budget.horizon()
                )));
            }
            (Box::new(ProjectedLaplace(mechanism)), Some(budget))
        }
    };
    let [env_seed, mech_seed, agent_seed] = stream_seeds(seed);
    let (mut env_rng, mut mech_rng, mut agent_rng) = (rng_from(env_seed, 0), rng_from(mech_seed, 0), rng_from(agent_seed, 0));

    let mut log = RunLog {
        steps: Vec::with_capacity(horizon as usize),
        transitions: Vec::with_capacity(horizon as usize),
        observation_taint: Vec::with_capacity(horizon as usize),
        mechanism_calls: 0,
        epsilon_per_call: Vec::with_capacity(horizon as usize + 1),
        budget,
        diagnostics: Diagnostics::default(),
    };
    let release = |s: &StateHistogram, log: &mut RunLog, rng: &mut dyn RngCore| {
        log.mechanism_calls += 1;
        log.epsilon_per_call.push(mechanism.epsilon_step());
        released(mechanism.privatize(s, rng))
    };

    let no_quarantine = env
        .actions()
        .iter()
        .position(|a| a.fraction() == 0.0)
        .unwrap_or(0);
    let s0 = raw(env.observe(&mut env_rng));
    log.diagnostics.initial_reward = env.reward(&s0.value, no_quarantine);
    let mut current = release(&s0.value, &mut log, &mut mech_rng);
    log.diagnostics.raw_states.push(s0.value);

    for t in 0..horizon {
        let eps_explore = agent.exploration();
        log.observation_taint.push(current.tainted);
        let action = agent.act(&current.value, &mut agent_rng);
        env.advance(action, &mut env_rng);
        let next_raw = raw(env.observe(&mut env_rng));
        let mut next = release(&next_raw.value, &mut log, &mut mech_rng);
        let mut reward = Tracked {
            value: env.reward(&next.value, action),
            tainted: next.tainted,
        };
        match leak {
            Some(Leak::RawObservation) => next = next_raw.clone(),
            Some(Leak::RawReward) => {
                reward = Tracked {
                    value: env.reward(&next_raw.value, action),
                    tainted: next_raw.tainted,
                }
            }
            None => {}
        }
        let transition = PrivatizedTransition {
            state: current.value.clone(),
            action,
            reward: reward.value,
            next_state: next.value.clone(),
            tainted: current.tainted || reward.tainted || next.tainted,
        };
        let loss = agent.update(&transition, &mut agent_rng);

        let pop = env.population();
        log.diagnostics.reward_true.push(env.reward(&next_raw.value, action));
        log.diagnostics
            .infected_prop_true
            .push(pop.proportion(Status::Exposed) + pop.proportion(Status::Infected));
        log.diagnostics.raw_states.push(next_raw.value);
        log.steps.push(StepRecord {
            t,
            action,
            action_fraction: env.actions()[action].fraction(),
            reward_privatized: transition.reward,
            state_privatized: transition.state.clone(),
            eps_explore,
            loss,
        });
        log.transitions.push(transition);
        current = next;
    }
    Ok(log)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TaintReport {
    pub passed: bool,
    pub tainted_transitions: usize,
    pub tainted_observations: usize,
}

/// Passes iff nothing the agent received was derived from raw data.
pub fn taint_audit(log: &RunLog) -> TaintReport {
    let tainted_transitions = log.transitions.iter().filter(|t| t.tainted).count();
    let tainted_observations = log.observation_taint.iter().filter(|&&t| t).count();
    TaintReport {
        passed: tainted_transitions == 0 && tainted_observations == 0,
        tainted_transitions,
        tainted_observations,
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::agent::{AgentConfig, DqnAgent, FixedActionAgent, QFunction, RandomAgent};
    use crate::popproc::{reward, Action, ContactGraph, PopulationState, SamplerConfig, SeirsParams};

    fn env(seed: u64, sample: usize) -> EpidemicEnv {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = ContactGraph::preferential_attachment(120, 2, &mut rng).unwrap();
        let pop = PopulationState::initial(120, 0.1, &mut rng).unwrap();
        EpidemicEnv::new(
            graph,
            SeirsParams::default(),
            SamplerConfig { sample_size: sample },
            Action::standard_set(),
            0.8,
            pop,
        )
        .unwrap()
    }

    fn private(eps: f64, horizon: u64, sample: u32) -> Privacy {
        Privacy::from_budget(PrivacyBudget::new(eps, 1e-5, horizon).unwrap(), sample).unwrap()
    }

    fn dqn(seed: u64) -> DqnAgent {
        let cfg = AgentConfig {
            batch_size: 16,
            target_period: 20,
            kappa: 1e-2,
            ..AgentConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DqnAgent::new(QFunction::mlp(4, 5, &cfg, &mut rng).unwrap(), cfg).unwrap()
    }

    #[test]
    fn counts_mechanism_calls() {
        let mut e = env(0, 100);
        let mut agent = RandomAgent { actions: 5 };
        let log = run(&mut e, &mut agent, &private(1.0, 1000, 100), 1000, 1).unwrap();
        assert_eq!(log.mechanism_calls, 1001);
        assert_eq!(log.steps.len(), 1000);
        assert_eq!(log.diagnostics.raw_states.len(), 1001);
        let step = private(1.0, 1000, 100);
        let Privacy::Private { budget, .. } = step else { unreachable!() };
        assert!(log.epsilon_per_call.iter().all(|&e| e == budget.epsilon_step()));
        assert!(log.achieved_epsilon().unwrap() <= budget.achieved());
        assert!(taint_audit(&log).passed);
    }

    #[test]
    fn zero_horizon_makes_one_release() {
        let mut e = env(0, 100);
        let mut agent = dqn(0);
        let log = run(&mut e, &mut agent, &private(1.0, 10, 100), 0, 1).unwrap();
        assert_eq!(log.mechanism_calls, 1);
        assert!(log.transitions.is_empty());
        assert_eq!(agent.steps(), 0);
    }

    #[test]
    fn huge_epsilon_releases_raw_states() {
        let horizon = 200;
        let delta = 1e-5f64;
        let target = 1e9 * 2.0 * (2.0 * horizon as f64 * (1.0 / delta).ln()).sqrt();
        let budget = PrivacyBudget::new(target, delta, horizon).unwrap();
        assert!((budget.epsilon_step() - 1e9).abs() < 1e-3);
        let privacy = Privacy::from_budget(budget, 100).unwrap();
        let mut e = env(3, 100);
        let log = run(&mut e, &mut RandomAgent { actions: 5 }, &privacy, horizon, 4).unwrap();
        for (step, raw) in log.steps.iter().zip(&log.diagnostics.raw_states) {
            assert_eq!(&step.state_privatized, raw);
        }
        for (i, t) in log.transitions.iter().enumerate() {
            assert_eq!(t.reward, log.diagnostics.reward_true[i]);
        }
    }

    #[test]
    fn rewards_are_recomputable_from_released_data() {
        let mut e = env(5, 100);
        let actions = Action::standard_set();
        let log = run(&mut e, &mut dqn(1), &private(2.0, 300, 100), 300, 6).unwrap();
        for t in &log.transitions {
            assert_eq!(reward(&t.next_state, actions[t.action], 0.8).to_bits(), t.reward.to_bits());
        }
        for w in log.transitions.windows(2) {
            assert_eq!(w[0].next_state, w[1].state);
        }
    }

    #[test]
    fn configuration_mismatches_are_rejected() {
        let mut e = env(0, 100);
        let budget = PrivacyBudget::new(1.0, 1e-5, 100).unwrap();
        let wrong_eps = Privacy::Private {
            mechanism: MechanismParams::new(budget.epsilon_step() * 1.01, 100).unwrap(),
            budget,
        };
        let mut agent = RandomAgent { actions: 5 };
        assert!(matches!(run(&mut e, &mut agent, &wrong_eps, 10, 0), Err(Error::Config(_))));
        let wrong_n = Privacy::from_budget(budget, 99).unwrap();
        assert!(matches!(run(&mut e, &mut agent, &wrong_n, 10, 0), Err(Error::Config(_))));
        let ok = Privacy::from_budget(budget, 100).unwrap();
        assert!(matches!(run(&mut e, &mut agent, &ok, 101, 0), Err(Error::Config(_))));
    }

    #[test]
    fn leaks_fail_the_audit() {
        for leak in [Leak::RawObservation, Leak::RawReward] {
            let mut e = env(0, 100);
            let log = run_leaky(&mut e, &mut dqn(2), &private(1.0, 50, 100), 50, 7, leak).unwrap();
            let report = taint_audit(&log);
            assert!(!report.passed, "{leak:?}");
            assert_eq!(report.tainted_transitions, 50);
        }
        let mut e = env(0, 100);
        let log = run(&mut e, &mut dqn(2), &private(1.0, 50, 100), 50, 7).unwrap();
        assert!(taint_audit(&log).passed);
    }

    #[test]
    fn same_seed_same_log() {
        let go = |seed| {
            let mut e = env(9, 100);
            run(&mut e, &mut dqn(3), &private(1.0, 400, 100), 400, seed).unwrap()
        };
        assert_eq!(go(11), go(11));
        assert_ne!(go(11).steps, go(12).steps);
    }

    #[test]
    fn privacy_off_matches_plain_interaction_loop() {
        let horizon = 150;
        let fixed = 2;
        let mut e = env(4, 90);
        let log = run(&mut e, &mut FixedActionAgent { action: fixed }, &Privacy::Off, horizon, 21).unwrap();

        let mut e = env(4, 90);
        let [env_seed, _, _] = stream_seeds(21);
        let mut rng = rng_from(env_seed, 0);
        let mut s = e.observe(&mut rng);
        assert_eq!(log.diagnostics.raw_states[0], s);
        for step in &log.steps {
            assert_eq!(step.state_privatized, s);
            e.advance(fixed, &mut rng);
            s = e.observe(&mut rng);
            assert_eq!(step.reward_privatized, e.reward(&s, fixed));
        }
        assert_eq!(log.achieved_epsilon(), None);
    }
}
