//! One seeded run from a configuration, and its CSV log.
//!
//! Seed layout under the master seed `s`: the loop's environment, mechanism
//! and agent streams come from `derive_seed(s, 0..=2)`, the synthetic graph
//! from `derive_seed(s, 3)` unless `graph_seed` is set, the initial statuses
//! from stream 4 and the network weights from stream 5.

use std::fs;
use std::path::Path;

use popdp::accounting::PrivacyBudget;
use popdp::agent::{Agent, DqnAgent, FixedActionAgent, QFunction, RandomAgent};
use popdp::dprl::{self, Privacy, RunLog};
use popdp::popproc::{Action, ContactGraph, EpidemicEnv, PopulationState, SamplerConfig};
use popdp::seed::{derive_seed, rng_from};
use serde::Serialize;

use crate::config::{AgentKind, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::graph::{load_graph, LoadStats};

pub const CSV_COLUMNS: [&str; 7] = [
    "t",
    "action_fraction",
    "reward_privatized",
    "reward_true",
    "infected_prop_true",
    "eps_explore",
    "loss",
];

pub fn graph_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.graph_seed.unwrap_or_else(|| derive_seed(cfg.seed, 3))
}

/// Validates the config, then loads or generates the contact graph.
pub fn build_graph(cfg: &ExperimentConfig) -> CliResult<(ContactGraph, Option<LoadStats>)> {
    cfg.validate()?;
    match &cfg.graph_path {
        Some(path) => {
            let (g, stats) = load_graph(path)?;
            Ok((g, Some(stats)))
        }
        None => {
            let mut rng = rng_from(graph_seed(cfg), 0);
            let g = ContactGraph::preferential_attachment(cfg.graph_nodes, cfg.graph_edges_per_node, &mut rng)?;
            Ok((g, None))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Footer {
    pub seed: u64,
    pub horizon: u64,
    pub population: usize,
    pub sample_size: usize,
    pub epsilon_target: Option<f64>,
    pub delta: Option<f64>,
    pub epsilon_step: Option<f64>,
    pub mechanism_calls: u64,
    pub achieved_epsilon: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ExperimentRun {
    pub log: RunLog,
    pub footer: Footer,
}

impl ExperimentRun {
    /// Mean true reward over the last `ceil(T / 10)` steps.
    pub fn trailing_reward(&self) -> f64 {
        trailing_mean(&self.log.diagnostics.reward_true)
    }

    pub fn trailing_infected(&self) -> f64 {
        trailing_mean(&self.log.diagnostics.infected_prop_true)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_COLUMNS).expect("in-memory write");
        let d = &self.log.diagnostics;
        for (i, step) in self.log.steps.iter().enumerate() {
            w.write_record([
                step.t.to_string(),
                step.action_fraction.to_string(),
                step.reward_privatized.to_string(),
                d.reward_true[i].to_string(),
                d.infected_prop_true[i].to_string(),
                step.eps_explore.to_string(),
                step.loss.map_or_else(String::new, |l| l.to_string()),
            ])
            .expect("in-memory write");
        }
        let mut out = String::from_utf8(w.into_inner().expect("flush")).expect("utf8");
        out.push_str("# ");
        out.push_str(&serde_json::to_string(&self.footer).expect("footer serializes"));
        out.push('\n');
        out
    }
}

pub fn trailing_window(len: usize) -> usize {
    len.div_ceil(10)
}

fn trailing_mean(xs: &[f64]) -> f64 {
    let w = trailing_window(xs.len());
    if w == 0 {
        return f64::NAN;
    }
    xs[xs.len() - w..].iter().sum::<f64>() / w as f64
}

fn make_agent(cfg: &ExperimentConfig, bins: usize, actions: usize) -> CliResult<Box<dyn Agent>> {
    let agent_cfg = cfg.agent_config();
    Ok(match cfg.agent {
        AgentKind::Dqn => {
            let mut rng = rng_from(cfg.seed, 5);
            Box::new(DqnAgent::new(QFunction::mlp(bins, actions, &agent_cfg, &mut rng)?, agent_cfg)?)
        }
        AgentKind::Tabular => Box::new(DqnAgent::new(QFunction::tabular(actions), agent_cfg)?),
        AgentKind::Random => Box::new(RandomAgent { actions }),
        AgentKind::FixedAction => Box::new(FixedActionAgent {
            action: cfg.fixed_action,
        }),
    })
}

/// Runs on an already built graph; sweeps share one graph across replicas.
pub fn run_on_graph(cfg: &ExperimentConfig, graph: &ContactGraph) -> CliResult<ExperimentRun> {
    cfg.validate()?;
    let population = graph.node_count();
    let sample_size = cfg.sample_size_for(population);
    if sample_size > population {
        return Err(CliError::Config(format!(
            "sample_size {sample_size} exceeds the population of {population}"
        )));
    }
    let privacy = match cfg.epsilon {
        None => Privacy::Off,
        Some(eps) => Privacy::from_budget(PrivacyBudget::new(eps, cfg.delta, cfg.horizon)?, sample_size as u32)?,
    };
    let initial = PopulationState::initial(population, cfg.initial_infected, &mut rng_from(cfg.seed, 4))?;
    let actions = Action::standard_set();
    let mut env = EpidemicEnv::new(
        graph.clone(),
        cfg.seirs(),
        SamplerConfig { sample_size },
        actions.clone(),
        cfg.alpha,
        initial,
    )?;
    let mut agent = make_agent(cfg, 4, actions.len())?;
    let log = dprl::run(&mut env, agent.as_mut(), &privacy, cfg.horizon, cfg.seed)?;
    let footer = Footer {
        seed: cfg.seed,
        horizon: cfg.horizon,
        population,
        sample_size,
        epsilon_target: cfg.epsilon,
        delta: cfg.epsilon.map(|_| cfg.delta),
        epsilon_step: log.budget.map(|b| b.epsilon_step()),
        mechanism_calls: log.mechanism_calls,
        achieved_epsilon: log.achieved_epsilon(),
    };
    Ok(ExperimentRun { log, footer })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<ExperimentRun> {
    let (graph, _) = build_graph(cfg)?;
    run_on_graph(cfg, &graph)
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}
