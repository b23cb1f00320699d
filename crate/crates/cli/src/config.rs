//! Flat JSON experiment configuration. Missing keys take the defaults below;
//! unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use popdp::agent::AgentConfig;
use popdp::popproc::{Action, SeirsParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Dqn,
    Tabular,
    Random,
    FixedAction,
}

impl AgentKind {
    pub fn learns(self) -> bool {
        matches!(self, AgentKind::Dqn | AgentKind::Tabular)
    }
}

impl std::str::FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dqn" => Ok(AgentKind::Dqn),
            "tabular" => Ok(AgentKind::Tabular),
            "random" => Ok(AgentKind::Random),
            "fixed-action" => Ok(AgentKind::FixedAction),
            _ => Err(format!("unknown agent kind '{s}' (dqn | tabular | random | fixed-action)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// SNAP edge list; when absent a preferential-attachment graph is generated.
    pub graph_path: Option<PathBuf>,
    pub graph_nodes: usize,
    pub graph_edges_per_node: usize,
    /// Seed for the synthetic graph; derived from `seed` when absent.
    pub graph_seed: Option<u64>,

    pub beta: f64,
    pub sigma: f64,
    pub gamma_rate: f64,
    pub rho: f64,
    pub initial_infected: f64,
    pub alpha: f64,

    pub horizon: u64,
    /// Curator sample size; 90% of the population when absent.
    pub sample_size: Option<usize>,
    /// Target epsilon over the whole run; `null` turns privacy off.
    pub epsilon: Option<f64>,
    pub delta: f64,

    pub agent: AgentKind,
    /// Action index for the fixed-action agent.
    pub fixed_action: usize,
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

    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let seirs = SeirsParams::default();
        let agent = AgentConfig::default();
        Self {
            graph_path: None,
            graph_nodes: 5000,
            graph_edges_per_node: 3,
            graph_seed: None,
            beta: seirs.beta,
            sigma: seirs.sigma,
            gamma_rate: seirs.gamma_rate,
            rho: seirs.rho,
            initial_infected: 0.01,
            alpha: 0.8,
            horizon: 500_000,
            sample_size: None,
            epsilon: None,
            delta: 1e-5,
            agent: AgentKind::Dqn,
            fixed_action: 0,
            batch_size: agent.batch_size,
            target_period: agent.target_period,
            discount: agent.discount,
            eps_start: agent.eps_start,
            kappa: agent.kappa,
            eps_floor: agent.eps_floor,
            buffer_capacity: agent.buffer_capacity,
            learning_rate: agent.learning_rate,
            rms_smoothing: agent.rms_smoothing,
            rms_floor: agent.rms_floor,
            hidden_width: agent.hidden_width,
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Canonical form: every key present, fixed order.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn seirs(&self) -> SeirsParams {
        SeirsParams {
            beta: self.beta,
            sigma: self.sigma,
            gamma_rate: self.gamma_rate,
            rho: self.rho,
        }
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            batch_size: self.batch_size,
            target_period: self.target_period,
            discount: self.discount,
            eps_start: self.eps_start,
            kappa: self.kappa,
            eps_floor: self.eps_floor,
            buffer_capacity: self.buffer_capacity,
            learning_rate: self.learning_rate,
            rms_smoothing: self.rms_smoothing,
            rms_floor: self.rms_floor,
            hidden_width: self.hidden_width,
        }
    }

    pub fn sample_size_for(&self, population: usize) -> usize {
        self.sample_size
            .unwrap_or_else(|| ((0.9 * population as f64).round() as usize).max(1))
    }

    /// Checks everything that does not need the graph.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        self.seirs().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.agent_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha = {} is outside [0, 1]", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.initial_infected) {
            return bad(format!("initial_infected = {} is outside [0, 1]", self.initial_infected));
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.sample_size == Some(0) {
            return bad("sample_size must be positive".into());
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return bad(format!("epsilon = {eps} must be positive and finite (null turns privacy off)"));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta = {} is outside (0, 1)", self.delta));
        }
        if self.fixed_action >= Action::standard_set().len() {
            return bad(format!("fixed_action {} is not an action index", self.fixed_action));
        }
        if self.graph_path.is_none() && (self.graph_edges_per_node == 0 || self.graph_nodes <= self.graph_edges_per_node) {
            return bad(format!(
                "synthetic graph needs 0 < graph_edges_per_node < graph_nodes (got {} and {})",
                self.graph_edges_per_node, self.graph_nodes
            ));
        }
        Ok(())
    }
}

/// Parses `off`, `inf` or a number.
pub fn parse_epsilon(s: &str) -> Result<Option<f64>, String> {
    match s.trim() {
        "off" | "inf" | "none" => Ok(None),
        t => {
            let v: f64 = t.parse().map_err(|_| format!("bad epsilon '{t}'"))?;
            if v.is_infinite() {
                Ok(None)
            } else {
                Ok(Some(v))
            }
        }
    }
}

pub fn format_epsilon(eps: Option<f64>) -> String {
    eps.map_or_else(|| "off".to_string(), |e| e.to_string())
}
