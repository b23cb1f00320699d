//! Privacy budget arithmetic under advanced composition.
//!
//! Each step uses a pure `eps'`-DP mechanism (per-step delta is zero), and the
//! whole of `delta` is spent as composition slack.

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(input(format!("delta = {delta} is outside (0, 1)")));
    }
    Ok(())
}

/// `sqrt(2 T ln(1/delta)) eps' + T eps' (e^eps' - 1)`.
pub fn advanced_composition(eps_step: f64, horizon: u64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(eps_step >= 0.0) {
        return Err(input(format!("per-step epsilon {eps_step} is negative")));
    }
    let t = horizon as f64;
    Ok((2.0 * t * (1.0 / delta).ln()).sqrt() * eps_step + t * eps_step * eps_step.exp_m1())
}

/// `eps / (2 sqrt(2 T ln(1/delta)))`.
pub fn per_step_budget(eps_target: f64, delta: f64, horizon: u64) -> Result<f64> {
    check_delta(delta)?;
    if !(eps_target > 0.0) || !eps_target.is_finite() {
        return Err(input(format!("target epsilon must be positive, got {eps_target}")));
    }
    if horizon == 0 {
        return Err(input("horizon must be at least 1"));
    }
    Ok(eps_target / (2.0 * (2.0 * horizon as f64 * (1.0 / delta).ln()).sqrt()))
}

/// Target `(eps, delta)` over `T` steps and the per-step budget derived from it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    epsilon_target: f64,
    delta: f64,
    horizon: u64,
    epsilon_step: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon_target: f64, delta: f64, horizon: u64) -> Result<Self> {
        let epsilon_step = per_step_budget(epsilon_target, delta, horizon)?;
        Ok(Self {
            epsilon_target,
            delta,
            horizon,
            epsilon_step,
        })
    }

    pub fn epsilon_target(&self) -> f64 {
        self.epsilon_target
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn epsilon_step(&self) -> f64 {
        self.epsilon_step
    }

    /// Epsilon actually guaranteed after `T` compositions of `eps'`.
    pub fn achieved(&self) -> f64 {
        advanced_composition(self.epsilon_step, self.horizon, self.delta).expect("validated budget")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epsilon_target: f64,
    pub epsilon_achieved: f64,
}

/// Target versus achieved epsilon for each target.
pub fn achieved_curve(delta: f64, horizon: u64, eps_targets: &[f64]) -> Result<Vec<CurvePoint>> {
    eps_targets
        .iter()
        .map(|&eps| {
            let budget = PrivacyBudget::new(eps, delta, horizon)?;
            Ok(CurvePoint {
                epsilon_target: eps,
                epsilon_achieved: budget.achieved(),
            })
        })
        .collect()
}
