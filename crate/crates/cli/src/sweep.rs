//! Replicated runs over a list of privacy levels.

use popdp::seed::derive_seed;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{format_epsilon, ExperimentConfig};
use crate::error::CliResult;
use crate::experiment::{build_graph, graph_seed, run_on_graph, trailing_window};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon: Option<f64>,
    pub seeds: usize,
    pub window: usize,
    pub mean_reward: f64,
    pub sd_reward: f64,
    pub mean_infected: f64,
    pub sd_infected: f64,
    /// Trailing-window mean true reward of each replica, in replica order.
    pub replica_rewards: Vec<f64>,
}

/// Seed of replica `i`; the same replicas are reused at every epsilon.
pub fn replica_seed(master: u64, replica: usize) -> u64 {
    derive_seed(master, 1000 + replica as u64)
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Every replica runs on the graph of the master config. Runs are spread over
/// the rayon pool and merged in `(epsilon, replica)` order.
pub fn sweep(cfg: &ExperimentConfig, epsilons: &[Option<f64>], seed_count: usize) -> CliResult<Vec<SweepRow>> {
    if seed_count == 0 || epsilons.is_empty() {
        return Err(crate::CliError::Config("sweep needs at least one epsilon and one seed".into()));
    }
    for &eps in epsilons {
        ExperimentConfig {
            epsilon: eps,
            ..cfg.clone()
        }
        .validate()?;
    }
    let (graph, _) = build_graph(cfg)?;
    let shared_graph_seed = graph_seed(cfg);
    let jobs: Vec<(usize, usize)> = (0..epsilons.len())
        .flat_map(|e| (0..seed_count).map(move |r| (e, r)))
        .collect();
    let results: Vec<CliResult<(f64, f64)>> = jobs
        .par_iter()
        .map(|&(e, r)| {
            let run_cfg = ExperimentConfig {
                epsilon: epsilons[e],
                seed: replica_seed(cfg.seed, r),
                graph_seed: Some(shared_graph_seed),
                ..cfg.clone()
            };
            let run = run_on_graph(&run_cfg, &graph)?;
            Ok((run.trailing_reward(), run.trailing_infected()))
        })
        .collect();
    let results = results.into_iter().collect::<CliResult<Vec<_>>>()?;
    Ok(epsilons
        .iter()
        .enumerate()
        .map(|(e, &epsilon)| {
            let chunk = &results[e * seed_count..(e + 1) * seed_count];
            let rewards: Vec<f64> = chunk.iter().map(|r| r.0).collect();
            let infected: Vec<f64> = chunk.iter().map(|r| r.1).collect();
            let (mean_reward, sd_reward) = mean_sd(&rewards);
            let (mean_infected, sd_infected) = mean_sd(&infected);
            SweepRow {
                epsilon,
                seeds: seed_count,
                window: trailing_window(cfg.horizon as usize),
                mean_reward,
                sd_reward,
                mean_infected,
                sd_infected,
                replica_rewards: rewards,
            }
        })
        .collect())
}

pub const SWEEP_COLUMNS: [&str; 7] = [
    "epsilon",
    "seeds",
    "window",
    "mean_reward",
    "sd_reward",
    "mean_infected",
    "sd_infected",
];

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_COLUMNS).expect("in-memory write");
    for r in rows {
        w.write_record([
            format_epsilon(r.epsilon),
            r.seeds.to_string(),
            r.window.to_string(),
            r.mean_reward.to_string(),
            r.sd_reward.to_string(),
            r.mean_infected.to_string(),
            r.sd_infected.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_sd() {
        assert_eq!(mean_sd(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn replica_seeds_are_distinct() {
        let s: std::collections::HashSet<u64> = (0..100).map(|r| replica_seed(7, r)).collect();
        assert_eq!(s.len(), 100);
    }
}
