//! Verification suites over the oracle. Each suite returns a typed report;
//! [`run_suite`] serializes it for the CLI.

use std::path::Path;

use popdp::accounting::{achieved_curve, advanced_composition, per_step_budget, CurvePoint};
use popdp::dpmech::{IdentityMechanism, MechanismParams, ProjectedLaplace};
use popdp::oracle::fixtures::{birth_death, mixture, Family};
use popdp::oracle::grid::{enumerate_states, DEFAULT_STATE_CAP};
use popdp::oracle::induced::{check_simulation_lemma, induced_transition, trajectory_estimate, SimulationLemmaReport};
use popdp::oracle::mdp::{uniform_policy, FiniteMdp};
use popdp::oracle::mechanism::{bootstrap_se, estimate_mechanism_matrix, MechanismMatrix};
use popdp::oracle::pufferfish::{correlation_attack_demo, pufferfish_audit, AttackPosterior, AuditBudget, PufferfishReport, PufferfishScenario};
use popdp::oracle::tail::{tail_bound_check, TailReport};
use popdp::oracle::trend::{theorem2_trend, TrendReport};
use popdp::seed::rng_from;
use rand::Rng;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::experiment::write_file;

pub const SUITES: [&str; 5] = ["accounting", "tail", "induced", "trend", "pufferfish"];

// Accounting.

pub const ACCOUNTING_HORIZON: u64 = 500_000;
pub const ACCOUNTING_DELTAS: [f64; 2] = [1e-2, 1e-5];
pub const ACCOUNTING_TARGETS: [f64; 9] = [0.1, 0.2, 0.5, 1.0, 2.0, 3.0, 5.0, 7.5, 10.0];
pub const REFERENCE_STEP: f64 = 1.4736e-3;
pub const REFERENCE_STEP_TOL: f64 = 1e-7;
pub const REFERENCE_ACHIEVED: f64 = 6.0866;
pub const REFERENCE_ACHIEVED_TOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveRow {
    pub delta: f64,
    pub horizon: u64,
    #[serde(flatten)]
    pub point: CurvePoint,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AccountingReport {
    pub reference_step: f64,
    pub reference_achieved: f64,
    pub reference_passed: bool,
    pub curve: Vec<CurveRow>,
    pub curve_passed: bool,
    pub passed: bool,
}

pub fn accounting_suite() -> CliResult<AccountingReport> {
    let step = per_step_budget(10.0, 1e-5, ACCOUNTING_HORIZON)?;
    let achieved = advanced_composition(step, ACCOUNTING_HORIZON, 1e-5)?;
    let reference_passed =
        (step - REFERENCE_STEP).abs() <= REFERENCE_STEP_TOL && (achieved - REFERENCE_ACHIEVED).abs() <= REFERENCE_ACHIEVED_TOL;
    let mut curve = Vec::new();
    for delta in ACCOUNTING_DELTAS {
        for point in achieved_curve(delta, ACCOUNTING_HORIZON, &ACCOUNTING_TARGETS)? {
            curve.push(CurveRow {
                delta,
                horizon: ACCOUNTING_HORIZON,
                point,
            });
        }
    }
    let curve_passed = curve.iter().all(|r| r.point.epsilon_achieved <= r.point.epsilon_target);
    Ok(AccountingReport {
        reference_step: step,
        reference_achieved: achieved,
        reference_passed,
        curve,
        curve_passed,
        passed: reference_passed && curve_passed,
    })
}

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["delta", "horizon", "epsilon_target", "epsilon_achieved"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.delta.to_string(),
            r.horizon.to_string(),
            r.point.epsilon_target.to_string(),
            r.point.epsilon_achieved.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

// Tail bound.

pub const TAIL_POPULATIONS: [u32; 2] = [20, 100];
pub const TAIL_BINS: [usize; 2] = [2, 4];
pub const TAIL_EPSILONS: [f64; 3] = [0.5, 1.0, 5.0];
pub const TAIL_ALPHAS: [f64; 3] = [0.05, 0.1, 0.2];
pub const TAIL_TRIALS: u64 = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailSuiteReport {
    pub cells: Vec<TailReport>,
    pub passed: bool,
}

pub fn tail_suite(seed: u64) -> CliResult<TailSuiteReport> {
    let mut cells = Vec::new();
    for n in TAIL_POPULATIONS {
        for k in TAIL_BINS {
            for eps in TAIL_EPSILONS {
                let mut rng = rng_from(seed, cells.len() as u64);
                cells.push(tail_bound_check(n, k, eps, &TAIL_ALPHAS, TAIL_TRIALS, &mut rng)?);
            }
        }
    }
    Ok(TailSuiteReport {
        passed: cells.iter().all(|c| c.passed),
        cells,
    })
}

// Induced model and simulation lemma.

pub const INDUCED_POPULATION: u32 = 5;
pub const INDUCED_EPSILON: f64 = 1.0;
pub const INDUCED_MATRIX_TRIALS: u64 = 1_000_000;
pub const INDUCED_BOOTSTRAP: usize = 30;
pub const TRAJECTORY_STEPS: u64 = 10_000_000;
pub const TRAJECTORY_BATCHES: u64 = 100;
pub const LEMMA_INSTANCES: u64 = 50;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntryComparison {
    pub state: usize,
    pub action: usize,
    pub next: usize,
    pub model: f64,
    pub trajectory: f64,
    pub combined_se: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InducedSuiteReport {
    pub identity_exact: bool,
    pub epsilon_step: f64,
    pub trajectory_steps: u64,
    pub entries: usize,
    pub max_abs_z: f64,
    pub worst: Vec<EntryComparison>,
    pub trajectory_passed: bool,
    pub passed: bool,
}

pub fn induced_suite(seed: u64) -> CliResult<InducedSuiteReport> {
    let mdp = birth_death(INDUCED_POPULATION)?;
    let n = mdp.state_count();
    let policy = uniform_policy(n, mdp.actions);

    let mut identity_exact = true;
    for pi in [policy.clone(), skewed_policy(n, mdp.actions)] {
        let m = induced_transition(&mdp, &pi, &MechanismMatrix::identity(mdp.states.clone()))?;
        identity_exact &= m.mdp.transition == mdp.transition;
    }

    let mut rng = rng_from(seed, 0);
    let pm = estimate_mechanism_matrix(INDUCED_POPULATION, 2, INDUCED_EPSILON, INDUCED_MATRIX_TRIALS, &mut rng)?;
    let model_of = |pm: &MechanismMatrix| -> popdp::Result<Vec<f64>> { Ok(induced_transition(&mdp, &policy, pm)?.mdp.transition) };
    let model = model_of(&pm)?;
    let model_se = bootstrap_se(&pm, INDUCED_BOOTSTRAP, &mut rng, model_of)?;

    let mech = ProjectedLaplace(MechanismParams::new(INDUCED_EPSILON, INDUCED_POPULATION)?);
    let mut traj_rng = rng_from(seed, 1);
    let est = trajectory_estimate(&mdp, &policy, &mech, TRAJECTORY_STEPS, TRAJECTORY_BATCHES, &mut traj_rng)?;

    let mut comparisons = Vec::with_capacity(model.len());
    for (i, (&p, &q)) in model.iter().zip(&est.probs).enumerate() {
        let se = (model_se[i].powi(2) + est.standard_error[i].powi(2)).sqrt();
        let diff = (p - q).abs();
        let z = if diff == 0.0 { 0.0 } else { diff / se };
        comparisons.push(EntryComparison {
            state: i / (n * mdp.actions),
            action: i / n % mdp.actions,
            next: i % n,
            model: p,
            trajectory: q,
            combined_se: se,
            z,
        });
    }
    let entries = comparisons.len();
    let trajectory_passed = comparisons.iter().all(|c| c.z <= 3.0);
    comparisons.sort_by(|a, b| b.z.total_cmp(&a.z));
    let max_abs_z = comparisons.first().map_or(0.0, |c| c.z);
    comparisons.truncate(5);
    Ok(InducedSuiteReport {
        identity_exact,
        epsilon_step: INDUCED_EPSILON,
        trajectory_steps: est.steps,
        entries,
        max_abs_z,
        worst: comparisons,
        trajectory_passed,
        passed: identity_exact && trajectory_passed,
    })
}

fn skewed_policy(states: usize, actions: usize) -> Vec<f64> {
    (0..states)
        .flat_map(|s| {
            let p = 0.2 + 0.6 * s as f64 / states as f64;
            let mut row = vec![(1.0 - p) / (actions - 1) as f64; actions];
            row[0] = p;
            row
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaInstance {
    pub index: u64,
    pub kind: String,
    pub epsilon_step: f64,
    pub discount: f64,
    #[serde(flatten)]
    pub report: SimulationLemmaReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaSuiteReport {
    pub instances: Vec<LemmaInstance>,
    pub passed: bool,
}

fn random_mdp<R: Rng>(rng: &mut R) -> CliResult<FiniteMdp> {
    let states = enumerate_states(3, 2, DEFAULT_STATE_CAP)?;
    let (n, k) = (states.len(), 2);
    let mut p = Vec::with_capacity(n * k * n);
    for _ in 0..n * k {
        let row: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0f64)).collect();
        let sum: f64 = row.iter().sum();
        p.extend(row.iter().map(|x| x / sum));
    }
    let r = (0..n * k).map(|_| rng.gen_range(-1.0..=0.0)).collect();
    Ok(FiniteMdp::new(states, k, p, r, rng.gen_range(0.5..0.95))?)
}

/// Forty random dense MDPs on the `N = 3` grid and ten fixture instances, each
/// with a random mechanism level and a random full-support behaviour policy
/// that is also the evaluation policy.
pub fn lemma_suite(seed: u64) -> CliResult<LemmaSuiteReport> {
    let mut instances = Vec::new();
    for index in 0..LEMMA_INSTANCES {
        let mut rng = rng_from(seed, 100 + index);
        let (kind, mdp) = if index < 40 {
            ("random".to_string(), random_mdp(&mut rng)?)
        } else {
            let pop = 2 + (index - 40) as u32 / 2;
            if index % 2 == 0 {
                (format!("birth_death_{pop}"), birth_death(pop)?)
            } else {
                (format!("mixture_{pop}"), mixture(pop)?)
            }
        };
        let pop = mdp.states[0].population();
        let eps = rng.gen_range(0.2..3.0);
        let pm = estimate_mechanism_matrix(pop, 2, eps, 10_000, &mut rng)?;
        let policy: Vec<f64> = (0..mdp.state_count())
            .flat_map(|_| {
                let p = rng.gen_range(0.1..0.9);
                [p, 1.0 - p]
            })
            .collect();
        let induced = induced_transition(&mdp, &policy, &pm)?;
        let report = check_simulation_lemma(&mdp, &induced, &policy)?;
        instances.push(LemmaInstance {
            index,
            kind,
            epsilon_step: eps,
            discount: mdp.discount,
            report,
        });
    }
    Ok(LemmaSuiteReport {
        passed: instances.iter().all(|i| i.report.holds),
        instances,
    })
}

// Trend.

pub const TREND_POPULATIONS: [u32; 3] = [5, 10, 20];
pub const TREND_EPSILONS: [f64; 4] = [0.5, 2.0, 10.0, 1e9];
pub const TREND_FIXED_EPSILON: f64 = 2.0;
pub const TREND_TRIALS: u64 = 100_000;
pub const TREND_BOOTSTRAP: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrendSuiteReport {
    pub mixture: TrendReport,
    /// Reported for comparison only; does not affect `passed`.
    pub birth_death: TrendReport,
    pub passed: bool,
}

pub fn trend_suite(seed: u64) -> CliResult<TrendSuiteReport> {
    let run = |family, stream| {
        theorem2_trend(
            family,
            &TREND_POPULATIONS,
            &TREND_EPSILONS,
            TREND_FIXED_EPSILON,
            TREND_TRIALS,
            TREND_BOOTSTRAP,
            &mut rng_from(seed, stream),
        )
    };
    let mixture = run(Family::Mixture, 0)?;
    let birth_death = run(Family::BirthDeath, 1)?;
    Ok(TrendSuiteReport {
        passed: mixture.passed,
        mixture,
        birth_death,
    })
}

// Pufferfish.

pub const PUFFERFISH_TARGET: f64 = 2.0;
pub const PUFFERFISH_DELTA: f64 = 1e-2;
pub const PUFFERFISH_TRIALS: u64 = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PufferfishSuiteReport {
    pub projected_laplace: PufferfishReport,
    pub identity: PufferfishReport,
    pub identity_fails: bool,
    pub attack: AttackPosterior,
    pub attack_passed: bool,
    pub passed: bool,
}

pub fn pufferfish_suite(seed: u64) -> CliResult<PufferfishSuiteReport> {
    let sc = PufferfishScenario::reference();
    let budget = AuditBudget {
        epsilon_step: per_step_budget(PUFFERFISH_TARGET, PUFFERFISH_DELTA, sc.horizon as u64)?,
        delta: PUFFERFISH_DELTA,
    };
    let mech = ProjectedLaplace(MechanismParams::new(budget.epsilon_step, sc.sample_size as u32)?);
    let projected_laplace = pufferfish_audit(&sc, &mech, budget, PUFFERFISH_TRIALS, &mut rng_from(seed, 0))?;
    let identity = pufferfish_audit(&sc, &IdentityMechanism, budget, PUFFERFISH_TRIALS, &mut rng_from(seed, 1))?;
    let attack = correlation_attack_demo([0.5, 0.5], 100, 1.0, 80.0)?;
    let identity_fails = !identity.passed;
    let attack_passed = attack.all_infected >= 0.999;
    Ok(PufferfishSuiteReport {
        passed: projected_laplace.passed && identity_fails && attack_passed,
        projected_laplace,
        identity,
        identity_fails,
        attack,
        attack_passed,
    })
}

// Driver.

#[derive(Clone, Debug, Serialize)]
pub struct SuiteOutcome {
    pub name: String,
    pub passed: bool,
    pub report: serde_json::Value,
    /// Extra `(file name, contents)` pairs written next to the JSON report.
    #[serde(skip)]
    pub files: Vec<(String, String)>,
}

fn outcome<T: Serialize>(name: &str, passed: bool, report: &T) -> CliResult<SuiteOutcome> {
    Ok(SuiteOutcome {
        name: name.to_string(),
        passed,
        report: serde_json::to_value(report)?,
        files: Vec::new(),
    })
}

pub fn run_suite(name: &str, seed: u64) -> CliResult<SuiteOutcome> {
    match name {
        "accounting" => {
            let r = accounting_suite()?;
            let mut o = outcome(name, r.passed, &r)?;
            o.files.push(("accounting_curve.csv".into(), curve_csv(&r.curve)));
            Ok(o)
        }
        "tail" => {
            let r = tail_suite(seed)?;
            outcome(name, r.passed, &r)
        }
        "induced" => {
            #[derive(Serialize)]
            struct Both {
                induced: InducedSuiteReport,
                simulation_lemma: LemmaSuiteReport,
            }
            let both = Both {
                induced: induced_suite(seed)?,
                simulation_lemma: lemma_suite(seed)?,
            };
            outcome(name, both.induced.passed && both.simulation_lemma.passed, &both)
        }
        "trend" => {
            let r = trend_suite(seed)?;
            outcome(name, r.passed, &r)
        }
        "pufferfish" => {
            let r = pufferfish_suite(seed)?;
            outcome(name, r.passed, &r)
        }
        _ => Err(CliError::Config(format!(
            "unknown suite '{name}' (expected one of {})",
            SUITES.join(", ")
        ))),
    }
}

/// Writes `<dir>/<suite>.json` and any extra files.
pub fn write_outcome(outcome: &SuiteOutcome, dir: &Path) -> CliResult<()> {
    let json = serde_json::to_string_pretty(outcome)?;
    write_file(&dir.join(format!("{}.json", outcome.name)), &json)?;
    for (file, contents) in &outcome.files {
        write_file(&dir.join(file), contents)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accounting_reference_values() {
        let r = accounting_suite().unwrap();
        assert!(r.passed, "{r:#?}");
        assert_eq!(r.curve.len(), 18);
        let csv = curve_csv(&r.curve);
        assert_eq!(csv.lines().count(), 19);
    }

    #[test]
    fn unknown_suite_is_a_config_error() {
        assert!(matches!(run_suite("nope", 0), Err(CliError::Config(_))));
    }

    #[test]
    fn skewed_policy_rows_are_distributions() {
        let p = skewed_policy(6, 2);
        for row in p.chunks(2) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15 && row.iter().all(|&x| x > 0.0));
        }
    }
}
