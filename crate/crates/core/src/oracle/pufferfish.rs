//! Membership-secret audit on a fully enumerable population process, and the
//! all-or-nothing correlation attack on an individual's status.
//!
//! Datasets are drawn by sampling `N` of the `N*` individuals uniformly
//! without replacement at every step, so each individual is included with
//! probability `N / N*` and an absent individual's slot is taken by someone
//! else. The released statistic is the two-bin histogram (healthy, infected).

use rand::{Rng, RngCore};
use serde::Serialize;

use super::grid::{enumerate_states, index_of};
use crate::accounting::advanced_composition;
use crate::dpmech::StateMechanism;
use crate::error::{input, Result};
use crate::StateHistogram;

pub const MAX_POPULATION: usize = 4;
pub const MAX_HORIZON: usize = 3;
pub const MIN_AUDIT_TRIALS: u64 = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PufferfishScenario {
    pub population: usize,
    pub sample_size: usize,
    pub horizon: usize,
    /// Prior over the (static) contact graph: edge list and probability.
    pub graphs: Vec<(Vec<(usize, usize)>, f64)>,
    /// Probability that each individual is infected at the first step.
    pub initial_infection: Vec<f64>,
    /// Per infected neighbour infection probability for a healthy individual.
    pub infection: f64,
    pub recovery: f64,
}

impl PufferfishScenario {
    /// Three individuals, two sampled per step, two steps. Every graph on
    /// three nodes is equally likely. Individual 0 is known to be infected
    /// at the first step, so its presence is visible in a raw release.
    pub fn reference() -> Self {
        let edges = [(0, 1), (0, 2), (1, 2)];
        let graphs = (0..8u32)
            .map(|mask| {
                let g = edges.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, e)| *e).collect();
                (g, 1.0 / 8.0)
            })
            .collect();
        Self {
            population: 3,
            sample_size: 2,
            horizon: 2,
            graphs,
            initial_infection: vec![1.0, 0.2, 0.2],
            infection: 0.5,
            recovery: 0.3,
        }
    }

    pub fn inclusion_probability(&self) -> f64 {
        self.sample_size as f64 / self.population as f64
    }

    fn validate(&self) -> Result<()> {
        let n = self.population;
        if n == 0 || n > MAX_POPULATION || self.horizon == 0 || self.horizon > MAX_HORIZON {
            return Err(input(format!(
                "scenario is not enumerable: need 1 <= N* <= {MAX_POPULATION} and 1 <= T <= {MAX_HORIZON}"
            )));
        }
        if self.sample_size == 0 || self.sample_size > n {
            return Err(input("sample size must be in 1..=N*"));
        }
        if self.initial_infection.len() != n {
            return Err(input("one initial infection probability per individual"));
        }
        let probs = self
            .initial_infection
            .iter()
            .chain([&self.infection, &self.recovery])
            .chain(self.graphs.iter().map(|(_, p)| p));
        if probs.into_iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(input("probabilities must lie in [0, 1]"));
        }
        let mass: f64 = self.graphs.iter().map(|(_, p)| p).sum();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(input(format!("graph prior sums to {mass}")));
        }
        for (g, _) in &self.graphs {
            if g.iter().any(|&(a, b)| a >= n || b >= n || a == b) {
                return Err(input("graph edge out of range or a self-loop"));
            }
        }
        Ok(())
    }
}

/// Exact law of the released-histogram sequence given each membership secret.
#[derive(Clone, Debug, PartialEq)]
pub struct SecretLaws {
    /// Sequences are encoded as `sum_t c_t (N + 1)^t` with `c_t` infected.
    pub sequences: usize,
    /// `[individual][mask]`: `P(sigma)` and the conditional law of the sequence.
    pub laws: Vec<Vec<(f64, Vec<f64>)>>,
    pub total_probability: f64,
}

fn subsets(n: usize, k: usize) -> Vec<u32> {
    (0..1u32 << n).filter(|m| m.count_ones() as usize == k).collect()
}

pub fn secret_laws(sc: &PufferfishScenario) -> Result<SecretLaws> {
    sc.validate()?;
    let n = sc.population;
    let t_max = sc.horizon;
    let base = sc.sample_size + 1;
    let sequences = base.pow(t_max as u32);
    let masks = 1usize << t_max;
    let mut joint = vec![vec![vec![0.0; sequences]; masks]; n];
    let samples = subsets(n, sc.sample_size);
    let sample_p = 1.0 / samples.len() as f64;
    let mut total = 0.0;

    // Status paths: one bitmask of infected individuals per step.
    let mut paths: Vec<(Vec<u32>, f64)> = Vec::new();
    for (edges, pg) in &sc.graphs {
        if *pg == 0.0 {
            continue;
        }
        let mut frontier: Vec<(Vec<u32>, f64)> = (0..1u32 << n)
            .map(|x| {
                let p: f64 = (0..n)
                    .map(|i| {
                        let q = sc.initial_infection[i];
                        if x >> i & 1 == 1 {
                            q
                        } else {
                            1.0 - q
                        }
                    })
                    .product();
                (vec![x], pg * p)
            })
            .filter(|(_, p)| *p > 0.0)
            .collect();
        for _ in 1..t_max {
            let mut next = Vec::new();
            for (path, p) in &frontier {
                let x = *path.last().unwrap();
                for y in 0..1u32 << n {
                    let mut q = 1.0;
                    for i in 0..n {
                        let was = x >> i & 1 == 1;
                        let is = y >> i & 1 == 1;
                        q *= if was {
                            if is {
                                1.0 - sc.recovery
                            } else {
                                sc.recovery
                            }
                        } else {
                            let d = edges
                                .iter()
                                .filter(|&&(a, b)| (a == i && x >> b & 1 == 1) || (b == i && x >> a & 1 == 1))
                                .count();
                            let catch = 1.0 - (1.0 - sc.infection).powi(d as i32);
                            if is {
                                catch
                            } else {
                                1.0 - catch
                            }
                        };
                    }
                    if q > 0.0 {
                        let mut path = path.clone();
                        path.push(y);
                        next.push((path, p * q));
                    }
                }
            }
            frontier = next;
        }
        paths.extend(frontier);
    }

    let mut choice = vec![0usize; t_max];
    for (path, p_path) in &paths {
        // Iterate over every tuple of per-step samples.
        choice.iter_mut().for_each(|c| *c = 0);
        loop {
            let p = p_path * sample_p.powi(t_max as i32);
            let mut seq = 0usize;
            for t in (0..t_max).rev() {
                let c = (path[t] & samples[choice[t]]).count_ones() as usize;
                seq = seq * base + c;
            }
            for (i, row) in joint.iter_mut().enumerate() {
                let mask = (0..t_max).fold(0usize, |m, t| m | (((samples[choice[t]] >> i & 1) as usize) << t));
                row[mask][seq] += p;
            }
            total += p;
            let mut t = 0;
            while t < t_max {
                choice[t] += 1;
                if choice[t] < samples.len() {
                    break;
                }
                choice[t] = 0;
                t += 1;
            }
            if t == t_max {
                break;
            }
        }
    }
    let laws = joint
        .into_iter()
        .map(|rows| {
            rows.into_iter()
                .map(|row| {
                    let mass: f64 = row.iter().sum();
                    let law = if mass > 0.0 { row.iter().map(|x| x / mass).collect() } else { row };
                    (mass, law)
                })
                .collect()
        })
        .collect();
    Ok(SecretLaws {
        sequences,
        laws,
        total_probability: total,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AuditBudget {
    pub epsilon_step: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairResult {
    pub individual: usize,
    /// Steps at which the individual is present under the numerator secret.
    pub numerator: Vec<usize>,
    pub denominator: Vec<usize>,
    /// Largest `(P(w | num) - delta) / P(w | den)` over outputs `w`.
    pub max_ratio: f64,
    pub standard_error: f64,
    pub output: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PufferfishReport {
    pub epsilon_step: f64,
    pub delta: f64,
    pub epsilon_achieved: f64,
    pub ratio_bound: f64,
    pub inclusion_probability: f64,
    pub total_probability: f64,
    pub trials: u64,
    pub pairs: Vec<PairResult>,
    pub max_ratio: f64,
    pub passed: bool,
}

fn steps(mask: usize, horizon: usize) -> Vec<usize> {
    (0..horizon).filter(|t| mask >> t & 1 == 1).map(|t| t + 1).collect()
}

/// Estimates `P(M(D_{1:T}) = w | sigma)` for every membership secret and
/// checks every secret pair in both directions against
/// `exp(advanced_composition(eps', T, delta))`.
pub fn pufferfish_audit(
    sc: &PufferfishScenario,
    mechanism: &dyn StateMechanism,
    budget: AuditBudget,
    trials: u64,
    rng: &mut dyn RngCore,
) -> Result<PufferfishReport> {
    if trials < MIN_AUDIT_TRIALS {
        return Err(input(format!("need at least {MIN_AUDIT_TRIALS} trials per conditional")));
    }
    if !(budget.delta > 0.0 && budget.delta < 1.0) {
        return Err(input("delta must lie in (0, 1)"));
    }
    let laws = secret_laws(sc)?;
    if (laws.total_probability - 1.0).abs() > 1e-9 {
        return Err(input(format!("enumeration lost mass: {}", laws.total_probability)));
    }
    let t_max = sc.horizon;
    let n = sc.sample_size as u32;
    let grid = enumerate_states(n, 2, usize::MAX)?;
    let index = index_of(&grid);
    let base = sc.sample_size + 1;
    let outputs = grid.len().pow(t_max as u32);

    // Output frequencies per (individual, mask).
    let mut freq = vec![vec![Vec::new(); 1 << t_max]; sc.population];
    for (i, rows) in laws.laws.iter().enumerate() {
        for (mask, (mass, law)) in rows.iter().enumerate() {
            if *mass == 0.0 {
                continue;
            }
            let cdf: Vec<f64> = law
                .iter()
                .scan(0.0, |acc, p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect();
            let mut counts = vec![0u64; outputs];
            for _ in 0..trials {
                let u: f64 = rng.gen::<f64>() * cdf[cdf.len() - 1];
                let mut seq = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                let mut w = 0usize;
                let mut scale = 1usize;
                for _ in 0..t_max {
                    let c = (seq % base) as u32;
                    seq /= base;
                    let h = StateHistogram::from_counts(vec![n - c, c]).expect("valid counts");
                    let out = mechanism.privatize(&h, rng);
                    w += scale * index.get(&out).ok_or_else(|| input("mechanism output is off the grid"))?;
                    scale *= grid.len();
                }
                counts[w] += 1;
            }
            freq[i][mask] = counts.iter().map(|&c| c as f64 / trials as f64).collect();
        }
    }

    let epsilon_achieved = advanced_composition(budget.epsilon_step, t_max as u64, budget.delta)?;
    let ratio_bound = epsilon_achieved.exp();
    let var = |p: f64| p * (1.0 - p) / trials as f64;
    let mut pairs = Vec::new();
    for i in 0..sc.population {
        for s in 1usize..1 << t_max {
            // Every nonempty R within S.
            let mut r = s;
            while r > 0 {
                let without = s & !r;
                for (num, den) in [(s, without), (without, s)] {
                    let (a, b) = (&freq[i][num], &freq[i][den]);
                    if a.is_empty() || b.is_empty() {
                        continue;
                    }
                    let mut worst = (f64::NEG_INFINITY, 0.0, 0usize);
                    for w in 0..outputs {
                        let top = a[w] - budget.delta;
                        if top <= 0.0 {
                            continue;
                        }
                        let (ratio, se) = if b[w] == 0.0 {
                            (f64::INFINITY, 0.0)
                        } else {
                            let ratio = top / b[w];
                            (ratio, (var(a[w]) + ratio * ratio * var(b[w])).sqrt() / b[w])
                        };
                        if ratio - 3.0 * se > worst.0 - 3.0 * worst.1 || worst.0 == f64::NEG_INFINITY {
                            worst = (ratio, se, w);
                        }
                    }
                    let (max_ratio, se, output) = worst;
                    pairs.push(PairResult {
                        individual: i,
                        numerator: steps(num, t_max),
                        denominator: steps(den, t_max),
                        max_ratio,
                        standard_error: se,
                        output,
                        passed: max_ratio.is_finite() && max_ratio <= ratio_bound + 3.0 * se,
                    });
                }
                r = (r - 1) & s;
            }
        }
    }
    let max_ratio = pairs.iter().map(|p| p.max_ratio).fold(f64::NEG_INFINITY, f64::max);
    Ok(PufferfishReport {
        epsilon_step: budget.epsilon_step,
        delta: budget.delta,
        epsilon_achieved,
        ratio_bound,
        inclusion_probability: sc.inclusion_probability(),
        total_probability: laws.total_probability,
        trials,
        passed: pairs.iter().all(|p| p.passed),
        pairs,
        max_ratio,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AttackPosterior {
    pub all_infected: f64,
    pub none_infected: f64,
}

/// Posterior over {everyone infected, nobody infected} after observing
/// `q~ = q + Lap(1/eps)` with `q` the infected count among `N` sampled.
pub fn correlation_attack_demo(prior: [f64; 2], population: u32, epsilon: f64, observed: f64) -> Result<AttackPosterior> {
    if prior.iter().any(|p| !(0.0..=1.0).contains(p)) || (prior[0] + prior[1] - 1.0).abs() > 1e-12 {
        return Err(input("prior masses must be probabilities summing to 1"));
    }
    if !(epsilon >= 0.0) || !observed.is_finite() {
        return Err(input("epsilon must be nonnegative and the observation finite"));
    }
    let log_all = prior[0].ln() - epsilon * (observed - population as f64).abs();
    let log_none = prior[1].ln() - epsilon * observed.abs();
    let m = log_all.max(log_none);
    let (a, b) = ((log_all - m).exp(), (log_none - m).exp());
    Ok(AttackPosterior {
        all_infected: a / (a + b),
        none_infected: b / (a + b),
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::accounting::per_step_budget;
    use crate::dpmech::{ConstantMechanism, IdentityMechanism, MechanismParams, ProjectedLaplace};

    #[test]
    fn enumeration_is_a_distribution() {
        let sc = PufferfishScenario::reference();
        let laws = secret_laws(&sc).unwrap();
        assert!((laws.total_probability - 1.0).abs() < 1e-12);
        assert_eq!(laws.sequences, 9);
        for rows in &laws.laws {
            // P(i in L_t) = 2/3 independently per step.
            let masses: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let expected = [1.0 / 9.0, 2.0 / 9.0, 2.0 / 9.0, 4.0 / 9.0];
            for (m, e) in masses.iter().zip(expected) {
                assert!((m - e).abs() < 1e-12, "{masses:?}");
            }
            for (_, law) in rows {
                assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        // Individual 0 is infected at step 1, so when present the first
        // count is never zero.
        let present_first = &laws.laws[0][1].1;
        assert!((0..9).filter(|s| s % 3 == 0).all(|s| present_first[s] == 0.0));
    }

    #[test]
    fn refuses_large_scenarios() {
        let mut sc = PufferfishScenario::reference();
        sc.horizon = 4;
        assert!(secret_laws(&sc).is_err());
        let mut sc = PufferfishScenario::reference();
        sc.population = 5;
        sc.initial_infection = vec![0.1; 5];
        assert!(secret_laws(&sc).is_err());
    }

    fn budget() -> AuditBudget {
        AuditBudget {
            epsilon_step: per_step_budget(2.0, 0.01, 2).unwrap(),
            delta: 0.01,
        }
    }

    #[test]
    fn constant_mechanism_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = StateHistogram::from_counts(vec![1, 1]).unwrap();
        let report = pufferfish_audit(
            &PufferfishScenario::reference(),
            &ConstantMechanism(out),
            budget(),
            100_000,
            &mut rng,
        )
        .unwrap();
        assert!(report.passed);
        assert!(report.pairs.iter().all(|p| (p.max_ratio - 0.99).abs() < 1e-12));
        // 3 individuals x 5 pairs x 2 directions.
        assert_eq!(report.pairs.len(), 30);
    }

    #[test]
    fn identity_mechanism_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let report =
            pufferfish_audit(&PufferfishScenario::reference(), &IdentityMechanism, budget(), 100_000, &mut rng).unwrap();
        assert!(!report.passed);
        assert_eq!(report.max_ratio, f64::INFINITY);
    }

    #[test]
    fn projected_laplace_passes_at_composed_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = budget();
        let mech = ProjectedLaplace(MechanismParams::new(b.epsilon_step, 2).unwrap());
        let report = pufferfish_audit(&PufferfishScenario::reference(), &mech, b, 100_000, &mut rng).unwrap();
        assert!(report.passed, "{report:#?}");
        assert!(report.max_ratio.is_finite());
    }

    #[test]
    fn trial_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(pufferfish_audit(&PufferfishScenario::reference(), &IdentityMechanism, budget(), 10, &mut rng).is_err());
    }

    #[test]
    fn attack_posteriors() {
        let p = correlation_attack_demo([0.5, 0.5], 100, 1.0, 80.0).unwrap();
        assert!(p.all_infected >= 0.999);
        assert!((p.none_infected - (-60f64).exp() / (1.0 + (-60f64).exp())).abs() < 1e-30);
        let p = correlation_attack_demo([0.5, 0.5], 100, 1.0, 50.0).unwrap();
        assert!((p.all_infected - 0.5).abs() < 1e-15);
        let p = correlation_attack_demo([0.3, 0.7], 100, 0.0, 95.0).unwrap();
        assert!((p.all_infected - 0.3).abs() < 1e-15);
        assert!(correlation_attack_demo([0.5, 0.6], 100, 1.0, 1.0).is_err());
    }
}
