//! SEIRS population process on a static contact graph with quarantine actions.
//!
//! An action quarantines the highest-degree nodes for a single step: every edge
//! incident to a quarantined node is ignored when counting infectious contacts.
//! The curator then samples `N` individuals uniformly without replacement and
//! answers the histogram query on that sample.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::state::StateHistogram;

/// Individual epidemic status. `K = 4`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Status {
    Susceptible = 0,
    Exposed = 1,
    Infected = 2,
    Recovered = 3,
}

impl Status {
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Status::Susceptible),
            1 => Ok(Status::Exposed),
            2 => Ok(Status::Infected),
            3 => Ok(Status::Recovered),
            _ => Err(input(format!("status index {i} out of range"))),
        }
    }
}

/// Undirected simple graph in compressed adjacency form.
#[derive(Clone, Debug)]
pub struct ContactGraph {
    node_count: usize,
    edges: Vec<(u32, u32)>,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl ContactGraph {
    /// Builds a graph from an edge list. Self-loops, duplicates (in either
    /// orientation) and out-of-range endpoints are rejected.
    pub fn from_edges(node_count: usize, edges: &[(u32, u32)]) -> Result<Self> {
        if node_count == 0 {
            return Err(input("graph needs at least one node"));
        }
        if node_count > u32::MAX as usize {
            return Err(input("too many nodes"));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a as usize >= node_count || b as usize >= node_count {
                return Err(input(format!("edge ({a}, {b}) has an endpoint >= {node_count}")));
            }
            if a == b {
                return Err(input(format!("self-loop on node {a}")));
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(input(format!("duplicate edge ({a}, {b})")));
            }
            normalized.push(key);
        }

        let mut degree = vec![0usize; node_count];
        for &(a, b) in &normalized {
            degree[a as usize] += 1;
            degree[b as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(node_count + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets.clone();
        let mut neighbors = vec![0u32; offsets[node_count]];
        for &(a, b) in &normalized {
            neighbors[fill[a as usize]] = b;
            fill[a as usize] += 1;
            neighbors[fill[b as usize]] = a;
            fill[b as usize] += 1;
        }
        Ok(Self {
            node_count,
            edges: normalized,
            offsets,
            neighbors,
        })
    }

    /// Barabási–Albert style preferential attachment: starts from a clique on
    /// `m + 1` nodes, then each new node links to `m` distinct existing nodes
    /// chosen proportionally to degree.
    pub fn preferential_attachment<R: Rng + ?Sized>(
        node_count: usize,
        edges_per_node: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let m = edges_per_node;
        if m == 0 || node_count <= m {
            return Err(input(format!(
                "preferential attachment needs 0 < m < node_count (m = {m}, n = {node_count})"
            )));
        }
        let mut edges = Vec::with_capacity(node_count * m);
        // Every edge endpoint appears once here, so a uniform pick is degree-proportional.
        let mut endpoints: Vec<u32> = Vec::with_capacity(2 * node_count * m);
        for a in 0..=m as u32 {
            for b in (a + 1)..=m as u32 {
                edges.push((a, b));
                endpoints.push(a);
                endpoints.push(b);
            }
        }
        let mut targets = Vec::with_capacity(m);
        for new in (m + 1)..node_count {
            targets.clear();
            while targets.len() < m {
                let t = endpoints[rng.gen_range(0..endpoints.len())];
                if !targets.contains(&t) {
                    targets.push(t);
                }
            }
            for &t in &targets {
                edges.push((t, new as u32));
                endpoints.push(t);
                endpoints.push(new as u32);
            }
        }
        Self::from_edges(node_count, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges with the smaller endpoint first, in insertion order.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.node_count).map(|i| self.degree(i)).collect()
    }

    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.neighbors[self.offsets[node]..self.offsets[node + 1]]
    }

    /// Node ids by decreasing degree, ties by increasing id.
    pub fn degree_ranking(&self) -> Vec<usize> {
        let degrees = self.degrees();
        let mut order: Vec<usize> = (0..self.node_count).collect();
        order.sort_by(|&a, &b| degrees[b].cmp(&degrees[a]).then(a.cmp(&b)));
        order
    }
}

/// Per-individual statuses at step `t`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PopulationState {
    pub statuses: Vec<Status>,
    pub step: u64,
}

impl PopulationState {
    /// Each individual is independently Infected with probability `p_infected`,
    /// otherwise Susceptible.
    pub fn initial<R: Rng + ?Sized>(size: usize, p_infected: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_infected) {
            return Err(input(format!("initial infection probability {p_infected} outside [0, 1]")));
        }
        if size == 0 {
            return Err(input("population must be nonempty"));
        }
        let statuses = (0..size)
            .map(|_| {
                if rng.gen::<f64>() < p_infected {
                    Status::Infected
                } else {
                    Status::Susceptible
                }
            })
            .collect();
        Ok(Self { statuses, step: 0 })
    }

    pub fn len(&self) -> usize {
        self.statuses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statuses.is_empty()
    }

    /// Fraction of the whole population with the given status.
    pub fn proportion(&self, status: Status) -> f64 {
        let n = self.statuses.iter().filter(|&&s| s == status).count();
        n as f64 / self.statuses.len() as f64
    }
}

/// SEIRS per-step transition probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeirsParams {
    /// Transmission probability per infectious contact.
    pub beta: f64,
    /// Exposed to Infected.
    pub sigma: f64,
    /// Infected to Recovered.
    pub gamma_rate: f64,
    /// Recovered to Susceptible.
    pub rho: f64,
}

impl SeirsParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta", self.beta),
            ("sigma", self.sigma),
            ("gamma_rate", self.gamma_rate),
            ("rho", self.rho),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(input(format!("{name} = {v} is outside (0, 1]")));
            }
        }
        Ok(())
    }

    /// Probability that a susceptible with `d` infectious contacts becomes exposed.
    pub fn exposure_probability(&self, infected_contacts: usize) -> f64 {
        1.0 - (1.0 - self.beta).powi(infected_contacts as i32)
    }
}

impl Default for SeirsParams {
    fn default() -> Self {
        Self {
            beta: 0.2,
            sigma: 0.3,
            gamma_rate: 0.1,
            rho: 0.01,
        }
    }
}

/// Quarantine of a fraction of the highest-degree nodes.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Action {
    quarantine_fraction: f64,
}

impl Action {
    pub fn new(quarantine_fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&quarantine_fraction) {
            return Err(input(format!("quarantine fraction {quarantine_fraction} outside [0, 1]")));
        }
        Ok(Self { quarantine_fraction })
    }

    pub fn fraction(self) -> f64 {
        self.quarantine_fraction
    }

    /// `{0, 0.25, 0.5, 0.75, 1}`.
    pub fn standard_set() -> Vec<Action> {
        [0.0, 0.25, 0.5, 0.75, 1.0]
            .into_iter()
            .map(|f| Action { quarantine_fraction: f })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub sample_size: usize,
}

impl SamplerConfig {
    pub fn validate(&self, population: usize) -> Result<()> {
        if self.sample_size == 0 || self.sample_size > population {
            return Err(input(format!(
                "sample size {} must lie in [1, {population}]",
                self.sample_size
            )));
        }
        Ok(())
    }
}

/// Advances every individual one step. One uniform draw per individual, in
/// node order, so the result is a pure function of the inputs and the rng.
pub fn step_statuses<R: Rng + ?Sized>(
    pop: &PopulationState,
    graph: &ContactGraph,
    quarantined: &[usize],
    params: &SeirsParams,
    rng: &mut R,
) -> Result<PopulationState> {
    let n = graph.node_count();
    if pop.len() != n {
        return Err(input(format!(
            "population has {} individuals but the graph has {n} nodes",
            pop.len()
        )));
    }
    let mut mask = vec![false; n];
    for &q in quarantined {
        if q >= n {
            return Err(input(format!("quarantined node {q} out of range")));
        }
        mask[q] = true;
    }
    params.validate()?;
    Ok(step_masked(pop, graph, &mask, params, rng))
}

fn step_masked<R: Rng + ?Sized>(
    pop: &PopulationState,
    graph: &ContactGraph,
    quarantined: &[bool],
    params: &SeirsParams,
    rng: &mut R,
) -> PopulationState {
    let statuses = pop
        .statuses
        .iter()
        .enumerate()
        .map(|(i, &status)| {
            let u: f64 = rng.gen();
            match status {
                Status::Susceptible => {
                    let d = if quarantined[i] {
                        0
                    } else {
                        graph
                            .neighbors(i)
                            .iter()
                            .filter(|&&j| {
                                !quarantined[j as usize]
                                    && pop.statuses[j as usize] == Status::Infected
                            })
                            .count()
                    };
                    if d > 0 && u < params.exposure_probability(d) {
                        Status::Exposed
                    } else {
                        Status::Susceptible
                    }
                }
                Status::Exposed if u < params.sigma => Status::Infected,
                Status::Infected if u < params.gamma_rate => Status::Recovered,
                Status::Recovered if u < params.rho => Status::Susceptible,
                other => other,
            }
        })
        .collect();
    PopulationState {
        statuses,
        step: pop.step + 1,
    }
}

/// Number of nodes quarantined by a fraction of a population of size `n`.
fn quarantine_count(fraction: f64, n: usize) -> usize {
    // Guard against products such as 0.3 * 10 = 3.0000000000000004.
    let raw = fraction * n as f64;
    let snapped = raw.round();
    let count = if (raw - snapped).abs() < 1e-9 { snapped } else { raw.ceil() };
    (count as usize).min(n)
}

/// The `ceil(fraction * N*)` highest-degree nodes, ties by smaller id,
/// returned in increasing id order.
pub fn quarantine_set(graph: &ContactGraph, action: Action) -> Vec<usize> {
    top_by_degree(&graph.degrees(), action.fraction())
}

fn top_by_degree(degrees: &[usize], fraction: f64) -> Vec<usize> {
    let count = quarantine_count(fraction, degrees.len());
    let mut order: Vec<usize> = (0..degrees.len()).collect();
    order.sort_by(|&a, &b| degrees[b].cmp(&degrees[a]).then(a.cmp(&b)));
    order.truncate(count);
    order.sort_unstable();
    order
}

/// Uniform sample of `N` distinct individuals.
pub fn sample_dataset<R: Rng + ?Sized>(
    pop: &PopulationState,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<(usize, Status)>> {
    cfg.validate(pop.len())?;
    Ok(index::sample(rng, pop.len(), cfg.sample_size)
        .into_iter()
        .map(|i| (i, pop.statuses[i]))
        .collect())
}

/// Per-status proportions over the dataset.
pub fn histogram_query(dataset: &[(usize, Status)]) -> Result<StateHistogram> {
    histogram_of(dataset.iter().map(|&(_, s)| s.index()), Status::COUNT)
}

/// Histogram over arbitrary status indices in `[0, k)`.
pub fn histogram_of(statuses: impl IntoIterator<Item = usize>, k: usize) -> Result<StateHistogram> {
    let mut counts = vec![0u32; k];
    for s in statuses {
        if s >= k {
            return Err(input(format!("status index {s} out of range for K = {k}")));
        }
        counts[s] += 1;
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(input("histogram query on an empty dataset"));
    }
    StateHistogram::from_counts(counts)
}

/// `-(alpha * (E + I) + (1 - alpha) * quarantine fraction)`.
pub fn reward(state: &StateHistogram, action: Action, alpha: f64) -> f64 {
    let burden = infection_burden(state);
    -(alpha * burden + (1.0 - alpha) * action.fraction())
}

/// Proportion Exposed plus Infected.
pub fn infection_burden(state: &StateHistogram) -> f64 {
    let c = state.counts();
    f64::from(c[Status::Exposed.index()] + c[Status::Infected.index()]) / f64::from(state.population())
}

/// Everything the environment side of the loop needs: population, graph,
/// dynamics, action set and the curator's sampler.
#[derive(Clone, Debug)]
pub struct EpidemicEnv {
    graph: ContactGraph,
    params: SeirsParams,
    sampler: SamplerConfig,
    actions: Vec<Action>,
    alpha: f64,
    masks: Vec<Vec<bool>>,
    pop: PopulationState,
}

impl EpidemicEnv {
    pub fn new(
        graph: ContactGraph,
        params: SeirsParams,
        sampler: SamplerConfig,
        actions: Vec<Action>,
        alpha: f64,
        initial: PopulationState,
    ) -> Result<Self> {
        params.validate()?;
        sampler.validate(graph.node_count())?;
        if actions.is_empty() {
            return Err(input("action set is empty"));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(input(format!("reward weight {alpha} outside [0, 1]")));
        }
        if initial.len() != graph.node_count() {
            return Err(input("initial population does not match the graph"));
        }
        let masks = actions
            .iter()
            .map(|&a| {
                let mut mask = vec![false; graph.node_count()];
                for i in quarantine_set(&graph, a) {
                    mask[i] = true;
                }
                mask
            })
            .collect();
        Ok(Self {
            graph,
            params,
            sampler,
            actions,
            alpha,
            masks,
            pop: initial,
        })
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn population(&self) -> &PopulationState {
        &self.pop
    }

    pub fn graph(&self) -> &ContactGraph {
        &self.graph
    }

    pub fn sample_size(&self) -> usize {
        self.sampler.sample_size
    }

    /// Curator side: sample a dataset and answer the histogram query.
    pub fn observe<R: Rng + ?Sized>(&self, rng: &mut R) -> StateHistogram {
        let data = sample_dataset(&self.pop, &self.sampler, rng).expect("sampler validated");
        histogram_query(&data).expect("sample is nonempty")
    }

    /// Applies the quarantine of `action` for one step and advances the process.
    pub fn advance<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) {
        self.pop = step_masked(&self.pop, &self.graph, &self.masks[action], &self.params, rng);
    }

    pub fn reward(&self, state: &StateHistogram, action: usize) -> f64 {
        reward(state, self.actions[action], self.alpha)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn star(n: u32) -> ContactGraph {
        let edges: Vec<_> = (1..n).map(|j| (0, j)).collect();
        ContactGraph::from_edges(n as usize, &edges).unwrap()
    }

    #[test]
    fn exposure_probability_matches_hand_value() {
        let p = SeirsParams { beta: 0.2, ..Default::default() };
        assert!((p.exposure_probability(3) - 0.488).abs() < 1e-12);
        assert_eq!(p.exposure_probability(0), 0.0);
    }

    #[test]
    fn susceptible_without_infected_contacts_stays() {
        let g = star(4);
        let pop = PopulationState {
            statuses: vec![Status::Susceptible; 4],
            step: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let next = step_statuses(&pop, &g, &[], &SeirsParams::default(), &mut rng).unwrap();
            assert!(next.statuses.iter().all(|&s| s == Status::Susceptible));
        }
    }

    #[test]
    fn degenerate_rates_are_deterministic() {
        let g = ContactGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let ones = SeirsParams { beta: 1.0, sigma: 1.0, gamma_rate: 1.0, rho: 1.0 };
        let pop = PopulationState {
            statuses: vec![Status::Infected, Status::Susceptible, Status::Exposed],
            step: 7,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let next = step_statuses(&pop, &g, &[], &ones, &mut rng).unwrap();
        assert_eq!(next.statuses, vec![Status::Recovered, Status::Exposed, Status::Infected]);
        assert_eq!(next.step, 8);
    }

    #[test]
    fn exposure_frequency_matches_formula() {
        // Node 0 susceptible with three infected neighbours.
        let g = star(4);
        let mut statuses = vec![Status::Infected; 4];
        statuses[0] = Status::Susceptible;
        let pop = PopulationState { statuses, step: 0 };
        let params = SeirsParams { beta: 0.2, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 200_000;
        let hits = (0..trials)
            .filter(|_| {
                step_statuses(&pop, &g, &[], &params, &mut rng).unwrap().statuses[0]
                    == Status::Exposed
            })
            .count();
        let p = hits as f64 / trials as f64;
        let se = (0.488f64 * 0.512 / trials as f64).sqrt();
        assert!((p - 0.488).abs() < 4.0 * se, "p = {p}");
    }

    #[test]
    fn quarantined_edges_carry_no_infection() {
        let g = star(5);
        let mut statuses = vec![Status::Susceptible; 5];
        statuses[0] = Status::Infected;
        let pop = PopulationState { statuses, step: 0 };
        let ones = SeirsParams { beta: 1.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // Quarantining the hub isolates everyone.
        let next = step_statuses(&pop, &g, &[0], &ones, &mut rng).unwrap();
        assert!(next.statuses[1..].iter().all(|&s| s == Status::Susceptible));
        // Quarantining a leaf protects only that leaf.
        let next = step_statuses(&pop, &g, &[3], &ones, &mut rng).unwrap();
        assert_eq!(next.statuses[3], Status::Susceptible);
        assert_eq!(next.statuses[1], Status::Exposed);
    }

    #[test]
    fn out_of_range_quarantine_is_an_input_error() {
        let g = star(3);
        let pop = PopulationState { statuses: vec![Status::Susceptible; 3], step: 0 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(step_statuses(&pop, &g, &[3], &SeirsParams::default(), &mut rng).is_err());
    }

    #[test]
    fn quarantine_ranks_by_degree_then_id() {
        // Degrees (3, 1, 3, 0) cannot occur in a simple graph on four nodes,
        // so the ranking rule is checked on the degree sequence itself.
        assert_eq!(top_by_degree(&[3, 1, 3, 0], 0.5), vec![0, 2]);
        assert_eq!(top_by_degree(&[3, 1, 3, 0], 0.25), vec![0]);

        let g = ContactGraph::from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2)]).unwrap();
        assert_eq!(g.degrees(), vec![3, 2, 2, 1]);
        assert_eq!(g.degree_ranking(), vec![0, 1, 2, 3]);
        assert_eq!(quarantine_set(&g, Action::new(0.5).unwrap()), vec![0, 1]);
        assert!(quarantine_set(&g, Action::new(0.0).unwrap()).is_empty());
        assert_eq!(quarantine_set(&g, Action::new(1.0).unwrap()), vec![0, 1, 2, 3]);
    }

    #[test]
    fn quarantine_count_is_ceiling() {
        assert_eq!(quarantine_count(0.25, 5), 2);
        assert_eq!(quarantine_count(0.3, 10), 3);
        assert_eq!(quarantine_count(0.5, 4), 2);
        assert_eq!(quarantine_count(1.0, 7), 7);
        assert_eq!(quarantine_count(0.0, 7), 0);
    }

    #[test]
    fn histogram_examples() {
        use Status::*;
        let h = histogram_query(&[(0, Susceptible), (1, Susceptible), (2, Infected), (3, Recovered)])
            .unwrap();
        assert_eq!(h.values(), vec![0.5, 0.0, 0.25, 0.25]);
        let h = histogram_query(&[(0, Infected), (1, Infected), (2, Infected)]).unwrap();
        assert_eq!(h.values(), vec![0.0, 0.0, 1.0, 0.0]);
        let h = histogram_query(&[
            (0, Susceptible),
            (1, Exposed),
            (2, Exposed),
            (3, Infected),
            (4, Recovered),
        ])
        .unwrap();
        assert_eq!(h.values(), vec![0.2, 0.4, 0.2, 0.2]);
        assert!(histogram_query(&[]).is_err());
    }

    #[test]
    fn reward_examples() {
        let s = StateHistogram::from_proportions(&[0.5, 0.25, 0.25, 0.0], 4).unwrap();
        let r = reward(&s, Action::new(0.25).unwrap(), 0.8);
        assert!((r - (-0.45)).abs() < 1e-12);
        let healthy = StateHistogram::from_counts(vec![4, 0, 0, 0]).unwrap();
        assert_eq!(reward(&healthy, Action::new(0.0).unwrap(), 0.8), 0.0);
        let sick = StateHistogram::from_counts(vec![0, 0, 4, 0]).unwrap();
        for a in Action::standard_set() {
            assert_eq!(reward(&sick, a, 1.0), -1.0);
        }
    }

    #[test]
    fn sampling_full_population_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pop = PopulationState::initial(50, 0.3, &mut rng).unwrap();
        let full = SamplerConfig { sample_size: 50 };
        let mut ids: Vec<usize> = sample_dataset(&pop, &full, &mut rng)
            .unwrap()
            .into_iter()
            .map(|(i, _)| i)
            .collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..50).collect::<Vec<_>>());

        let cfg = SamplerConfig { sample_size: 10 };
        let a = sample_dataset(&pop, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = sample_dataset(&pop, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert!(sample_dataset(&pop, &SamplerConfig { sample_size: 51 }, &mut rng).is_err());
    }

    #[test]
    fn single_draw_sampling_is_uniform() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let n_star = 20;
        let pop = PopulationState { statuses: vec![Status::Susceptible; n_star], step: 0 };
        let cfg = SamplerConfig { sample_size: 1 };
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let trials = 100_000;
        let mut freq = vec![0f64; n_star];
        for _ in 0..trials {
            freq[sample_dataset(&pop, &cfg, &mut rng).unwrap()[0].0] += 1.0;
        }
        let expected = trials as f64 / n_star as f64;
        let chi2: f64 = freq.iter().map(|f| (f - expected).powi(2) / expected).sum();
        let critical = ChiSquared::new((n_star - 1) as f64).unwrap().inverse_cdf(0.999);
        assert!(chi2 < critical, "chi2 = {chi2}");
    }

    #[test]
    fn preferential_attachment_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = ContactGraph::preferential_attachment(500, 3, &mut rng).unwrap();
        assert_eq!(g.node_count(), 500);
        assert_eq!(g.edge_count(), 6 + 3 * (500 - 4));
        let total: usize = g.degrees().iter().sum();
        assert_eq!(total, 2 * g.edge_count());
        assert!(g.degrees().iter().all(|&d| d >= 3));
        assert!(*g.degrees().iter().max().unwrap() > 20);
    }

    #[test]
    fn graph_rejects_bad_edges() {
        assert!(ContactGraph::from_edges(2, &[(0, 0)]).is_err());
        assert!(ContactGraph::from_edges(2, &[(0, 1), (1, 0)]).is_err());
        assert!(ContactGraph::from_edges(2, &[(0, 2)]).is_err());
    }

    #[test]
    fn full_quarantine_never_infects_more_than_none() {
        // rho = 0, so anyone who was ever exposed stays out of Susceptible.
        // The public constructor rejects rho = 0, hence the unvalidated step.
        let params = SeirsParams { rho: 0.0, ..Default::default() };
        let graph = ContactGraph::preferential_attachment(200, 3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let ever = |fraction: f64| -> f64 {
            let mut q = vec![false; 200];
            for i in quarantine_set(&graph, Action::new(fraction).unwrap()) {
                q[i] = true;
            }
            let mut total = 0usize;
            for seed in 0..200 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut pop = PopulationState::initial(200, 0.05, &mut rng).unwrap();
                for _ in 0..50 {
                    pop = step_masked(&pop, &graph, &q, &params, &mut rng);
                }
                total += pop.statuses.iter().filter(|&&s| s != Status::Susceptible).count();
            }
            total as f64 / 200.0
        };
        let (shut, open) = (ever(1.0), ever(0.0));
        assert!(shut <= open, "{shut} vs {open}");
    }

    mod props {
        use proptest::prelude::*;
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;

        use super::super::*;

        fn status() -> impl Strategy<Value = Status> {
            (0usize..4).prop_map(|i| Status::from_index(i).unwrap())
        }

        fn ring(n: usize) -> ContactGraph {
            let edges: Vec<_> = (0..n as u32).map(|i| (i, (i + 1) % n as u32)).collect();
            ContactGraph::from_edges(n, &edges).unwrap()
        }

        proptest! {
            #[test]
            fn histogram_counts_are_exact(statuses in prop::collection::vec(status(), 1..200)) {
                let data: Vec<_> = statuses.iter().copied().enumerate().collect();
                let h = histogram_query(&data).unwrap();
                prop_assert_eq!(h.population() as usize, statuses.len());
                prop_assert_eq!(h.counts().iter().sum::<u32>() as usize, statuses.len());
                for (k, &c) in h.counts().iter().enumerate() {
                    prop_assert_eq!(c as usize, statuses.iter().filter(|s| s.index() == k).count());
                    prop_assert_eq!(h.value(k), f64::from(c) / statuses.len() as f64);
                }
            }

            #[test]
            fn step_conserves_population_and_replays(
                statuses in prop::collection::vec(status(), 3..60),
                fraction in 0.0f64..=1.0,
                seed in any::<u64>(),
            ) {
                let g = ring(statuses.len());
                let pop = PopulationState { statuses, step: 7 };
                let q = quarantine_set(&g, Action::new(fraction).unwrap());
                let params = SeirsParams::default();
                let a = step_statuses(&pop, &g, &q, &params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                let b = step_statuses(&pop.clone(), &g, &q, &params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                prop_assert_eq!(a.len(), pop.len());
                prop_assert_eq!(a.step, 8);
                prop_assert_eq!(a, b);
            }

            #[test]
            fn full_quarantine_creates_no_exposed(
                statuses in prop::collection::vec(status(), 3..60),
                seed in any::<u64>(),
            ) {
                let g = ring(statuses.len());
                let pop = PopulationState { statuses, step: 0 };
                let q = quarantine_set(&g, Action::new(1.0).unwrap());
                let params = SeirsParams { beta: 1.0, ..Default::default() };
                let next = step_statuses(&pop, &g, &q, &params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                for (before, after) in pop.statuses.iter().zip(&next.statuses) {
                    if *before == Status::Susceptible {
                        prop_assert_eq!(*after, Status::Susceptible);
                    }
                }
            }
        }
    }
}
