//! Network simulation from an ERGM at fixed parameters.
//!
//! [`Simulator`] is the inner loop shared by the exchange sampler, path
//! sampling and the Laplace covariance estimate. It owns a private graph and
//! keeps the edge list, the edge/non-edge pools and the model's sufficient
//! statistics up to date as dyads are toggled.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{change_stat, dyad_count, sufficient_stats, Graph, StatisticKind};
use crate::model::{ModelSpec, ParamState};
use crate::rng::Rng;

const ABSENT: u32 = u32::MAX;
const MAX_STATS: usize = 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    /// Tie-no-tie Metropolis–Hastings proposals.
    #[default]
    Tnt,
    /// Single-dyad Gibbs updates from the exact full conditional.
    Gibbs,
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tnt" => Ok(Self::Tnt),
            "gibbs" => Ok(Self::Gibbs),
            other => Err(Error::domain(format!("unknown sampler `{other}` (tnt or gibbs)"))),
        }
    }
}

/// Starting graph of a simulation.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum Init {
    Observed(Graph),
    #[default]
    Empty,
    /// Independent dyads present with the given probability.
    Random(f64),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimConfig {
    /// Sampler steps per simulated network; `None` means one per dyad.
    pub aux_iters: Option<usize>,
    pub sampler: SamplerKind,
    pub init: Init,
}

impl SimConfig {
    pub fn with_aux_iters(aux_iters: usize) -> Self {
        SimConfig {
            aux_iters: Some(aux_iters),
            ..Default::default()
        }
    }

    pub fn aux_iters_for(&self, n: usize) -> usize {
        self.aux_iters.unwrap_or_else(|| dyad_count(n).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.aux_iters == Some(0) {
            return Err(Error::domain("aux_iters must be at least 1"));
        }
        if let Init::Random(p) = self.init {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::domain(format!("initial density {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Builds the starting graph for `n` vertices.
    pub fn initial_graph(&self, n: usize, rng: &mut Rng) -> Result<Graph> {
        self.validate()?;
        match &self.init {
            Init::Observed(g) => {
                if g.n() != n {
                    return Err(Error::domain(format!(
                        "initial graph has {} vertices, expected {n}",
                        g.n()
                    )));
                }
                Ok(g.clone())
            }
            Init::Empty => Ok(Graph::empty(n)),
            Init::Random(p) => {
                let mut g = Graph::empty(n);
                for i in 0..n {
                    for j in i + 1..n {
                        if rng.random::<f64>() < *p {
                            g.toggle(i, j);
                        }
                    }
                }
                Ok(g)
            }
        }
    }
}

#[inline]
fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Mutable simulation state for one model.
#[derive(Clone, Debug)]
pub struct Simulator {
    kinds: Vec<StatisticKind>,
    graph: Graph,
    pairs: Vec<(u32, u32)>,
    edge_list: Vec<u32>,
    edge_pos: Vec<u32>,
    stats: Vec<f64>,
}

impl Simulator {
    pub fn new(kinds: &[StatisticKind], graph: Graph) -> Self {
        assert!(kinds.len() <= MAX_STATS);
        let n = graph.n();
        let pairs = (0..n as u32)
            .flat_map(|i| (i + 1..n as u32).map(move |j| (i, j)))
            .collect::<Vec<_>>();
        let mut sim = Simulator {
            kinds: kinds.to_vec(),
            graph: Graph::empty(n),
            edge_pos: vec![ABSENT; pairs.len()],
            pairs,
            edge_list: Vec::new(),
            stats: Vec::new(),
        };
        sim.reset(&graph);
        sim
    }

    /// Replaces the current graph by a copy of `g` (same vertex count).
    pub fn reset(&mut self, g: &Graph) {
        assert_eq!(g.n(), self.graph.n());
        self.graph.clone_from(g);
        self.edge_list.clear();
        for (idx, &(i, j)) in self.pairs.iter().enumerate() {
            if g.has_edge(i as usize, j as usize) {
                self.edge_pos[idx] = self.edge_list.len() as u32;
                self.edge_list.push(idx as u32);
            } else {
                self.edge_pos[idx] = ABSENT;
            }
        }
        self.stats = sufficient_stats(g, &self.kinds).0;
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn into_graph(self) -> Graph {
        self.graph
    }

    /// Current sufficient statistics, aligned with the model's statistic list.
    pub fn stats(&self) -> &[f64] {
        &self.stats
    }

    pub fn kinds(&self) -> &[StatisticKind] {
        &self.kinds
    }

    #[inline]
    fn change(&self, i: usize, j: usize, delta: &mut [f64; MAX_STATS]) {
        for (d, &k) in delta.iter_mut().zip(&self.kinds) {
            *d = change_stat(k, &self.graph, i, j);
        }
    }

    #[inline]
    fn logit(&self, theta: &[f64], phi: &[f64], i: usize, j: usize, delta: &[f64; MAX_STATS]) -> f64 {
        let mut out: f64 = theta.iter().zip(delta).map(|(t, d)| t * d).sum();
        if !phi.is_empty() {
            out += phi[i] + phi[j];
        }
        out
    }

    #[inline]
    fn flip(&mut self, idx: usize, delta: &[f64; MAX_STATS]) {
        let (i, j) = self.pairs[idx];
        let on = self.graph.toggle(i as usize, j as usize);
        if on {
            self.edge_pos[idx] = self.edge_list.len() as u32;
            self.edge_list.push(idx as u32);
            for (s, d) in self.stats.iter_mut().zip(delta) {
                *s += d;
            }
        } else {
            let pos = self.edge_pos[idx] as usize;
            let last = self.edge_list.pop().expect("edge list holds the removed edge");
            if pos < self.edge_list.len() {
                self.edge_list[pos] = last;
                self.edge_pos[last as usize] = pos as u32;
            }
            self.edge_pos[idx] = ABSENT;
            for (s, d) in self.stats.iter_mut().zip(delta) {
                *s -= d;
            }
        }
    }

    /// Resamples one uniformly chosen dyad from its full conditional.
    /// Returns whether the dyad changed.
    pub fn gibbs_step(&mut self, theta: &[f64], phi: &[f64], rng: &mut Rng) -> bool {
        let dyads = self.pairs.len();
        if dyads == 0 {
            return false;
        }
        let idx = rng.random_range(0..dyads);
        let (i, j) = self.pairs[idx];
        let (i, j) = (i as usize, j as usize);
        let mut delta = [0.0; MAX_STATS];
        self.change(i, j, &mut delta);
        let want = rng.random::<f64>() < logistic(self.logit(theta, phi, i, j, &delta));
        if want != (self.edge_pos[idx] != ABSENT) {
            self.flip(idx, &delta);
            true
        } else {
            false
        }
    }

    /// Proposal probability of toggling a dyad whose current state is
    /// `is_edge`, from a graph with `edges` edges out of `dyads`.
    #[inline]
    fn tnt_proposal_prob(edges: usize, dyads: usize, is_edge: bool) -> f64 {
        let holes = dyads - edges;
        if edges == 0 || holes == 0 {
            1.0 / dyads as f64
        } else if is_edge {
            0.5 / edges as f64
        } else {
            0.5 / holes as f64
        }
    }

    /// Picks the dyad a tie-no-tie step would propose from the current graph.
    fn tnt_propose(&self, rng: &mut Rng) -> usize {
        let dyads = self.pairs.len();
        let edges = self.edge_list.len();
        if edges == 0 || edges == dyads {
            rng.random_range(0..dyads)
        } else if rng.random::<bool>() {
            self.edge_list[rng.random_range(0..edges)] as usize
        } else {
            loop {
                let idx = rng.random_range(0..dyads);
                if self.edge_pos[idx] == ABSENT {
                    break idx;
                }
            }
        }
    }

    /// One tie-no-tie Metropolis–Hastings step. Returns whether the toggle
    /// was accepted.
    pub fn tnt_step(&mut self, theta: &[f64], phi: &[f64], rng: &mut Rng) -> bool {
        let dyads = self.pairs.len();
        if dyads == 0 {
            return false;
        }
        let idx = self.tnt_propose(rng);
        let (i, j) = self.pairs[idx];
        let (i, j) = (i as usize, j as usize);
        let present = self.edge_pos[idx] != ABSENT;
        let mut delta = [0.0; MAX_STATS];
        self.change(i, j, &mut delta);
        let logit = self.logit(theta, phi, i, j, &delta);
        let edges = self.edge_list.len();
        let edges_after = if present { edges - 1 } else { edges + 1 };
        let q_fwd = Self::tnt_proposal_prob(edges, dyads, present);
        let q_rev = Self::tnt_proposal_prob(edges_after, dyads, !present);
        let log_ratio = if present { -logit } else { logit } + (q_rev / q_fwd).ln();
        if log_ratio >= 0.0 || rng.random::<f64>() < log_ratio.exp() {
            self.flip(idx, &delta);
            true
        } else {
            false
        }
    }

    /// Runs `iters` sampler steps; returns the number of changed dyads.
    pub fn run(&mut self, kind: SamplerKind, iters: usize, theta: &[f64], phi: &[f64], rng: &mut Rng) -> usize {
        let mut changed = 0;
        match kind {
            SamplerKind::Tnt => {
                for _ in 0..iters {
                    changed += self.tnt_step(theta, phi, rng) as usize;
                }
            }
            SamplerKind::Gibbs => {
                for _ in 0..iters {
                    changed += self.gibbs_step(theta, phi, rng) as usize;
                }
            }
        }
        changed
    }
}

fn checked_params<'a>(p: &'a ParamState, m: &ModelSpec, n: usize) -> Result<(&'a [f64], &'a [f64])> {
    p.check(m, n)?;
    Ok((&p.theta, if m.random_effects() { &p.phi } else { &[] }))
}

/// One Gibbs update of a uniformly chosen dyad of `g`.
pub fn gibbs_step(g: &mut Graph, p: &ParamState, m: &ModelSpec, rng: &mut Rng) -> Result<()> {
    let (theta, phi) = checked_params(p, m, g.n())?;
    let mut sim = Simulator::new(m.stats(), std::mem::replace(g, Graph::empty(1)));
    sim.gibbs_step(theta, phi, rng);
    *g = sim.into_graph();
    Ok(())
}

/// One tie-no-tie step on `g`; returns whether the proposal was accepted.
pub fn tnt_step(g: &mut Graph, p: &ParamState, m: &ModelSpec, rng: &mut Rng) -> Result<bool> {
    let (theta, phi) = checked_params(p, m, g.n())?;
    let mut sim = Simulator::new(m.stats(), std::mem::replace(g, Graph::empty(1)));
    let accepted = sim.tnt_step(theta, phi, rng);
    *g = sim.into_graph();
    Ok(accepted)
}

/// Draws a network by running the configured sampler from the configured
/// starting graph.
pub fn simulate_network(p: &ParamState, m: &ModelSpec, n: usize, c: &SimConfig, rng: &mut Rng) -> Result<Graph> {
    let (theta, phi) = checked_params(p, m, n)?;
    let start = c.initial_graph(n, rng)?;
    let mut sim = Simulator::new(m.stats(), start);
    sim.run(c.sampler, c.aux_iters_for(n), theta, phi, rng);
    Ok(sim.into_graph())
}
