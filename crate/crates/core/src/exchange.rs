//! Posterior sampling with the exchange algorithm.
//!
//! Each iteration performs, in order:
//!
//! 1. a block update of `theta`: propose `theta'`, simulate an auxiliary
//!    network at `(theta', phi)`, accept by the exchange ratio;
//! 2. single-site updates of every `phi_i`, each with its own auxiliary
//!    network at `(theta, phi')`;
//! 3. a random-walk Metropolis–Hastings update of `mu_phi`;
//! 4. a Metropolis–Hastings update of `sigma2_phi` with a zero-truncated
//!    uniform proposal.
//!
//! Steps 2–4 only run for random-effects models. The exchange ratios are
//! written in terms of unnormalized potentials only: nothing in this module
//! evaluates a normalizing constant.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{degree_stats, sufficient_stats, Graph, StatisticKind};
use crate::model::{log_prior_phi, log_prior_theta, normal_logpdf, inv_gamma_logpdf, ModelSpec, ParamState, PriorHyper};
use crate::netsim::{SamplerKind, SimConfig, Simulator};
use crate::rng::{stream, Rng};

/// Order in which the nodal effects are visited within an iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhiScan {
    #[default]
    Sequential,
    RandomPermutation,
}

impl std::str::FromStr for PhiScan {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(Self::Sequential),
            "random" | "random-permutation" => Ok(Self::RandomPermutation),
            other => Err(Error::domain(format!("unknown phi scan `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainConfig {
    pub burnin: usize,
    pub main_iters: usize,
    /// Keep every `thin`-th post-burn-in state.
    pub thin: usize,
    /// Auxiliary simulation settings. The auxiliary chains always start at
    /// the observed network, so `aux.init` is ignored.
    pub aux: SimConfig,
    /// Proposal sd per `theta` component; a single value is broadcast.
    pub prop_sd_theta: Vec<f64>,
    pub prop_sd_phi: f64,
    pub prop_sd_mu: f64,
    pub prop_halfwidth_sigma2: f64,
    pub seed: u64,
    pub phi_scan: PhiScan,
    /// Starting state; `None` uses [`ParamState::initial`].
    pub init: Option<ParamState>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            burnin: 1000,
            main_iters: 30_000,
            thin: 1,
            aux: SimConfig::default(),
            prop_sd_theta: vec![0.1],
            prop_sd_phi: 0.5,
            prop_sd_mu: 0.1,
            prop_halfwidth_sigma2: 0.5,
            seed: 0,
            phi_scan: PhiScan::Sequential,
            init: None,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self, m: &ModelSpec) -> Result<()> {
        if self.main_iters == 0 {
            return Err(Error::domain("main_iters must be at least 1"));
        }
        if self.thin == 0 {
            return Err(Error::domain("thin must be at least 1"));
        }
        self.aux.validate()?;
        if self.prop_sd_theta.len() != 1 && self.prop_sd_theta.len() != m.n_theta() {
            return Err(Error::domain(format!(
                "prop_sd_theta has {} entries; expected 1 or {}",
                self.prop_sd_theta.len(),
                m.n_theta()
            )));
        }
        let scales = self.prop_sd_theta.iter().copied().chain([
            self.prop_sd_phi,
            self.prop_sd_mu,
            self.prop_halfwidth_sigma2,
        ]);
        for s in scales {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::domain(format!("proposal scales must be positive, got {s}")));
            }
        }
        Ok(())
    }

    fn theta_sd(&self, k: usize) -> f64 {
        if self.prop_sd_theta.len() == 1 {
            self.prop_sd_theta[0]
        } else {
            self.prop_sd_theta[k]
        }
    }
}

/// Fractions of accepted proposals per block; `None` for blocks the model
/// does not have or when read back from a draws file.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptRates {
    pub theta: Option<f64>,
    pub phi: Option<f64>,
    pub mu_phi: Option<f64>,
    pub sigma2_phi: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainOutput {
    pub columns: Vec<String>,
    /// One row per stored iteration, aligned with `columns`.
    pub draws: Vec<Vec<f64>>,
    pub accept_rates: AcceptRates,
    pub stats: Vec<StatisticKind>,
    pub random_effects: bool,
    pub n: usize,
    pub wall_seconds: f64,
}

/// Column names for a model on `n` vertices.
pub fn column_names(m: &ModelSpec, n: usize) -> Vec<String> {
    let mut cols: Vec<String> = m.stats().iter().map(|s| format!("theta.{s}")).collect();
    if m.random_effects() {
        cols.extend((1..=n).map(|i| format!("phi.{i}")));
        cols.push("mu_phi".into());
        cols.push("sigma2_phi".into());
    }
    cols
}

impl ChainOutput {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.column_index(name)?;
        Some(self.draws.iter().map(|r| r[k]).collect())
    }

    fn column_mean(&self, k: usize) -> f64 {
        self.draws.iter().map(|r| r[k]).sum::<f64>() / self.draws.len() as f64
    }

    pub fn theta_means(&self) -> Vec<f64> {
        (0..self.stats.len()).map(|k| self.column_mean(k)).collect()
    }

    pub fn phi_means(&self) -> Vec<f64> {
        if !self.random_effects {
            return Vec::new();
        }
        let start = self.stats.len();
        (start..start + self.n).map(|k| self.column_mean(k)).collect()
    }

    /// Draws CSV: a header row of column names, then one row per draw.
    /// Values use the shortest representation that reads back exactly.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.draws {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Reads a draws CSV written by [`ChainOutput::to_csv`].
    pub fn from_csv(text: &str) -> Result<ChainOutput> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty draws file"))?;
        let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut stats = Vec::new();
        let mut n_phi = 0;
        for (k, c) in columns.iter().enumerate() {
            if let Some(name) = c.strip_prefix("theta.") {
                if k != stats.len() {
                    return Err(Error::parse(1, "theta columns must come first"));
                }
                stats.push(name.parse::<StatisticKind>().map_err(|e| Error::parse(1, e.to_string()))?);
            } else if let Some(idx) = c.strip_prefix("phi.") {
                n_phi += 1;
                if idx != n_phi.to_string() || k != stats.len() + n_phi - 1 {
                    return Err(Error::parse(1, format!("unexpected column `{c}`")));
                }
            } else if c != "mu_phi" && c != "sigma2_phi" {
                return Err(Error::parse(1, format!("unknown column `{c}`")));
            }
        }
        let random_effects = n_phi > 0;
        let expected = stats.len() + if random_effects { n_phi + 2 } else { 0 };
        if columns.len() != expected
            || (random_effects
                && (columns[expected - 2] != "mu_phi" || columns[expected - 1] != "sigma2_phi"))
        {
            return Err(Error::parse(1, "header does not follow theta.*, phi.*, mu_phi, sigma2_phi"));
        }
        let mut draws = Vec::new();
        for (idx, line) in lines {
            let row: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(idx + 1, format!("bad number: {e}")))?;
            if row.len() != columns.len() {
                return Err(Error::parse(idx + 1, format!("expected {} values", columns.len())));
            }
            draws.push(row);
        }
        if draws.is_empty() {
            return Err(Error::parse(1, "draws file has no rows"));
        }
        Ok(ChainOutput {
            columns,
            draws,
            accept_rates: AcceptRates::default(),
            stats,
            random_effects,
            n: n_phi,
            wall_seconds: 0.0,
        })
    }
}

/// `log α` of the block update of `theta`. Normalizing constants cancel, so
/// only the statistics of the observed and auxiliary networks enter.
pub fn theta_log_alpha(
    theta: &[f64],
    proposal: &[f64],
    observed_stats: &[f64],
    aux_stats: &[f64],
    hyper: &PriorHyper,
) -> f64 {
    let mut out = 0.0;
    for k in 0..theta.len() {
        out += (proposal[k] - theta[k]) * (observed_stats[k] - aux_stats[k]);
    }
    out + log_prior_theta(proposal, hyper) - log_prior_theta(theta, hyper)
}

/// `log α` of a single-site update of `phi_i`. Only the degree of vertex `i`
/// differs between the two potentials.
pub fn phi_log_alpha(
    phi_i: f64,
    proposal: f64,
    observed_degree: f64,
    aux_degree: f64,
    mu_phi: f64,
    sigma2_phi: f64,
) -> f64 {
    (proposal - phi_i) * (observed_degree - aux_degree) + normal_logpdf(proposal, mu_phi, sigma2_phi)
        - normal_logpdf(phi_i, mu_phi, sigma2_phi)
}

/// `log α` of the `mu_phi` update, proposed state in the numerator.
pub fn mu_log_alpha(phi: &[f64], mu: f64, proposal: f64, sigma2: f64, hyper: &PriorHyper) -> f64 {
    if proposal == mu {
        return 0.0;
    }
    log_prior_phi(phi, proposal, sigma2) + normal_logpdf(proposal, 0.0, hyper.tau2)
        - log_prior_phi(phi, mu, sigma2)
        - normal_logpdf(mu, 0.0, hyper.tau2)
}

/// `log α` of the `sigma2_phi` update; non-positive proposals are rejected.
pub fn sigma2_log_alpha(phi: &[f64], mu: f64, sigma2: f64, proposal: f64, hyper: &PriorHyper) -> f64 {
    if proposal <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if proposal == sigma2 {
        return 0.0;
    }
    log_prior_phi(phi, mu, proposal) + inv_gamma_logpdf(proposal, hyper.ig_a, hyper.ig_b)
        - log_prior_phi(phi, mu, sigma2)
        - inv_gamma_logpdf(sigma2, hyper.ig_a, hyper.ig_b)
}

#[inline]
fn metropolis_accept(log_alpha: f64, rng: &mut Rng) -> bool {
    log_alpha >= 0.0 || rng.random::<f64>() < log_alpha.exp()
}

/// Exchange-algorithm state for one observed network.
pub struct ExchangeSampler<'a> {
    observed: &'a Graph,
    model: &'a ModelSpec,
    cfg: &'a ChainConfig,
    observed_stats: Vec<f64>,
    observed_degrees: Vec<f64>,
    sim: Simulator,
    aux_iters: usize,
    sampler: SamplerKind,
}

impl<'a> ExchangeSampler<'a> {
    pub fn new(observed: &'a Graph, model: &'a ModelSpec, cfg: &'a ChainConfig) -> Result<Self> {
        cfg.validate(model)?;
        Ok(ExchangeSampler {
            observed,
            model,
            cfg,
            observed_stats: sufficient_stats(observed, model.stats()).0,
            observed_degrees: degree_stats(observed),
            sim: Simulator::new(model.stats(), observed.clone()),
            aux_iters: cfg.aux.aux_iters_for(observed.n()),
            sampler: cfg.aux.sampler,
        })
    }

    fn phi_slice<'s>(&self, state: &'s ParamState) -> &'s [f64] {
        if self.model.random_effects() {
            &state.phi
        } else {
            &[]
        }
    }

    /// Simulates an auxiliary network from the observed one.
    fn simulate(&mut self, theta: &[f64], phi: &[f64], rng: &mut Rng) {
        self.sim.reset(self.observed);
        self.sim.run(self.sampler, self.aux_iters, theta, phi, rng);
    }

    /// Exchange update of `theta` with an explicit proposal.
    pub fn update_theta_with(&mut self, state: &mut ParamState, proposal: Vec<f64>, rng: &mut Rng) -> bool {
        let phi = self.phi_slice(state).to_vec();
        self.simulate(&proposal, &phi, rng);
        let log_alpha = theta_log_alpha(
            &state.theta,
            &proposal,
            &self.observed_stats,
            self.sim.stats(),
            &self.model.hyper,
        );
        let accept = metropolis_accept(log_alpha, rng);
        if accept {
            state.theta = proposal;
        }
        accept
    }

    pub fn update_theta(&mut self, state: &mut ParamState, rng: &mut Rng) -> bool {
        let proposal: Vec<f64> = state
            .theta
            .iter()
            .enumerate()
            .map(|(k, t)| t + self.cfg.theta_sd(k) * rng.sample::<f64, _>(StandardNormal))
            .collect();
        self.update_theta_with(state, proposal, rng)
    }

    /// Exchange update of `phi_i` with an explicit proposal.
    pub fn update_phi_site_with(&mut self, state: &mut ParamState, i: usize, proposal: f64, rng: &mut Rng) -> bool {
        let current = state.phi[i];
        state.phi[i] = proposal;
        let theta = std::mem::take(&mut state.theta);
        self.simulate(&theta, &state.phi, rng);
        state.theta = theta;
        state.phi[i] = current;
        let log_alpha = phi_log_alpha(
            current,
            proposal,
            self.observed_degrees[i],
            f64::from(self.sim.graph().degree(i)),
            state.mu_phi,
            state.sigma2_phi,
        );
        let accept = metropolis_accept(log_alpha, rng);
        if accept {
            state.phi[i] = proposal;
        }
        accept
    }

    pub fn update_phi_site(&mut self, state: &mut ParamState, i: usize, rng: &mut Rng) -> bool {
        let proposal = state.phi[i] + self.cfg.prop_sd_phi * rng.sample::<f64, _>(StandardNormal);
        self.update_phi_site_with(state, i, proposal, rng)
    }
}

pub fn update_mu_with(state: &mut ParamState, proposal: f64, hyper: &PriorHyper, rng: &mut Rng) -> bool {
    let log_alpha = mu_log_alpha(&state.phi, state.mu_phi, proposal, state.sigma2_phi, hyper);
    let accept = metropolis_accept(log_alpha, rng);
    if accept {
        state.mu_phi = proposal;
    }
    accept
}

/// Random-walk update of `mu_phi`. No network simulation is needed because
/// the normalizing constant does not depend on the hyperparameters.
pub fn update_mu(state: &mut ParamState, m: &ModelSpec, cfg: &ChainConfig, rng: &mut Rng) -> bool {
    let proposal = state.mu_phi + cfg.prop_sd_mu * rng.sample::<f64, _>(StandardNormal);
    update_mu_with(state, proposal, &m.hyper, rng)
}

pub fn update_sigma2_with(state: &mut ParamState, proposal: f64, hyper: &PriorHyper, rng: &mut Rng) -> bool {
    let log_alpha = sigma2_log_alpha(&state.phi, state.mu_phi, state.sigma2_phi, proposal, hyper);
    let accept = metropolis_accept(log_alpha, rng);
    if accept {
        state.sigma2_phi = proposal;
    }
    accept
}

/// Update of `sigma2_phi` with a uniform proposal on
/// `[sigma2 − w, sigma2 + w]`; proposals at or below zero are rejected.
pub fn update_sigma2(state: &mut ParamState, m: &ModelSpec, cfg: &ChainConfig, rng: &mut Rng) -> bool {
    let w = cfg.prop_halfwidth_sigma2;
    let proposal = state.sigma2_phi + rng.random_range(-w..w);
    update_sigma2_with(state, proposal, &m.hyper, rng)
}

/// Exchange update of `theta` against the observed network `g`.
pub fn update_theta(
    state: &mut ParamState,
    g: &Graph,
    m: &ModelSpec,
    cfg: &ChainConfig,
    rng: &mut Rng,
) -> Result<bool> {
    state.check(m, g.n())?;
    if m.n_theta() == 0 {
        return Err(Error::domain("the model has no structural statistics"));
    }
    Ok(ExchangeSampler::new(g, m, cfg)?.update_theta(state, rng))
}

/// Exchange update of `phi_i` against the observed network `g`.
pub fn update_phi_site(
    state: &mut ParamState,
    i: usize,
    g: &Graph,
    m: &ModelSpec,
    cfg: &ChainConfig,
    rng: &mut Rng,
) -> Result<bool> {
    state.check(m, g.n())?;
    if !m.random_effects() {
        return Err(Error::domain("the model has no nodal random effects"));
    }
    if i >= g.n() {
        return Err(Error::domain(format!("vertex {i} out of range")));
    }
    Ok(ExchangeSampler::new(g, m, cfg)?.update_phi_site(state, i, rng))
}

#[derive(Default)]
struct Counter {
    accepted: u64,
    proposed: u64,
}

impl Counter {
    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }

    fn rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

/// Runs the full sampler on the observed network `g`.
///
/// Acceptance rates count every iteration, burn-in included. The result is a
/// deterministic function of the inputs and `cfg.seed`.
pub fn run_chain(g: &Graph, m: &ModelSpec, cfg: &ChainConfig) -> Result<ChainOutput> {
    let start = Instant::now();
    let n = g.n();
    let mut state = cfg.init.clone().unwrap_or_else(|| ParamState::initial(m, n));
    state.check(m, n)?;
    let mut sampler = ExchangeSampler::new(g, m, cfg)?;
    let mut rng = stream(cfg.seed, &[]);
    let (mut c_theta, mut c_phi, mut c_mu, mut c_sigma2) =
        (Counter::default(), Counter::default(), Counter::default(), Counter::default());
    let mut order: Vec<usize> = (0..n).collect();
    let total = cfg.burnin + cfg.main_iters;
    let mut draws = Vec::with_capacity(cfg.main_iters / cfg.thin + 1);

    for iter in 0..total {
        if m.n_theta() > 0 {
            c_theta.record(sampler.update_theta(&mut state, &mut rng));
        }
        if m.random_effects() {
            if cfg.phi_scan == PhiScan::RandomPermutation {
                order.shuffle(&mut rng);
            }
            for &i in &order {
                c_phi.record(sampler.update_phi_site(&mut state, i, &mut rng));
            }
            c_mu.record(update_mu(&mut state, m, cfg, &mut rng));
            c_sigma2.record(update_sigma2(&mut state, m, cfg, &mut rng));
        }
        if iter >= cfg.burnin && (iter - cfg.burnin) % cfg.thin == 0 {
            let mut row = state.theta.clone();
            if m.random_effects() {
                row.extend_from_slice(&state.phi);
                row.push(state.mu_phi);
                row.push(state.sigma2_phi);
            }
            draws.push(row);
        }
    }

    Ok(ChainOutput {
        columns: column_names(m, n),
        draws,
        accept_rates: AcceptRates {
            theta: c_theta.rate(),
            phi: c_phi.rate(),
            mu_phi: c_mu.rate(),
            sigma2_phi: c_sigma2.rate(),
        },
        stats: m.stats().to_vec(),
        random_effects: m.random_effects(),
        n,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Posterior summary of one column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// `exp(mean(log x))`; only reported for `sigma2_phi`.
    pub geometric_mean: Option<f64>,
    pub q05: f64,
    pub median: f64,
    pub q95: f64,
    /// Monte Carlo standard error of the mean (batch means).
    pub mcse: f64,
    pub ess: f64,
    /// Autocorrelation at lags 1, 2, ...
    pub acf: Vec<f64>,
    /// Set when the column is constant and the autocorrelation undefined;
    /// `acf` is then reported as 1 at every lag.
    pub acf_degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub draws: usize,
    pub params: Vec<ParamSummary>,
    pub accept_rates: AcceptRates,
}

impl Summary {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }
}

pub const ACF_MAX_LAG: usize = 50;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n − 1 denominator).
pub fn sd(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// Linear-interpolation quantile of unsorted data.
pub fn quantile(x: &[f64], q: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Autocorrelations at lags `1..=max_lag`, or `None` for a constant series.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Option<Vec<f64>> {
    let m = mean(x);
    let dev: Vec<f64> = x.iter().map(|v| v - m).collect();
    let var: f64 = dev.iter().map(|d| d * d).sum();
    if var <= 0.0 {
        return None;
    }
    Some(
        (1..=max_lag.min(x.len().saturating_sub(1)))
            .map(|k| dev.iter().zip(&dev[k..]).map(|(a, b)| a * b).sum::<f64>() / var)
            .collect(),
    )
}

/// Monte Carlo standard error of the mean by non-overlapping batch means
/// with about `sqrt(len)` batches.
pub fn batch_means_se(x: &[f64]) -> f64 {
    let len = x.len();
    let size = (len as f64).sqrt().floor().max(1.0) as usize;
    let batches = len / size;
    if batches < 2 {
        return sd(x) / (len as f64).sqrt();
    }
    let means: Vec<f64> = (0..batches).map(|b| mean(&x[b * size..(b + 1) * size])).collect();
    sd(&means) / (batches as f64).sqrt()
}

fn summarize_column(name: &str, x: &[f64]) -> ParamSummary {
    let mean_x = mean(x);
    let sd_x = sd(x);
    let (acf, degenerate) = match autocorrelation(x, ACF_MAX_LAG) {
        Some(a) => (a, false),
        None => (vec![1.0; ACF_MAX_LAG.min(x.len().saturating_sub(1))], true),
    };
    let mcse = batch_means_se(x);
    let ess = if mcse > 0.0 {
        (sd_x / mcse).powi(2)
    } else {
        x.len() as f64
    };
    let geometric_mean = (name == "sigma2_phi").then(|| mean(&x.iter().map(|v| v.ln()).collect::<Vec<_>>()).exp());
    ParamSummary {
        name: name.to_string(),
        mean: mean_x,
        sd: sd_x,
        geometric_mean,
        q05: quantile(x, 0.05),
        median: quantile(x, 0.5),
        q95: quantile(x, 0.95),
        mcse,
        ess,
        acf,
        acf_degenerate: degenerate,
    }
}

pub fn summarize(out: &ChainOutput) -> Result<Summary> {
    if out.draws.is_empty() {
        return Err(Error::domain("no draws to summarize"));
    }
    let params = out
        .columns
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let col: Vec<f64> = out.draws.iter().map(|r| r[k]).collect();
            summarize_column(name, &col)
        })
        .collect();
    Ok(Summary {
        draws: out.draws.len(),
        params,
        accept_rates: out.accept_rates,
    })
}

/// ACF table: one row per lag, one column per parameter.
pub fn acf_csv(summary: &Summary) -> String {
    let mut out = String::from("lag");
    for p in &summary.params {
        out.push(',');
        out.push_str(&p.name);
    }
    out.push('\n');
    let lags = summary.params.iter().map(|p| p.acf.len()).max().unwrap_or(0);
    for lag in 0..lags {
        out.push_str(&(lag + 1).to_string());
        for p in &summary.params {
            out.push(',');
            if let Some(v) = p.acf.get(lag) {
                out.push_str(&format!("{v:?}"));
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::parse_edge_list;
    use approx::assert_abs_diff_eq;
    use StatisticKind::*;

    fn small_graph() -> Graph {
        parse_edge_list("n=6\n1 2\n1 3\n2 3\n3 4\n5 6\n").unwrap()
    }

    #[test]
    fn identity_proposals_always_accept() {
        let hyper = PriorHyper::default();
        assert_eq!(theta_log_alpha(&[0.3, -1.0], &[0.3, -1.0], &[5.0, 1.0], &[9.0, 0.0], &hyper), 0.0);
        assert_eq!(phi_log_alpha(0.4, 0.4, 3.0, 7.0, -1.0, 0.5), 0.0);
        assert_eq!(mu_log_alpha(&[0.1, -0.2], 0.7, 0.7, 1.3, &hyper), 0.0);
        assert_eq!(sigma2_log_alpha(&[0.1, -0.2], 0.7, 1.3, 1.3, &hyper), 0.0);

        // the injected proposal path accepts with probability one
        let g = small_graph();
        let m = ModelSpec::mixed(vec![Triangles]).unwrap();
        let cfg = ChainConfig::default();
        let mut sampler = ExchangeSampler::new(&g, &m, &cfg).unwrap();
        let mut rng = stream(1, &[]);
        let mut state = ParamState::initial(&m, 6);
        state.theta = vec![0.4];
        state.phi = vec![0.2, -0.3, 0.0, 1.0, -1.0, 0.5];
        for _ in 0..200 {
            let before = state.clone();
            assert!(sampler.update_theta_with(&mut state, before.theta.clone(), &mut rng));
            assert!(sampler.update_phi_site_with(&mut state, 3, before.phi[3], &mut rng));
            assert!(update_mu_with(&mut state, before.mu_phi, &m.hyper, &mut rng));
            assert!(update_sigma2_with(&mut state, before.sigma2_phi, &m.hyper, &mut rng));
            assert_eq!(state, before);
        }
    }

    #[test]
    fn phi_shortcut_matches_full_potential_difference() {
        use crate::model::log_potential;
        let m = ModelSpec::mixed(vec![Triangles, TwoStars]).unwrap();
        let y = small_graph();
        let y_aux = parse_edge_list("n=6\n1 4\n2 4\n3 4\n4 5\n4 6\n1 6\n").unwrap();
        let mut p = ParamState::initial(&m, 6);
        p.theta = vec![0.3, -0.1];
        p.phi = vec![0.5, -0.4, 1.2, 0.0, -0.7, 0.3];
        let i = 3;
        let mut q = p.clone();
        q.phi[i] = -0.9;
        // log q_{phi}(y') + log q_{phi'}(y) − log q_{phi}(y) − log q_{phi'}(y')
        let full = log_potential(&p, &y_aux, &m).unwrap() + log_potential(&q, &y, &m).unwrap()
            - log_potential(&p, &y, &m).unwrap()
            - log_potential(&q, &y_aux, &m).unwrap();
        let shortcut = phi_log_alpha(p.phi[i], q.phi[i], f64::from(y.degree(i)), f64::from(y_aux.degree(i)), 0.0, 1.0)
            - normal_logpdf(q.phi[i], 0.0, 1.0)
            + normal_logpdf(p.phi[i], 0.0, 1.0);
        assert_abs_diff_eq!(full, shortcut, epsilon = 1e-12);

        let sy = sufficient_stats(&y, m.stats()).0;
        let sa = sufficient_stats(&y_aux, m.stats()).0;
        let mut r = p.clone();
        r.theta = vec![-0.2, 0.25];
        let full = log_potential(&p, &y_aux, &m).unwrap() + log_potential(&r, &y, &m).unwrap()
            - log_potential(&p, &y, &m).unwrap()
            - log_potential(&r, &y_aux, &m).unwrap();
        let hyper = PriorHyper::default();
        let shortcut = theta_log_alpha(&p.theta, &r.theta, &sy, &sa, &hyper) - log_prior_theta(&r.theta, &hyper)
            + log_prior_theta(&p.theta, &hyper);
        assert_abs_diff_eq!(full, shortcut, epsilon = 1e-12);
    }

    #[test]
    fn mu_prefers_moves_toward_common_value() {
        let hyper = PriorHyper::default();
        let phi = vec![0.8; 10];
        for mu in [-2.0, -0.5, 0.3, 1.5, 3.0] {
            let toward = mu_log_alpha(&phi, mu, 0.8, 0.5, &hyper);
            let away = mu_log_alpha(&phi, mu, mu + (mu - 0.8).signum() * 0.3, 0.5, &hyper);
            assert!(toward.min(0.0) >= away.min(0.0));
        }
    }

    #[test]
    fn sigma2_nonpositive_proposals_rejected() {
        let hyper = PriorHyper::default();
        let mut state = ParamState {
            theta: vec![],
            phi: vec![0.1, 0.2],
            mu_phi: 0.0,
            sigma2_phi: 0.3,
        };
        let mut rng = stream(2, &[]);
        for p in [0.0, -0.1, -5.0] {
            assert_eq!(sigma2_log_alpha(&state.phi, 0.0, 0.3, p, &hyper), f64::NEG_INFINITY);
            assert!(!update_sigma2_with(&mut state, p, &hyper, &mut rng));
            assert_eq!(state.sigma2_phi, 0.3);
        }
    }

    #[test]
    fn hyper_updates_target_conjugate_mu() {
        // vague prior on mu: full conditional is N(mean(phi), sigma2/n)
        let hyper = PriorHyper { tau2: 1e12, ..Default::default() };
        let m = ModelSpec::new(vec![], true, hyper).unwrap();
        let cfg = ChainConfig { prop_sd_mu: 0.3, ..Default::default() };
        let phi: Vec<f64> = (0..20).map(|k| -1.0 + 0.1 * k as f64).collect();
        let target = mean(&phi);
        let mut state = ParamState { theta: vec![], phi, mu_phi: 2.0, sigma2_phi: 0.5 };
        let mut rng = stream(3, &[]);
        let mut draws = Vec::new();
        for it in 0..120_000 {
            update_mu(&mut state, &m, &cfg, &mut rng);
            if it >= 2000 {
                draws.push(state.mu_phi);
            }
        }
        assert!((mean(&draws) - target).abs() < 0.02);
        assert!((sd(&draws) - (0.5f64 / 20.0).sqrt()).abs() < 0.01);
    }

    #[test]
    fn hyper_updates_target_conjugate_sigma2() {
        let hyper = PriorHyper { ig_a: 2.0, ig_b: 1.0, ..Default::default() };
        let m = ModelSpec::new(vec![], true, hyper).unwrap();
        let cfg = ChainConfig { prop_halfwidth_sigma2: 0.4, ..Default::default() };
        let phi: Vec<f64> = (0..15).map(|k| 0.3 * ((k * 7 % 11) as f64 - 5.0)).collect();
        let mu = 0.2;
        let shape = 2.0 + 15.0 / 2.0;
        let rate = 1.0 + 0.5 * phi.iter().map(|f| (f - mu) * (f - mu)).sum::<f64>();
        let mut state = ParamState { theta: vec![], phi, mu_phi: mu, sigma2_phi: 1.0 };
        let mut rng = stream(4, &[]);
        let mut inv = Vec::new();
        for it in 0..200_000 {
            update_sigma2(&mut state, &m, &cfg, &mut rng);
            assert!(state.sigma2_phi > 0.0);
            if it >= 2000 {
                inv.push(1.0 / state.sigma2_phi);
            }
        }
        // 1/sigma2 ~ Gamma(shape, rate)
        let expect = shape / rate;
        assert!((mean(&inv) / expect - 1.0).abs() < 0.02, "{} vs {expect}", mean(&inv));
    }

    #[test]
    fn frame_conditions() {
        let g = small_graph();
        let m = ModelSpec::mixed(vec![Triangles]).unwrap();
        let cfg = ChainConfig { prop_sd_theta: vec![1.0], ..Default::default() };
        let mut sampler = ExchangeSampler::new(&g, &m, &cfg).unwrap();
        let mut rng = stream(5, &[]);
        let mut state = ParamState::initial(&m, 6);
        for _ in 0..100 {
            let before = state.clone();
            sampler.update_theta(&mut state, &mut rng);
            assert_eq!((&state.phi, state.mu_phi, state.sigma2_phi), (&before.phi, before.mu_phi, before.sigma2_phi));
            let before = state.clone();
            update_mu(&mut state, &m, &cfg, &mut rng);
            update_sigma2(&mut state, &m, &cfg, &mut rng);
            assert_eq!((&state.theta, &state.phi), (&before.theta, &before.phi));
        }
    }

    #[test]
    fn chain_is_deterministic() {
        let g = small_graph();
        let m = ModelSpec::mixed(vec![Triangles]).unwrap();
        let cfg = ChainConfig { burnin: 20, main_iters: 200, seed: 99, ..Default::default() };
        let a = run_chain(&g, &m, &cfg).unwrap();
        let b = run_chain(&g, &m, &cfg).unwrap();
        assert_eq!(a.draws, b.draws);
        assert_eq!(a.accept_rates, b.accept_rates);
        assert_eq!(a.draws.len(), 200);
        assert!(a.draws.iter().all(|r| r[r.len() - 1] > 0.0));
        let thinned = run_chain(&g, &m, &ChainConfig { thin: 7, ..cfg }).unwrap();
        assert_eq!(thinned.draws.len(), 29);
    }

    #[test]
    fn csv_round_trip() {
        let g = small_graph();
        let m = ModelSpec::mixed(vec![Triangles]).unwrap();
        let cfg = ChainConfig { burnin: 5, main_iters: 30, seed: 1, ..Default::default() };
        let out = run_chain(&g, &m, &cfg).unwrap();
        assert_eq!(out.columns[0], "theta.triangles");
        assert_eq!(out.columns[1], "phi.1");
        assert_eq!(out.columns.last().unwrap(), "sigma2_phi");
        let back = ChainOutput::from_csv(&out.to_csv()).unwrap();
        assert_eq!(back.draws, out.draws);
        assert_eq!((back.n, back.random_effects, &back.stats), (6, true, &out.stats));
        assert!(ChainOutput::from_csv("theta.edges,bogus\n1,2\n").is_err());
        assert!(ChainOutput::from_csv("theta.edges\n1\nx\n").is_err());
    }

    #[test]
    fn config_validation() {
        let m = ModelSpec::fixed(vec![Edges, Triangles]).unwrap();
        assert!(ChainConfig::default().validate(&m).is_ok());
        assert!(ChainConfig { main_iters: 0, ..Default::default() }.validate(&m).is_err());
        assert!(ChainConfig { prop_sd_mu: 0.0, ..Default::default() }.validate(&m).is_err());
        assert!(ChainConfig { prop_sd_theta: vec![0.1, 0.2, 0.3], ..Default::default() }
            .validate(&m)
            .is_err());
    }

    fn output_with(columns: &[&str], rows: Vec<Vec<f64>>) -> ChainOutput {
        ChainOutput {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            draws: rows,
            accept_rates: AcceptRates::default(),
            stats: vec![],
            random_effects: true,
            n: 0,
            wall_seconds: 0.0,
        }
    }

    #[test]
    fn summary_examples() {
        let out = output_with(&["sigma2_phi"], vec![vec![1.0], vec![1.0], vec![1.0]]);
        let s = summarize(&out).unwrap();
        let p = s.get("sigma2_phi").unwrap();
        assert_eq!(p.geometric_mean, Some(1.0));
        assert_eq!(p.sd, 0.0);
        assert!(p.acf_degenerate);
        assert!(p.acf.iter().all(|&a| a == 1.0));

        let e = std::f64::consts::E;
        let out = output_with(&["sigma2_phi"], vec![vec![e], vec![e.powi(3)]]);
        let g = summarize(&out).unwrap().params[0].geometric_mean.unwrap();
        assert_abs_diff_eq!(g, e * e, epsilon = 1e-12);
        assert!(summarize(&output_with(&["x"], vec![])).is_err());
    }

    #[test]
    fn acf_of_alternating_series() {
        let x: Vec<f64> = (0..1000).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let acf = autocorrelation(&x, 4).unwrap();
        assert_abs_diff_eq!(acf[0], -0.999, epsilon = 1e-9);
        assert_abs_diff_eq!(acf[1], 0.998, epsilon = 1e-9);
    }
}
