//! Bayes factor of the random-effects model against the fixed model.
//!
//! The marginal likelihood of each model is evaluated at a plug-in point
//! through `log p(y) = log p(y | psi) + log p(psi) − log p(psi | y)`. The
//! intractable pieces are handled as follows:
//!
//! * the ratio of normalizing constants `κ(θ') / κ(θ, φ̂)` by path sampling
//!   along a straight line joining the two parameter vectors;
//! * the integral over the random effects by a Laplace approximation whose
//!   curvature involves the covariance of the degree vector;
//! * the posterior densities by multivariate normal fits to the draws.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exchange::ChainOutput;
use crate::graph::{degree_stats, sufficient_stats, Graph, StatisticKind};
use crate::model::{log_hyperprior, log_prior_theta, ModelSpec, ParamState};
use crate::netsim::{SimConfig, Simulator};
use crate::rng::stream;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Networks simulated per independently seeded chunk of the Laplace
/// covariance estimate.
pub const COV_CHUNK: usize = 250;

#[derive(Clone, Debug, PartialEq)]
pub struct PathConfig {
    /// Number of subintervals `I`; the grid is `g_i = i / I`, `i = 0..=I`.
    pub grid_points: usize,
    /// Networks averaged at each grid point.
    pub draws_per_point: usize,
    /// Sampler, spacing between draws and starting graph. Each grid point
    /// starts from `sim.init` with a burn-in of one spacing.
    pub sim: SimConfig,
    pub seed: u64,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            grid_points: 1000,
            draws_per_point: 1000,
            sim: SimConfig::default(),
            seed: 0,
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 2 {
            return Err(Error::domain("grid_points must be at least 2"));
        }
        if self.draws_per_point < 1 {
            return Err(Error::domain("draws_per_point must be at least 1"));
        }
        self.sim.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaplaceConfig {
    /// Simulated networks for the degree covariance; at least `n + 1`.
    pub cov_sims: usize,
    pub sim: SimConfig,
    pub seed: u64,
}

impl Default for LaplaceConfig {
    fn default() -> Self {
        LaplaceConfig {
            cov_sims: 10_000,
            sim: SimConfig::default(),
            seed: 0,
        }
    }
}

impl LaplaceConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.cov_sims < n + 1 {
            return Err(Error::domain(format!(
                "cov_sims must be at least n + 1 = {}, got {}",
                n + 1,
                self.cov_sims
            )));
        }
        self.sim.validate()
    }
}

/// Parameter values at which both marginal likelihoods are evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PluginPoint {
    /// Fixed model, in the fixed model's statistic order.
    pub theta_fixed: Vec<f64>,
    /// Mixed model, in the mixed model's statistic order.
    pub theta_mixed: Vec<f64>,
    pub phi_hat: Vec<f64>,
    pub mu_hat: f64,
    pub log_sigma2_hat: f64,
}

impl PluginPoint {
    pub fn sigma2_hat(&self) -> f64 {
        self.log_sigma2_hat.exp()
    }

    /// Posterior means, with `sigma2_phi` averaged on the log scale.
    pub fn from_fits(fit_fixed: &ChainOutput, fit_mixed: &ChainOutput) -> Result<Self> {
        if fit_fixed.random_effects || !fit_mixed.random_effects {
            return Err(Error::domain(
                "expected a fixed-effects fit and a random-effects fit, in that order",
            ));
        }
        if fit_fixed.draws.is_empty() || fit_mixed.draws.is_empty() {
            return Err(Error::domain("fits must contain draws"));
        }
        let log_s2: Vec<f64> = fit_mixed
            .column("sigma2_phi")
            .expect("mixed fit has sigma2_phi")
            .iter()
            .map(|v| v.ln())
            .collect();
        Ok(PluginPoint {
            theta_fixed: fit_fixed.theta_means(),
            theta_mixed: fit_mixed.theta_means(),
            phi_hat: fit_mixed.phi_means(),
            mu_hat: crate::exchange::mean(&fit_mixed.column("mu_phi").expect("mixed fit has mu_phi")),
            log_sigma2_hat: crate::exchange::mean(&log_s2),
        })
    }

    fn mixed_state(&self) -> ParamState {
        ParamState {
            theta: self.theta_mixed.clone(),
            phi: self.phi_hat.clone(),
            mu_phi: self.mu_hat,
            sigma2_phi: self.sigma2_hat(),
        }
    }

    /// Mixed-model `theta` written in the fixed model's statistic order, with
    /// zero for the edge parameter.
    fn embedded_theta(&self, m1: &ModelSpec, m2: &ModelSpec) -> Vec<f64> {
        m1.stats()
            .iter()
            .map(|k| match m2.stats().iter().position(|s| s == k) {
                Some(idx) => self.theta_mixed[idx],
                None => 0.0,
            })
            .collect()
    }

    pub fn validate(&self, m1: &ModelSpec, m2: &ModelSpec, n: usize) -> Result<()> {
        check_nesting(m1, m2)?;
        if self.theta_fixed.len() != m1.n_theta() || self.theta_mixed.len() != m2.n_theta() {
            return Err(Error::domain("plug-in theta dimensions do not match the models"));
        }
        if self.phi_hat.len() != n {
            return Err(Error::domain(format!(
                "plug-in phi has {} entries for {n} vertices",
                self.phi_hat.len()
            )));
        }
        let finite = self
            .theta_fixed
            .iter()
            .chain(&self.theta_mixed)
            .chain(&self.phi_hat)
            .chain([&self.mu_hat, &self.log_sigma2_hat])
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::domain("plug-in point has non-finite entries"));
        }
        Ok(())
    }
}

/// The fixed model must use Edges plus exactly the mixed model's statistics.
pub fn check_nesting(m1: &ModelSpec, m2: &ModelSpec) -> Result<()> {
    if m1.random_effects() || !m2.random_effects() {
        return Err(Error::domain(
            "the first model must be fixed-effects and the second random-effects",
        ));
    }
    let mut expected: Vec<StatisticKind> = m2.stats().to_vec();
    expected.push(StatisticKind::Edges);
    expected.sort();
    let mut got = m1.stats().to_vec();
    got.sort();
    if got != expected {
        return Err(Error::domain(format!(
            "models are not nested: the fixed model must use edges plus [{}]",
            m2.stats().iter().map(|s| s.name()).collect::<Vec<_>>().join(", ")
        )));
    }
    Ok(())
}

/// Sample covariance of the degree vector under `(theta, phi)`.
///
/// Networks are drawn in chunks of [`COV_CHUNK`]; chunk `k` uses its own
/// stream, starts from `c.sim.init`, burns in for one spacing and then keeps
/// a network every `aux_iters` steps.
pub fn degree_cov(p: &ParamState, m: &ModelSpec, n: usize, c: &LaplaceConfig) -> Result<DMatrix<f64>> {
    c.validate(n)?;
    p.check(m, n)?;
    let phi: &[f64] = if m.random_effects() { &p.phi } else { &[] };
    let spacing = c.sim.aux_iters_for(n);
    let chunks = c.cov_sims.div_ceil(COV_CHUNK);
    let degrees: Vec<Vec<Vec<f64>>> = (0..chunks)
        .into_par_iter()
        .map(|k| -> Result<Vec<Vec<f64>>> {
            let size = COV_CHUNK.min(c.cov_sims - k * COV_CHUNK);
            let mut rng = stream(c.seed, &[k as u64]);
            let mut sim = Simulator::new(m.stats(), c.sim.initial_graph(n, &mut rng)?);
            sim.run(c.sim.sampler, spacing, &p.theta, phi, &mut rng);
            let mut out = Vec::with_capacity(size);
            for _ in 0..size {
                sim.run(c.sim.sampler, spacing, &p.theta, phi, &mut rng);
                out.push(degree_stats(sim.graph()));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<f64>> = degrees.into_iter().flatten().collect();
    Ok(sample_cov(&rows, n))
}

fn sample_cov(rows: &[Vec<f64>], dim: usize) -> DMatrix<f64> {
    let count = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut cov = DMatrix::zeros(dim, dim);
    for r in rows {
        for a in 0..dim {
            let da = r[a] - mean[a];
            if da == 0.0 {
                continue;
            }
            for b in a..dim {
                cov[(a, b)] += da * (r[b] - mean[b]);
            }
        }
    }
    let denom = (count - 1.0).max(1.0);
    for a in 0..dim {
        for b in a..dim {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    cov
}

fn cholesky_logdet(a: DMatrix<f64>, what: &str) -> Result<(f64, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::numerical(format!("{what} is not positive definite")))?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok((logdet, chol))
}

/// Laplace approximation of the integral over the random effects, given the
/// degree covariance at `phi_hat`:
///
/// `−n log σ + φ̂·t(y) − |φ̂ − μ1|² / (2σ²) − ½ log det(I/σ² + Cov t(Y))`.
///
/// The full log marginal likelihood at the plug-in point is
/// `θ·s(y) − log κ(θ, φ̂)` plus this value.
pub fn laplace_term_with_cov(pt: &PluginPoint, g: &Graph, cov: &DMatrix<f64>) -> Result<f64> {
    let n = g.n();
    if pt.phi_hat.len() != n || cov.nrows() != n || cov.ncols() != n {
        return Err(Error::domain("dimension mismatch in the Laplace approximation"));
    }
    let s2 = pt.sigma2_hat();
    let t = degree_stats(g);
    let fit: f64 = pt.phi_hat.iter().zip(&t).map(|(f, t)| f * t).sum();
    let dev: f64 = pt.phi_hat.iter().map(|f| (f - pt.mu_hat).powi(2)).sum();
    let mut a = cov.clone();
    for i in 0..n {
        a[(i, i)] += 1.0 / s2;
    }
    let (logdet, _) = cholesky_logdet(a, "the Laplace curvature matrix (increase cov_sims)")?;
    Ok(-0.5 * n as f64 * pt.log_sigma2_hat + fit - dev / (2.0 * s2) - 0.5 * logdet)
}

/// Laplace term with the degree covariance estimated by simulation at
/// `(theta_mixed, phi_hat)`.
pub fn laplace_log_marginal(pt: &PluginPoint, m2: &ModelSpec, g: &Graph, c: &LaplaceConfig) -> Result<f64> {
    if !m2.random_effects() {
        return Err(Error::domain("the Laplace approximation needs a random-effects model"));
    }
    let state = pt.mixed_state();
    state.check(m2, g.n())?;
    let cov = degree_cov(&state, m2, g.n(), c)?;
    laplace_term_with_cov(pt, g, &cov)
}

/// Path-sampling output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathEstimate {
    /// Estimate of `log κ(θ') − log κ(θ, φ̂)`.
    pub log_ratio: f64,
    pub grid: Vec<f64>,
    /// Mean of the integrand at each grid point.
    pub e_values: Vec<f64>,
    /// Naive standard error of each `e_values` entry (draws treated as
    /// independent).
    pub e_se: Vec<f64>,
}

impl PathEstimate {
    /// Interior grid points whose value differs from the mean of its two
    /// neighbours by more than `k` combined standard errors.
    pub fn rough_points(&self, k: f64) -> Vec<usize> {
        let e = &self.e_values;
        let se = &self.e_se;
        (1..e.len().saturating_sub(1))
            .filter(|&i| {
                let band = (se[i].powi(2) + 0.25 * (se[i - 1].powi(2) + se[i + 1].powi(2))).sqrt();
                (e[i] - 0.5 * (e[i - 1] + e[i + 1])).abs() > k * band.max(1e-12)
            })
            .collect()
    }
}

/// Path sampling for `log κ(θ') / κ(θ, φ̂)` along
/// `θ(g) = (1 − g) θ' + g [0; θ]`, `φ(g) = g φ̂`.
///
/// Grid point `i` has its own stream and starting graph, so the estimate
/// does not depend on evaluation order or thread count. The integral uses
/// the trapezoidal rule over all `I + 1` points.
pub fn path_log_kappa_ratio(
    pt: &PluginPoint,
    m1: &ModelSpec,
    m2: &ModelSpec,
    n: usize,
    c: &PathConfig,
) -> Result<PathEstimate> {
    c.validate()?;
    pt.validate(m1, m2, n)?;
    let theta_end = pt.embedded_theta(m1, m2);
    let coef: Vec<f64> = pt.theta_fixed.iter().zip(&theta_end).map(|(a, b)| a - b).collect();
    let big_i = c.grid_points;
    let spacing = c.sim.aux_iters_for(n);
    let points: Vec<(f64, f64)> = (0..=big_i)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let g = i as f64 / big_i as f64;
            let theta: Vec<f64> = pt
                .theta_fixed
                .iter()
                .zip(&theta_end)
                .map(|(a, b)| (1.0 - g) * a + g * b)
                .collect();
            let phi: Vec<f64> = pt.phi_hat.iter().map(|f| g * f).collect();
            let mut rng = stream(c.seed, &[i as u64]);
            let mut sim = Simulator::new(m1.stats(), c.sim.initial_graph(n, &mut rng)?);
            sim.run(c.sim.sampler, spacing, &theta, &phi, &mut rng);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..c.draws_per_point {
                sim.run(c.sim.sampler, spacing, &theta, &phi, &mut rng);
                let structural: f64 = coef.iter().zip(sim.stats()).map(|(a, s)| a * s).sum();
                let nodal: f64 = pt
                    .phi_hat
                    .iter()
                    .zip(sim.graph().degrees())
                    .map(|(f, &d)| f * f64::from(d))
                    .sum();
                let v = structural - nodal;
                sum += v;
                sum_sq += v * v;
            }
            let count = c.draws_per_point as f64;
            let mean = sum / count;
            let var = if c.draws_per_point > 1 {
                ((sum_sq - count * mean * mean) / (count - 1.0)).max(0.0)
            } else {
                0.0
            };
            Ok((mean, (var / count).sqrt()))
        })
        .collect::<Result<_>>()?;
    let e_values: Vec<f64> = points.iter().map(|p| p.0).collect();
    let e_se: Vec<f64> = points.iter().map(|p| p.1).collect();
    let mut integral = 0.5 * (e_values[0] + e_values[big_i]);
    for v in &e_values[1..big_i] {
        integral += v;
    }
    Ok(PathEstimate {
        log_ratio: integral / big_i as f64,
        grid: (0..=big_i).map(|i| i as f64 / big_i as f64).collect(),
        e_values,
        e_se,
    })
}

/// Log density at `point` of the normal distribution fitted to `draws` by
/// sample mean and sample covariance.
pub fn normal_logpdf_fit(draws: &[Vec<f64>], point: &[f64]) -> Result<f64> {
    let dim = point.len();
    if dim == 0 {
        return Err(Error::domain("normal fit needs at least one dimension"));
    }
    if draws.len() < dim + 1 {
        return Err(Error::domain(format!(
            "normal fit in {dim} dimensions needs at least {} draws, got {}",
            dim + 1,
            draws.len()
        )));
    }
    if draws.iter().any(|r| r.len() != dim) {
        return Err(Error::domain("draws and point have different dimensions"));
    }
    let count = draws.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in draws {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let cov = sample_cov(draws, dim);
    let (logdet, chol) = cholesky_logdet(cov, "the sample covariance of the posterior draws")?;
    let d = DVector::from_iterator(dim, point.iter().zip(&mean).map(|(p, m)| p - m));
    let z = chol.l_dirty().solve_lower_triangular(&d).expect("Cholesky factor is invertible");
    Ok(-0.5 * (dim as f64 * LN_2PI + logdet + z.norm_squared()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BfComponents {
    /// `θ·s(y) − θ'·s'(y)`.
    pub log_likelihood_ratio_term: f64,
    /// `log κ(θ') − log κ(θ, φ̂)`.
    pub log_kappa_ratio: f64,
    /// `log p(θ) + log p(μ̂) + log p(σ̂²) − log p(θ')`.
    pub log_prior_ratio: f64,
    /// `log p̂(θ' | y) − log p̂(θ, μ̂, σ̂² | y)`. The mixed-model density is
    /// fitted on `log σ²` and converted to the `σ²` scale of the prior.
    pub log_posterior_density_ratio: f64,
    pub log_laplace_term: f64,
}

impl BfComponents {
    pub fn sum(&self) -> f64 {
        self.log_likelihood_ratio_term
            + self.log_kappa_ratio
            + self.log_prior_ratio
            + self.log_posterior_density_ratio
            + self.log_laplace_term
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvidenceReport {
    pub log_bf_21: f64,
    pub components: BfComponents,
    pub plugin: PluginPoint,
    pub path: PathEstimate,
    /// Interior grid points flagged by [`PathEstimate::rough_points`] at six
    /// standard errors.
    pub rough_grid_points: Vec<usize>,
}

fn check_fit(fit: &ChainOutput, m: &ModelSpec, n: usize, label: &str) -> Result<()> {
    if fit.stats != m.stats() || fit.random_effects != m.random_effects() {
        return Err(Error::domain(format!("{label} fit does not match its model")));
    }
    if fit.random_effects && fit.n != n {
        return Err(Error::domain(format!(
            "{label} fit has {} nodal effects but the network has {n} vertices",
            fit.n
        )));
    }
    Ok(())
}

/// Prior ratio component; exposed for cross-checks.
pub fn log_prior_ratio(pt: &PluginPoint, m1: &ModelSpec, m2: &ModelSpec) -> f64 {
    log_prior_theta(&pt.theta_mixed, &m2.hyper) + log_hyperprior(pt.mu_hat, pt.sigma2_hat(), &m2.hyper)
        - log_prior_theta(&pt.theta_fixed, &m1.hyper)
}

/// `log BF₂₁` of the mixed model `m2` against the fixed model `m1` for the
/// observed network `g`, from posterior draws of both models.
pub fn log_bayes_factor(
    fit1: &ChainOutput,
    fit2: &ChainOutput,
    g: &Graph,
    m1: &ModelSpec,
    m2: &ModelSpec,
    pc: &PathConfig,
    lc: &LaplaceConfig,
) -> Result<EvidenceReport> {
    let n = g.n();
    check_nesting(m1, m2)?;
    check_fit(fit1, m1, n, "fixed-model")?;
    check_fit(fit2, m2, n, "mixed-model")?;
    pc.validate()?;
    lc.validate(n)?;
    let pt = PluginPoint::from_fits(fit1, fit2)?;
    pt.validate(m1, m2, n)?;

    let s_fixed = sufficient_stats(g, m1.stats());
    let s_mixed = sufficient_stats(g, m2.stats());
    let log_likelihood_ratio_term = s_mixed.dot(&pt.theta_mixed) - s_fixed.dot(&pt.theta_fixed);

    let path = path_log_kappa_ratio(&pt, m1, m2, n, pc)?;
    let log_laplace_term = laplace_log_marginal(&pt, m2, g, lc)?;

    let p1 = m1.n_theta();
    let fixed_draws: Vec<Vec<f64>> = fit1.draws.iter().map(|r| r[..p1].to_vec()).collect();
    let log_post_fixed = normal_logpdf_fit(&fixed_draws, &pt.theta_fixed)?;

    let p2 = m2.n_theta();
    let mu_col = fit2.column_index("mu_phi").expect("mixed fit has mu_phi");
    let s2_col = fit2.column_index("sigma2_phi").expect("mixed fit has sigma2_phi");
    let mixed_draws: Vec<Vec<f64>> = fit2
        .draws
        .iter()
        .map(|r| {
            let mut v = r[..p2].to_vec();
            v.push(r[mu_col]);
            v.push(r[s2_col].ln());
            v
        })
        .collect();
    let mut mixed_point = pt.theta_mixed.clone();
    mixed_point.push(pt.mu_hat);
    mixed_point.push(pt.log_sigma2_hat);
    // density of log σ² minus log σ² gives the density of σ²
    let log_post_mixed = normal_logpdf_fit(&mixed_draws, &mixed_point)? - pt.log_sigma2_hat;

    let components = BfComponents {
        log_likelihood_ratio_term,
        log_kappa_ratio: path.log_ratio,
        log_prior_ratio: log_prior_ratio(&pt, m1, m2),
        log_posterior_density_ratio: log_post_fixed - log_post_mixed,
        log_laplace_term,
    };
    let log_bf_21 = components.sum();
    if !log_bf_21.is_finite() {
        return Err(Error::numerical("log Bayes factor is not finite"));
    }
    Ok(EvidenceReport {
        log_bf_21,
        components,
        rough_grid_points: path.rough_points(6.0),
        plugin: pt,
        path,
    })
}
