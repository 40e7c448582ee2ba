//! Model and prior specification, unnormalized likelihood, and an exact
//! normalizing constant for graphs small enough to enumerate.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::graph::{change_stat, degree_stats, dyad_count, sufficient_stats, Graph, StatisticKind};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Prior hyperparameters.
///
/// `theta ~ N(0, rho2 I)`, `mu_phi ~ N(0, tau2)` and `sigma2_phi ~ IG(ig_a, ig_b)`
/// with inverse-gamma density proportional to `x^(-a-1) exp(-b/x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorHyper {
    pub rho2: f64,
    pub tau2: f64,
    pub ig_a: f64,
    pub ig_b: f64,
}

impl Default for PriorHyper {
    fn default() -> Self {
        PriorHyper {
            rho2: 100.0,
            tau2: 100.0,
            ig_a: 0.001,
            ig_b: 0.001,
        }
    }
}

impl PriorHyper {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rho2", self.rho2),
            ("tau2", self.tau2),
            ("ig_a", self.ig_a),
            ("ig_b", self.ig_b),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// Which statistics are active, whether nodal random effects are present,
/// and the prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    stats: Vec<StatisticKind>,
    random_effects: bool,
    pub hyper: PriorHyper,
}

impl ModelSpec {
    pub fn new(stats: Vec<StatisticKind>, random_effects: bool, hyper: PriorHyper) -> Result<Self> {
        hyper.validate()?;
        if random_effects && stats.contains(&StatisticKind::Edges) {
            return Err(Error::domain(
                "a random-effects model cannot include the edges statistic; its effect is carried by mu_phi",
            ));
        }
        if !random_effects && stats.is_empty() {
            return Err(Error::domain("a fixed-effects model needs at least one statistic"));
        }
        for (k, s) in stats.iter().enumerate() {
            if stats[..k].contains(s) {
                return Err(Error::domain(format!("statistic `{s}` listed twice")));
            }
        }
        Ok(ModelSpec {
            stats,
            random_effects,
            hyper,
        })
    }

    pub fn fixed(stats: Vec<StatisticKind>) -> Result<Self> {
        Self::new(stats, false, PriorHyper::default())
    }

    pub fn mixed(stats: Vec<StatisticKind>) -> Result<Self> {
        Self::new(stats, true, PriorHyper::default())
    }

    pub fn with_hyper(mut self, hyper: PriorHyper) -> Result<Self> {
        hyper.validate()?;
        self.hyper = hyper;
        Ok(self)
    }

    pub fn stats(&self) -> &[StatisticKind] {
        &self.stats
    }

    pub fn random_effects(&self) -> bool {
        self.random_effects
    }

    pub fn n_theta(&self) -> usize {
        self.stats.len()
    }
}

/// One point `(theta, phi, mu_phi, sigma2_phi)` of the parameter space.
///
/// For fixed-effects models `phi` is empty and the hyperparameters are unused.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamState {
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub mu_phi: f64,
    pub sigma2_phi: f64,
}

impl ParamState {
    /// Neutral starting point: everything zero, `sigma2_phi = 1`.
    pub fn initial(m: &ModelSpec, n: usize) -> Self {
        ParamState {
            theta: vec![0.0; m.n_theta()],
            phi: if m.random_effects() { vec![0.0; n] } else { Vec::new() },
            mu_phi: 0.0,
            sigma2_phi: 1.0,
        }
    }

    pub fn fixed(theta: Vec<f64>) -> Self {
        ParamState {
            theta,
            phi: Vec::new(),
            mu_phi: 0.0,
            sigma2_phi: 1.0,
        }
    }

    pub fn check(&self, m: &ModelSpec, n: usize) -> Result<()> {
        if self.theta.len() != m.n_theta() {
            return Err(Error::domain(format!(
                "theta has {} entries but the model has {} statistics",
                self.theta.len(),
                m.n_theta()
            )));
        }
        if m.random_effects() {
            if self.phi.len() != n {
                return Err(Error::domain(format!(
                    "phi has {} entries for a graph on {n} vertices",
                    self.phi.len()
                )));
            }
            if !(self.sigma2_phi > 0.0) {
                return Err(Error::domain(format!(
                    "sigma2_phi must be positive, got {}",
                    self.sigma2_phi
                )));
            }
        } else if !self.phi.is_empty() {
            return Err(Error::domain("phi must be empty for a fixed-effects model"));
        }
        Ok(())
    }
}

pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// Inverse-gamma log density, `a ln b − lnΓ(a) − (a+1) ln x − b/x`.
pub fn inv_gamma_logpdf(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    a * b.ln() - ln_gamma(a) - (a + 1.0) * x.ln() - b / x
}

/// `theta · s(g) + phi · t(g)`, the log of the unnormalized likelihood.
pub fn log_potential(p: &ParamState, g: &Graph, m: &ModelSpec) -> Result<f64> {
    p.check(m, g.n())?;
    let mut out = sufficient_stats(g, m.stats()).dot(&p.theta);
    if m.random_effects() {
        out += degree_stats(g)
            .iter()
            .zip(&p.phi)
            .map(|(t, f)| t * f)
            .sum::<f64>();
    }
    Ok(out)
}

/// Conditional log-odds of dyad `{i, j}` given the rest of the graph.
///
/// Unchecked variant for the samplers; `phi` may be empty for fixed models.
#[inline]
pub(crate) fn logit_unchecked(
    stats: &[StatisticKind],
    theta: &[f64],
    phi: &[f64],
    g: &Graph,
    i: usize,
    j: usize,
) -> f64 {
    let mut out = 0.0;
    for (&k, &th) in stats.iter().zip(theta) {
        out += th * change_stat(k, g, i, j);
    }
    if !phi.is_empty() {
        out += phi[i] + phi[j];
    }
    out
}

pub fn conditional_logit(p: &ParamState, g: &Graph, i: usize, j: usize, m: &ModelSpec) -> Result<f64> {
    p.check(m, g.n())?;
    g.check_dyad(i, j)?;
    Ok(logit_unchecked(m.stats(), &p.theta, &p.phi, g, i, j))
}

/// `log N(theta; 0, rho2 I)`.
pub fn log_prior_theta(theta: &[f64], hyper: &PriorHyper) -> f64 {
    theta.iter().map(|&t| normal_logpdf(t, 0.0, hyper.rho2)).sum()
}

/// `Σ_i log N(phi_i; mu_phi, sigma2_phi)`.
pub fn log_prior_phi(phi: &[f64], mu_phi: f64, sigma2_phi: f64) -> f64 {
    phi.iter().map(|&f| normal_logpdf(f, mu_phi, sigma2_phi)).sum()
}

/// `log N(mu_phi; 0, tau2) + log IG(sigma2_phi; a, b)`.
pub fn log_hyperprior(mu_phi: f64, sigma2_phi: f64, hyper: &PriorHyper) -> f64 {
    normal_logpdf(mu_phi, 0.0, hyper.tau2) + inv_gamma_logpdf(sigma2_phi, hyper.ig_a, hyper.ig_b)
}

/// Joint log prior density; the nodal terms are dropped for fixed models.
pub fn log_prior(p: &ParamState, m: &ModelSpec) -> Result<f64> {
    if p.theta.len() != m.n_theta() {
        return Err(Error::domain("theta length does not match the model"));
    }
    let mut out = log_prior_theta(&p.theta, &m.hyper);
    if m.random_effects() {
        if !(p.sigma2_phi > 0.0) {
            return Err(Error::domain(format!(
                "sigma2_phi must be positive, got {}",
                p.sigma2_phi
            )));
        }
        out += log_prior_phi(&p.phi, p.mu_phi, p.sigma2_phi);
        out += log_hyperprior(p.mu_phi, p.sigma2_phi, &m.hyper);
    }
    Ok(out)
}

/// Largest dyad count [`exact_log_kappa`] will enumerate.
pub const MAX_ENUMERATED_DYADS: usize = 24;

/// Calls `visit(graph, log_potential)` for every graph on `n` vertices.
///
/// Graphs are visited in Gray-code order so each step flips one dyad and the
/// potential is updated by one conditional logit.
pub fn enumerate_graphs(
    p: &ParamState,
    m: &ModelSpec,
    n: usize,
    mut visit: impl FnMut(&Graph, f64),
) -> Result<()> {
    let dyads = dyad_count(n);
    if dyads > MAX_ENUMERATED_DYADS {
        return Err(Error::domain(format!(
            "refusing to enumerate 2^{dyads} graphs (limit 2^{MAX_ENUMERATED_DYADS})"
        )));
    }
    p.check(m, n)?;
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let mut g = Graph::empty(n);
    let mut lp = 0.0;
    visit(&g, lp);
    for k in 1u64..(1u64 << dyads) {
        let (i, j) = pairs[k.trailing_zeros() as usize];
        let delta = logit_unchecked(m.stats(), &p.theta, &p.phi, &g, i, j);
        if g.toggle(i, j) {
            lp += delta;
        } else {
            lp -= delta;
        }
        visit(&g, lp);
    }
    Ok(())
}

/// Exact `log κ(theta, phi)` by enumerating all `2^C(n,2)` graphs.
///
/// Only usable for `C(n,2) ≤ 24`; it exists to check the estimators.
pub fn exact_log_kappa(p: &ParamState, m: &ModelSpec, n: usize) -> Result<f64> {
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    enumerate_graphs(p, m, n, |_, lp| {
        if lp > max {
            sum = sum * (max - lp).exp() + 1.0;
            max = lp;
        } else {
            sum += (lp - max).exp();
        }
    })?;
    Ok(max + sum.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::parse_edge_list;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use StatisticKind::*;

    fn fixed(stats: &[StatisticKind]) -> ModelSpec {
        ModelSpec::fixed(stats.to_vec()).unwrap()
    }

    #[test]
    fn spec_constraints() {
        assert!(ModelSpec::mixed(vec![Edges, Triangles]).is_err());
        assert!(ModelSpec::fixed(vec![]).is_err());
        assert!(ModelSpec::mixed(vec![]).is_ok());
        assert!(ModelSpec::fixed(vec![Edges, Edges]).is_err());
        let bad = PriorHyper {
            ig_b: 0.0,
            ..Default::default()
        };
        assert!(ModelSpec::new(vec![Edges], false, bad).is_err());
    }

    #[test]
    fn log_potential_examples() {
        let g = parse_edge_list("n=6\n1 2\n2 3\n3 4\n4 5\n5 6\n").unwrap();
        let m = fixed(&[Edges, Triangles]);
        assert_eq!(log_potential(&ParamState::initial(&m, 6), &g, &m).unwrap(), 0.0);
        let m = fixed(&[Edges]);
        assert_eq!(log_potential(&ParamState::fixed(vec![-2.0]), &g, &m).unwrap(), -10.0);
        let m = ModelSpec::mixed(vec![]).unwrap();
        let mut p = ParamState::initial(&m, 6);
        p.phi = vec![1.0; 6];
        assert_eq!(log_potential(&p, &g, &m).unwrap(), 10.0);
        let m = fixed(&[Edges]);
        assert!(log_potential(&ParamState::fixed(vec![1.0, 2.0]), &g, &m).is_err());
    }

    #[test]
    fn conditional_logit_examples() {
        let g = Graph::empty(5);
        let m = fixed(&[Edges, Triangles]);
        assert_eq!(conditional_logit(&ParamState::initial(&m, 5), &g, 0, 1, &m).unwrap(), 0.0);
        let p = ParamState::fixed(vec![-2.0, 0.0]);
        assert_eq!(conditional_logit(&p, &g, 0, 1, &m).unwrap(), -2.0);
        assert!(conditional_logit(&p, &g, 2, 2, &m).is_err());
    }

    fn random_state(m: &ModelSpec, n: usize, rng: &mut impl Rng) -> ParamState {
        let mut p = ParamState::initial(m, n);
        p.theta.iter_mut().for_each(|t| *t = rng.random_range(-1.5..1.5));
        p.phi.iter_mut().for_each(|f| *f = rng.random_range(-1.5..1.5));
        p.mu_phi = rng.random_range(-1.0..1.0);
        p.sigma2_phi = rng.random_range(0.1..2.0);
        p
    }

    proptest! {
        #[test]
        fn logit_is_potential_difference(seed in any::<u64>(), mixed in any::<bool>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 6;
            let m = if mixed {
                ModelSpec::mixed(vec![TwoStars, Triangles]).unwrap()
            } else {
                fixed(&[Edges, TwoStars, Triangles])
            };
            let p = random_state(&m, n, &mut rng);
            let mut g = Graph::empty(n);
            for i in 0..n { for j in i + 1..n { if rng.random::<bool>() { g.toggle(i, j); } } }
            for i in 0..n {
                for j in 0..n {
                    if i == j { continue; }
                    let mut on = g.clone();
                    let mut off = g.clone();
                    if !on.has_edge(i, j) { on.toggle(i, j); } else { off.toggle(i, j); }
                    let diff = log_potential(&p, &on, &m).unwrap() - log_potential(&p, &off, &m).unwrap();
                    prop_assert!((conditional_logit(&p, &g, i, j, &m).unwrap() - diff).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn prior_examples() {
        let m = fixed(&[Edges]);
        let hyper = PriorHyper { rho2: 1.0, ..Default::default() };
        let m = m.with_hyper(hyper).unwrap();
        assert_abs_diff_eq!(
            log_prior(&ParamState::fixed(vec![0.0]), &m).unwrap(),
            -0.5 * (2.0 * std::f64::consts::PI).ln(),
            epsilon = 1e-14
        );
    }

    // textbook densities written out independently of the module's helpers
    fn normal_pdf(x: f64, mu: f64, var: f64) -> f64 {
        (-(x - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    fn inv_gamma_pdf(x: f64, a: f64, b: f64) -> f64 {
        b.powf(a) / statrs::function::gamma::gamma(a) * x.powf(-a - 1.0) * (-b / x).exp()
    }

    #[test]
    fn prior_decomposes_into_textbook_densities() {
        let hyper = PriorHyper { rho2: 4.0, tau2: 2.5, ig_a: 2.0, ig_b: 1.5 };
        let m = ModelSpec::new(vec![Triangles, TwoStars], true, hyper).unwrap();
        let points = [
            (vec![0.3, -0.2], vec![-1.0, 0.5, 0.0], -0.4, 0.7),
            (vec![1.1, 0.0], vec![2.0, -2.0, 0.1], 0.9, 1.9),
            (vec![-2.0, 0.4], vec![0.0, 0.0, 0.0], 0.0, 0.2),
        ];
        for (theta, phi, mu, s2) in points {
            let p = ParamState { theta: theta.clone(), phi: phi.clone(), mu_phi: mu, sigma2_phi: s2 };
            let th: f64 = theta.iter().map(|&t| normal_pdf(t, 0.0, 4.0).ln()).sum();
            let ph: f64 = phi.iter().map(|&f| normal_pdf(f, mu, s2).ln()).sum();
            let hy = normal_pdf(mu, 0.0, 2.5).ln() + inv_gamma_pdf(s2, 2.0, 1.5).ln();
            assert_abs_diff_eq!(log_prior_theta(&theta, &hyper), th, epsilon = 1e-12);
            assert_abs_diff_eq!(log_prior_phi(&phi, mu, s2), ph, epsilon = 1e-12);
            assert_abs_diff_eq!(log_hyperprior(mu, s2, &hyper), hy, epsilon = 1e-12);
            assert_abs_diff_eq!(log_prior(&p, &m).unwrap(), th + ph + hy, epsilon = 1e-12);
        }
        let (a, b) = (3.0, 2.0);
        let mode = b / (a + 1.0);
        assert_abs_diff_eq!(inv_gamma_logpdf(mode, a, b), inv_gamma_pdf(mode, a, b).ln(), epsilon = 1e-12);
        assert!(inv_gamma_logpdf(mode, a, b) > inv_gamma_logpdf(mode * 1.01, a, b));
        assert!(inv_gamma_logpdf(mode, a, b) > inv_gamma_logpdf(mode * 0.99, a, b));

        let mut p = ParamState::initial(&m, 3);
        p.sigma2_phi = 0.0;
        assert!(log_prior(&p, &m).is_err());
    }

    #[test]
    fn prior_decreases_away_from_zero() {
        let m = fixed(&[Edges, Triangles]);
        let mut last = f64::INFINITY;
        for k in 0..50 {
            let t = k as f64 * 0.7;
            let v = log_prior(&ParamState::fixed(vec![t, -t]), &m).unwrap();
            assert!(v.is_finite() && v < last);
            last = v;
        }
    }

    #[test]
    fn bernoulli_kappa_closed_form() {
        let m = fixed(&[Edges]);
        let k = exact_log_kappa(&ParamState::fixed(vec![0.0]), &m, 3).unwrap();
        assert_abs_diff_eq!(k, 8f64.ln(), epsilon = 1e-12);
        let k = exact_log_kappa(&ParamState::fixed(vec![-1.0]), &m, 4).unwrap();
        assert_abs_diff_eq!(k, 6.0 * (1.0 + (-1f64).exp()).ln(), epsilon = 1e-12);
    }

    #[test]
    fn enumeration_guard() {
        let m = fixed(&[Edges]);
        assert!(exact_log_kappa(&ParamState::fixed(vec![0.0]), &m, 8).is_err());
    }

    /// Second enumeration: adjacency matrices from the bits of a counter and
    /// statistics counted directly on the matrix.
    fn matrix_log_kappa(theta: &[f64], phi: &[f64], kinds: &[StatisticKind], n: usize) -> f64 {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let mut terms = Vec::new();
        for mask in 0u32..(1 << pairs.len()) {
            let mut a = vec![vec![0u8; n]; n];
            for (b, &(i, j)) in pairs.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    a[i][j] = 1;
                    a[j][i] = 1;
                }
            }
            let deg: Vec<f64> = a.iter().map(|r| r.iter().map(|&x| x as f64).sum()).collect();
            let mut lp = 0.0;
            for (k, th) in kinds.iter().zip(theta) {
                let s = match k {
                    Edges => deg.iter().sum::<f64>() / 2.0,
                    TwoStars => deg.iter().map(|d| d * (d - 1.0) / 2.0).sum(),
                    Triangles => {
                        let mut c = 0.0;
                        for x in 0..n { for y in x + 1..n { for z in y + 1..n {
                            c += (a[x][y] * a[x][z] * a[y][z]) as f64;
                        } } }
                        c
                    }
                };
                lp += th * s;
            }
            lp += phi.iter().zip(&deg).map(|(f, d)| f * d).sum::<f64>();
            terms.push(lp);
        }
        let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
    }

    #[test]
    fn kappa_matches_matrix_enumeration() {
        let m = fixed(&[Edges, Triangles]);
        let k = exact_log_kappa(&ParamState::fixed(vec![-1.0, 0.5]), &m, 4).unwrap();
        assert_abs_diff_eq!(k, matrix_log_kappa(&[-1.0, 0.5], &[], &[Edges, Triangles], 4), epsilon = 1e-10);

        let m = ModelSpec::mixed(vec![TwoStars, Triangles]).unwrap();
        let p = ParamState {
            theta: vec![0.1, -0.3],
            phi: vec![-0.5, 0.2, 0.9, -1.2, 0.4],
            mu_phi: 0.0,
            sigma2_phi: 1.0,
        };
        let k = exact_log_kappa(&p, &m, 5).unwrap();
        assert_abs_diff_eq!(k, matrix_log_kappa(&p.theta, &p.phi, m.stats(), 5), epsilon = 1e-10);
    }

    #[test]
    fn zero_parameters_give_uniform_law() {
        for (m, n) in [
            (fixed(&[Edges, TwoStars, Triangles]), 5),
            (ModelSpec::mixed(vec![Triangles]).unwrap(), 4),
        ] {
            let p = ParamState::initial(&m, n);
            let k = exact_log_kappa(&p, &m, n).unwrap();
            assert_abs_diff_eq!(k, dyad_count(n) as f64 * 2f64.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn exact_likelihood_normalizes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for n in 2..=4 {
            let m = ModelSpec::mixed(vec![TwoStars, Triangles]).unwrap();
            let p = random_state(&m, n, &mut rng);
            let lk = exact_log_kappa(&p, &m, n).unwrap();
            let mut total = 0.0;
            let mut count = 0;
            enumerate_graphs(&p, &m, n, |g, lp| {
                assert_abs_diff_eq!(lp, log_potential(&p, g, &m).unwrap(), epsilon = 1e-12);
                total += (lp - lk).exp();
                count += 1;
            })
            .unwrap();
            assert_eq!(count, 1 << dyad_count(n));
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
        }
    }
}
