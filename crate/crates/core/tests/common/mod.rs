//! Brute-force reference computations shared by the integration tests.
#![allow(dead_code)]

use bergm::graph::{degree_stats, sufficient_stats, Graph};
use bergm::model::{enumerate_graphs, exact_log_kappa, normal_logpdf, ModelSpec, ParamState};
use nalgebra::{DMatrix, DVector};

/// Index of `g` among the `2^C(n,2)` graphs; bit `k` is the `k`-th dyad in
/// row-major upper-triangular order.
pub fn graph_index(g: &Graph) -> usize {
    let n = g.n();
    let mut idx = 0;
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            if g.has_edge(i, j) {
                idx |= 1 << k;
            }
            k += 1;
        }
    }
    idx
}

/// Exact probability of every graph, indexed by [`graph_index`].
pub fn exact_law(p: &ParamState, m: &ModelSpec, n: usize) -> Vec<f64> {
    let log_kappa = exact_log_kappa(p, m, n).unwrap();
    let d = n * (n - 1) / 2;
    let mut out = vec![0.0; 1 << d];
    enumerate_graphs(p, m, n, |g, lp| out[graph_index(g)] = (lp - log_kappa).exp()).unwrap();
    out
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Exact mean and covariance of the degree vector.
pub fn exact_degree_moments(p: &ParamState, m: &ModelSpec, n: usize) -> (DVector<f64>, DMatrix<f64>) {
    let log_kappa = exact_log_kappa(p, m, n).unwrap();
    let mut mean = DVector::zeros(n);
    let mut second = DMatrix::zeros(n, n);
    enumerate_graphs(p, m, n, |g, lp| {
        let w = (lp - log_kappa).exp();
        let t = DVector::from_vec(degree_stats(g));
        mean += &t * w;
        second += &t * t.transpose() * w;
    })
    .unwrap();
    let cov = &second - &mean * mean.transpose();
    (mean, cov)
}

/// `log p(y | theta, phi) + Σ log N(phi_i; mu, s2)`, the integrand of the
/// marginal likelihood over the nodal effects.
pub fn log_joint_phi(y: &Graph, m: &ModelSpec, theta: &[f64], phi: &[f64], mu: f64, s2: f64) -> f64 {
    let p = ParamState {
        theta: theta.to_vec(),
        phi: phi.to_vec(),
        mu_phi: mu,
        sigma2_phi: s2,
    };
    let n = y.n();
    let lp = sufficient_stats(y, m.stats()).dot(theta)
        + degree_stats(y).iter().zip(phi).map(|(t, f)| t * f).sum::<f64>();
    lp - exact_log_kappa(&p, m, n).unwrap() + phi.iter().map(|&f| normal_logpdf(f, mu, s2)).sum::<f64>()
}

/// Mode of [`log_joint_phi`] in `phi` by Newton's method with exact moments.
pub fn phi_mode(y: &Graph, m: &ModelSpec, theta: &[f64], mu: f64, s2: f64) -> Vec<f64> {
    let n = y.n();
    let t = DVector::from_vec(degree_stats(y));
    let mut phi = DVector::from_element(n, mu);
    for _ in 0..100 {
        let p = ParamState {
            theta: theta.to_vec(),
            phi: phi.iter().copied().collect(),
            mu_phi: mu,
            sigma2_phi: s2,
        };
        let (mean, cov) = exact_degree_moments(&p, m, n);
        let grad = &t - &mean - (&phi - DVector::from_element(n, mu)) / s2;
        let hess = cov + DMatrix::identity(n, n) / s2;
        let step = hess.cholesky().unwrap().solve(&grad);
        phi += &step;
        if step.norm() < 1e-13 {
            break;
        }
    }
    phi.iter().copied().collect()
}

fn simpson_rec(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
pub fn adaptive_simpson(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Nested adaptive Simpson over the box `[lo_k, hi_k]^d`.
pub fn adaptive_simpson_nd(f: &mut dyn FnMut(&[f64]) -> f64, lo: &[f64], hi: &[f64], tol: f64) -> f64 {
    fn level(f: &mut dyn FnMut(&[f64]) -> f64, x: &mut Vec<f64>, lo: &[f64], hi: &[f64], tol: f64) -> f64 {
        let k = x.len();
        if k == lo.len() {
            return f(x);
        }
        let mut inner = |v: f64| {
            x.push(v);
            let r = level(f, x, lo, hi, tol);
            x.pop();
            r
        };
        adaptive_simpson(&mut inner, lo[k], hi[k], tol)
    }
    level(f, &mut Vec::new(), lo, hi, tol)
}

/// `log ∫ exp(log_joint_phi) dphi` by nested adaptive quadrature over
/// `mu ± width·sd` in each coordinate.
pub fn quadrature_log_marginal(y: &Graph, m: &ModelSpec, theta: &[f64], mu: f64, s2: f64, width: f64) -> f64 {
    let n = y.n();
    let mode = phi_mode(y, m, theta, mu, s2);
    let peak = log_joint_phi(y, m, theta, &mode, mu, s2);
    let sd = s2.sqrt();
    let lo: Vec<f64> = mode.iter().map(|c| c - width * sd).collect();
    let hi: Vec<f64> = mode.iter().map(|c| c + width * sd).collect();
    let mut f = |phi: &[f64]| (log_joint_phi(y, m, theta, phi, mu, s2) - peak).exp();
    let vol_scale = (2.0 * width * sd).powi(n as i32);
    let integral = adaptive_simpson_nd(&mut f, &lo, &hi, 1e-7 * vol_scale.max(1e-300));
    peak + integral.ln()
}

/// Posterior mean and sd of a scalar parameter by trapezoidal quadrature of
/// `exp(log_post)` on a fine grid.
pub fn grid_posterior(log_post: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> (f64, f64) {
    let h = (hi - lo) / (points - 1) as f64;
    let xs: Vec<f64> = (0..points).map(|k| lo + k as f64 * h).collect();
    let lps: Vec<f64> = xs.iter().map(|&x| log_post(x)).collect();
    let peak = lps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lps
        .iter()
        .enumerate()
        .map(|(k, lp)| (lp - peak).exp() * if k == 0 || k == points - 1 { 0.5 } else { 1.0 })
        .collect();
    let z: f64 = w.iter().sum();
    let mean = xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / z;
    let var = xs.iter().zip(&w).map(|(x, w)| (x - mean).powi(2) * w).sum::<f64>() / z;
    (mean, var.sqrt())
}

/// Batch-means standard errors of the mean and of the standard deviation.
pub fn batch_se_mean_sd(x: &[f64], batches: usize) -> (f64, f64) {
    let size = x.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| bergm::exchange::mean(&x[b * size..(b + 1) * size])).collect();
    let sds: Vec<f64> = (0..batches).map(|b| bergm::exchange::sd(&x[b * size..(b + 1) * size])).collect();
    let k = (batches as f64).sqrt();
    (bergm::exchange::sd(&means) / k, bergm::exchange::sd(&sds) / k)
}
