//! Simulation study: how often the Bayes factor picks the random-effects
//! model when the data do or do not have nodal heterogeneity.
//!
//! * Setting A draws `phi_i ~ N(mu_phi, sigma2)` and independent dyads with
//!   log-odds `phi_i + phi_j`.
//! * Setting B simulates an edges + two-stars model with no heterogeneity.
//! * The Bernoulli setting is the common null of both (`sigma2 = 0`,
//!   `theta_2star = 0`).
//!
//! Every replicate fits a fixed model (edges + two-stars) and a mixed model
//! (two-stars + random effects) and records `log BF₂₁`.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::{log_bayes_factor, BfComponents, LaplaceConfig, PathConfig};
use crate::exchange::{run_chain, ChainConfig};
use crate::graph::{density, dyad_count, Graph, StatisticKind};
use crate::model::ModelSpec;
use crate::netsim::{SamplerKind, Simulator};
use crate::rng::{derive_seed, stream, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "lowercase")]
pub enum Setting {
    /// Random effects only; one cell per `sigma2_phi`.
    A(Vec<f64>),
    /// Edges and two-stars; one cell per `theta_2star`.
    B(Vec<f64>),
    Bernoulli,
}

impl Setting {
    pub fn name(&self) -> &'static str {
        match self {
            Setting::A(_) => "A",
            Setting::B(_) => "B",
            Setting::Bernoulli => "bernoulli",
        }
    }

    /// Cell parameter values; the Bernoulli setting has a single cell at 0.
    pub fn cells(&self) -> Vec<f64> {
        match self {
            Setting::A(v) | Setting::B(v) => v.clone(),
            Setting::Bernoulli => vec![0.0],
        }
    }

    pub fn cell_label(&self) -> &'static str {
        match self {
            Setting::A(_) => "sigma2_phi",
            Setting::B(_) => "theta_2star",
            Setting::Bernoulli => "none",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyGrid {
    pub setting: Setting,
    pub n: usize,
    pub replicates: usize,
    /// Mean of the nodal effects in setting A.
    pub mu_phi: f64,
    /// Edge parameter in setting B.
    pub theta_edges: f64,
    pub seed: u64,
}

impl StudyGrid {
    pub fn new(setting: Setting) -> Self {
        StudyGrid {
            setting,
            n: 40,
            replicates: 10,
            mu_phi: -1.0,
            theta_edges: -2.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::domain("study networks need at least 3 vertices"));
        }
        if self.replicates == 0 {
            return Err(Error::domain("replicates must be at least 1"));
        }
        match &self.setting {
            Setting::A(v) => {
                if v.is_empty() || v.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) {
                    return Err(Error::domain("setting A needs sigma2_phi values in (0, 1]"));
                }
            }
            Setting::B(v) => {
                if v.is_empty() || v.iter().any(|t| !(0.0..=0.05).contains(t)) {
                    return Err(Error::domain(
                        "setting B needs theta_2star values in [0, 0.05]; larger values degenerate",
                    ));
                }
            }
            Setting::Bernoulli => {}
        }
        Ok(())
    }
}

/// Draws the network of replicate `rep` in cell `cell`.
///
/// Settings A and Bernoulli sample dyads exactly and independently.
/// Setting B runs the TNT sampler from the empty graph for `b_steps` steps.
pub fn generate_replicate(grid: &StudyGrid, cell: usize, b_steps: usize, rng: &mut Rng) -> Result<Graph> {
    let n = grid.n;
    let value = *grid
        .setting
        .cells()
        .get(cell)
        .ok_or_else(|| Error::domain(format!("cell {cell} out of range")))?;
    let independent = |phi: &[f64], rng: &mut Rng| {
        let mut g = Graph::empty(n);
        for i in 0..n {
            for j in i + 1..n {
                let p = 1.0 / (1.0 + (-(phi[i] + phi[j])).exp());
                if rng.random::<f64>() < p {
                    g.toggle(i, j);
                }
            }
        }
        g
    };
    Ok(match grid.setting {
        Setting::A(_) => {
            let sd = value.sqrt();
            let phi: Vec<f64> = (0..n)
                .map(|_| grid.mu_phi + sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            independent(&phi, rng)
        }
        Setting::Bernoulli => independent(&vec![grid.theta_edges / 2.0; n], rng),
        Setting::B(_) => {
            let kinds = [StatisticKind::Edges, StatisticKind::TwoStars];
            let mut sim = Simulator::new(&kinds, Graph::empty(n));
            sim.run(SamplerKind::Tnt, b_steps.max(1), &[grid.theta_edges, value], &[], rng);
            sim.into_graph()
        }
    })
}

/// Fitting and evidence settings shared by every replicate. Seeds inside
/// these configs are replaced by per-replicate seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub chain: ChainConfig,
    pub path: PathConfig,
    pub laplace: LaplaceConfig,
    /// TNT steps used to draw a setting-B network, as a multiple of the
    /// dyad count.
    pub b_steps_per_dyad: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            chain: ChainConfig::default(),
            path: PathConfig::default(),
            laplace: LaplaceConfig::default(),
            b_steps_per_dyad: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub cell: usize,
    pub value: f64,
    pub rep: usize,
    pub density: f64,
    pub log_bf: Option<f64>,
    pub components: Option<BfComponents>,
    pub error: Option<String>,
}

/// One row of the aggregate table. Percentages are over the successful
/// replicates; a log Bayes factor of exactly 0 counts as positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub setting: String,
    pub value: f64,
    pub reps: usize,
    pub failures: usize,
    pub min: f64,
    pub max: f64,
    pub pct_lt_minus5: f64,
    pub pct_lt_0: f64,
    pub pct_gt_0: f64,
    pub pct_gt_5: f64,
    pub mean_density: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyOutput {
    pub grid: StudyGrid,
    pub replicates: Vec<ReplicateResult>,
    pub cells: Vec<CellRow>,
}

fn fixed_model() -> ModelSpec {
    ModelSpec::fixed(vec![StatisticKind::Edges, StatisticKind::TwoStars]).expect("valid model")
}

fn mixed_model() -> ModelSpec {
    ModelSpec::mixed(vec![StatisticKind::TwoStars]).expect("valid model")
}

fn run_replicate(grid: &StudyGrid, cfg: &StudyConfig, cell: usize, rep: usize) -> ReplicateResult {
    let value = grid.setting.cells()[cell];
    let key = [cell as u64, rep as u64];
    let seed_for = |k: u64| derive_seed(grid.seed, &[key[0], key[1], k]);
    let mut rng = stream(grid.seed, &[key[0], key[1], 0]);
    let b_steps = cfg.b_steps_per_dyad * dyad_count(grid.n);
    let mut out = ReplicateResult {
        cell,
        value,
        rep,
        density: f64::NAN,
        log_bf: None,
        components: None,
        error: None,
    };
    let g = match generate_replicate(grid, cell, b_steps, &mut rng) {
        Ok(g) => g,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    out.density = density(&g).unwrap_or(f64::NAN);
    let result = (|| -> Result<_> {
        let (m1, m2) = (fixed_model(), mixed_model());
        let fit1 = run_chain(&g, &m1, &ChainConfig { seed: seed_for(1), ..cfg.chain.clone() })?;
        let fit2 = run_chain(&g, &m2, &ChainConfig { seed: seed_for(2), ..cfg.chain.clone() })?;
        let pc = PathConfig { seed: seed_for(3), ..cfg.path.clone() };
        let lc = LaplaceConfig { seed: seed_for(4), ..cfg.laplace.clone() };
        log_bayes_factor(&fit1, &fit2, &g, &m1, &m2, &pc, &lc)
    })();
    match result {
        Ok(r) => {
            out.log_bf = Some(r.log_bf_21);
            out.components = Some(r.components);
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    out
}

fn aggregate(grid: &StudyGrid, reps: &[ReplicateResult]) -> Vec<CellRow> {
    grid.setting
        .cells()
        .iter()
        .enumerate()
        .map(|(cell, &value)| {
            let rows: Vec<&ReplicateResult> = reps.iter().filter(|r| r.cell == cell).collect();
            let bfs: Vec<f64> = rows.iter().filter_map(|r| r.log_bf).collect();
            let pct = |f: &dyn Fn(f64) -> bool| {
                if bfs.is_empty() {
                    f64::NAN
                } else {
                    100.0 * bfs.iter().filter(|&&b| f(b)).count() as f64 / bfs.len() as f64
                }
            };
            let densities: Vec<f64> = rows.iter().map(|r| r.density).filter(|d| d.is_finite()).collect();
            CellRow {
                setting: grid.setting.name().to_string(),
                value,
                reps: bfs.len(),
                failures: rows.len() - bfs.len(),
                min: bfs.iter().copied().fold(f64::NAN, f64::min),
                max: bfs.iter().copied().fold(f64::NAN, f64::max),
                pct_lt_minus5: pct(&|b| b < -5.0),
                pct_lt_0: pct(&|b| b < 0.0),
                pct_gt_0: pct(&|b| b >= 0.0),
                pct_gt_5: pct(&|b| b > 5.0),
                mean_density: densities.iter().sum::<f64>() / densities.len() as f64,
            }
        })
        .collect()
}

/// Runs every replicate of every cell. Replicates run in parallel on the
/// current rayon pool; results come back in (cell, replicate) order.
/// Failed replicates are kept with their error message and counted in the
/// `failures` column.
pub fn run_study(grid: &StudyGrid, cfg: &StudyConfig) -> Result<StudyOutput> {
    grid.validate()?;
    cfg.chain.validate(&mixed_model())?;
    cfg.path.validate()?;
    cfg.laplace.validate(grid.n)?;
    let jobs: Vec<(usize, usize)> = (0..grid.setting.cells().len())
        .flat_map(|c| (0..grid.replicates).map(move |r| (c, r)))
        .collect();
    let replicates: Vec<ReplicateResult> = jobs
        .into_par_iter()
        .map(|(c, r)| run_replicate(grid, cfg, c, r))
        .collect();
    Ok(StudyOutput {
        cells: aggregate(grid, &replicates),
        grid: grid.clone(),
        replicates,
    })
}

/// Aggregate table as CSV.
pub fn table_csv(rows: &[CellRow]) -> String {
    let mut out = String::from(
        "setting,value,reps,failures,min,max,pct_lt_minus5,pct_lt_0,pct_gt_0,pct_gt_5,mean_density\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{:?},{},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
            r.setting,
            r.value,
            r.reps,
            r.failures,
            r.min,
            r.max,
            r.pct_lt_minus5,
            r.pct_lt_0,
            r.pct_gt_0,
            r.pct_gt_5,
            r.mean_density
        ));
    }
    out
}

/// Log Bayes factors clamped to `[-5, 5]` for plotting; the stored values are
/// never censored.
pub fn censored_for_plot(reps: &[ReplicateResult]) -> Vec<(f64, f64)> {
    reps.iter()
        .filter_map(|r| r.log_bf.map(|b| (r.value, b.clamp(-5.0, 5.0))))
        .collect()
}
