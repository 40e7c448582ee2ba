//! Command-line interface.
//!
//! Every subcommand accepts `--config <file.toml>` whose keys mirror the long
//! flag names (`aux-iters` or `aux_iters`); flags given on the command line
//! win. Each successful run writes `meta.json` with the resolved settings.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::evidence::{log_bayes_factor, LaplaceConfig, PathConfig};
use crate::exchange::{acf_csv, run_chain, summarize, ChainConfig, ChainOutput, PhiScan, Summary};
use crate::graph::{parse_adjacency_csv, parse_edge_list, sufficient_stats, write_edge_list, Graph, StatisticKind};
use crate::model::{ModelSpec, ParamState, PriorHyper};
use crate::netsim::{Init, SamplerKind, SimConfig, Simulator};
use crate::rng::{derive_seed, stream};
use crate::study::{censored_for_plot, run_study, table_csv, Setting, StudyConfig, StudyGrid};

#[derive(Parser, Debug)]
#[command(name = "bergm", version, about = "Bayesian ERGMs with nodal random effects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the posterior of a fixed or random-effects model.
    Fit(FitArgs),
    /// Draw networks from a model.
    Simulate(SimulateArgs),
    /// Log Bayes factor of the random-effects model against the fixed model.
    Bf(BfArgs),
    /// Simulation study over a grid of generating models.
    Study(StudyArgs),
    /// Posterior summaries of a draws CSV.
    Summarize(SummarizeArgs),
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
struct ChainArgs {
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    /// Auxiliary sampler steps per draw (default: number of dyads).
    #[arg(long)]
    aux_iters: Option<usize>,
    /// tnt or gibbs.
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    thin: Option<usize>,
    /// One value, or one per statistic, comma separated.
    #[arg(long)]
    prop_sd_theta: Option<String>,
    #[arg(long)]
    prop_sd_phi: Option<f64>,
    #[arg(long)]
    prop_sd_mu: Option<f64>,
    #[arg(long)]
    prop_halfwidth_sigma2: Option<f64>,
    /// sequential or random.
    #[arg(long)]
    phi_scan: Option<String>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
struct PriorArgs {
    #[arg(long)]
    rho2: Option<f64>,
    #[arg(long)]
    tau2: Option<f64>,
    #[arg(long)]
    ig_a: Option<f64>,
    #[arg(long)]
    ig_b: Option<f64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
struct EvidenceArgs {
    /// Path-sampling subintervals.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    draws_per_point: Option<usize>,
    /// Simulated networks for the Laplace covariance.
    #[arg(long)]
    cov_sims: Option<usize>,
    /// Sampler steps between path-sampling and covariance draws (default:
    /// number of dyads).
    #[arg(long)]
    sim_iters: Option<usize>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
struct FitArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Edge list, adjacency CSV (`.csv`), or `karate`.
    #[arg(long)]
    network: Option<String>,
    /// Comma-separated statistics: edges, twostars, triangles.
    #[arg(long)]
    stats: Option<String>,
    #[arg(long)]
    random_effects: bool,
    #[command(flatten)]
    #[serde(flatten)]
    chain: ChainArgs,
    #[command(flatten)]
    #[serde(flatten)]
    prior: PriorArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "BERGM_THREADS")]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
struct SimulateArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Number of vertices.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    stats: Option<String>,
    /// Comma-separated, one per statistic.
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
    #[arg(long)]
    random_effects: bool,
    /// Comma-separated nodal effects; drawn from N(mu-phi, sigma2-phi) when
    /// absent.
    #[arg(long, allow_hyphen_values = true)]
    phi: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    mu_phi: Option<f64>,
    #[arg(long)]
    sigma2_phi: Option<f64>,
    /// Networks to draw.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    aux_iters: Option<usize>,
    #[arg(long)]
    sampler: Option<String>,
    /// empty, random:<p>, or a network file to start from.
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "BERGM_THREADS")]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
struct BfArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    network: Option<String>,
    /// Structural statistics of the random-effects model; the fixed model
    /// adds edges. Read from the draws files when omitted.
    #[arg(long)]
    stats: Option<String>,
    #[arg(long)]
    fit_fixed: Option<PathBuf>,
    #[arg(long)]
    fit_mixed: Option<PathBuf>,
    /// Fit both models instead of reading draws.
    #[arg(long)]
    refit: bool,
    #[command(flatten)]
    #[serde(flatten)]
    chain: ChainArgs,
    #[command(flatten)]
    #[serde(flatten)]
    prior: PriorArgs,
    #[command(flatten)]
    #[serde(flatten)]
    evidence: EvidenceArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "BERGM_THREADS")]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
struct StudyArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// A, B or bernoulli.
    #[arg(long)]
    setting: Option<String>,
    /// Comma-separated cell values (sigma2_phi for A, theta_2star for B).
    #[arg(long)]
    cells: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// Sampler steps per dyad used to draw setting-B networks.
    #[arg(long)]
    b_steps_per_dyad: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    chain: ChainArgs,
    #[command(flatten)]
    #[serde(flatten)]
    evidence: EvidenceArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "BERGM_THREADS")]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
struct SummarizeArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Draws CSV written by `fit`.
    draws: Option<PathBuf>,
    /// Output directory; the summary goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Fills unset fields of `args` from the TOML file at `config`.
fn merge_config<T: Serialize + DeserializeOwned>(args: &T, config: Option<&Path>) -> Result<T> {
    let mut value = serde_json::to_value(args).map_err(|e| Error::domain(e.to_string()))?;
    if let Some(path) = config {
        let text = fs::read_to_string(path)?;
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::domain(format!("{}: {e}", path.display())))?;
        let obj = value.as_object_mut().expect("argument structs serialize to objects");
        for (key, item) in table {
            let key = key.replace('_', "-");
            let slot = obj
                .get_mut(&key)
                .ok_or_else(|| Error::domain(format!("unknown key `{key}` in {}", path.display())))?;
            if slot.is_null() || *slot == Value::Bool(false) {
                *slot = match item {
                    toml::Value::Array(items) => Value::String(
                        items
                            .iter()
                            .map(|v| match v {
                                toml::Value::String(s) => s.clone(),
                                other => other.to_string(),
                            })
                            .collect::<Vec<_>>()
                            .join(","),
                    ),
                    other => serde_json::to_value(other).map_err(|e| Error::domain(e.to_string()))?,
                };
            }
        }
    }
    serde_json::from_value(value).map_err(|e| Error::domain(format!("invalid configuration: {e}")))
}

fn require<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::domain(format!("missing required option --{flag}")))
}

fn parse_list(text: &str, flag: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::domain(format!("--{flag}: `{}` is not a number", s.trim())))
        })
        .collect()
}

/// Loads a network: `karate`, an adjacency CSV (`.csv`) or an edge list.
pub fn load_network(spec: &str) -> Result<Graph> {
    if spec == "karate" {
        return Ok(crate::datasets::karate());
    }
    let text = fs::read_to_string(spec)
        .map_err(|e| Error::domain(format!("cannot read network `{spec}`: {e}")))?;
    if spec.ends_with(".csv") {
        parse_adjacency_csv(&text)
    } else {
        parse_edge_list(&text)
    }
}

fn prior(p: &PriorArgs) -> Result<PriorHyper> {
    let d = PriorHyper::default();
    let h = PriorHyper {
        rho2: p.rho2.unwrap_or(d.rho2),
        tau2: p.tau2.unwrap_or(d.tau2),
        ig_a: p.ig_a.unwrap_or(d.ig_a),
        ig_b: p.ig_b.unwrap_or(d.ig_b),
    };
    h.validate()?;
    Ok(h)
}

/// Chain settings after defaults; serialized into `meta.json`.
#[derive(Serialize)]
struct ResolvedChain {
    burnin: usize,
    iters: usize,
    aux_iters: Option<usize>,
    sampler: SamplerKind,
    thin: usize,
    prop_sd_theta: Vec<f64>,
    prop_sd_phi: f64,
    prop_sd_mu: f64,
    prop_halfwidth_sigma2: f64,
    phi_scan: PhiScan,
}

fn chain_config(a: &ChainArgs, seed: u64) -> Result<(ChainConfig, ResolvedChain)> {
    let d = ChainConfig::default();
    let sampler = match &a.sampler {
        Some(s) => s.parse()?,
        None => SamplerKind::default(),
    };
    let phi_scan = match &a.phi_scan {
        Some(s) => s.parse()?,
        None => PhiScan::default(),
    };
    let prop_sd_theta = match &a.prop_sd_theta {
        Some(s) => parse_list(s, "prop-sd-theta")?,
        None => d.prop_sd_theta.clone(),
    };
    let cfg = ChainConfig {
        burnin: a.burnin.unwrap_or(d.burnin),
        main_iters: a.iters.unwrap_or(d.main_iters),
        thin: a.thin.unwrap_or(d.thin),
        aux: SimConfig {
            aux_iters: a.aux_iters,
            sampler,
            init: Init::Empty,
        },
        prop_sd_theta: prop_sd_theta.clone(),
        prop_sd_phi: a.prop_sd_phi.unwrap_or(d.prop_sd_phi),
        prop_sd_mu: a.prop_sd_mu.unwrap_or(d.prop_sd_mu),
        prop_halfwidth_sigma2: a.prop_halfwidth_sigma2.unwrap_or(d.prop_halfwidth_sigma2),
        seed,
        phi_scan,
        init: None,
    };
    let resolved = ResolvedChain {
        burnin: cfg.burnin,
        iters: cfg.main_iters,
        aux_iters: cfg.aux.aux_iters,
        sampler,
        thin: cfg.thin,
        prop_sd_theta,
        prop_sd_phi: cfg.prop_sd_phi,
        prop_sd_mu: cfg.prop_sd_mu,
        prop_halfwidth_sigma2: cfg.prop_halfwidth_sigma2,
        phi_scan,
    };
    Ok((cfg, resolved))
}

#[derive(Serialize)]
struct ResolvedEvidence {
    grid: usize,
    draws_per_point: usize,
    cov_sims: usize,
    sim_iters: Option<usize>,
}

fn evidence_configs(a: &EvidenceArgs, sampler: SamplerKind, seed: u64) -> (PathConfig, LaplaceConfig, ResolvedEvidence) {
    let sim = SimConfig {
        aux_iters: a.sim_iters,
        sampler,
        init: Init::Empty,
    };
    let pc = PathConfig {
        grid_points: a.grid.unwrap_or(PathConfig::default().grid_points),
        draws_per_point: a.draws_per_point.unwrap_or(PathConfig::default().draws_per_point),
        sim: sim.clone(),
        seed: derive_seed(seed, &[3]),
    };
    let lc = LaplaceConfig {
        cov_sims: a.cov_sims.unwrap_or(LaplaceConfig::default().cov_sims),
        sim,
        seed: derive_seed(seed, &[4]),
    };
    let r = ResolvedEvidence {
        grid: pc.grid_points,
        draws_per_point: pc.draws_per_point,
        cov_sims: lc.cov_sims,
        sim_iters: a.sim_iters,
    };
    (pc, lc, r)
}

fn out_dir(out: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn write_meta(dir: &Path, subcommand: &str, config: Value) -> Result<()> {
    let meta = json!({
        "tool": "bergm",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": subcommand,
        "config": config,
    });
    write(dir, "meta.json", &to_json(&meta))
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        Some(0) => Err(Error::domain("--threads must be at least 1")),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::domain(e.to_string()))?
            .install(f),
        None => f(),
    }
}

fn phi_means_csv(out: &ChainOutput) -> String {
    let mut s = String::from("node,phi_mean\n");
    for (i, v) in out.phi_means().iter().enumerate() {
        s.push_str(&format!("{},{v:?}\n", i + 1));
    }
    s
}

fn write_summary(dir: &Path, out: &ChainOutput, summary: &Summary) -> Result<()> {
    write(dir, "summary.json", &to_json(summary))?;
    write(dir, "acf.csv", &acf_csv(summary))?;
    if out.random_effects {
        write(dir, "phi_means.csv", &phi_means_csv(out))?;
    }
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let a = merge_config(&args, args.config.as_deref())?;
    let network = require(a.network.clone(), "network")?;
    let stats = StatisticKind::parse_list(&require(a.stats.clone(), "stats")?)?;
    let hyper = prior(&a.prior)?;
    let m = ModelSpec::new(stats, a.random_effects, hyper)?;
    let seed = a.seed.unwrap_or(0);
    let (cfg, resolved) = chain_config(&a.chain, seed)?;
    cfg.validate(&m)?;
    let g = load_network(&network)?;
    let dir = out_dir(&a.out)?;
    let out = with_threads(a.threads, || run_chain(&g, &m, &cfg))?;
    eprintln!("fit finished in {:.1}s", out.wall_seconds);
    write(&dir, "draws.csv", &out.to_csv())?;
    let summary = summarize(&out)?;
    write_summary(&dir, &out, &summary)?;
    write_meta(
        &dir,
        "fit",
        json!({
            "network": network,
            "n": g.n(),
            "model": m,
            "chain": resolved,
            "seed": seed,
            "threads": a.threads,
        }),
    )
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let a = merge_config(&args, args.config.as_deref())?;
    let stats = match &a.stats {
        Some(s) => StatisticKind::parse_list(s)?,
        None => Vec::new(),
    };
    let m = ModelSpec::new(stats, a.random_effects, PriorHyper::default())?;
    let theta = match &a.theta {
        Some(t) => parse_list(t, "theta")?,
        None => Vec::new(),
    };
    if theta.len() != m.n_theta() {
        return Err(Error::domain(format!(
            "--theta has {} values for {} statistics",
            theta.len(),
            m.n_theta()
        )));
    }
    let seed = a.seed.unwrap_or(0);
    let init = match a.init.as_deref() {
        None | Some("empty") => Init::Empty,
        Some(s) if s.starts_with("random:") => Init::Random(
            s["random:".len()..]
                .parse()
                .map_err(|_| Error::domain(format!("--init: bad density in `{s}`")))?,
        ),
        Some(path) => Init::Observed(load_network(path)?),
    };
    let n = match (&a.n, &init) {
        (Some(n), _) => *n,
        (None, Init::Observed(g)) => g.n(),
        (None, _) => return Err(Error::domain("missing required option --n")),
    };
    if n < 1 {
        return Err(Error::domain("--n must be at least 1"));
    }
    let sampler: SamplerKind = match &a.sampler {
        Some(s) => s.parse()?,
        None => SamplerKind::default(),
    };
    let sim = SimConfig {
        aux_iters: a.aux_iters,
        sampler,
        init,
    };
    sim.validate()?;
    let count = a.count.unwrap_or(1);
    if count == 0 {
        return Err(Error::domain("--count must be at least 1"));
    }
    let phi = if !m.random_effects() {
        if a.phi.is_some() {
            return Err(Error::domain("--phi needs --random-effects"));
        }
        Vec::new()
    } else if let Some(p) = &a.phi {
        let phi = parse_list(p, "phi")?;
        if phi.len() != n {
            return Err(Error::domain(format!("--phi has {} values for {n} vertices", phi.len())));
        }
        phi
    } else {
        let mu = a.mu_phi.unwrap_or(0.0);
        let s2 = a.sigma2_phi.unwrap_or(1.0);
        if !(s2 >= 0.0 && s2.is_finite()) {
            return Err(Error::domain("--sigma2-phi must be non-negative"));
        }
        use rand::Rng as _;
        let mut rng = stream(seed, &[0]);
        (0..n)
            .map(|_| mu + s2.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect()
    };
    let p = ParamState {
        theta: theta.clone(),
        phi: phi.clone(),
        mu_phi: 0.0,
        sigma2_phi: 1.0,
    };
    p.check(&m, n)?;
    let dir = out_dir(&a.out)?;
    let steps = sim.aux_iters_for(n);
    let graphs: Vec<Graph> = with_threads(a.threads, || {
        use rayon::prelude::*;
        (0..count)
            .into_par_iter()
            .map(|k| -> Result<Graph> {
                let mut rng = stream(seed, &[1, k as u64]);
                let mut s = Simulator::new(m.stats(), sim.initial_graph(n, &mut rng)?);
                s.run(sim.sampler, steps, &p.theta, &p.phi, &mut rng);
                Ok(s.into_graph())
            })
            .collect()
    })?;
    let mut stats_csv = String::from("network");
    for k in m.stats() {
        stats_csv.push(',');
        stats_csv.push_str(k.name());
    }
    stats_csv.push_str(",edge_count\n");
    for (k, g) in graphs.iter().enumerate() {
        write(&dir, &format!("network_{:04}.edges", k + 1), &write_edge_list(g))?;
        stats_csv.push_str(&(k + 1).to_string());
        for v in sufficient_stats(g, m.stats()).iter() {
            stats_csv.push_str(&format!(",{v}"));
        }
        stats_csv.push_str(&format!(",{}\n", g.edge_count()));
    }
    write(&dir, "stats.csv", &stats_csv)?;
    write_meta(
        &dir,
        "simulate",
        json!({
            "n": n,
            "model": m,
            "theta": theta,
            "phi": phi,
            "count": count,
            "aux_iters": steps,
            "sampler": sampler,
            "init": a.init.clone().unwrap_or_else(|| "empty".into()),
            "seed": seed,
            "threads": a.threads,
        }),
    )
}

fn read_draws(path: &Path) -> Result<ChainOutput> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::domain(format!("cannot read draws `{}`: {e}", path.display())))?;
    ChainOutput::from_csv(&text)
}

fn cmd_bf(args: BfArgs) -> Result<()> {
    let a = merge_config(&args, args.config.as_deref())?;
    let network = require(a.network.clone(), "network")?;
    let hyper = prior(&a.prior)?;
    let seed = a.seed.unwrap_or(0);
    let (chain, resolved_chain) = chain_config(&a.chain, seed)?;
    let (pc, lc, resolved_ev) = evidence_configs(&a.evidence, chain.aux.sampler, seed);
    let from_files = a.fit_fixed.is_some() || a.fit_mixed.is_some();
    if a.refit == from_files {
        return Err(Error::domain("give either --refit or both --fit-fixed and --fit-mixed"));
    }
    let g = load_network(&network)?;
    pc.validate()?;
    lc.validate(g.n())?;
    let fits = if from_files {
        let f1 = read_draws(&require(a.fit_fixed.clone(), "fit-fixed")?)?;
        let f2 = read_draws(&require(a.fit_mixed.clone(), "fit-mixed")?)?;
        Some((f1, f2))
    } else {
        None
    };
    let mixed_stats = match (&a.stats, &fits) {
        (Some(s), _) => StatisticKind::parse_list(s)?,
        (None, Some((_, f2))) => f2.stats.clone(),
        (None, None) => return Err(Error::domain("missing required option --stats")),
    };
    let m2 = ModelSpec::new(mixed_stats.clone(), true, hyper)?;
    let m1 = match &fits {
        Some((f1, _)) => ModelSpec::new(f1.stats.clone(), false, hyper)?,
        None => {
            let mut s = vec![StatisticKind::Edges];
            s.extend(mixed_stats.iter().copied());
            ModelSpec::new(s, false, hyper)?
        }
    };
    crate::evidence::check_nesting(&m1, &m2)?;
    if a.refit {
        chain.validate(&m1)?;
        chain.validate(&m2)?;
    }
    let dir = out_dir(&a.out)?;
    let report = with_threads(a.threads, || {
        let (f1, f2) = match fits {
            Some(f) => f,
            None => {
                let f1 = run_chain(&g, &m1, &ChainConfig { seed: derive_seed(seed, &[1]), ..chain.clone() })?;
                let f2 = run_chain(&g, &m2, &ChainConfig { seed: derive_seed(seed, &[2]), ..chain.clone() })?;
                write(&dir, "draws_fixed.csv", &f1.to_csv())?;
                write(&dir, "draws_mixed.csv", &f2.to_csv())?;
                (f1, f2)
            }
        };
        log_bayes_factor(&f1, &f2, &g, &m1, &m2, &pc, &lc)
    })?;
    eprintln!("log BF21 = {:.3}", report.log_bf_21);
    write(&dir, "bf.json", &to_json(&report))?;
    let mut trace = String::from("g,e,se\n");
    for ((g_i, e), se) in report.path.grid.iter().zip(&report.path.e_values).zip(&report.path.e_se) {
        trace.push_str(&format!("{g_i:?},{e:?},{se:?}\n"));
    }
    write(&dir, "path.csv", &trace)?;
    write_meta(
        &dir,
        "bf",
        json!({
            "network": network,
            "fixed_model": m1,
            "mixed_model": m2,
            "fit_fixed": a.fit_fixed,
            "fit_mixed": a.fit_mixed,
            "refit": a.refit,
            "chain": if a.refit { serde_json::to_value(&resolved_chain).unwrap() } else { Value::Null },
            "evidence": resolved_ev,
            "seed": seed,
            "threads": a.threads,
        }),
    )
}

fn cmd_study(args: StudyArgs) -> Result<()> {
    let a = merge_config(&args, args.config.as_deref())?;
    let setting_name = require(a.setting.clone(), "setting")?;
    let cells = a.cells.as_deref().map(|c| parse_list(c, "cells")).transpose()?;
    let setting = match setting_name.to_ascii_lowercase().as_str() {
        "a" => Setting::A(cells.unwrap_or_else(|| vec![0.25, 0.5, 0.75, 1.0])),
        "b" => Setting::B(cells.unwrap_or_else(|| vec![0.01, 0.02, 0.03, 0.04, 0.05])),
        "bernoulli" => {
            if cells.is_some() {
                return Err(Error::domain("the bernoulli setting has no cells"));
            }
            Setting::Bernoulli
        }
        other => return Err(Error::domain(format!("unknown setting `{other}`; use A, B or bernoulli"))),
    };
    let seed = a.seed.unwrap_or(0);
    let defaults = StudyGrid::new(setting.clone());
    let grid = StudyGrid {
        n: a.n.unwrap_or(defaults.n),
        replicates: a.reps.unwrap_or(defaults.replicates),
        seed,
        ..defaults
    };
    grid.validate()?;
    let (chain, resolved_chain) = chain_config(&a.chain, seed)?;
    let (path, laplace, resolved_ev) = evidence_configs(&a.evidence, chain.aux.sampler, seed);
    let cfg = StudyConfig {
        chain,
        path,
        laplace,
        b_steps_per_dyad: a.b_steps_per_dyad.unwrap_or(StudyConfig::default().b_steps_per_dyad),
    };
    if cfg.b_steps_per_dyad == 0 {
        return Err(Error::domain("--b-steps-per-dyad must be at least 1"));
    }
    let dir = out_dir(&a.out)?;
    let out = with_threads(a.threads, || run_study(&grid, &cfg))?;
    let rep_dir = dir.join("replicates");
    fs::create_dir_all(&rep_dir)?;
    for r in &out.replicates {
        write(&rep_dir, &format!("cell{}_rep{:03}.json", r.cell + 1, r.rep + 1), &to_json(r))?;
    }
    write(&dir, "table.csv", &table_csv(&out.cells))?;
    let mut plot = String::from("value,log_bf_censored\n");
    for (v, b) in censored_for_plot(&out.replicates) {
        plot.push_str(&format!("{v:?},{b:?}\n"));
    }
    write(&dir, "plot.csv", &plot)?;
    for row in &out.cells {
        eprintln!(
            "{} {}: {} ok, {} failed, %<0 {:.0}, %>0 {:.0}, density {:.3}",
            row.setting, row.value, row.reps, row.failures, row.pct_lt_0, row.pct_gt_0, row.mean_density
        );
    }
    write_meta(
        &dir,
        "study",
        json!({
            "grid": grid,
            "b_steps_per_dyad": cfg.b_steps_per_dyad,
            "chain": resolved_chain,
            "evidence": resolved_ev,
            "seed": seed,
            "threads": a.threads,
        }),
    )
}

fn cmd_summarize(args: SummarizeArgs) -> Result<()> {
    let a = merge_config(&args, args.config.as_deref())?;
    let path = require(a.draws.clone(), "draws")?;
    let out = read_draws(&path)?;
    let summary = summarize(&out)?;
    match &a.out {
        Some(_) => {
            let dir = out_dir(&a.out)?;
            write_summary(&dir, &out, &summary)?;
            write_meta(&dir, "summarize", json!({ "draws": path }))
        }
        None => {
            print!("{}", to_json(&summary));
            Ok(())
        }
    }
}

/// Parses `argv` and runs the subcommand. Returns the process exit code:
/// 0 on success, 1 for usage or domain errors, 2 for numerical failures.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bf(a) => cmd_bf(a),
        Command::Study(a) => cmd_study(a),
        Command::Summarize(a) => cmd_summarize(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numerical(_) => 2,
                _ => 1,
            }
        }
    }
}
