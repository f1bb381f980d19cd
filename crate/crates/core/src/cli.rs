//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{run_experiment, summarize, Budget, ExperimentConfig, RunSummary};
use crate::diffusion::{
    figure1_curves, limit_check_birth_rate, limit_check_z1_marginal, open_unit_grid,
    BirthRateReport, Z1MarginalReport, Z1Source,
};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, OutputSet};
use crate::rjmcmc::{run_chain, Init, MoveConfig, RunOptions, TraceSummary};
use crate::rng::RngHandle;
use crate::target::{TargetConfig, TargetSpec};
use crate::tuning::{optimal_ell, trial_run_tune, TuneOptions};

#[derive(Debug, Parser)]
#[command(
    name = "rjtune",
    version,
    about = "Reversible jump sampler with diffusion-based tuning"
)]
pub struct Cli {
    /// TOML or JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long = "budget-seconds", global = true)]
    pub budget_seconds: Option<f64>,
    #[arg(long = "override-budget", global = true)]
    pub override_budget: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one or more chains and write their traces.
    Sample(SampleArgs),
    /// Trial-run tuning of ell and tau.
    Tune(TuneArgs),
    /// Inefficiency curves and optimal tau as a function of A.
    Curves,
    /// Replicated accuracy experiment over a grid of (A, tau).
    Experiment(ExperimentArgs),
    /// Convergence checks of the birth acceptance and the rescaled model index.
    Limitcheck(LimitArgs),
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long = "burn-in")]
    pub burn_in: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long = "rate-target")]
    pub rate_target: Option<f64>,
    #[arg(long = "A")]
    pub a: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LimitArgs {
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub draws: Option<usize>,
}

/// The whole configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: Option<usize>,
    pub out: PathBuf,
    pub budget_seconds: Option<f64>,
    pub target: TargetConfig,
    pub chain: ChainConfig,
    pub sample: SampleConfig,
    pub tune: TuneOptions,
    pub curves: CurvesConfig,
    pub experiment: ExperimentConfig,
    pub limitcheck: LimitConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: None,
            out: PathBuf::from("out"),
            budget_seconds: None,
            target: TargetConfig::default(),
            chain: ChainConfig::default(),
            sample: SampleConfig::default(),
            tune: TuneOptions::default(),
            curves: CurvesConfig::default(),
            experiment: ExperimentConfig::default(),
            limitcheck: LimitConfig::default(),
        }
    }
}

/// Move settings; A defaults to 2·A* and ℓ to 2.38/√Υ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    pub tau: f64,
    #[serde(rename = "A", alias = "a")]
    pub a: Option<f64>,
    pub ell: Option<f64>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            tau: 0.415,
            a: None,
            ell: None,
        }
    }
}

impl ChainConfig {
    fn resolve(&self, target: &TargetSpec) -> Result<MoveConfig> {
        let ell = match self.ell {
            Some(l) => l,
            None => optimal_ell(target.density.roughness()?)?,
        };
        MoveConfig::new(self.tau, self.a.unwrap_or_else(|| target.proposal.a()), ell)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Stationary,
    Cold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    /// Recorded iterations per chain, after burn-in.
    pub iterations: usize,
    pub burn_in: usize,
    pub chains: usize,
    pub init: InitKind,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burn_in: 0,
            chains: 1,
            init: InitKind::Stationary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurvesConfig {
    #[serde(rename = "A_list", alias = "a_list")]
    pub a_list: Vec<f64>,
    /// Points of the τ grid, spread evenly inside (0, 1).
    pub tau_points: usize,
    pub a_min: f64,
    pub a_max: f64,
    pub a_points: usize,
}

impl Default for CurvesConfig {
    fn default() -> Self {
        Self {
            a_list: vec![2.0, 5.0, 25.0],
            tau_points: 99,
            a_min: 2.0,
            a_max: 50.0,
            a_points: 97,
        }
    }
}

impl CurvesConfig {
    fn a_range(&self) -> Result<Vec<f64>> {
        if self.a_points == 0 || !(self.a_min > 0.0) || !(self.a_max >= self.a_min) {
            return Err(Error::invalid(
                "curves.a_points",
                "need a_points >= 1 and 0 < a_min <= a_max",
            ));
        }
        if self.a_points == 1 {
            return Ok(vec![self.a_min]);
        }
        let step = (self.a_max - self.a_min) / (self.a_points - 1) as f64;
        Ok((0..self.a_points)
            .map(|i| self.a_min + step * i as f64)
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Z1Mode {
    Exact,
    Mcmc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitConfig {
    pub n_ladder: Vec<usize>,
    /// Chain iterations behind each birth-rate estimate.
    pub iterations: usize,
    /// Draws of K behind each marginal check.
    pub draws: usize,
    pub z1_mode: Z1Mode,
}

impl Default for LimitConfig {
    fn default() -> Self {
        Self {
            n_ladder: vec![50, 200, 1000],
            iterations: 200_000,
            draws: 20_000,
            z1_mode: Z1Mode::Exact,
        }
    }
}

/// Parse a configuration document; `.json` files as JSON, anything else as
/// TOML. Unknown keys are errors.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(b) = cli.budget_seconds {
        cfg.budget_seconds = Some(b);
    }
    if cfg.workers == Some(0) {
        return Err(Error::invalid("workers", "must be >= 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let budget = cfg.budget_seconds.map(|seconds| Budget {
        seconds,
        override_budget: cli.override_budget,
    });

    pool.install(|| match cli.command {
        Command::Sample(a) => {
            apply(&mut cfg.sample.iterations, a.iters);
            apply(&mut cfg.sample.chains, a.chains);
            apply(&mut cfg.sample.burn_in, a.burn_in);
            apply(&mut cfg.target.n, a.n);
            cmd_sample(&cfg)
        }
        Command::Tune(a) => {
            apply(&mut cfg.target.n, a.n);
            apply(&mut cfg.tune.rate_target, a.rate_target);
            if a.a.is_some() {
                cfg.chain.a = a.a;
            }
            cmd_tune(&cfg)
        }
        Command::Curves => cmd_curves(&cfg),
        Command::Experiment(a) => {
            apply(&mut cfg.experiment.iterations, a.iters);
            apply(&mut cfg.experiment.n, a.n);
            apply(&mut cfg.experiment.replicates, a.replicates);
            cmd_experiment(&cfg, budget)
        }
        Command::Limitcheck(a) => {
            apply(&mut cfg.limitcheck.iterations, a.iters);
            apply(&mut cfg.limitcheck.draws, a.draws);
            cmd_limitcheck(&cfg)
        }
    })
}

fn apply<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Debug, Serialize)]
struct ChainReport {
    trace: TraceSummary,
    summary: Option<RunSummary>,
}

#[derive(Debug, Serialize)]
struct SampleOutput<'a> {
    seed: u64,
    target: &'a TargetConfig,
    chain: MoveConfig,
    sample: &'a SampleConfig,
    chains: Vec<ChainReport>,
}

pub fn cmd_sample(cfg: &RunConfig) -> Result<()> {
    let target = cfg.target.build()?;
    let mc = cfg.chain.resolve(&target)?;
    let s = &cfg.sample;
    if s.chains == 0 {
        return Err(Error::invalid("sample.chains", "must be >= 1"));
    }
    let root = RngHandle::new(cfg.seed, 0);
    let init = match s.init {
        InitKind::Stationary => Init::FromTarget,
        InitKind::Cold => Init::ColdStart,
    };
    let opts = RunOptions::new(s.iterations + s.burn_in, s.burn_in);
    let traces = (0..s.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = root.substream(0, c as u32).rng();
            run_chain(&target, mc, init.clone(), opts, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = OutputSet::new();
    let mut reports = Vec::with_capacity(traces.len());
    for (c, trace) in traces.iter().enumerate() {
        let mut buf = Vec::new();
        trace
            .write_csv(&mut buf)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let name = if s.chains == 1 {
            "trace.csv".to_string()
        } else {
            format!("trace_{c:03}.csv")
        };
        out.add(name, buf);
        reports.push(ChainReport {
            trace: trace.summary(),
            summary: summarize(trace, &target.prior).ok(),
        });
    }
    for (c, r) in reports.iter().enumerate() {
        let rate = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        match &r.summary {
            Some(sm) => println!(
                "chain {c}: mode k = {}, mean x1 = {:.4}, sd x1 = {:.4}, update acc = {}, switch rate = {}",
                sm.k_mode_hat,
                sm.mu_hat,
                sm.sigma_hat,
                rate(sm.update_acceptance),
                rate(r.trace.switch_rate)
            ),
            None => println!("chain {c}: no recorded iterations"),
        }
    }
    out.add_json(
        "summary.json",
        &SampleOutput {
            seed: cfg.seed,
            target: &cfg.target,
            chain: mc,
            sample: s,
            chains: reports,
        },
    )?;
    out.commit(&cfg.out)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct TuneOutput<'a> {
    seed: u64,
    target: &'a TargetConfig,
    options: &'a TuneOptions,
    report: crate::tuning::TuneReport,
}

pub fn cmd_tune(cfg: &RunConfig) -> Result<()> {
    cfg.tune.validate()?;
    let target = cfg.target.build()?;
    let mc = cfg.chain.resolve(&target)?;
    let report = trial_run_tune(
        &target,
        mc,
        cfg.chain.a.is_some(),
        &cfg.tune,
        &RngHandle::new(cfg.seed, 0),
    )?;
    print!("{report}");
    let mut out = OutputSet::new();
    out.add_json(
        "tune_report.json",
        &TuneOutput {
            seed: cfg.seed,
            target: &cfg.target,
            options: &cfg.tune,
            report,
        },
    )?;
    out.commit(&cfg.out)?;
    Ok(())
}

pub fn cmd_curves(cfg: &RunConfig) -> Result<()> {
    let c = &cfg.curves;
    if c.tau_points == 0 {
        return Err(Error::invalid("curves.tau_points", "must be >= 1"));
    }
    let curves = figure1_curves(&c.a_list, &open_unit_grid(c.tau_points), &c.a_range()?)?;
    let mut a = Vec::new();
    let mut b = Vec::new();
    curves
        .write_curves_csv(&mut a)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    curves
        .write_tau_star_csv(&mut b)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let mut out = OutputSet::new();
    out.add("figure1_curves.csv", a);
    out.add("tau_star.csv", b);
    out.commit(&cfg.out)?;
    for &a in &c.a_list {
        println!(
            "A = {a}: tau* = {:.4}",
            crate::tuning::optimal_tau_closed_form(a)?
        );
    }
    Ok(())
}

pub fn cmd_experiment(cfg: &RunConfig, budget: Option<Budget>) -> Result<()> {
    let start = Instant::now();
    let result = run_experiment(&cfg.experiment, cfg.seed, budget)?;
    let mut csv = Vec::new();
    result
        .write_csv(&mut csv)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let mut out = OutputSet::new();
    out.add("experiment.csv", csv);
    out.add_json("experiment.json", &result)?;
    out.commit(&cfg.out)?;
    for c in &result.cells {
        println!(
            "A = {:<5} tau = {:<5} MAD_k = {:.4}  MAD_mu = {:.4}  MAD_sigma = {:.4}  global = {:.4}",
            c.a, c.tau, c.mads.k, c.mads.mu, c.mads.sigma, c.global_measure.value
        );
    }
    eprintln!("wall time: {:.2}s", start.elapsed().as_secs_f64());
    Ok(())
}

#[derive(Debug, Serialize)]
struct LimitOutput<'a> {
    seed: u64,
    chain: MoveConfig,
    settings: &'a LimitConfig,
    birth_rate: Vec<BirthRateReport>,
    z1_marginal: Vec<Z1MarginalReport>,
}

pub fn cmd_limitcheck(cfg: &RunConfig) -> Result<()> {
    let l = &cfg.limitcheck;
    if l.n_ladder.is_empty() {
        return Err(Error::invalid("limitcheck.n_ladder", "must not be empty"));
    }
    let root = RngHandle::new(cfg.seed, 0);
    let source = match l.z1_mode {
        Z1Mode::Exact => Z1Source::Exact { draws: l.draws },
        Z1Mode::Mcmc => Z1Source::Mcmc { draws: l.draws },
    };
    let base = TargetConfig {
        n: l.n_ladder[0],
        ..cfg.target.clone()
    };
    let mc = cfg.chain.resolve(&base.build()?)?;
    let rows = l
        .n_ladder
        .par_iter()
        .enumerate()
        .map(|(i, &n)| {
            let target = TargetConfig {
                n,
                ..cfg.target.clone()
            }
            .build()?;
            let birth = limit_check_birth_rate(
                &target,
                mc,
                l.iterations,
                &mut root.substream(0, i as u32).rng(),
            )?;
            let z1 = limit_check_z1_marginal(
                &target,
                mc,
                source,
                &mut root.substream(1, i as u32).rng(),
            )?;
            Ok((birth, z1))
        })
        .collect::<Result<Vec<_>>>()?;
    let (birth, z1): (Vec<_>, Vec<_>) = rows.into_iter().unzip();

    let mut b = String::from("n,estimate,target,distance\n");
    for r in &birth {
        b.push_str(&format!(
            "{},{},{},{}\n",
            r.n,
            fmt_f64(r.estimate),
            fmt_f64(r.limit),
            fmt_f64(r.distance)
        ));
    }
    let mut z = String::from("n,estimate,target,distance\n");
    for r in &z1 {
        z.push_str(&format!(
            "{},{},{},{}\n",
            r.n,
            fmt_f64(r.ks_jittered),
            fmt_f64(0.0),
            fmt_f64(r.ks_jittered)
        ));
    }
    for (br, zr) in birth.iter().zip(&z1) {
        println!(
            "n = {:<6} birth acceptance = {:.5} (1/A = {:.5}, se {:.5})  KS jittered = {:.4}{}",
            br.n,
            br.estimate,
            br.limit,
            br.std_error,
            zr.ks_jittered,
            if zr.lattice_too_coarse {
                "  [lattice too coarse]"
            } else {
                ""
            }
        );
    }
    let mut out = OutputSet::new();
    out.add("birth_rate.csv", b.into_bytes());
    out.add("z1_marginal.csv", z.into_bytes());
    out.add_json(
        "limitcheck.json",
        &LimitOutput {
            seed: cfg.seed,
            chain: mc,
            settings: l,
            birth_rate: birth,
            z1_marginal: z1,
        },
    )?;
    out.commit(&cfg.out)?;
    Ok(())
}
