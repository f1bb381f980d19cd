use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    global_measure, mad_metrics, sample_mode, GlobalMeasure, Mads, ReplicateEstimate, Truth,
};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::math::{mean_and_sd, OPTIMAL_SCALE};
use crate::rjmcmc::{run_chain, Init, MoveConfig, RunOptions};
use crate::rng::RngHandle;
use crate::target::TargetSpec;

/// Iterations of the timing run behind [`estimate_seconds`].
const CALIBRATION_ITERATIONS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub n: usize,
    pub mu: f64,
    pub sigma: f64,
    #[serde(rename = "A_list", alias = "a_list")]
    pub a_list: Vec<f64>,
    pub tau_grid: Vec<f64>,
    pub replicates: usize,
    /// Iterations per chain, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    /// Defaults to 2.38σ.
    pub ell: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 20,
            mu: 0.0,
            sigma: 1.0,
            a_list: vec![2.0],
            tau_grid: (1..=9).map(|i| i as f64 / 10.0).collect(),
            replicates: 100,
            iterations: 20_000,
            burn_in: 0,
            ell: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.a_list.is_empty() {
            return Err(Error::invalid("A_list", "must not be empty"));
        }
        if self.tau_grid.is_empty() {
            return Err(Error::invalid("tau_grid", "must not be empty"));
        }
        if self.replicates < 2 {
            return Err(Error::invalid(
                "replicates",
                format!("must be >= 2, got {}", self.replicates),
            ));
        }
        if self.iterations <= self.burn_in {
            return Err(Error::invalid(
                "iterations",
                format!(
                    "must exceed burn_in ({}), got {}",
                    self.burn_in, self.iterations
                ),
            ));
        }
        for (i, _) in self.cells().enumerate() {
            self.move_config(i)?;
        }
        self.target(self.a_list[0])?;
        Ok(())
    }

    pub fn ell(&self) -> f64 {
        self.ell.unwrap_or(OPTIMAL_SCALE * self.sigma)
    }

    /// (A, τ) pairs, A-major.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.a_list
            .iter()
            .flat_map(move |&a| self.tau_grid.iter().map(move |&t| (a, t)))
    }

    fn move_config(&self, cell: usize) -> Result<MoveConfig> {
        let (a, tau) = self.cells().nth(cell).expect("cell index in range");
        MoveConfig::new(tau, a, self.ell())
    }

    fn target(&self, a: f64) -> Result<TargetSpec> {
        TargetSpec::normal(self.n, self.mu, self.sigma, a / 2.0)
    }

    pub fn total_iterations(&self) -> u64 {
        (self.a_list.len() * self.tau_grid.len() * self.replicates) as u64 * self.iterations as u64
    }
}

/// Wall-clock limit for a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub seconds: f64,
    pub override_budget: bool,
}

impl Budget {
    pub fn check(&self, estimated_seconds: f64) -> Result<()> {
        if estimated_seconds > self.seconds && !self.override_budget {
            return Err(Error::BudgetExceeded {
                estimated_seconds,
                budget_seconds: self.seconds,
            });
        }
        Ok(())
    }
}

/// Time a short chain and extrapolate to the whole experiment on the
/// current thread pool.
pub fn estimate_seconds(cfg: &ExperimentConfig) -> Result<f64> {
    cfg.validate()?;
    let target = cfg.target(cfg.a_list[0])?;
    let mc = cfg.move_config(0)?;
    let mut rng = RngHandle::new(0, u64::MAX).rng();
    let start = Instant::now();
    run_chain(
        &target,
        mc,
        Init::FromTarget,
        RunOptions::new(CALIBRATION_ITERATIONS, 0),
        &mut rng,
    )?;
    let per_iter = start.elapsed().as_secs_f64() / CALIBRATION_ITERATIONS as f64;
    Ok(per_iter * cfg.total_iterations() as f64 / rayon::current_num_threads() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    #[serde(rename = "A")]
    pub a: f64,
    pub tau: f64,
    pub mads: Mads,
    pub global_measure: GlobalMeasure,
    pub replicates: Vec<ReplicateEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub version: &'static str,
    pub master_seed: u64,
    pub config: ExperimentConfig,
    pub truth: Truth,
    pub cells: Vec<CellResult>,
}

impl ExperimentResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "A,tau,MAD_k,MAD_mu,MAD_sigma,global_measure")?;
        for c in &self.cells {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                fmt_f64(c.a),
                fmt_f64(c.tau),
                fmt_f64(c.mads.k),
                fmt_f64(c.mads.mu),
                fmt_f64(c.mads.sigma),
                fmt_f64(c.global_measure.value)
            )?;
        }
        Ok(())
    }
}

fn replicate(
    target: &TargetSpec,
    mc: MoveConfig,
    cfg: &ExperimentConfig,
    stream: RngHandle,
) -> Result<ReplicateEstimate> {
    let opts = RunOptions::new(cfg.iterations, cfg.burn_in);
    let trace = run_chain(target, mc, Init::FromTarget, opts, &mut stream.rng())?;
    let (mu_hat, sigma_hat) = mean_and_sd(&trace.x1);
    Ok(ReplicateEstimate {
        k_mode_hat: sample_mode(&trace.k, target.prior.kmax()).expect("non-empty trace"),
        mu_hat,
        sigma_hat,
    })
}

/// Run `replicates` independent stationary chains per (A, τ) cell and score
/// their estimates.
///
/// Chain r of cell c uses substream (c, r) of the master seed, and results
/// are reduced in replicate order, so the output does not depend on the
/// number of worker threads.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    master_seed: u64,
    budget: Option<Budget>,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    if let Some(b) = budget {
        b.check(estimate_seconds(cfg)?)?;
    }
    let root = RngHandle::new(master_seed, 0);
    let cells: Vec<(f64, f64)> = cfg.cells().collect();
    let targets = cfg
        .a_list
        .iter()
        .map(|&a| cfg.target(a))
        .collect::<Result<Vec<_>>>()?;
    let truth = Truth::from_target(&targets[0])?;
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.replicates).map(move |r| (c, r)))
        .collect();

    let estimates = tasks
        .par_iter()
        .map(|&(c, r)| {
            let target = &targets[c / cfg.tau_grid.len()];
            replicate(
                target,
                cfg.move_config(c)?,
                cfg,
                root.substream(c as u32, r as u32),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let cells = cells
        .iter()
        .zip(estimates.chunks_exact(cfg.replicates))
        .map(|(&(a, tau), reps)| {
            Ok(CellResult {
                a,
                tau,
                mads: mad_metrics(reps, &truth)?,
                global_measure: global_measure(reps, &truth)?,
                replicates: reps.to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ExperimentResult {
        version: env!("CARGO_PKG_VERSION"),
        master_seed,
        config: cfg.clone(),
        truth,
        cells,
    })
}
