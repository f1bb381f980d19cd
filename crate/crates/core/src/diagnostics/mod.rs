//! Trace statistics and the replicate accuracy metrics.

mod experiment;

pub use experiment::{
    estimate_seconds, run_experiment, Budget, CellResult, ExperimentConfig, ExperimentResult,
};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::math::mean_and_sd;
use crate::rjmcmc::{ChainTrace, MoveKind};
use crate::target::{ModelPrior, TargetSpec};

/// Shortest series accepted by [`integrated_autocorrelation_time`].
pub const MIN_IAT_LENGTH: usize = 1_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub k_mode_hat: usize,
    pub mu_hat: f64,
    pub sigma_hat: f64,
    pub update_acceptance: Option<f64>,
    pub birth_acceptance: Option<f64>,
    pub death_acceptance: Option<f64>,
    pub ess_k: Option<f64>,
    pub ess_x1: Option<f64>,
}

/// Most frequent k, ties to the smallest.
pub fn sample_mode(ks: &[u32], kmax: usize) -> Option<usize> {
    let mut counts = vec![0u64; kmax + 2];
    for &k in ks {
        let k = k as usize;
        if k >= counts.len() {
            counts.resize(k + 1, 0);
        }
        counts[k] += 1;
    }
    let mut best: Option<(usize, u64)> = None;
    for (k, &c) in counts.iter().enumerate() {
        if c > 0 && best.is_none_or(|(_, b)| c > b) {
            best = Some((k, c));
        }
    }
    best.map(|(k, _)| k)
}

/// Mode of the k path plus mean and standard deviation of the x₁ path.
pub fn summarize(trace: &ChainTrace, prior: &ModelPrior) -> Result<RunSummary> {
    if trace.k.is_empty() {
        return Err(Error::SeriesTooShort {
            required: 1,
            actual: 0,
        });
    }
    let k_mode_hat = sample_mode(&trace.k, prior.kmax()).expect("non-empty trace");
    let (mu_hat, sigma_hat) = mean_and_sd(&trace.x1);
    let ess = |xs: &[f64]| {
        integrated_autocorrelation_time(xs)
            .ok()
            .map(|t| xs.len() as f64 / t)
    };
    let c = &trace.counters;
    Ok(RunSummary {
        k_mode_hat,
        mu_hat,
        sigma_hat,
        update_acceptance: c.acceptance_rate(MoveKind::Update),
        birth_acceptance: c.acceptance_rate(MoveKind::Birth),
        death_acceptance: c.acceptance_rate(MoveKind::Death),
        ess_k: ess(&trace.k_as_f64()),
        ess_x1: ess(&trace.x1),
    })
}

/// Autocovariances γ(0..=max_lag) with the 1/N normalisation.
fn autocovariance(series: &[f64], max_lag: usize) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|&x| Complex::new(x - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex::new(z.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let scale = 1.0 / (size as f64 * n as f64);
    buf[..=max_lag].iter().map(|z| z.re * scale).collect()
}

/// ρ(0..=max_lag), each autocovariance divided by the lag-0 one.
pub fn empirical_acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if series.len() <= max_lag {
        return Err(Error::SeriesTooShort {
            required: max_lag + 1,
            actual: series.len(),
        });
    }
    let gamma = autocovariance(series, max_lag);
    let (_, sd) = mean_and_sd(series);
    if !(sd > 0.0) || !(gamma[0] > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok(gamma.iter().map(|g| g / gamma[0]).collect())
}

/// 1 + 2Σρ(s), summing pairs ρ(2m) + ρ(2m+1) while they stay positive.
pub fn integrated_autocorrelation_time(series: &[f64]) -> Result<f64> {
    if series.len() < MIN_IAT_LENGTH {
        return Err(Error::SeriesTooShort {
            required: MIN_IAT_LENGTH,
            actual: series.len(),
        });
    }
    let rho = empirical_acf(series, series.len() - 1)?;
    let mut sum = 0.0;
    for pair in rho.chunks_exact(2) {
        let g = pair[0] + pair[1];
        if g <= 0.0 {
            break;
        }
        sum += g;
    }
    Ok((2.0 * sum - 1.0).max(1.0))
}

/// True values the replicate estimates are measured against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Truth {
    /// Every k attaining the maximum of p_n.
    pub k_modes: Vec<usize>,
    pub mu: f64,
    pub sigma: f64,
}

impl Truth {
    pub fn from_target(target: &TargetSpec) -> Result<Self> {
        let d = target
            .density
            .as_normal()
            .ok_or_else(|| Error::invalid("density", "truth needs a normal density"))?;
        Ok(Self {
            k_modes: target.prior.mode_set(),
            mu: d.mu(),
            sigma: d.sigma(),
        })
    }

    /// Distance from `k` to the nearest true mode.
    pub fn k_distance(&self, k: usize) -> f64 {
        self.k_modes
            .iter()
            .map(|&m| (k as f64 - m as f64).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicateEstimate {
    pub k_mode_hat: usize,
    pub mu_hat: f64,
    pub sigma_hat: f64,
}

impl From<&RunSummary> for ReplicateEstimate {
    fn from(s: &RunSummary) -> Self {
        Self {
            k_mode_hat: s.k_mode_hat,
            mu_hat: s.mu_hat,
            sigma_hat: s.sigma_hat,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mads {
    pub k: f64,
    pub mu: f64,
    pub sigma: f64,
}

fn deviations(results: &[ReplicateEstimate], truth: &Truth) -> [Vec<f64>; 3] {
    [
        results
            .iter()
            .map(|r| truth.k_distance(r.k_mode_hat))
            .collect(),
        results.iter().map(|r| r.mu_hat - truth.mu).collect(),
        results.iter().map(|r| r.sigma_hat - truth.sigma).collect(),
    ]
}

fn check_replicates(results: &[ReplicateEstimate]) -> Result<()> {
    if results.len() < 2 {
        return Err(Error::invalid(
            "replicates",
            format!("need at least 2, got {}", results.len()),
        ));
    }
    Ok(())
}

/// Mean absolute deviations of the three estimates from the truth.
pub fn mad_metrics(results: &[ReplicateEstimate], truth: &Truth) -> Result<Mads> {
    check_replicates(results)?;
    let n = results.len() as f64;
    let [k, mu, sigma] =
        deviations(results, truth).map(|d| d.iter().map(|x| x.abs()).sum::<f64>() / n);
    Ok(Mads { k, mu, sigma })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalMeasure {
    pub value: f64,
    pub k_ratio: f64,
    pub mu_ratio: f64,
    pub sigma_ratio: f64,
    /// Blocks whose deviations were all zero and counted as 0.
    pub degenerate_blocks: Vec<String>,
}

/// (Σ|d|/N) / √(Σd²/(N−1)), or None when every deviation is zero.
fn l1_l2_ratio(d: &[f64]) -> Option<f64> {
    let n = d.len() as f64;
    let l1 = d.iter().map(|x| x.abs()).sum::<f64>() / n;
    let l2 = (d.iter().map(|x| x * x).sum::<f64>() / (n - 1.0)).sqrt();
    (l2 > 0.0).then(|| l1 / l2)
}

/// k-block ratio plus half the sum of the μ- and σ-block ratios.
pub fn global_measure(results: &[ReplicateEstimate], truth: &Truth) -> Result<GlobalMeasure> {
    check_replicates(results)?;
    let mut degenerate = Vec::new();
    let mut ratios = [0.0; 3];
    for ((d, name), r) in deviations(results, truth)
        .iter()
        .zip(["k", "mu", "sigma"])
        .zip(ratios.iter_mut())
    {
        match l1_l2_ratio(d) {
            Some(v) => *r = v,
            None => degenerate.push(name.to_string()),
        }
    }
    let [k_ratio, mu_ratio, sigma_ratio] = ratios;
    Ok(GlobalMeasure {
        value: k_ratio + 0.5 * (mu_ratio + sigma_ratio),
        k_ratio,
        mu_ratio,
        sigma_ratio,
        degenerate_blocks: degenerate,
    })
}
