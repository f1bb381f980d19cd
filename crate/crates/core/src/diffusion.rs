//! The two limiting processes of the sampler and the inefficiency functional
//! built from their autocorrelations.
//!
//! Z₁ is the rescaled model indicator, an Ornstein-Uhlenbeck process with
//! rate θ₁ = (1−τ)/(A+1) and N(0,1) stationary law. Z₂ is a coordinate of
//! the parameter vector, a Langevin diffusion for f run at speed
//! 2τℓ²Φ(−ℓ√Υ/2).

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::math::{acceptance_probability, std_normal_cdf, SPEED_CONSTANT};
use crate::rjmcmc::{ChainState, MoveConfig, MoveKind, RjKernel};
use crate::target::{DensitySpec, ModelPrior, TargetSpec};

/// Largest θ·dt accepted by the simulator.
pub const MAX_RATE_STEP: f64 = 0.5;

/// Fewer support points than this make the Z₁ marginal check meaningless.
pub const MIN_LATTICE_POINTS: usize = 10;

/// Coefficients of the limiting diffusions.
#[derive(Debug, Clone)]
pub struct DiffusionSpec {
    theta1: f64,
    speed2: f64,
    density: DensitySpec,
}

impl DiffusionSpec {
    pub fn new(tau: f64, a: f64, ell: f64, upsilon: f64, density: DensitySpec) -> Result<Self> {
        MoveConfig::new(tau, a, ell)?;
        if !(upsilon.is_finite() && upsilon > 0.0) {
            return Err(Error::invalid(
                "upsilon",
                format!("must be > 0, got {upsilon}"),
            ));
        }
        let theta1 = (1.0 - tau) / (a + 1.0);
        let speed2 = 2.0 * tau * ell * ell * std_normal_cdf(-ell * upsilon.sqrt() / 2.0);
        Self::from_parts(theta1, speed2, density)
    }

    pub fn from_parts(theta1: f64, speed2: f64, density: DensitySpec) -> Result<Self> {
        if !(theta1 > 0.0 && theta1 < 0.5) {
            return Err(Error::invalid(
                "theta1",
                format!("must lie in (0, 1/2), got {theta1}"),
            ));
        }
        if !(speed2.is_finite() && speed2 > 0.0) {
            return Err(Error::invalid(
                "speed2",
                format!("must be > 0, got {speed2}"),
            ));
        }
        Ok(Self {
            theta1,
            speed2,
            density,
        })
    }

    pub fn theta1(&self) -> f64 {
        self.theta1
    }

    pub fn speed2(&self) -> f64 {
        self.speed2
    }

    pub fn density(&self) -> &DensitySpec {
        &self.density
    }

    /// Decay rate of the Z₂ autocorrelation when f is normal.
    pub fn z2_decay_rate(&self) -> Option<f64> {
        self.density
            .as_normal()
            .map(|d| self.speed2 / (2.0 * d.sigma() * d.sigma()))
    }
}

fn check_lag(s: f64) -> Result<()> {
    if s >= 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("s", format!("lag must be >= 0, got {s}")))
    }
}

/// corr[Z₁(t), Z₁(t+s)] = exp(−θ₁ s).
pub fn acf_z1(spec: &DiffusionSpec, s: f64) -> Result<f64> {
    check_lag(s)?;
    Ok((-spec.theta1 * s).exp())
}

/// corr[Z₂(t), Z₂(t+s)] for normal f: exp(−speed₂ s/(2σ²)).
pub fn acf_z2_normal(tau: f64, ell: f64, upsilon: f64, sigma: f64, s: f64) -> Result<f64> {
    check_lag(s)?;
    for (name, v) in [
        ("tau", tau),
        ("ell", ell),
        ("upsilon", upsilon),
        ("sigma", sigma),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(name, format!("must be > 0, got {v}")));
        }
    }
    if tau >= 1.0 {
        return Err(Error::invalid(
            "tau",
            format!("must lie in (0, 1), got {tau}"),
        ));
    }
    let speed2 = 2.0 * tau * ell * ell * std_normal_cdf(-ell * upsilon.sqrt() / 2.0);
    Ok((-speed2 / (2.0 * sigma * sigma) * s).exp())
}

/// ∫₀^∞ of the summed autocorrelations at the optimal ℓ for normal f:
/// (A+1)/(1−τ) + 1/(τc). Infinite at τ ∈ {0, 1}.
pub fn inefficiency(tau: f64, a: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::invalid(
            "tau",
            format!("must lie in [0, 1], got {tau}"),
        ));
    }
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::invalid("A", format!("must be > 0, got {a}")));
    }
    if tau == 0.0 || tau == 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok((a + 1.0) / (1.0 - tau) + 1.0 / (tau * *SPEED_CONSTANT))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    #[serde(rename = "A")]
    pub a: f64,
    pub tau: f64,
    pub inefficiency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauStarPoint {
    #[serde(rename = "A")]
    pub a: f64,
    pub tau_star: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Figure1Curves {
    pub curves: Vec<CurvePoint>,
    pub tau_star: Vec<TauStarPoint>,
}

impl Figure1Curves {
    pub fn write_curves_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "A,tau,inefficiency")?;
        for p in &self.curves {
            writeln!(
                w,
                "{},{},{}",
                fmt_f64(p.a),
                fmt_f64(p.tau),
                fmt_f64(p.inefficiency)
            )?;
        }
        Ok(())
    }

    pub fn write_tau_star_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "A,tau_star")?;
        for p in &self.tau_star {
            writeln!(w, "{},{}", fmt_f64(p.a), fmt_f64(p.tau_star))?;
        }
        Ok(())
    }
}

/// `points` equally spaced values strictly inside (0, 1).
pub fn open_unit_grid(points: usize) -> Vec<f64> {
    (1..=points)
        .map(|i| i as f64 / (points + 1) as f64)
        .collect()
}

/// Inefficiency for every (A, τ) pair and τ*(A) along `a_range`.
pub fn figure1_curves(a_list: &[f64], tau_grid: &[f64], a_range: &[f64]) -> Result<Figure1Curves> {
    if let Some(&bad) = tau_grid.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(Error::invalid(
            "tau_grid",
            format!("values must lie in (0, 1), got {bad}"),
        ));
    }
    let mut out = Figure1Curves::default();
    for &a in a_list {
        for &tau in tau_grid {
            out.curves.push(CurvePoint {
                a,
                tau,
                inefficiency: inefficiency(tau, a)?,
            });
        }
    }
    for &a in a_range {
        out.tau_star.push(TauStarPoint {
            a,
            tau_star: crate::tuning::optimal_tau_closed_form(a)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Gaussian transition of the OU process; Z₂ falls back to
    /// Euler-Maruyama when f is not normal.
    #[default]
    Exact,
    EulerMaruyama,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionPath {
    pub dt: f64,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
}

/// Simulate (Z₁, Z₂) from their stationary laws over `horizon` in steps of
/// `dt`. The returned paths hold the initial point plus one value per step.
pub fn simulate_diffusion<R: Rng>(
    spec: &DiffusionSpec,
    horizon: f64,
    dt: f64,
    scheme: Scheme,
    rng: &mut R,
) -> Result<DiffusionPath> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", format!("must be > 0, got {dt}")));
    }
    if !(horizon >= dt) {
        return Err(Error::invalid(
            "horizon",
            format!("must be >= dt, got {horizon}"),
        ));
    }
    if dt * spec.theta1 > MAX_RATE_STEP {
        return Err(Error::invalid(
            "dt",
            format!("dt * theta1 = {} exceeds {MAX_RATE_STEP}", dt * spec.theta1),
        ));
    }
    let kappa = spec.z2_decay_rate();
    if scheme == Scheme::EulerMaruyama && kappa.is_some_and(|k| k * dt > MAX_RATE_STEP) {
        return Err(Error::invalid(
            "dt",
            format!("Z2 decay rate times dt exceeds {MAX_RATE_STEP}"),
        ));
    }
    let steps = (horizon / dt).round() as usize;
    let mut z1 = Vec::with_capacity(steps + 1);
    let mut z2 = Vec::with_capacity(steps + 1);
    let mut a: f64 = StandardNormal.sample(rng);
    let mut b = spec.density.sample(rng);
    z1.push(a);
    z2.push(b);

    let th = spec.theta1;
    let (z1_decay, z1_noise) = match scheme {
        Scheme::Exact => ((-th * dt).exp(), (1.0 - (-2.0 * th * dt).exp()).sqrt()),
        Scheme::EulerMaruyama => (1.0 - th * dt, (2.0 * th * dt).sqrt()),
    };
    let normal = spec.density.as_normal().filter(|_| scheme == Scheme::Exact);
    let z2_exact = normal.map(|d| {
        let k = spec.speed2 / (2.0 * d.sigma() * d.sigma());
        (
            d.mu(),
            (-k * dt).exp(),
            d.sigma() * (1.0 - (-2.0 * k * dt).exp()).sqrt(),
        )
    });
    let half_speed_dt = 0.5 * spec.speed2 * dt;
    let em_noise = (spec.speed2 * dt).sqrt();

    for _ in 0..steps {
        let e1: f64 = StandardNormal.sample(rng);
        let e2: f64 = StandardNormal.sample(rng);
        a = a * z1_decay + z1_noise * e1;
        b = match z2_exact {
            Some((mu, decay, noise)) => mu + (b - mu) * decay + noise * e2,
            None => b + half_speed_dt * spec.density.d_log_f(b)? + em_noise * e2,
        };
        z1.push(a);
        z2.push(b);
    }
    Ok(DiffusionPath { dt, z1, z2 })
}

/// Kolmogorov-Smirnov distance between a sample and N(0, 1).
pub fn ks_standard_normal(sample: &[f64]) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = std_normal_cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Z1Source {
    /// Run the chain from a stationary start and keep K every n iterations.
    Mcmc { draws: usize },
    /// Draw K directly from p_n.
    Exact { draws: usize },
}

impl Z1Source {
    pub fn draws(&self) -> usize {
        match *self {
            Z1Source::Mcmc { draws } | Z1Source::Exact { draws } => draws,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub k: usize,
    pub z: f64,
    pub empirical: f64,
    /// N(0,1) mass of the cell of width 1/√n around z.
    pub normal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Z1MarginalReport {
    pub n: usize,
    pub source: Z1Source,
    pub ks_raw: f64,
    pub ks_jittered: f64,
    pub lattice_too_coarse: bool,
    pub histogram: Vec<HistogramBin>,
}

/// (k − kmax/2)/√n.
pub fn z1_of(k: usize, prior: &ModelPrior) -> f64 {
    (k as f64 - prior.center()) / (prior.n() as f64).sqrt()
}

/// Compare the law of Z₁ⁿ = (K − kmax/2)/√n with N(0, 1).
///
/// Both a raw KS distance and one after spreading each lattice value
/// uniformly over its cell are reported.
pub fn limit_check_z1_marginal<R: Rng>(
    target: &TargetSpec,
    cfg: MoveConfig,
    source: Z1Source,
    rng: &mut R,
) -> Result<Z1MarginalReport> {
    let prior = &target.prior;
    let n = prior.n();
    let draws = source.draws();
    if draws == 0 {
        return Err(Error::invalid("draws", "must be >= 1"));
    }
    let ks: Vec<usize> = match source {
        Z1Source::Exact { .. } => (0..draws).map(|_| prior.sample(rng)).collect(),
        Z1Source::Mcmc { .. } => {
            let kernel = RjKernel::new(target, cfg)?;
            let mut state = ChainState::from_target(target, rng);
            let mut out = Vec::with_capacity(draws);
            for _ in 0..draws {
                for _ in 0..n {
                    kernel.step(&mut state, rng);
                }
                out.push(state.k());
            }
            out
        }
    };

    let width = 1.0 / (n as f64).sqrt();
    let raw: Vec<f64> = ks.iter().map(|&k| z1_of(k, prior)).collect();
    let jittered: Vec<f64> = raw
        .iter()
        .map(|&z| z + width * (rng.random::<f64>() - 0.5))
        .collect();

    let mut counts = vec![0u64; prior.kmax() + 1];
    for &k in &ks {
        counts[k] += 1;
    }
    let histogram = (1..=prior.kmax())
        .map(|k| {
            let z = z1_of(k, prior);
            HistogramBin {
                k,
                z,
                empirical: counts[k] as f64 / draws as f64,
                normal: std_normal_cdf(z + width / 2.0) - std_normal_cdf(z - width / 2.0),
            }
        })
        .collect();

    Ok(Z1MarginalReport {
        n,
        source,
        ks_raw: ks_standard_normal(&raw),
        ks_jittered: ks_standard_normal(&jittered),
        lattice_too_coarse: prior.kmax() < MIN_LATTICE_POINTS,
        histogram,
    })
}

/// Σ_k p_n(k) · min(1, f/q · p_n(k+1)/(A p_n(k))) with q = f.
pub fn exact_birth_acceptance(prior: &ModelPrior, a: f64) -> f64 {
    (1..=prior.kmax())
        .map(|k| {
            let lr = prior.log_pmf(k + 1) - prior.log_pmf(k) - a.ln();
            prior.pmf(k) * acceptance_probability(lr)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BirthRateReport {
    pub n: usize,
    #[serde(rename = "A")]
    pub a: f64,
    pub iterations: usize,
    pub birth_proposals: usize,
    /// Mean of min(1, ratio) over proposed births.
    pub estimate: f64,
    /// Standard error of `estimate`, corrected for autocorrelation.
    pub std_error: f64,
    /// 1/A.
    pub limit: f64,
    /// (1 − p_n(1))/A, exact for q = f.
    pub finite_n_value: Option<f64>,
    pub distance: f64,
}

/// Mean birth acceptance probability of a stationary chain against 1/A.
pub fn limit_check_birth_rate<R: Rng>(
    target: &TargetSpec,
    cfg: MoveConfig,
    iterations: usize,
    rng: &mut R,
) -> Result<BirthRateReport> {
    let kernel = RjKernel::new(target, cfg)?;
    let mut state = ChainState::from_target(target, rng);
    let mut probs = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let out = kernel.step(&mut state, rng);
        if out.move_kind == MoveKind::Birth {
            probs.push(acceptance_probability(out.log_accept_ratio));
        }
    }
    if probs.len() < 2 {
        return Err(Error::SeriesTooShort {
            required: 2,
            actual: probs.len(),
        });
    }
    let estimate = probs.iter().sum::<f64>() / probs.len() as f64;
    let std_error = autocorrelated_std_error(&probs);
    let limit = 1.0 / cfg.a;
    let finite_n_value = target
        .proposal
        .is_same_as_target()
        .then(|| (1.0 - target.prior.pmf(1)) / cfg.a);
    Ok(BirthRateReport {
        n: target.n(),
        a: cfg.a,
        iterations,
        birth_proposals: probs.len(),
        estimate,
        std_error,
        limit,
        finite_n_value,
        distance: (estimate - limit).abs(),
    })
}

/// Standard error of a mean, inflated by the integrated autocorrelation
/// time of the series.
pub fn autocorrelated_std_error(series: &[f64]) -> f64 {
    let (_, sd) = crate::math::mean_and_sd(series);
    let n = series.len() as f64;
    let iat = match crate::diagnostics::integrated_autocorrelation_time(series) {
        Ok(t) => t,
        Err(Error::ZeroVariance) => return 0.0,
        Err(_) => return f64::NAN,
    };
    sd * (iat / n).sqrt()
}
