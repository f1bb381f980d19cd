//! Tuning rules for the random-walk scale ℓ and the update probability τ.
//!
//! The closed forms come from the limiting diffusions: ℓ* = 2.38/√Υ gives an
//! update acceptance rate of 2Φ(−1.19) ≈ 0.234, and τ*(A) = 1/(1+√(c(A+1)))
//! minimises the summed integrated autocorrelation times. The trial-run
//! tuner measures the same quantities on an actual chain.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{std_normal_cdf, OPTIMAL_SCALE, SPEED_CONSTANT};
use crate::rjmcmc::{run_chain, Init, MoveConfig, MoveCounters, MoveKind, RunOptions};
use crate::rng::RngHandle;
use crate::target::TargetSpec;

/// Acceptance rates below this are reported as very small.
pub const SMALL_RATE: f64 = 0.05;

/// Fewest update proposals behind any single rate evaluation.
const MIN_PROPOSALS: u64 = 1_000;

const FAMILY_PILOT: u32 = 0;
const FAMILY_SEARCH: u32 = 1;
const FAMILY_MEASURE: u32 = 2;

/// ℓ = 2.38/√Υ.
pub fn optimal_ell(upsilon: f64) -> Result<f64> {
    check_positive("upsilon", upsilon)?;
    Ok(OPTIMAL_SCALE / upsilon.sqrt())
}

/// 2Φ(−ℓ√Υ/2), the limiting acceptance rate of update proposals.
pub fn asymptotic_update_rate(ell: f64, upsilon: f64) -> Result<f64> {
    check_positive("ell", ell)?;
    check_positive("upsilon", upsilon)?;
    Ok(2.0 * std_normal_cdf(-ell * upsilon.sqrt() / 2.0))
}

/// τ*(A) = 1/(1+√(c(A+1))).
///
/// Any A > 0 is accepted; the construction behind the rule only produces
/// A ≥ 2, see [`closed_form_outside_domain`].
pub fn optimal_tau_closed_form(a: f64) -> Result<f64> {
    check_positive("A", a)?;
    Ok(1.0 / (1.0 + (*SPEED_CONSTANT * (a + 1.0)).sqrt()))
}

/// True when `a` lies below the range (A ≥ 2) the closed form was built for.
pub fn closed_form_outside_domain(a: f64) -> bool {
    a < 2.0
}

/// The rate-based rule: r = rate/(1−τ), τ = 1/(1+√(1/r)).
pub fn tau_from_rate(rate: f64, tau_current: f64) -> Result<f64> {
    if !(tau_current > 0.0 && tau_current < 1.0) {
        return Err(Error::invalid(
            "tau",
            format!("must lie in (0, 1), got {tau_current}"),
        ));
    }
    let r = rate / (1.0 - tau_current);
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InconsistentRate {
            rate,
            tau: tau_current,
        });
    }
    Ok(1.0 / (1.0 + (1.0 / r).sqrt()))
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            name,
            format!("must be finite and > 0, got {v}"),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneOptions {
    pub rate_target: f64,
    /// Stop once a measured rate is this close to the target.
    pub tolerance: f64,
    /// Cap on chain iterations spent by the ℓ search, burn-in included.
    pub max_iterations: u64,
    pub max_evaluations: usize,
    pub burn_in_fraction: f64,
    /// Recorded iterations of the final run at the tuned ℓ.
    pub measure_iterations: usize,
    /// Monte Carlo draws used to estimate Υ when f has no closed form.
    pub roughness_draws: usize,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            rate_target: 0.234,
            tolerance: 0.02,
            max_iterations: 50_000_000,
            max_evaluations: 60,
            burn_in_fraction: 0.1,
            measure_iterations: 200_000,
            roughness_draws: 100_000,
        }
    }
}

impl TuneOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate_target > 0.0 && self.rate_target < 1.0) {
            return Err(Error::invalid(
                "rate_target",
                format!("must lie in (0, 1), got {}", self.rate_target),
            ));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 0.5) {
            return Err(Error::invalid(
                "tolerance",
                format!("must lie in (0, 0.5), got {}", self.tolerance),
            ));
        }
        if !(self.burn_in_fraction >= 0.0 && self.burn_in_fraction < 1.0) {
            return Err(Error::invalid(
                "burn_in_fraction",
                format!("must lie in [0, 1), got {}", self.burn_in_fraction),
            ));
        }
        if self.max_evaluations == 0 {
            return Err(Error::invalid("max_evaluations", "must be >= 1"));
        }
        if self.measure_iterations == 0 {
            return Err(Error::invalid("measure_iterations", "must be >= 1"));
        }
        Ok(())
    }

    /// Update proposals per evaluation so that the binomial standard error
    /// at the target rate stays below tolerance/2.
    pub fn proposals_per_evaluation(&self) -> u64 {
        let p = self.rate_target;
        let m = (4.0 * p * (1.0 - p) / (self.tolerance * self.tolerance)).ceil() as u64;
        m.max(MIN_PROPOSALS)
    }
}

/// One measured point of the ℓ ↦ update-rate curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateEvaluation {
    pub ell: f64,
    pub rate: f64,
    pub std_error: f64,
    pub update_proposals: u64,
    pub iterations: u64,
}

/// Outcome of the ℓ search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllSearch {
    pub ell: f64,
    pub rate: f64,
    pub upsilon: f64,
    pub start_ell: f64,
    pub converged: bool,
    pub bracketed: bool,
    pub budget_exhausted: bool,
    pub iterations_used: u64,
    pub evaluations: Vec<RateEvaluation>,
}

/// Measure the post burn-in update acceptance rate at `cfg`.
pub fn measure_update_rate(
    target: &TargetSpec,
    cfg: MoveConfig,
    recorded: usize,
    burn_in_fraction: f64,
    stream: &RngHandle,
) -> Result<(RateEvaluation, MoveCounters)> {
    let burn_in = burn_in_for(recorded, burn_in_fraction);
    let opts = RunOptions::new(recorded + burn_in, burn_in).counters_only();
    let trace = run_chain(target, cfg, Init::FromTarget, opts, &mut stream.rng())?;
    let c = trace.counters;
    let i = MoveKind::Update.index();
    let m = c.proposed[i];
    let rate = if m > 0 {
        c.accepted[i] as f64 / m as f64
    } else {
        f64::NAN
    };
    let std_error = (rate * (1.0 - rate) / m as f64).sqrt();
    let eval = RateEvaluation {
        ell: cfg.ell,
        rate,
        std_error,
        update_proposals: m,
        iterations: (recorded + burn_in) as u64,
    };
    Ok((eval, c))
}

fn burn_in_for(recorded: usize, fraction: f64) -> usize {
    (recorded as f64 * fraction / (1.0 - fraction)).ceil() as usize
}

/// Roughness of f: closed form when available, otherwise a Monte Carlo
/// estimate from a pilot stream.
fn target_roughness(target: &TargetSpec, draws: usize, stream: &RngHandle) -> Result<f64> {
    match target.density.roughness() {
        Err(Error::MissingRoughness) => Ok(target
            .density
            .estimate_roughness(draws, &mut stream.substream(FAMILY_PILOT, 0).rng())
            .mean),
        other => other,
    }
}

/// Find ℓ whose measured update acceptance rate is within tolerance of the
/// target.
///
/// Starts at 2.38/√Υ, brackets by doubling or halving, then bisects in
/// log ℓ. When the iteration budget runs out the best evaluation so far is
/// returned with `budget_exhausted` set.
pub fn tune_ell(
    target: &TargetSpec,
    cfg_base: MoveConfig,
    opts: &TuneOptions,
    stream: &RngHandle,
) -> Result<EllSearch> {
    opts.validate()?;
    cfg_base.validate()?;
    let upsilon = target_roughness(target, opts.roughness_draws, stream)?;
    let start_ell = optimal_ell(upsilon)?;
    let recorded = ((opts.proposals_per_evaluation() as f64 / cfg_base.tau).ceil() as usize).max(1);
    let cost = (recorded + burn_in_for(recorded, opts.burn_in_fraction)) as u64;

    let mut search = EllSearch {
        ell: start_ell,
        rate: f64::NAN,
        upsilon,
        start_ell,
        converged: false,
        bracketed: false,
        budget_exhausted: false,
        iterations_used: 0,
        evaluations: Vec::new(),
    };
    let target_rate = opts.rate_target;

    let evaluate = |ell: f64, search: &mut EllSearch| -> Result<Option<RateEvaluation>> {
        if search.evaluations.len() >= opts.max_evaluations
            || search.iterations_used + cost > opts.max_iterations
        {
            search.budget_exhausted = true;
            return Ok(None);
        }
        let index = search.evaluations.len() as u32;
        let cfg = MoveConfig { ell, ..cfg_base };
        let (eval, _) = measure_update_rate(
            target,
            cfg,
            recorded,
            opts.burn_in_fraction,
            &stream.substream(FAMILY_SEARCH, index),
        )?;
        search.iterations_used += eval.iterations;
        search.evaluations.push(eval);
        Ok(Some(eval))
    };
    let close = |e: &RateEvaluation| (e.rate - target_rate).abs() <= opts.tolerance;

    'search: {
        let Some(first) = evaluate(start_ell, &mut search)? else {
            break 'search;
        };
        if close(&first) {
            search.converged = true;
            break 'search;
        }
        // lo has rate above the target, hi below (rate decreases in ℓ).
        let (mut lo, mut hi);
        if first.rate > target_rate {
            lo = start_ell;
            let mut ell = start_ell;
            loop {
                ell *= 2.0;
                let Some(e) = evaluate(ell, &mut search)? else {
                    break 'search;
                };
                if close(&e) {
                    search.converged = true;
                    break 'search;
                }
                if e.rate < target_rate {
                    hi = ell;
                    break;
                }
                lo = ell;
            }
        } else {
            hi = start_ell;
            let mut ell = start_ell;
            loop {
                ell /= 2.0;
                let Some(e) = evaluate(ell, &mut search)? else {
                    break 'search;
                };
                if close(&e) {
                    search.converged = true;
                    break 'search;
                }
                if e.rate > target_rate {
                    lo = ell;
                    break;
                }
                hi = ell;
            }
        }
        search.bracketed = true;
        while hi / lo > 1.0 + 1e-9 {
            let mid = (lo * hi).sqrt();
            let Some(e) = evaluate(mid, &mut search)? else {
                break 'search;
            };
            if close(&e) {
                search.converged = true;
                break 'search;
            }
            if e.rate > target_rate {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }

    let best = search
        .evaluations
        .iter()
        .min_by(|a, b| {
            (a.rate - target_rate)
                .abs()
                .total_cmp(&(b.rate - target_rate).abs())
        })
        .copied();
    if let Some(best) = best {
        search.ell = best.ell;
        search.rate = best.rate;
    }
    Ok(search)
}

/// Acceptance rate of each move type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MoveRates {
    pub update: Option<f64>,
    pub birth: Option<f64>,
    pub death: Option<f64>,
}

impl MoveRates {
    fn from_counters(c: &MoveCounters) -> Self {
        Self {
            update: c.acceptance_rate(MoveKind::Update),
            birth: c.acceptance_rate(MoveKind::Birth),
            death: c.acceptance_rate(MoveKind::Death),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneReport {
    pub update_acceptance_rate: f64,
    /// Accepted births and deaths per iteration.
    pub switch_rate: f64,
    pub recommended_ell: f64,
    pub tau_closed_form: Option<f64>,
    pub tau_rate_rule: Option<f64>,
    pub acceptance_rates: MoveRates,
    pub mean_birth_accept_probability: Option<f64>,
    /// 1 / mean birth acceptance probability.
    pub a_estimate: Option<f64>,
    /// The A behind `tau_closed_form`.
    pub a_used: Option<f64>,
    pub a_estimated: bool,
    pub tau_used: f64,
    pub upsilon: f64,
    pub iterations_used: u64,
    pub search: EllSearch,
    pub flags: Vec<String>,
}

/// Tune ℓ, then run the chain at the tuned ℓ and derive both τ
/// recommendations.
///
/// With `a_known` false, A in `cfg_init` only drives the chain and the
/// closed-form τ uses the estimate 1/(mean birth acceptance) instead.
pub fn trial_run_tune(
    target: &TargetSpec,
    cfg_init: MoveConfig,
    a_known: bool,
    opts: &TuneOptions,
    stream: &RngHandle,
) -> Result<TuneReport> {
    cfg_init.validate()?;
    let search = tune_ell(target, cfg_init, opts, stream)?;
    let mut flags = Vec::new();
    if search.budget_exhausted {
        flags.push("budget_exhausted".to_string());
    }
    if !search.converged {
        flags.push("not_converged".to_string());
    }
    if search.evaluations.is_empty() {
        return Err(Error::invalid(
            "max_iterations",
            "budget too small for a single rate evaluation",
        ));
    }

    let cfg = MoveConfig {
        ell: search.ell,
        ..cfg_init
    };
    let (eval, counters) = measure_update_rate(
        target,
        cfg,
        opts.measure_iterations,
        opts.burn_in_fraction,
        &stream.substream(FAMILY_MEASURE, 0),
    )?;
    let switch_rate = counters.switch_rate().unwrap_or(0.0);
    let rates = MoveRates::from_counters(&counters);
    let birth_prob = counters.mean_accept_probability(MoveKind::Birth);
    let a_estimate = birth_prob.filter(|&p| p > 0.0).map(|p| 1.0 / p);

    let a_used = if a_known { Some(cfg.a) } else { a_estimate };
    if !a_known {
        flags.push("a_estimated_from_birth_rate".to_string());
    }
    let tau_closed_form = a_used.and_then(|a| optimal_tau_closed_form(a).ok());
    if a_used.is_some_and(closed_form_outside_domain) {
        flags.push("a_below_two".to_string());
    }
    let tau_rate_rule = match tau_from_rate(switch_rate, cfg.tau) {
        Ok(t) => Some(t),
        Err(_) => {
            flags.push("rate_rule_undefined".to_string());
            None
        }
    };
    for (name, rate) in [
        ("update", rates.update),
        ("birth", rates.birth),
        ("death", rates.death),
    ] {
        if rate.is_some_and(|r| r < SMALL_RATE) {
            flags.push(format!("very_small_rate:{name}"));
        }
    }
    if switch_rate < SMALL_RATE {
        flags.push("very_small_rate:switch".to_string());
    }

    Ok(TuneReport {
        update_acceptance_rate: eval.rate,
        switch_rate,
        recommended_ell: search.ell,
        tau_closed_form,
        tau_rate_rule,
        acceptance_rates: rates,
        mean_birth_accept_probability: birth_prob,
        a_estimate,
        a_used,
        a_estimated: !a_known,
        tau_used: cfg.tau,
        upsilon: search.upsilon,
        iterations_used: search.iterations_used + eval.iterations,
        search,
        flags,
    })
}

impl fmt::Display for TuneReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        writeln!(f, "{:<28} {:.4}", "recommended ell", self.recommended_ell)?;
        writeln!(
            f,
            "{:<28} {:.4}",
            "update acceptance rate", self.update_acceptance_rate
        )?;
        writeln!(f, "{:<28} {:.4}", "model switch rate", self.switch_rate)?;
        writeln!(
            f,
            "{:<28} {}",
            "birth acceptance rate",
            opt(self.acceptance_rates.birth)
        )?;
        writeln!(
            f,
            "{:<28} {}",
            "death acceptance rate",
            opt(self.acceptance_rates.death)
        )?;
        writeln!(
            f,
            "{:<28} {}{}",
            "A",
            opt(self.a_used),
            if self.a_estimated { " (estimated)" } else { "" }
        )?;
        writeln!(
            f,
            "{:<28} {}",
            "tau (closed form)",
            opt(self.tau_closed_form)
        )?;
        writeln!(f, "{:<28} {}", "tau (rate rule)", opt(self.tau_rate_rule))?;
        writeln!(f, "{:<28} {}", "iterations used", self.iterations_used)?;
        if !self.flags.is_empty() {
            writeln!(f, "{:<28} {}", "flags", self.flags.join(", "))?;
        }
        Ok(())
    }
}
