//! The reversible jump kernel.
//!
//! Each iteration draws U ~ U(0,1) and, by the thresholds of the move-choice
//! PMF g, attempts one of:
//!
//! * an **update**: random-walk proposal Y ~ N(X, ℓ²/(n+k) · I) on all
//!   coordinates, accepted with min(1, ∏ f(Y_i)/f(X_i));
//! * a **birth**: append U ~ q, accepted with
//!   min(1, f(U)/q(U) · 1/A · p_n(k+1)/p_n(k));
//! * a **death**: drop the last coordinate, accepted with
//!   min(1, q(x_last)/f(x_last) · A · p_n(k−1)/p_n(k)).
//!
//! with g = (τ, (1−τ)A/(A+1), (1−τ)/(A+1)). A rejected move leaves the state
//! untouched. All ratios are evaluated in log space, and the acceptance
//! uniform U_a is drawn for every move, including ones that are certain to
//! be accepted or rejected, so the random stream layout depends only on the
//! sequence of move types.

mod trace;

pub use trace::{
    run_chain, ChainTrace, Init, MoveCounters, RunOptions, Snapshot, TraceSummary,
    CACHE_REFRESH_INTERVAL,
};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::acceptance_probability;
use crate::target::TargetSpec;

/// (τ, A, ℓ): move-choice probability, proposal-quality constant and
/// random-walk scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoveConfig {
    pub tau: f64,
    #[serde(rename = "A", alias = "a")]
    pub a: f64,
    pub ell: f64,
}

impl MoveConfig {
    pub fn new(tau: f64, a: f64, ell: f64) -> Result<Self> {
        let cfg = Self { tau, a, ell };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::invalid(
                "tau",
                format!("must lie in (0, 1), got {}", self.tau),
            ));
        }
        if !(self.a.is_finite() && self.a >= 2.0) {
            return Err(Error::invalid("A", format!("must be >= 2, got {}", self.a)));
        }
        if !(self.ell.is_finite() && self.ell > 0.0) {
            return Err(Error::invalid(
                "ell",
                format!("must be > 0, got {}", self.ell),
            ));
        }
        Ok(())
    }

    /// g(1), g(2), g(3).
    pub fn move_probabilities(&self) -> [f64; 3] {
        let switch = 1.0 - self.tau;
        [
            self.tau,
            switch * self.a / (self.a + 1.0),
            switch / (self.a + 1.0),
        ]
    }

    /// Map U ~ U(0,1) to a move type.
    pub fn select(&self, u: f64) -> MoveKind {
        let [g1, g2, _] = self.move_probabilities();
        if u <= g1 {
            MoveKind::Update
        } else if u <= g1 + g2 {
            MoveKind::Birth
        } else {
            MoveKind::Death
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Update,
    Birth,
    Death,
}

impl MoveKind {
    pub const ALL: [MoveKind; 3] = [MoveKind::Update, MoveKind::Birth, MoveKind::Death];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MoveKind::Update => "update",
            MoveKind::Birth => "birth",
            MoveKind::Death => "death",
        }
    }
}

/// Current (k, x) with a cached Σ log f(x_i).
#[derive(Debug, Clone)]
pub struct ChainState {
    k: usize,
    x: Vec<f64>,
    log_density_sum: f64,
    scratch: Vec<f64>,
}

impl ChainState {
    pub fn new(target: &TargetSpec, k: usize, x: Vec<f64>) -> Result<Self> {
        if !target.prior.contains(k) {
            return Err(Error::OutOfSupport {
                k,
                kmax: target.prior.kmax(),
            });
        }
        let expected = target.n() + k;
        if x.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: x.len(),
            });
        }
        if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid("x", format!("non-finite coordinate {bad}")));
        }
        let log_density_sum = target.density.ln_pdf_sum(&x);
        Ok(Self {
            k,
            x,
            log_density_sum,
            scratch: Vec::new(),
        })
    }

    /// Exact draw from π_n: K ~ p_n, then n+K i.i.d. draws from f.
    pub fn from_target<R: Rng>(target: &TargetSpec, rng: &mut R) -> Self {
        let k = target.prior.sample(rng);
        let x: Vec<f64> = (0..target.n() + k)
            .map(|_| target.density.sample(rng))
            .collect();
        let log_density_sum = target.density.ln_pdf_sum(&x);
        Self {
            k,
            x,
            log_density_sum,
            scratch: Vec::new(),
        }
    }

    /// k at the (lower) mode of p_n and every coordinate at the location of
    /// f (μ for a normal density, 0 otherwise).
    pub fn cold_start(target: &TargetSpec) -> Self {
        let k = target.prior.mode_set()[0];
        let loc = target.density.as_normal().map_or(0.0, |d| d.mu());
        let x = vec![loc; target.n() + k];
        let log_density_sum = target.density.ln_pdf_sum(&x);
        Self {
            k,
            x,
            log_density_sum,
            scratch: Vec::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn log_density_sum(&self) -> f64 {
        self.log_density_sum
    }

    /// Recompute the cached sum from scratch; returns the absolute drift.
    pub fn refresh(&mut self, target: &TargetSpec) -> f64 {
        let exact = target.density.ln_pdf_sum(&self.x);
        let drift = (exact - self.log_density_sum).abs();
        self.log_density_sum = exact;
        drift
    }
}

/// What happened in one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub move_kind: MoveKind,
    /// Always true: a death at k = 1 counts as proposed (and rejected).
    pub proposed: bool,
    pub accepted: bool,
    pub log_accept_ratio: f64,
}

/// The kernel for one target and move configuration. Immutable; share it
/// freely across chains.
#[derive(Debug, Clone)]
pub struct RjKernel<'a> {
    target: &'a TargetSpec,
    cfg: MoveConfig,
    ln_a: f64,
}

impl<'a> RjKernel<'a> {
    pub fn new(target: &'a TargetSpec, cfg: MoveConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            target,
            cfg,
            ln_a: cfg.a.ln(),
        })
    }

    pub fn target(&self) -> &TargetSpec {
        self.target
    }

    pub fn config(&self) -> &MoveConfig {
        &self.cfg
    }

    /// True when A ≥ 2·sup f/q is known to hold, so that every death
    /// proposed at k > 1 must be accepted.
    pub fn guarantees_death_acceptance(&self) -> bool {
        self.target
            .proposal
            .sup_density_ratio(&self.target.density)
            .is_some_and(|sup| self.cfg.a >= 2.0 * sup)
    }

    /// One iteration of the chain.
    pub fn step<R: Rng>(&self, state: &mut ChainState, rng: &mut R) -> StepOutcome {
        let u: f64 = rng.random();
        match self.cfg.select(u) {
            MoveKind::Update => self.update_move(state, rng),
            MoveKind::Birth => self.birth_move(state, rng),
            MoveKind::Death => self.death_move(state, rng),
        }
    }

    pub fn update_move<R: Rng>(&self, state: &mut ChainState, rng: &mut R) -> StepOutcome {
        let scale = self.cfg.ell / (state.x.len() as f64).sqrt();
        let ChainState { x, scratch, .. } = state;
        scratch.clear();
        scratch.extend(x.iter().map(|&xi| {
            let z: f64 = StandardNormal.sample(rng);
            xi + scale * z
        }));
        let proposed_sum = self.target.density.ln_pdf_sum(scratch);
        let log_ratio = proposed_sum - state.log_density_sum;
        let accepted = accept(log_ratio, rng);
        if accepted {
            std::mem::swap(&mut state.x, &mut state.scratch);
            state.log_density_sum = proposed_sum;
        }
        StepOutcome {
            move_kind: MoveKind::Update,
            proposed: true,
            accepted,
            log_accept_ratio: log_ratio,
        }
    }

    pub fn birth_move<R: Rng>(&self, state: &mut ChainState, rng: &mut R) -> StepOutcome {
        let f = &self.target.density;
        let u = self.target.proposal.sample(f, rng);
        let log_ratio = self.birth_log_ratio(state.k, u);
        let accepted = accept(log_ratio, rng);
        if accepted {
            state.x.push(u);
            state.k += 1;
            state.log_density_sum += f.ln_pdf(u);
        }
        StepOutcome {
            move_kind: MoveKind::Birth,
            proposed: true,
            accepted,
            log_accept_ratio: log_ratio,
        }
    }

    pub fn death_move<R: Rng>(&self, state: &mut ChainState, rng: &mut R) -> StepOutcome {
        let last = *state
            .x
            .last()
            .expect("state always holds n + k >= 8 coordinates");
        let log_ratio = self.death_log_ratio(state.k, last);
        let accepted = accept(log_ratio, rng);
        if accepted {
            state.x.pop();
            state.k -= 1;
            state.log_density_sum -= self.target.density.ln_pdf(last);
        }
        StepOutcome {
            move_kind: MoveKind::Death,
            proposed: true,
            accepted,
            log_accept_ratio: log_ratio,
        }
    }

    /// log[f(u) p_n(k+1) g(3) / (q(u) p_n(k) g(2))]; −∞ at k = kmax.
    pub fn birth_log_ratio(&self, k: usize, u: f64) -> f64 {
        let prior = &self.target.prior;
        let prior_term = prior.log_pmf(k + 1) - prior.log_pmf(k);
        if prior_term == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        self.target.proposal.ln_f_over_q(&self.target.density, u) - self.ln_a + prior_term
    }

    /// log[q(x_last) p_n(k−1) g(2) / (f(x_last) p_n(k) g(3))]; −∞ at k = 1.
    pub fn death_log_ratio(&self, k: usize, x_last: f64) -> f64 {
        let prior = &self.target.prior;
        let prior_term = prior.log_pmf(k - 1) - prior.log_pmf(k);
        if prior_term == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        -self
            .target
            .proposal
            .ln_f_over_q(&self.target.density, x_last)
            + self.ln_a
            + prior_term
    }

    /// |log[π(k,x) g(2) q(u) α_birth] − log[π(k+1,(x,u)) g(3) α_death]|, the
    /// detailed-balance residual of the birth/death pair.
    pub fn reversibility_residual(&self, k: usize, x: &[f64], u: f64) -> Result<f64> {
        let prior = &self.target.prior;
        if !prior.contains(k + 1) {
            return Err(Error::OutOfSupport {
                k: k + 1,
                kmax: prior.kmax(),
            });
        }
        if !u.is_finite() {
            return Err(Error::invalid("u", format!("must be finite, got {u}")));
        }
        let [_, g2, g3] = self.cfg.move_probabilities();
        let log_birth = self.birth_log_ratio(k, u).min(0.0);
        let log_death = self.death_log_ratio(k + 1, u).min(0.0);
        let forward = self.target.log_joint(k, x)?
            + g2.ln()
            + self.target.proposal.ln_q(&self.target.density, u)
            + log_birth;
        let mut grown = Vec::with_capacity(x.len() + 1);
        grown.extend_from_slice(x);
        grown.push(u);
        let backward = self.target.log_joint(k + 1, &grown)? + g3.ln() + log_death;
        Ok((forward - backward).abs())
    }
}

/// Detailed-balance residual for the birth/death pair at (k, x, u).
pub fn reversibility_identity_check(
    target: &TargetSpec,
    cfg: MoveConfig,
    k: usize,
    x: &[f64],
    u: f64,
) -> Result<f64> {
    RjKernel::new(target, cfg)?.reversibility_residual(k, x, u)
}

/// log of the update-move ratio ∏ f(y_i)/f(x_i).
pub fn update_log_ratio(target: &TargetSpec, x: &[f64], y: &[f64]) -> f64 {
    target.density.ln_pdf_sum(y) - target.density.ln_pdf_sum(x)
}

/// Draw U_a and accept iff U_a < min(1, exp(log_ratio)).
#[inline]
fn accept<R: Rng>(log_ratio: f64, rng: &mut R) -> bool {
    let u_a: f64 = rng.random();
    u_a < acceptance_probability(log_ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngHandle;
    use crate::target::{DensitySpec, ModelPrior, ProposalSpec};

    fn target7() -> TargetSpec {
        TargetSpec::normal(7, 0.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn move_probabilities_sum_to_one() {
        for &(tau, a) in &[(0.415, 2.0), (0.1, 25.0), (0.9, 5.0), (0.5, 1e6)] {
            let g = MoveConfig::new(tau, a, 1.0).unwrap().move_probabilities();
            assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!(((g[1] / g[2]) - a).abs() < 1e-9 * a);
        }
    }

    #[test]
    fn config_validation() {
        assert!(MoveConfig::new(0.0, 2.0, 1.0).is_err());
        assert!(MoveConfig::new(1.0, 2.0, 1.0).is_err());
        assert!(MoveConfig::new(0.5, 1.9, 1.0).is_err());
        assert!(MoveConfig::new(0.5, 2.0, 0.0).is_err());
        assert!(MoveConfig::new(0.5, 2.0, f64::NAN).is_err());
    }

    #[test]
    fn threshold_selection() {
        let cfg = MoveConfig::new(1.0 - 1e-9, 2.0, 1.0).unwrap();
        assert_eq!(cfg.select(0.5), MoveKind::Update);
        let cfg = MoveConfig::new(0.4, 2.0, 1.0).unwrap();
        assert_eq!(cfg.select(0.4), MoveKind::Update);
        assert_eq!(cfg.select(0.41), MoveKind::Birth);
        assert_eq!(cfg.select(0.4 + 0.4 - 1e-12), MoveKind::Birth);
        assert_eq!(cfg.select(0.81), MoveKind::Death);
    }

    #[test]
    fn identical_proposal_has_unit_ratio() {
        let t = target7();
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.3 - 1.0).collect();
        assert_eq!(update_log_ratio(&t, &x, &x), 0.0);
        assert_eq!(acceptance_probability(update_log_ratio(&t, &x, &x)), 1.0);
    }

    #[test]
    fn single_site_update_ratio() {
        let d = DensitySpec::normal(0.0, 1.0).unwrap();
        let lr = d.ln_pdf(1.0) - d.ln_pdf(0.0);
        assert!((acceptance_probability(lr) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((acceptance_probability(lr) - 0.606_530_659_712_633_4).abs() < 1e-15);
    }

    #[test]
    fn birth_at_mode_with_q_equal_f() {
        let t = target7();
        let kernel = RjKernel::new(&t, MoveConfig::new(0.415, 2.0, 2.38).unwrap()).unwrap();
        for &u in &[-3.0, 0.0, 0.7, 5.0] {
            let p = acceptance_probability(kernel.birth_log_ratio(3, u));
            assert!((p - 0.928_571_428_571_428_6 / 2.0).abs() < 1e-12);
        }
        assert!((0.928_571_428_571_428_6f64 / 2.0 - 0.4643).abs() < 1e-4);
    }

    #[test]
    fn birth_at_kmax_is_impossible() {
        let t = target7();
        let kernel = RjKernel::new(&t, MoveConfig::new(0.415, 2.0, 2.38).unwrap()).unwrap();
        assert_eq!(kernel.birth_log_ratio(5, 0.0), f64::NEG_INFINITY);
        let mut state = ChainState::new(&t, 5, vec![0.0; 12]).unwrap();
        let mut rng = RngHandle::new(1, 0).rng();
        let out = kernel.birth_move(&mut state, &mut rng);
        assert!(!out.accepted);
        assert_eq!(out.log_accept_ratio, f64::NEG_INFINITY);
        assert_eq!(state.k(), 5);
    }

    #[test]
    fn death_at_one_is_rejected_but_proposed() {
        let t = target7();
        let kernel = RjKernel::new(&t, MoveConfig::new(0.415, 2.0, 2.38).unwrap()).unwrap();
        let mut state = ChainState::new(&t, 1, vec![0.1; 8]).unwrap();
        let mut rng = RngHandle::new(1, 0).rng();
        let out = kernel.death_move(&mut state, &mut rng);
        assert!(out.proposed && !out.accepted);
        assert_eq!(out.log_accept_ratio, f64::NEG_INFINITY);
        assert_eq!(state.k(), 1);
        assert_eq!(state.x().len(), 8);
    }

    #[test]
    fn death_above_one_auto_accepts() {
        let t = TargetSpec::normal(50, 0.0, 1.0, 1.0).unwrap();
        for &a in &[2.0, 5.0, 25.0] {
            let kernel = RjKernel::new(&t, MoveConfig::new(0.3, a, 2.38).unwrap()).unwrap();
            assert!(kernel.guarantees_death_acceptance());
            for k in 2..=t.prior.kmax() {
                for &x in &[-8.0, 0.0, 3.0] {
                    assert!(kernel.death_log_ratio(k, x) >= 0.0, "k={k} a={a}");
                }
            }
        }
    }

    #[test]
    fn death_with_stub_prior_ratio() {
        // p(k−1)/p(k) = 0.4 at k = 2, A = 2 → acceptance 0.8
        let prior = ModelPrior::from_log_weights(7, vec![0.4f64.ln(), 0.0, 0.0]);
        let t = TargetSpec {
            prior,
            density: DensitySpec::normal(0.0, 1.0).unwrap(),
            proposal: ProposalSpec::same_as_target(1.0).unwrap(),
        };
        let kernel = RjKernel::new(&t, MoveConfig::new(0.5, 2.0, 1.0).unwrap()).unwrap();
        let p = acceptance_probability(kernel.death_log_ratio(2, 0.3));
        assert!((p - 0.8).abs() < 1e-12);
    }

    #[test]
    fn moves_respect_coordinate_structure() {
        let t = TargetSpec::normal(20, 0.0, 1.0, 1.0).unwrap();
        let kernel = RjKernel::new(&t, MoveConfig::new(0.4, 2.0, 2.38).unwrap()).unwrap();
        let mut rng = RngHandle::new(9, 0).rng();
        let mut state = ChainState::from_target(&t, &mut rng);
        for _ in 0..5_000 {
            let before = state.clone();
            let out = kernel.step(&mut state, &mut rng);
            assert!(before.k().abs_diff(state.k()) <= 1);
            assert_eq!(state.x().len(), t.n() + state.k());
            match (out.move_kind, out.accepted) {
                (MoveKind::Update, _) => assert_eq!(state.k(), before.k()),
                (MoveKind::Birth, true) => {
                    assert_eq!(&state.x()[..before.x().len()], before.x())
                }
                (MoveKind::Death, true) => {
                    assert_eq!(state.x(), &before.x()[..state.x().len()])
                }
                (_, false) => assert_eq!(state.x(), before.x()),
            }
        }
        assert!(state.refresh(&t) < 1e-8);
    }

    #[test]
    fn reversibility_residual_small() {
        let t = TargetSpec::normal(7, 0.0, 1.0, 1.0).unwrap();
        let cfg = MoveConfig::new(0.415, 2.0, 2.38).unwrap();
        let x = vec![0.2; 10];
        for &u in &[0.0, 1.3, -10.0, 10.0] {
            let r = reversibility_identity_check(&t, cfg, 3, &x, u).unwrap();
            assert!(r < 1e-10, "u={u} r={r}");
        }
        assert!(reversibility_identity_check(&t, cfg, 5, &[0.0; 12], 0.0).is_err());
        assert!(reversibility_identity_check(&t, cfg, 3, &x[..9], 0.0).is_err());
    }
}
