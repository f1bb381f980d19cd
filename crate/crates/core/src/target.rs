//! The product-form target π_n(k, x) = p_n(k) · ∏_{i=1}^{n+k} f(x_i).
//!
//! [`ModelPrior`] is the symmetric model-index PMF on {1, …, ⌊√n ln n⌋},
//! [`DensitySpec`] the per-coordinate density f, and [`ProposalSpec`] the
//! birth proposal q together with the bound f/q ≤ A*.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, mean_and_sd};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Smallest admissible dimension parameter.
pub const MIN_N: usize = 7;

// ---------------------------------------------------------------------------
// Densities
// ---------------------------------------------------------------------------

/// Normal(μ, σ²) density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalDensity {
    mu: f64,
    sigma: f64,
}

impl NormalDensity {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::invalid("mu", format!("must be finite, got {mu}")));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid("sigma", format!("must be > 0, got {sigma}")));
        }
        Ok(Self { mu, sigma })
    }

    pub fn standard() -> Self {
        Self {
            mu: 0.0,
            sigma: 1.0,
        }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    #[inline]
    fn ln_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        -0.5 * (LN_2PI + z * z) - self.sigma.ln()
    }

    #[inline]
    fn d_ln_pdf(&self, x: f64) -> f64 {
        -(x - self.mu) / (self.sigma * self.sigma)
    }

    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mu + self.sigma * z
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type SamplerFn = Arc<dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync>;

/// A user-supplied density given by callables.
///
/// The roughness Υ = E[((log f)′)²] is not generally available in closed
/// form, so it must either be supplied or estimated with
/// [`DensitySpec::estimate_roughness`].
#[derive(Clone)]
pub struct CustomDensity {
    name: String,
    log_density: ScalarFn,
    d_log_density: ScalarFn,
    sampler: SamplerFn,
    roughness: Option<f64>,
}

impl CustomDensity {
    pub fn new(
        name: impl Into<String>,
        log_density: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d_log_density: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sampler: impl Fn(&mut dyn RngCore) -> f64 + Send + Sync + 'static,
        roughness: Option<f64>,
    ) -> Result<Self> {
        if let Some(u) = roughness {
            if !(u.is_finite() && u > 0.0) {
                return Err(Error::invalid("roughness", format!("must be > 0, got {u}")));
            }
        }
        Ok(Self {
            name: name.into(),
            log_density: Arc::new(log_density),
            d_log_density: Arc::new(d_log_density),
            sampler: Arc::new(sampler),
            roughness,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for CustomDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDensity")
            .field("name", &self.name)
            .field("roughness", &self.roughness)
            .finish_non_exhaustive()
    }
}

/// The per-coordinate density f.
#[derive(Debug, Clone)]
pub enum DensitySpec {
    Normal(NormalDensity),
    Custom(CustomDensity),
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

impl DensitySpec {
    pub fn normal(mu: f64, sigma: f64) -> Result<Self> {
        NormalDensity::new(mu, sigma).map(DensitySpec::Normal)
    }

    /// log f(x), checked.
    pub fn log_f(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::invalid("x", format!("must be finite, got {x}")));
        }
        Ok(self.ln_pdf(x))
    }

    /// (log f)′(x), checked.
    pub fn d_log_f(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::invalid("x", format!("must be finite, got {x}")));
        }
        Ok(self.d_ln_pdf(x))
    }

    /// log f(x) without input validation; the sampler's hot path.
    #[inline]
    pub fn ln_pdf(&self, x: f64) -> f64 {
        match self {
            DensitySpec::Normal(d) => d.ln_pdf(x),
            DensitySpec::Custom(c) => (c.log_density)(x),
        }
    }

    #[inline]
    pub fn d_ln_pdf(&self, x: f64) -> f64 {
        match self {
            DensitySpec::Normal(d) => d.d_ln_pdf(x),
            DensitySpec::Custom(c) => (c.d_log_density)(x),
        }
    }

    /// Σ log f(x_i).
    pub fn ln_pdf_sum(&self, xs: &[f64]) -> f64 {
        match self {
            DensitySpec::Normal(d) => {
                let ss: f64 = xs
                    .iter()
                    .map(|&x| {
                        let z = (x - d.mu) / d.sigma;
                        z * z
                    })
                    .sum();
                -0.5 * ss - xs.len() as f64 * (0.5 * LN_2PI + d.sigma.ln())
            }
            DensitySpec::Custom(c) => xs.iter().map(|&x| (c.log_density)(x)).sum(),
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            DensitySpec::Normal(d) => d.sample(rng),
            DensitySpec::Custom(c) => (c.sampler)(rng),
        }
    }

    /// Υ = E[((log f)′(X))²]. Exactly 1/σ² for a normal density.
    pub fn roughness(&self) -> Result<f64> {
        match self {
            DensitySpec::Normal(d) => Ok(1.0 / (d.sigma * d.sigma)),
            DensitySpec::Custom(c) => c.roughness.ok_or(Error::MissingRoughness),
        }
    }

    /// Monte Carlo estimate of E[((log f)′(X))²] from `draws` samples of f.
    pub fn estimate_roughness<R: Rng>(&self, draws: usize, rng: &mut R) -> McEstimate {
        let values: Vec<f64> = (0..draws)
            .map(|_| {
                let g = self.d_ln_pdf(self.sample(rng));
                g * g
            })
            .collect();
        let (mean, sd) = mean_and_sd(&values);
        McEstimate {
            mean,
            std_error: sd / (draws as f64).sqrt(),
        }
    }

    /// Check a supplied roughness against a Monte Carlo estimate (3-σ band).
    /// When none was supplied, return the estimate instead.
    pub fn validated_roughness<R: Rng>(&self, draws: usize, rng: &mut R) -> Result<f64> {
        let est = self.estimate_roughness(draws, rng);
        let supplied = match self.roughness() {
            Ok(v) => v,
            Err(Error::MissingRoughness) => return Ok(est.mean),
            Err(e) => return Err(e),
        };
        if (supplied - est.mean).abs() > 3.0 * est.std_error {
            return Err(Error::invalid(
                "roughness",
                format!(
                    "supplied value {supplied} disagrees with Monte Carlo estimate {} ± {}",
                    est.mean, est.std_error
                ),
            ));
        }
        Ok(supplied)
    }

    pub fn as_normal(&self) -> Option<&NormalDensity> {
        match self {
            DensitySpec::Normal(d) => Some(d),
            DensitySpec::Custom(_) => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Birth proposal
// ---------------------------------------------------------------------------

/// Density of the birth proposal q.
#[derive(Debug, Clone)]
pub enum ProposalDensity {
    /// q = f.
    SameAsTarget,
    Normal(NormalDensity),
    Custom(CustomDensity),
}

/// The birth proposal q and the constant A* ≥ sup f/q.
///
/// A* may be set above the true bound ("experiment mode"): with q = f one
/// can emulate any distance between f and q purely through A = 2A*.
#[derive(Debug, Clone)]
pub struct ProposalSpec {
    q: ProposalDensity,
    astar: f64,
}

impl ProposalSpec {
    pub fn same_as_target(astar: f64) -> Result<Self> {
        Self::new(ProposalDensity::SameAsTarget, astar, None)
    }

    /// Build a proposal. When `f` is given and sup f/q is available in
    /// closed form, A* is checked against it.
    pub fn new(q: ProposalDensity, astar: f64, f: Option<&DensitySpec>) -> Result<Self> {
        if !(astar.is_finite() && astar >= 1.0) {
            return Err(Error::invalid(
                "astar",
                format!("must be >= 1, got {astar}"),
            ));
        }
        let spec = Self { q, astar };
        if let Some(f) = f {
            match spec.sup_density_ratio(f) {
                Some(sup) if sup > astar * (1.0 + 1e-12) => {
                    return Err(Error::invalid(
                        "astar",
                        format!("sup f/q = {sup} exceeds A* = {astar}"),
                    ))
                }
                Some(_) => {}
                None if matches!(spec.q, ProposalDensity::Normal(_)) => {
                    return Err(Error::invalid(
                        "proposal",
                        "f/q is unbounded: q must have tails at least as heavy as f",
                    ))
                }
                None => {}
            }
        }
        Ok(spec)
    }

    pub fn density(&self) -> &ProposalDensity {
        &self.q
    }

    pub fn astar(&self) -> f64 {
        self.astar
    }

    /// A = 2A*.
    pub fn a(&self) -> f64 {
        2.0 * self.astar
    }

    pub fn is_same_as_target(&self) -> bool {
        matches!(self.q, ProposalDensity::SameAsTarget)
    }

    /// log f(u) − log q(u).
    #[inline]
    pub fn ln_f_over_q(&self, f: &DensitySpec, u: f64) -> f64 {
        match &self.q {
            ProposalDensity::SameAsTarget => 0.0,
            ProposalDensity::Normal(q) => f.ln_pdf(u) - q.ln_pdf(u),
            ProposalDensity::Custom(q) => f.ln_pdf(u) - (q.log_density)(u),
        }
    }

    #[inline]
    pub fn sample<R: Rng>(&self, f: &DensitySpec, rng: &mut R) -> f64 {
        match &self.q {
            ProposalDensity::SameAsTarget => f.sample(rng),
            ProposalDensity::Normal(q) => q.sample(rng),
            ProposalDensity::Custom(q) => (q.sampler)(rng),
        }
    }

    /// log q(u).
    pub fn ln_q(&self, f: &DensitySpec, u: f64) -> f64 {
        match &self.q {
            ProposalDensity::SameAsTarget => f.ln_pdf(u),
            ProposalDensity::Normal(q) => q.ln_pdf(u),
            ProposalDensity::Custom(q) => (q.log_density)(u),
        }
    }

    /// sup_x f(x)/q(x) when known in closed form (q = f, or f and q both
    /// normal). `None` when unbounded or unknown.
    pub fn sup_density_ratio(&self, f: &DensitySpec) -> Option<f64> {
        match (&self.q, f) {
            (ProposalDensity::SameAsTarget, _) => Some(1.0),
            (ProposalDensity::Normal(q), DensitySpec::Normal(f)) => normal_ratio_sup(f, q),
            _ => None,
        }
    }
}

/// sup f/q for f = N(μ_f, σ_f²), q = N(μ_q, σ_q²).
fn normal_ratio_sup(f: &NormalDensity, q: &NormalDensity) -> Option<f64> {
    let (pf, pq) = (1.0 / (f.sigma * f.sigma), 1.0 / (q.sigma * q.sigma));
    if f.sigma == q.sigma {
        return (f.mu == q.mu).then_some(1.0);
    }
    if q.sigma < f.sigma {
        return None;
    }
    // log f/q is a concave quadratic; evaluate it at its stationary point.
    let x = (f.mu * pf - q.mu * pq) / (pf - pq);
    Some((f.ln_pdf(x) - q.ln_pdf(x)).exp())
}

// ---------------------------------------------------------------------------
// Model-index prior
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Odd,
    Even,
}

/// ⌊√n · ln n⌋, the number of models.
pub fn model_count(n: usize) -> usize {
    let nf = n as f64;
    (nf.sqrt() * nf.ln()).floor() as usize
}

/// a_{k,n} = 1 − b_{k,n}/√n with b_{k,n} = |k − kmax/2|/√n.
pub fn decay_coefficient(k: usize, n: usize) -> f64 {
    let half = model_count(n) as f64 / 2.0;
    1.0 - (k as f64 - half).abs() / n as f64
}

/// The PMF p_n over model indices {1, …, kmax}: mode(s) in the middle,
/// symmetric, with neighbour ratios a_{k,n} away from the mode.
///
/// Stored as a normalised log table built once from the ratio recursion.
#[derive(Debug, Clone)]
pub struct ModelPrior {
    n: usize,
    kmax: usize,
    log_normalizer: f64,
    // index k-1
    log_pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl ModelPrior {
    pub fn new(n: usize) -> Result<Self> {
        if n < MIN_N {
            return Err(Error::invalid("n", format!("must be >= {MIN_N}, got {n}")));
        }
        let kmax = model_count(n);
        let mode = kmax.div_ceil(2);
        // unnormalised log weights, w[mode] = 0
        let mut w = vec![0.0; kmax];
        for k in mode..kmax {
            w[k] = w[k - 1] + decay_coefficient(k, n).ln();
        }
        for k in (2..=mode).rev() {
            w[k - 2] = w[k - 1] + decay_coefficient(k - 1, n).ln();
        }
        Ok(Self::from_log_weights(n, w))
    }

    /// Arbitrary PMF over {1..len(w)}; used by unit tests that need prior
    /// ratios outside the standard prior.
    pub(crate) fn from_log_weights(n: usize, w: Vec<f64>) -> Self {
        let log_normalizer = log_sum_exp(&w);
        let log_pmf: Vec<f64> = w.iter().map(|v| v - log_normalizer).collect();
        let mut acc = 0.0;
        let cdf = log_pmf
            .iter()
            .map(|lp| {
                acc += lp.exp();
                acc
            })
            .collect();
        Self {
            n,
            kmax: log_pmf.len(),
            log_normalizer,
            log_pmf,
            cdf,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kmax(&self) -> usize {
        self.kmax
    }

    pub fn parity(&self) -> Parity {
        if self.kmax % 2 == 1 {
            Parity::Odd
        } else {
            Parity::Even
        }
    }

    /// The mode (odd kmax) or the two modes (even kmax).
    pub fn mode_set(&self) -> Vec<usize> {
        match self.parity() {
            Parity::Odd => vec![self.kmax.div_ceil(2)],
            Parity::Even => vec![self.kmax / 2, self.kmax / 2 + 1],
        }
    }

    /// kmax/2, the centring constant of the rescaled model index.
    pub fn center(&self) -> f64 {
        self.kmax as f64 / 2.0
    }

    /// log of the normalising constant of the unnormalised weights
    /// (weight 1 at the mode).
    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    pub fn contains(&self, k: usize) -> bool {
        (1..=self.kmax).contains(&k)
    }

    /// log p_n(k); −∞ outside the support.
    #[inline]
    pub fn log_pmf(&self, k: usize) -> f64 {
        if self.contains(k) {
            self.log_pmf[k - 1]
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn pmf(&self, k: usize) -> f64 {
        self.log_pmf(k).exp()
    }

    /// p_n(1), …, p_n(kmax).
    pub fn pn_table(&self) -> Vec<f64> {
        self.log_pmf.iter().map(|v| v.exp()).collect()
    }

    /// log p_n(k_to)/p_n(k_from) for neighbouring indices. −∞ when `k_to`
    /// leaves the support.
    pub fn log_pn_ratio(&self, k_from: usize, k_to: usize) -> Result<f64> {
        if !self.contains(k_from) {
            return Err(Error::OutOfSupport {
                k: k_from,
                kmax: self.kmax,
            });
        }
        if k_from.abs_diff(k_to) != 1 {
            return Err(Error::NotNeighbours {
                from: k_from,
                to: k_to,
            });
        }
        Ok(self.log_pmf(k_to) - self.log_pmf[k_from - 1])
    }

    /// Exact draw K ~ p_n by inverse CDF.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.kmax - 1) + 1
    }
}

// ---------------------------------------------------------------------------
// Full target
// ---------------------------------------------------------------------------

/// π_n together with the birth proposal.
#[derive(Debug, Clone)]
pub struct TargetSpec {
    pub prior: ModelPrior,
    pub density: DensitySpec,
    pub proposal: ProposalSpec,
}

impl TargetSpec {
    pub fn new(n: usize, density: DensitySpec, proposal: ProposalSpec) -> Result<Self> {
        Ok(Self {
            prior: ModelPrior::new(n)?,
            density,
            proposal,
        })
    }

    /// Normal(μ, σ²) coordinates with q = f and the given A*.
    pub fn normal(n: usize, mu: f64, sigma: f64, astar: f64) -> Result<Self> {
        Self::new(
            n,
            DensitySpec::normal(mu, sigma)?,
            ProposalSpec::same_as_target(astar)?,
        )
    }

    pub fn n(&self) -> usize {
        self.prior.n
    }

    /// log p_n(k) + Σ log f(x_i).
    pub fn log_joint(&self, k: usize, x: &[f64]) -> Result<f64> {
        if !self.prior.contains(k) {
            return Err(Error::OutOfSupport {
                k,
                kmax: self.prior.kmax,
            });
        }
        let expected = self.n() + k;
        if x.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: x.len(),
            });
        }
        Ok(self.prior.log_pmf(k) + self.density.ln_pdf_sum(x))
    }

    pub fn to_config(&self) -> Option<TargetConfig> {
        let d = self.density.as_normal()?;
        let proposal = match self.proposal.density() {
            ProposalDensity::SameAsTarget => ProposalConfig::SameAsF {
                astar: self.proposal.astar,
            },
            ProposalDensity::Normal(q) => ProposalConfig::Custom {
                astar: self.proposal.astar,
                mu: q.mu,
                sigma: q.sigma,
            },
            ProposalDensity::Custom(_) => return None,
        };
        Some(TargetConfig {
            n: self.n(),
            density: DensityConfig::Normal {
                mu: d.mu,
                sigma: d.sigma,
            },
            proposal,
        })
    }
}

// ---------------------------------------------------------------------------
// Config documents
// ---------------------------------------------------------------------------

/// Serializable description of a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub n: usize,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default)]
    pub proposal: ProposalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityConfig {
    Normal { mu: f64, sigma: f64 },
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig::Normal {
            mu: 0.0,
            sigma: 1.0,
        }
    }
}

/// `same_as_f` sets q = f; `custom` is a normal q with its own location and
/// scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProposalConfig {
    SameAsF {
        #[serde(default = "default_astar", rename = "Astar", alias = "astar")]
        astar: f64,
    },
    Custom {
        #[serde(rename = "Astar", alias = "astar")]
        astar: f64,
        mu: f64,
        sigma: f64,
    },
}

fn default_astar() -> f64 {
    1.0
}

impl Default for ProposalConfig {
    fn default() -> Self {
        ProposalConfig::SameAsF { astar: 1.0 }
    }
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            n: MIN_N,
            density: DensityConfig::default(),
            proposal: ProposalConfig::default(),
        }
    }
}

impl TargetConfig {
    pub fn build(&self) -> Result<TargetSpec> {
        let density = match self.density {
            DensityConfig::Normal { mu, sigma } => DensitySpec::normal(mu, sigma)?,
        };
        let proposal = match self.proposal {
            ProposalConfig::SameAsF { astar } => ProposalSpec::same_as_target(astar)?,
            ProposalConfig::Custom { astar, mu, sigma } => ProposalSpec::new(
                ProposalDensity::Normal(NormalDensity::new(mu, sigma)?),
                astar,
                Some(&density),
            )?,
        };
        TargetSpec::new(self.n, density, proposal)
    }
}
