use std::io::Write;

use rand::Rng;
use serde::Serialize;

use super::{ChainState, MoveConfig, MoveKind, RjKernel};
use crate::error::{Error, Result};
use crate::target::TargetSpec;

/// Iterations between full recomputations of the cached Σ log f.
pub const CACHE_REFRESH_INTERVAL: usize = 10_000;

/// Largest tolerated drift of the cached log-density sum.
const CACHE_DRIFT_TOLERANCE: f64 = 1e-8;

/// How to initialise a chain.
#[derive(Debug, Clone)]
pub enum Init {
    /// Exact draw from π_n (stationary start).
    FromTarget,
    /// k at the mode, every coordinate at the location of f.
    ColdStart,
    State(ChainState),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Total iterations, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    /// Record per-iteration k, x₁, move type and acceptance.
    pub record_path: bool,
    /// Keep a full copy of (k, x) every this many recorded iterations.
    pub snapshot_every: Option<usize>,
}

impl RunOptions {
    pub fn new(iterations: usize, burn_in: usize) -> Self {
        Self {
            iterations,
            burn_in,
            record_path: true,
            snapshot_every: None,
        }
    }

    pub fn counters_only(mut self) -> Self {
        self.record_path = false;
        self
    }

    pub fn with_snapshots(mut self, every: usize) -> Self {
        self.snapshot_every = Some(every.max(1));
        self
    }
}

/// Per-move-type bookkeeping over the recorded iterations.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MoveCounters {
    pub proposed: [u64; 3],
    pub accepted: [u64; 3],
    /// Σ min(1, ratio) over proposals of each type.
    pub accept_prob_sum: [f64; 3],
    /// Sum of squared acceptance probabilities (for standard errors).
    pub accept_prob_sq_sum: [f64; 3],
    pub death_proposed_above_one: u64,
    pub death_accepted_above_one: u64,
}

impl MoveCounters {
    pub fn total(&self) -> u64 {
        self.proposed.iter().sum()
    }

    pub fn acceptance_rate(&self, kind: MoveKind) -> Option<f64> {
        let i = kind.index();
        (self.proposed[i] > 0).then(|| self.accepted[i] as f64 / self.proposed[i] as f64)
    }

    /// Mean of min(1, ratio) over proposals of this type.
    pub fn mean_accept_probability(&self, kind: MoveKind) -> Option<f64> {
        let i = kind.index();
        (self.proposed[i] > 0).then(|| self.accept_prob_sum[i] / self.proposed[i] as f64)
    }

    /// Accepted model switches (births + deaths) per iteration.
    pub fn switch_rate(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| {
            (self.accepted[MoveKind::Birth.index()] + self.accepted[MoveKind::Death.index()]) as f64
                / total as f64
        })
    }
}

/// A thinned copy of the full state.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iter: usize,
    pub k: usize,
    pub x: Vec<f64>,
}

/// The recorded history of one chain (post burn-in).
#[derive(Debug, Clone, Default)]
pub struct ChainTrace {
    pub burn_in: usize,
    pub k: Vec<u32>,
    pub x1: Vec<f64>,
    pub moves: Vec<MoveKind>,
    pub accepted: Vec<bool>,
    pub counters: MoveCounters,
    pub snapshots: Vec<Snapshot>,
    /// Largest drift of the cached Σ log f seen at a refresh.
    pub max_cache_drift: f64,
    pub final_k: usize,
}

impl ChainTrace {
    pub fn len(&self) -> usize {
        self.counters.total() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn k_as_f64(&self) -> Vec<f64> {
        self.k.iter().map(|&k| k as f64).collect()
    }

    /// CSV with header `iter,k,x1,move_kind,accepted`; floats at 17
    /// significant digits. Requires a recorded path.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iter,k,x1,move_kind,accepted")?;
        for i in 0..self.k.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.burn_in + i + 1,
                self.k[i],
                crate::io::fmt_f64(self.x1[i]),
                self.moves[i].as_str(),
                u8::from(self.accepted[i])
            )?;
        }
        Ok(())
    }

    pub fn summary(&self) -> TraceSummary {
        let c = &self.counters;
        let per_move = MoveKind::ALL
            .iter()
            .map(|&kind| MoveSummary {
                kind,
                proposed: c.proposed[kind.index()],
                accepted: c.accepted[kind.index()],
                acceptance_rate: c.acceptance_rate(kind),
                mean_accept_probability: c.mean_accept_probability(kind),
            })
            .collect();
        TraceSummary {
            burn_in: self.burn_in,
            recorded_iterations: c.total(),
            moves: per_move,
            switch_rate: c.switch_rate(),
            death_proposed_above_one: c.death_proposed_above_one,
            death_accepted_above_one: c.death_accepted_above_one,
            final_k: self.final_k,
            max_cache_drift: self.max_cache_drift,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoveSummary {
    pub kind: MoveKind,
    pub proposed: u64,
    pub accepted: u64,
    pub acceptance_rate: Option<f64>,
    pub mean_accept_probability: Option<f64>,
}

/// Counter summary of a trace, for JSON export.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSummary {
    pub burn_in: usize,
    pub recorded_iterations: u64,
    pub moves: Vec<MoveSummary>,
    pub switch_rate: Option<f64>,
    pub death_proposed_above_one: u64,
    pub death_accepted_above_one: u64,
    pub final_k: usize,
    pub max_cache_drift: f64,
}

/// Run a chain and record everything after burn-in.
///
/// Fails on an invalid initial state, on `iterations < burn_in`, or when a
/// runtime guard trips (cached log-density drift beyond 1e−8, or a death at
/// k > 1 rejected although A ≥ 2·sup f/q).
pub fn run_chain<R: Rng>(
    target: &TargetSpec,
    cfg: MoveConfig,
    init: Init,
    opts: RunOptions,
    rng: &mut R,
) -> Result<ChainTrace> {
    if opts.iterations < opts.burn_in {
        return Err(Error::invalid(
            "iterations",
            format!(
                "must be >= burn_in ({}), got {}",
                opts.burn_in, opts.iterations
            ),
        ));
    }
    let kernel = RjKernel::new(target, cfg)?;
    let mut state = match init {
        Init::FromTarget => ChainState::from_target(target, rng),
        Init::ColdStart => ChainState::cold_start(target),
        Init::State(s) => ChainState::new(target, s.k, s.x)?,
    };
    let death_guaranteed = kernel.guarantees_death_acceptance();
    let recorded = opts.iterations - opts.burn_in;
    let mut trace = ChainTrace {
        burn_in: opts.burn_in,
        ..ChainTrace::default()
    };
    if opts.record_path {
        trace.k.reserve(recorded);
        trace.x1.reserve(recorded);
        trace.moves.reserve(recorded);
        trace.accepted.reserve(recorded);
    }

    for m in 1..=opts.iterations {
        let k_before = state.k;
        let out = kernel.step(&mut state, rng);

        if out.move_kind == MoveKind::Death && k_before > 1 && death_guaranteed && !out.accepted {
            return Err(Error::Numerical(format!(
                "death at k = {k_before} rejected (log ratio {}) although A >= 2 sup f/q",
                out.log_accept_ratio
            )));
        }
        if m % CACHE_REFRESH_INTERVAL == 0 {
            let drift = state.refresh(target);
            trace.max_cache_drift = trace.max_cache_drift.max(drift);
            if !(drift <= CACHE_DRIFT_TOLERANCE) {
                return Err(Error::Numerical(format!(
                    "cached log-density sum drifted by {drift:e} at iteration {m}"
                )));
            }
        }
        if m <= opts.burn_in {
            continue;
        }

        let c = &mut trace.counters;
        let i = out.move_kind.index();
        let p = crate::math::acceptance_probability(out.log_accept_ratio);
        c.proposed[i] += 1;
        c.accepted[i] += u64::from(out.accepted);
        c.accept_prob_sum[i] += p;
        c.accept_prob_sq_sum[i] += p * p;
        if out.move_kind == MoveKind::Death && k_before > 1 {
            c.death_proposed_above_one += 1;
            c.death_accepted_above_one += u64::from(out.accepted);
        }
        if opts.record_path {
            trace.k.push(state.k as u32);
            trace.x1.push(state.x[0]);
            trace.moves.push(out.move_kind);
            trace.accepted.push(out.accepted);
        }
        if let Some(every) = opts.snapshot_every {
            if (m - opts.burn_in).is_multiple_of(every) {
                trace.snapshots.push(Snapshot {
                    iter: m,
                    k: state.k,
                    x: state.x.clone(),
                });
            }
        }
    }
    trace.final_k = state.k;
    Ok(trace)
}
