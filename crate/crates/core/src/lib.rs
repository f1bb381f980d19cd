//! Reversible jump MCMC for product-form trans-dimensional targets.
//!
//! The crate provides the sampler ([`rjmcmc`]), the target it samples
//! ([`target`]), closed-form and trial-run tuning rules ([`tuning`]), the
//! limiting diffusions that justify those rules ([`diffusion`]), and trace
//! statistics plus the replicate experiment harness ([`diagnostics`]).
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diagnostics;
pub mod diffusion;
pub mod error;
pub mod io;
pub mod math;
pub mod rjmcmc;
pub mod rng;
pub mod target;
pub mod tuning;

pub use error::{Error, Result};
pub use rjmcmc::{
    run_chain, ChainState, ChainTrace, Init, MoveConfig, MoveKind, RjKernel, RunOptions,
};
pub use rng::RngHandle;
pub use target::{DensitySpec, ModelPrior, ProposalSpec, TargetSpec};
