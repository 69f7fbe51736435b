//! Shrinkage priors and penalty functions generated by Lévy subordinators.
//!
//! A subordinator `T(s)` with Laplace exponent `ψ` turns into a penalty
//! `ν ψ(f(β))` and, through the normal variance-mixture representation, into a
//! proper prior for `β`. The crate implements the pieces needed to work with
//! these priors end to end:
//!
//! * [`levy`]: Laplace exponents, Lévy densities, increment samplers, the
//!   Meixner / z / generalized-z family and the two-groups generator.
//! * [`penalty`]: penalties, EM weights, normalized priors, mixture penalties.
//! * [`means`]: marginal densities and three posterior-mean evaluators.
//! * [`em`]: mixture-of-ridge and reweighted-lasso EM for posterior modes.
//! * [`ortho`]: SVD-based shrinkage (ridge, PCR, PLS, g-prior) and the
//!   fully Bayes global-local Gibbs sampler.
//! * [`probit`]: data-augmentation probit regression and its baselines.
//! * [`data`]: CSV ingestion, standardization, synthetic generators, splits,
//!   cross-validation and hold-out benchmarks.
//!
//! Monte Carlo loops (replications, folds, chains, grids) go through [`par`],
//! which uses rayon when the `parallel` feature is on and plain iteration
//! otherwise. Every random draw is keyed by an explicit seed and stream, so
//! results do not depend on the execution mode.

pub mod data;
pub mod em;
mod error;
pub mod levy;
pub mod means;
pub mod ortho;
pub mod par;
pub mod penalty;
pub mod probit;
pub mod quad;
pub mod rng;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
