//! Kernelized bandits with Gaussian-process posteriors.
//!
//! The crate provides the improved GP-UCB and GP Thompson-sampling arm
//! selection rules (plus GP-UCB, expected improvement, probability of
//! improvement and uniform baselines), exact and recursive posterior
//! maintenance over finite candidate sets, reward environments, a Monte-Carlo
//! lab for the self-normalized concentration bound, and an experiment harness
//! that records cumulative-regret traces.

pub mod concentration;
pub mod environments;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod policies;
pub mod posterior;
pub mod rng;

pub use error::{Error, Result};
pub use kernels::{gram, GramTable, KernelSpec, MaternNu, Point};
pub use posterior::{CandidateSet, PosteriorMode, PosteriorState};
