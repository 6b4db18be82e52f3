//! Correlation-aware sparse Bayesian learning.
//!
//! * [`linmodel`]: block partitions, dictionaries, the block Gaussian prior and
//!   its posterior.
//! * [`bsbl`]: the BSBL-EM solver for block-sparse single-vector problems.
//! * [`mmv`]: T-MSBL / M-SBL for multiple measurement vectors.
//! * [`tvs`]: windowed recovery of signals with time-varying support.
//! * [`limits`]: support-recovery limits and an exhaustive ML support decoder.
//! * [`datagen`]: seeded synthetic problem generators.

pub mod bsbl;
pub mod datagen;
pub mod error;
pub mod limits;
pub mod linmodel;
pub mod mmv;
pub mod tvs;

pub use bsbl::{bsbl_em, BsblOptions, LambdaDenominator, RecoveryResult};
pub use error::{Result, SblError};
pub use linmodel::{BlockPartition, BlockPrior, Dictionary, GaussianPosterior};
pub use mmv::{msbl, tmsbl, MmvProblem, MmvResult};
pub use tvs::{solve_time_varying, TvProblem, TvResult, TvSolver};
