//! Core numerics for coordinate-based meta-regression of neuroimaging foci.
//!
//! Everything in this crate is deterministic, `no_std`-compatible (with
//! `alloc`), and free of IO: masks and foci come in as plain data, results go
//! out as plain data. File formats, the CLI, and parallel orchestration live
//! in the companion `cbmr` crate.
//!
//! The model family is a factorized generalized linear model for foci counts
//! `Y[i][j]` (study `i`, voxel `j`): the intensity factorizes as
//! `mu[i][j] = mu_x[j] * mu_z[i]` with `mu_x = exp(X beta)` a spatial tensor
//! B-spline term and `mu_z = exp(Z gamma)` a per-study covariate term. Four
//! stochastic models share this structure: Poisson, negative binomial
//! (voxel-sum moment matching), clustered negative binomial (study-level
//! random effect, exact factorization), and quasi-Poisson.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod ale;
pub mod counts;
pub mod dataset;
pub mod error;
pub mod infer;
pub mod linalg;
pub mod mask;
pub mod model;
pub mod nullsim;
pub mod optim;
pub mod rng;
pub mod select;
pub mod sparse;
pub mod special;
pub mod spline;

pub(crate) mod math;

pub use error::CoreError;
