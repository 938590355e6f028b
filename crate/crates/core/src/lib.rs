//! Estimation of many parallel effects under hierarchical Bayesian models.
//!
//! Alongside the standard posteriors (Laplace, normal and mixture working
//! priors, and a Dirichlet process mixture) the crate implements the
//! robustified posterior: the error quantiles `u_i = F_i(y_i - θ_i)` are
//! restricted to permutations of the grid `{1/(p+1), ..., p/(p+1)}`, which
//! guards extreme effects against a misspecified working prior.

pub mod chain;
pub mod dist;
pub mod dp;
pub mod error;
pub mod gibbs;
pub mod permutation_mh;
pub mod prior;
pub mod quantile_map;
pub mod rng;
pub mod sim;
pub mod special;
pub mod verify;

pub use error::{Error, Result};
