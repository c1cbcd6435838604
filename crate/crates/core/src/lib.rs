//! Sparse additive auto-regressive networks in reproducing kernel Hilbert spaces.
//!
//! The crate covers the full pipeline:
//!
//! - [`kernels`]: univariate kernels as truncated Mercer expansions and the
//!   per-column design blocks built from them;
//! - [`glm`]: log-partition functions, Bregman divergences and likelihoods for
//!   Gaussian, Poisson and Bernoulli responses;
//! - [`rates`]: critical radii, mixing block counts and theory-driven penalties;
//! - [`estimator`]: the penalized maximum-likelihood fit of each node, network
//!   assembly, prediction and rolling-back cross-validation;
//! - [`simulate`]: synthetic Gaussian and Poisson networks and experiment grids;
//! - [`network`]: adjacency extraction and (covariate-assisted) spectral clustering;
//! - [`io`]: CSV/JSON persistence, run configuration and the command implementations.

#[cfg(doctest)]
mod book;
pub mod error;
pub mod estimator;
pub mod glm;
pub mod io;
pub mod kernels;
pub mod network;
pub mod rates;
pub mod series;
pub mod simulate;

pub use error::{Error, Result};
pub use estimator::{fit_network, fit_node, predict, FitConfig, NetworkFit, NodeFit};
pub use glm::Family;
pub use kernels::{Basis, KernelSpec};
pub use rates::{MixingSpec, RatesReport};
pub use series::TimeSeries;
