//! # mcmc-core
//!
//! Markov chain Monte Carlo building blocks that share one set of target
//! densities and one seeded random-number discipline:
//!
//! - [`targets`]: analytic unnormalized log-densities with exact gradients.
//! - [`sde`]: Brownian motion (optionally confined to a region), Euler–Maruyama
//!   and the overdamped Langevin SDE.
//! - [`samplers`]: Metropolis–Hastings, ULA, MALA, annealed Langevin and HMC
//!   behind a single [`samplers::run_chain`] entry point.
//! - [`diagnostics`]: acceptance rate, autocorrelation, effective sample size,
//!   moments and histogram total-variation distance.
//! - [`mcint`]: plain and multiple-importance Monte Carlo estimators.
//! - [`pssmlt`]: primary-sample-space Metropolis light transport over a black-box
//!   estimator.
//! - [`optim`]: SGD, SGLD, MAP estimation and SGLD posterior sampling.
//! - [`ebm`]: energy-based models, contrastive divergence and score-based
//!   Langevin generation.
//! - [`io`]: CSV, PGM and JSON artifact writers.
//!
//! ```
//! use mcmc_core::samplers::{run_chain, SamplerConfig};
//! use mcmc_core::targets::TargetDensity;
//! use mcmc_core::Point;
//!
//! let target = TargetDensity::standard_gaussian(2);
//! let config = SamplerConfig::Mh { proposal_sigma: 1.0 };
//! let chain = run_chain(&config, &target, &Point::zeros(2), 1000, 100, 1, 42).unwrap();
//! assert_eq!(chain.samples.len(), 900);
//! ```

pub mod descriptor;
pub mod diagnostics;
pub mod ebm;
mod error;
pub mod io;
pub mod mcint;
pub mod optim;
mod point;
pub mod pssmlt;
pub mod rng;
pub mod samplers;
pub mod sde;
pub mod targets;

pub use descriptor::Descriptor;
pub use error::{Error, Result};
pub use point::Point;
pub use targets::{Target, TargetDensity};
