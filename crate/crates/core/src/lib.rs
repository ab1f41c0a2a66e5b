// SPDX-License-Identifier: MIT OR Apache-2.0

//! Robust score-based quickest change detection for unnormalized models.
//!
//! The crate is organised around the [`ScoreModel`] trait: anything that can report
//! the gradient and Laplacian of its log-density (up to an additive constant) can be
//! plugged into the score-based CUSUM detectors of [`detection`]. The other modules
//! build on that:
//!
//! - [`models`]: Gaussian, quartic exponential-family and Gauss-Bernoulli RBM models,
//!   finite mixtures and softmax-weighted score fields.
//! - [`divergence`]: Fisher and KL divergences.
//! - [`sampling`]: seeded samplers (exact Gaussian, MALA, RBM Gibbs) and change-point streams.
//! - [`lfd`]: least-favorable post-change distribution search.
//! - [`detection`]: CUSUM / SCUSUM / RSCUSUM, multiplier calibration, thresholds.
//! - [`harness`]: Monte Carlo estimation of ARL / EDD and EDD-vs-ARL sweeps.
//!
//! ```
//! use nalgebra::{dmatrix, dvector};
//! use rscusum::models::GaussianModel;
//! use rscusum::ScoreModel;
//!
//! let model = GaussianModel::new(dvector![0.0], dmatrix![1.0]).unwrap();
//! assert_eq!(model.hyvarinen_score(&dvector![2.0]).unwrap(), 1.0);
//! ```

#![forbid(unsafe_code)]

pub mod detection;
pub mod divergence;
mod error;
pub mod harness;
pub mod lfd;
pub mod models;
pub mod presets;
pub mod sampling;
pub mod stats;

pub use error::{Error, Result};
pub use models::{Model, ScoreModel};

/// Observation / point type used throughout the crate.
pub type Point = nalgebra::DVector<f64>;

// Snippets in the guide under `book/` are compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/divergences.md")]
    mod divergences {}
    #[doc = include_str!("../../../book/src/lfd.md")]
    mod lfd {}
    #[doc = include_str!("../../../book/src/detection.md")]
    mod detection {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
