// SPDX-License-Identifier: MIT OR Apache-2.0

//! Pre-change models and four-element uncertainty bases used in the experiments.
//!
//! Each constructor returns `(pre_change, basis)`, with `basis[0]` the element closest to
//! the pre-change model.

use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::models::{GaussBernoulliRbm, GaussianModel, Model, QuarticExpModel};

/// Mean offsets `ε` of the mean-shift basis.
pub const MVN_MEAN_SHIFTS: [f64; 4] = [0.5, 0.6, 0.8, 1.0];
/// Log-scale covariance perturbations `δ` of the covariance-shift basis.
pub const MVN_COV_LOG_SHIFTS: [f64; 4] = [0.1, 0.2, 0.8, 1.0];
/// Scale perturbations of the quartic family (`τ = 1 + ε`).
pub const EXP_SCALE_SHIFTS: [f64; 4] = [1.0, 2.0, 8.0, 10.0];
/// Location perturbations of the quartic family.
pub const EXP_LOCATION_SHIFTS: [f64; 4] = [0.01, 0.02, 0.08, 0.1];
/// Entry-wise weight perturbations of the RBM basis.
pub const RBM_WEIGHT_SHIFTS: [f64; 4] = [0.001, 0.002, 0.008, 0.01];

/// Shared covariance `[[1, 0.5], [0.5, 1]]`.
pub fn base_cov() -> DMatrix<f64> {
    dmatrix![1.0, 0.5; 0.5, 1.0]
}

pub fn mvn_pre() -> GaussianModel {
    GaussianModel::new(dvector![0.0, 0.0], base_cov()).expect("valid covariance")
}

/// `N((ε, ε), V*)` with the shared covariance.
pub fn mvn_shifted(eps: f64) -> GaussianModel {
    GaussianModel::new(dvector![eps, eps], base_cov()).expect("valid covariance")
}

/// MVN_m: pre-change `N(0, V*)`, basis `N((εⱼ, εⱼ), V*)`.
pub fn mvn_mean_shift() -> (Model, Vec<Model>) {
    let basis = MVN_MEAN_SHIFTS
        .iter()
        .map(|&e| mvn_shifted(e).into())
        .collect();
    (mvn_pre().into(), basis)
}

/// MVN_c: basis `N((εⱼ, εⱼ), V* ∘ exp(δⱼ))`.
pub fn mvn_covariance_shift() -> (Model, Vec<Model>) {
    let basis = MVN_MEAN_SHIFTS
        .iter()
        .zip(MVN_COV_LOG_SHIFTS)
        .map(|(&e, d)| {
            GaussianModel::new(dvector![e, e], base_cov() * d.exp())
                .expect("scaled covariance stays positive definite")
                .into()
        })
        .collect();
    (mvn_pre().into(), basis)
}

/// Quartic family: pre-change `(τ, μ) = (1, 0)`, basis `(1 + εⱼ, δⱼ)`.
pub fn quartic_exp(d: usize) -> (Model, Vec<Model>) {
    let pre = QuarticExpModel::new(1.0, 0.0, d).expect("valid parameters");
    let basis = EXP_SCALE_SHIFTS
        .iter()
        .zip(EXP_LOCATION_SHIFTS)
        .map(|(&e, m)| {
            QuarticExpModel::new(1.0 + e, m, d)
                .expect("valid parameters")
                .into()
        })
        .collect();
    (pre.into(), basis)
}

/// RBM family: pre-change parameters drawn from `N(0, 1)`; basis shifts every weight by `εⱼ`.
pub fn rbm(dx: usize, dh: usize, seed: u64) -> (Model, Vec<Model>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let w = DMatrix::from_vec(dx, dh, draw(dx * dh));
    let b = DVector::from_vec(draw(dx));
    let c = DVector::from_vec(draw(dh));
    let pre = GaussBernoulliRbm::new(w.clone(), b.clone(), c.clone()).expect("finite parameters");
    let basis = RBM_WEIGHT_SHIFTS
        .iter()
        .map(|&e| {
            GaussBernoulliRbm::new(w.add_scalar(e), b.clone(), c.clone())
                .expect("finite parameters")
                .into()
        })
        .collect();
    (pre.into(), basis)
}
