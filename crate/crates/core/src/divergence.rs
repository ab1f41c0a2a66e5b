// SPDX-License-Identifier: MIT OR Apache-2.0

//! Fisher and KL divergences.

use serde::{Deserialize, Serialize};

use crate::models::{GaussianModel, ScoreModel};
use crate::stats::mean_and_se;
use crate::{Error, Point, Result};

/// Sample count used when callers do not specify one.
pub const DEFAULT_MC_SAMPLES: usize = 10_000;

/// A divergence value with its Monte Carlo standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

impl DivergenceEstimate {
    /// Closed-form value: zero standard error, counted as one "sample".
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            std_error: 0.0,
            n_samples: 1,
        }
    }

    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::input("divergence estimate needs at least one sample"));
        }
        let (value, std_error) = mean_and_se(values);
        Ok(Self {
            value,
            std_error,
            n_samples: values.len(),
        })
    }
}

/// Per-sample integrand `‖∇ log p(x) − ∇ log q(x)‖²`.
pub fn fisher_integrand<P, Q>(p: &P, q: &Q, x: &Point) -> Result<f64>
where
    P: ScoreModel + ?Sized,
    Q: ScoreModel + ?Sized,
{
    Ok((p.grad_log_density(x)? - q.grad_log_density(x)?).norm_squared())
}

/// Monte Carlo estimate of `D_F(P‖Q) = E_P ‖∇ log p − ∇ log q‖²` from samples of `P`.
pub fn fisher_divergence_mc<P, Q>(p: &P, q: &Q, samples: &[Point]) -> Result<DivergenceEstimate>
where
    P: ScoreModel + ?Sized,
    Q: ScoreModel + ?Sized,
{
    if samples.is_empty() {
        return Err(Error::input("fisher divergence: empty sample set"));
    }
    if p.dim() != q.dim() {
        return Err(Error::Dimension {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    let values = samples
        .iter()
        .map(|x| fisher_integrand(p, q, x))
        .collect::<Result<Vec<_>>>()?;
    DivergenceEstimate::from_values(&values)
}

/// Exact `D_F(P‖Q)` between Gaussians.
///
/// The score difference is affine, `A x + a` with `A = V_q⁻¹ − V_p⁻¹` and
/// `a = V_p⁻¹ μ_p − V_q⁻¹ μ_q`, so `E_P ‖A X + a‖² = ‖A μ_p + a‖² + tr(A V_p Aᵀ)`.
pub fn fisher_divergence_gaussian(p: &GaussianModel, q: &GaussianModel) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::Dimension {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    let a_mat = q.cov_inv() - p.cov_inv();
    let offset = p.cov_inv() * p.mean() - q.cov_inv() * q.mean();
    let mean_term = (&a_mat * p.mean() + offset).norm_squared();
    let cov_term = (&a_mat * p.cov() * a_mat.transpose()).trace();
    Ok(mean_term + cov_term)
}

/// `KL(P‖Q)` between Gaussians.
pub fn kl_gaussian(p: &GaussianModel, q: &GaussianModel) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::Dimension {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    let d = p.dim() as f64;
    let dm = q.mean() - p.mean();
    let tr = (q.cov_inv() * p.cov()).trace();
    let quad = dm.dot(&(q.cov_inv() * &dm));
    let kl = 0.5 * (tr + quad - d + q.log_det_cov() - p.log_det_cov());
    // rounding can leave identical pairs a hair below zero
    Ok(kl.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::sampling::sample_gaussian;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn identical_models_give_zero() {
        let p = presets::mvn_pre();
        let xs = sample_gaussian(&p, 100, 1).unwrap();
        assert_eq!(fisher_divergence_mc(&p, &p, &xs).unwrap().value, 0.0);
        assert_eq!(fisher_divergence_gaussian(&p, &p).unwrap(), 0.0);
        assert_eq!(kl_gaussian(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn equal_covariance_pair_is_two_ninths() {
        let p = presets::mvn_shifted(0.5);
        let q = presets::mvn_pre();
        let exact = fisher_divergence_gaussian(&p, &q).unwrap();
        assert!((exact - 2.0 / 9.0).abs() < 1e-14);
        assert!((fisher_divergence_gaussian(&q, &p).unwrap() - 2.0 / 9.0).abs() < 1e-14);

        let xs = sample_gaussian(&p, 100_000, 3).unwrap();
        let est = fisher_divergence_mc(&p, &q, &xs).unwrap();
        // integrand is constant for a shared covariance
        assert!((est.value - 2.0 / 9.0).abs() < 1e-12);
        let ys = sample_gaussian(&q, 1000, 4).unwrap();
        let swapped = fisher_divergence_mc(&q, &p, &ys).unwrap();
        assert!((swapped.value - est.value).abs() < 1e-12);
    }

    #[test]
    fn unequal_variances_one_d() {
        let p = GaussianModel::new(dvector![0.0], dmatrix![1.0]).unwrap();
        let q = GaussianModel::new(dvector![0.0], dmatrix![2.0]).unwrap();
        assert!((fisher_divergence_gaussian(&p, &q).unwrap() - 0.25).abs() < 1e-15);
        let xs = sample_gaussian(&p, 50_000, 9).unwrap();
        let est = fisher_divergence_mc(&p, &q, &xs).unwrap();
        assert!((est.value - 0.25).abs() < 3.0 * est.std_error);
    }

    #[test]
    fn kl_closed_forms() {
        let p = GaussianModel::new(dvector![0.0], dmatrix![1.0]).unwrap();
        let q = GaussianModel::new(dvector![1.0], dmatrix![1.0]).unwrap();
        assert!((kl_gaussian(&p, &q).unwrap() - 0.5).abs() < 1e-15);
        // ½ Δμᵀ V⁻¹ Δμ with V⁻¹(1,1) = (2/3)(1,1): ½ · 0.25 · 4/3 = 1/6
        let kl = kl_gaussian(&presets::mvn_pre(), &presets::mvn_shifted(0.5)).unwrap();
        assert!((kl - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn kl_matches_log_ratio_average() {
        let p = presets::mvn_pre();
        let q = presets::mvn_shifted(0.5);
        let xs = sample_gaussian(&p, 100_000, 21).unwrap();
        let lr: Vec<f64> = xs
            .iter()
            .map(|x| p.log_density(x).unwrap() - q.log_density(x).unwrap())
            .collect();
        let (m, se) = mean_and_se(&lr);
        assert!((m - kl_gaussian(&p, &q).unwrap()).abs() < 3.0 * se);
    }

    #[test]
    fn empty_samples_are_rejected() {
        let p = presets::mvn_pre();
        assert!(matches!(
            fisher_divergence_mc(&p, &p, &[]),
            Err(Error::Input(_))
        ));
    }
}
