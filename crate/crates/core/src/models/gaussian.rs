// SPDX-License-Identifier: MIT OR Apache-2.0

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{check_point, ScoreModel};
use crate::{Error, Point, Result};

const EIGEN_FLOOR: f64 = 1e-10;
const INVERSE_TOL: f64 = 1e-8;
const SYMMETRY_TOL: f64 = 1e-12;

/// Multivariate normal `N(mu, cov)` with the inverse and squared inverse precomputed.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "GaussianParams", into = "GaussianParams")]
pub struct GaussianModel {
    mu: DVector<f64>,
    cov: DMatrix<f64>,
    cov_inv: DMatrix<f64>,
    cov_inv_sq: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    trace_inv: f64,
    log_norm: f64,
}

/// On-disk form: row-major nested arrays.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct GaussianParams {
    mu: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl TryFrom<GaussianParams> for GaussianModel {
    type Error = Error;

    fn try_from(p: GaussianParams) -> Result<Self> {
        let d = p.mu.len();
        if p.cov.len() != d || p.cov.iter().any(|r| r.len() != d) {
            return Err(Error::input(format!("gaussian: cov must be {d}x{d}")));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| p.cov[i][j]);
        GaussianModel::new(DVector::from_vec(p.mu), cov)
    }
}

impl From<GaussianModel> for GaussianParams {
    fn from(m: GaussianModel) -> Self {
        let d = m.mu.len();
        GaussianParams {
            mu: m.mu.iter().copied().collect(),
            cov: (0..d).map(|i| m.cov.row(i).iter().copied().collect()).collect(),
        }
    }
}

impl GaussianModel {
    pub fn new(mu: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        if d == 0 {
            return Err(Error::input("gaussian: dimension must be at least 1"));
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::input(format!(
                "gaussian: cov is {}x{}, expected {d}x{d}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mu.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::input("gaussian: parameters must be finite"));
        }
        let scale = cov.amax().max(1.0);
        for i in 0..d {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::input(format!(
                        "gaussian: cov is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let eig = SymmetricEigen::new(cov.clone());
        let min_eig = eig.eigenvalues.min();
        if min_eig <= EIGEN_FLOOR {
            return Err(Error::input(format!(
                "gaussian: cov is not positive definite (smallest eigenvalue {min_eig:e})"
            )));
        }
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::Numeric("gaussian: Cholesky factorization failed".into()))?;
        let cov_inv = chol.inverse();
        let resid = (&cov_inv * &cov - DMatrix::identity(d, d)).amax();
        if resid > INVERSE_TOL {
            return Err(Error::Numeric(format!(
                "gaussian: cov is too ill-conditioned (inverse residual {resid:e})"
            )));
        }
        let cov_inv_sq = &cov_inv * &cov_inv;
        let trace_inv = cov_inv.trace();
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_norm = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Self {
            mu,
            cov,
            cov_inv,
            cov_inv_sq,
            chol,
            trace_inv,
            log_norm,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn cov_inv(&self) -> &DMatrix<f64> {
        &self.cov_inv
    }

    pub fn cov_inv_sq(&self) -> &DMatrix<f64> {
        &self.cov_inv_sq
    }

    /// Lower Cholesky factor of the covariance.
    pub fn chol_l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn log_det_cov(&self) -> f64 {
        -2.0 * self.log_norm - self.mu.len() as f64 * (2.0 * std::f64::consts::PI).ln()
    }

    /// Same covariance, different mean.
    pub fn with_mean(&self, mu: DVector<f64>) -> Result<Self> {
        if mu.len() != self.mu.len() {
            return Err(Error::Dimension {
                expected: self.mu.len(),
                got: mu.len(),
            });
        }
        let mut out = self.clone();
        out.mu = mu;
        Ok(out)
    }
}

impl ScoreModel for GaussianModel {
    fn dim(&self) -> usize {
        self.mu.len()
    }

    fn log_density(&self, x: &Point) -> Result<f64> {
        check_point(self.dim(), x)?;
        let r = x - &self.mu;
        Ok(self.log_norm - 0.5 * r.dot(&(&self.cov_inv * &r)))
    }

    fn grad_log_density(&self, x: &Point) -> Result<Point> {
        check_point(self.dim(), x)?;
        Ok(-(&self.cov_inv * (x - &self.mu)))
    }

    fn laplacian_log_density(&self, x: &Point) -> Result<f64> {
        check_point(self.dim(), x)?;
        Ok(-self.trace_inv)
    }

    /// `½ (x−μ)ᵀ V⁻² (x−μ) − tr(V⁻¹)`.
    fn hyvarinen_score(&self, x: &Point) -> Result<f64> {
        check_point(self.dim(), x)?;
        let r = x - &self.mu;
        Ok(0.5 * r.dot(&(&self.cov_inv_sq * &r)) - self.trace_inv)
    }

    fn is_normalized(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{assembled_hyvarinen_score, fd};
    use nalgebra::{dmatrix, dvector};

    fn base_cov() -> DMatrix<f64> {
        dmatrix![1.0, 0.5; 0.5, 1.0]
    }

    #[test]
    fn gradient_vanishes_at_mean() {
        let m = GaussianModel::new(dvector![0.0], dmatrix![1.0]).unwrap();
        assert_eq!(m.grad_log_density(&dvector![0.0]).unwrap()[0], 0.0);
        assert_eq!(m.hyvarinen_score(&dvector![0.0]).unwrap(), -1.0);
    }

    #[test]
    fn one_d_gradient_matches_finite_difference() {
        let m = GaussianModel::new(dvector![0.0], dmatrix![1.0]).unwrap();
        let x = dvector![2.0];
        let oracle = fd::grad(&m, &x, 1e-5)[0];
        assert!((oracle - -2.0).abs() < 1e-8);
        assert!((m.grad_log_density(&x).unwrap()[0] - oracle).abs() < 1e-8);
        assert_eq!(m.hyvarinen_score(&x).unwrap(), 1.0);
        assert_eq!(assembled_hyvarinen_score(&m, &x).unwrap(), 1.0);
    }

    #[test]
    fn laplacian_is_negative_trace_of_precision() {
        let m = GaussianModel::new(dvector![0.0, 0.0], DMatrix::identity(2, 2)).unwrap();
        assert_eq!(m.laplacian_log_density(&dvector![3.0, -1.0]).unwrap(), -2.0);

        let m = GaussianModel::new(dvector![0.0, 0.0], base_cov()).unwrap();
        let x = dvector![0.4, -1.3];
        let lap = m.laplacian_log_density(&x).unwrap();
        assert!((lap - -8.0 / 3.0).abs() < 1e-12);
        assert!((fd::laplacian(&m, &x, 1e-4) - lap).abs() < 1e-5);
    }

    #[test]
    fn rejects_bad_covariances() {
        assert!(GaussianModel::new(dvector![0.0, 0.0], dmatrix![1.0, 0.2; 0.3, 1.0]).is_err());
        assert!(GaussianModel::new(dvector![0.0, 0.0], dmatrix![1.0, 1.0; 1.0, 1.0]).is_err());
        assert!(GaussianModel::new(dvector![0.0, 0.0], dmatrix![1.0]).is_err());
        assert!(GaussianModel::new(dvector![f64::NAN], dmatrix![1.0]).is_err());
    }

    #[test]
    fn log_density_is_normalized() {
        let m = GaussianModel::new(dvector![0.0], dmatrix![1.0]).unwrap();
        let expected = -0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((m.log_density(&dvector![0.0]).unwrap() - expected).abs() < 1e-15);
        assert!((m.log_det_cov()).abs() < 1e-15);
    }

    #[test]
    fn json_uses_row_major_arrays() {
        let m = GaussianModel::new(dvector![1.0, 2.0], dmatrix![2.0, 0.3; 0.3, 1.0]).unwrap();
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["cov"][0][1], 0.3);
        assert_eq!(v["mu"][1], 2.0);
        let bad = r#"{"mu":[0,0],"cov":[[1,0.9],[0.1,1]]}"#;
        assert!(serde_json::from_str::<GaussianModel>(bad).is_err());
    }
}
