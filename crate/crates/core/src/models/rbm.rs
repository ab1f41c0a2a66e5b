// SPDX-License-Identifier: MIT OR Apache-2.0

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_finite, check_finite_vec, check_point, ScoreModel};
use crate::{Error, Point, Result};

/// Gauss-Bernoulli restricted Boltzmann machine with unit visible variance.
///
/// The visible marginal is `p(x) ∝ exp(−F(x))` with free energy
/// `F(x) = ½‖x − b‖² − Σⱼ softplus((Wᵀx + c)ⱼ)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RbmParams", into = "RbmParams")]
pub struct GaussBernoulliRbm {
    w: DMatrix<f64>,
    b: DVector<f64>,
    c: DVector<f64>,
    /// Column sums of `W ∘ W`, one per hidden unit.
    w_sq_col: DVector<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RbmParams {
    /// `d_x × d_h`, row-major.
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl TryFrom<RbmParams> for GaussBernoulliRbm {
    type Error = Error;
    fn try_from(p: RbmParams) -> Result<Self> {
        let dx = p.w.len();
        let dh = p.w.first().map_or(0, Vec::len);
        if p.w.iter().any(|r| r.len() != dh) {
            return Err(Error::input("rbm: ragged weight matrix"));
        }
        let w = DMatrix::from_fn(dx, dh, |i, j| p.w[i][j]);
        GaussBernoulliRbm::new(w, DVector::from_vec(p.b), DVector::from_vec(p.c))
    }
}

impl From<GaussBernoulliRbm> for RbmParams {
    fn from(m: GaussBernoulliRbm) -> Self {
        RbmParams {
            w: (0..m.w.nrows())
                .map(|i| m.w.row(i).iter().copied().collect())
                .collect(),
            b: m.b.iter().copied().collect(),
            c: m.c.iter().copied().collect(),
        }
    }
}

pub(crate) fn softplus(a: f64) -> f64 {
    if a > 0.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

impl GaussBernoulliRbm {
    pub fn new(w: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>) -> Result<Self> {
        let (dx, dh) = w.shape();
        if dx == 0 || dh == 0 {
            return Err(Error::input("rbm: weight matrix must be non-empty"));
        }
        if b.len() != dx {
            return Err(Error::input(format!("rbm: b has length {}, expected {dx}", b.len())));
        }
        if c.len() != dh {
            return Err(Error::input(format!("rbm: c has length {}, expected {dh}", c.len())));
        }
        if w.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::input("rbm: parameters must be finite"));
        }
        let w_sq_col = DVector::from_fn(dh, |j, _| w.column(j).norm_squared());
        Ok(Self { w, b, c, w_sq_col })
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn visible_bias(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn hidden_bias(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn hidden_dim(&self) -> usize {
        self.w.ncols()
    }

    /// Hidden pre-activations `Wᵀx + c`.
    pub fn pre_activation(&self, x: &Point) -> DVector<f64> {
        self.w.tr_mul(x) + &self.c
    }

    /// Conditional means `φⱼ = σ((Wᵀx + c)ⱼ)` of the hidden units.
    pub fn hidden_probabilities(&self, x: &Point) -> DVector<f64> {
        self.pre_activation(x).map(sigmoid)
    }

    pub fn free_energy(&self, x: &Point) -> Result<f64> {
        check_point(self.w.nrows(), x)?;
        let quad = 0.5 * (x - &self.b).norm_squared();
        let sp: f64 = self.pre_activation(x).iter().map(|&a| softplus(a)).sum();
        check_finite("rbm free energy", quad - sp)
    }
}

impl ScoreModel for GaussBernoulliRbm {
    fn dim(&self) -> usize {
        self.w.nrows()
    }

    fn log_density(&self, x: &Point) -> Result<f64> {
        Ok(-self.free_energy(x)?)
    }

    /// `−(x − b) + W φ`.
    fn grad_log_density(&self, x: &Point) -> Result<Point> {
        check_point(self.dim(), x)?;
        let phi = self.hidden_probabilities(x);
        let g = &self.w * phi - (x - &self.b);
        check_finite_vec("rbm gradient", &g)?;
        Ok(g)
    }

    /// `Σⱼ φⱼ(1 − φⱼ) Σᵢ Wᵢⱼ² − d_x`.
    fn laplacian_log_density(&self, x: &Point) -> Result<f64> {
        check_point(self.dim(), x)?;
        let phi = self.hidden_probabilities(x);
        let curv: f64 = phi
            .iter()
            .zip(self.w_sq_col.iter())
            .map(|(p, s)| p * (1.0 - p) * s)
            .sum();
        check_finite("rbm laplacian", curv - self.dim() as f64)
    }

    /// `Σᵢ [½ (xᵢ − bᵢ − Σⱼ Wᵢⱼ φⱼ)² + Σⱼ Wᵢⱼ² φⱼ (1 − φⱼ) − 1]`, summed coordinate by coordinate.
    fn hyvarinen_score(&self, x: &Point) -> Result<f64> {
        check_point(self.dim(), x)?;
        let phi = self.hidden_probabilities(x);
        let mut total = 0.0;
        for i in 0..self.dim() {
            let mut drift = x[i] - self.b[i];
            let mut curv = 0.0;
            for j in 0..self.hidden_dim() {
                let wij = self.w[(i, j)];
                drift -= wij * phi[j];
                curv += wij * wij * phi[j] * (1.0 - phi[j]);
            }
            let term = 0.5 * drift * drift + curv - 1.0;
            if !term.is_finite() {
                return Err(Error::NonFinite {
                    context: "rbm hyvarinen score",
                    coordinate: i,
                });
            }
            total += term;
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{assembled_hyvarinen_score, fd};
    use nalgebra::{dmatrix, dvector};

    fn small_rbm() -> GaussBernoulliRbm {
        GaussBernoulliRbm::new(
            dmatrix![0.8, -1.2, 0.3; -0.4, 0.9, 1.5],
            dvector![0.2, -0.5],
            dvector![0.1, -0.3, 0.7],
        )
        .unwrap()
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
    }

    #[test]
    fn closed_form_matches_assembly_and_differences() {
        let m = small_rbm();
        for x in [dvector![0.0, 0.0], dvector![1.3, -2.1], dvector![-3.0, 4.0]] {
            let a = m.hyvarinen_score(&x).unwrap();
            let b = assembled_hyvarinen_score(&m, &x).unwrap();
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            let lap = m.laplacian_log_density(&x).unwrap();
            assert!(fd::rel_err(lap, fd::laplacian_from_grad(&m, &x, 1e-5)) < 1e-6);
            let g = m.grad_log_density(&x).unwrap();
            assert!((fd::grad(&m, &x, 1e-5) - g).amax() < 1e-6);
        }
    }

    #[test]
    fn large_inputs_stay_finite() {
        let m = small_rbm();
        let x = dvector![1e6, -1e6];
        assert!(m.hyvarinen_score(&x).unwrap().is_finite());
        assert!(m.log_density(&x).unwrap().is_finite());
    }

    #[test]
    fn rejects_inconsistent_shapes() {
        assert!(GaussBernoulliRbm::new(dmatrix![1.0, 2.0], dvector![0.0, 0.0], dvector![0.0, 0.0])
            .is_err());
        assert!(GaussBernoulliRbm::new(dmatrix![1.0, 2.0], dvector![0.0], dvector![0.0]).is_err());
        assert!(serde_json::from_str::<GaussBernoulliRbm>(r#"{"w":[[1,2],[3]],"b":[0,0],"c":[0,0]}"#)
            .is_err());
    }
}
