// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::mixture::combine_fields;
use super::{check_point, Model, ScoreModel};
use crate::lfd::BetaNetwork;
use crate::{Error, Point, Result};

const SIMPLEX_TOL: f64 = 1e-6;

/// Position-dependent simplex weights `β(x)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BetaFn {
    Constant { weights: Vec<f64> },
    Network { network: BetaNetwork },
}

/// Score field `Σᵢ βᵢ(x) ∇ log pᵢ(x)`.
///
/// Not in general the gradient of any log-density, so `log_density` is unsupported.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightedScoreField {
    basis: Vec<Model>,
    beta: BetaFn,
}

impl WeightedScoreField {
    pub fn new(basis: Vec<Model>, beta: BetaFn) -> Result<Self> {
        if basis.is_empty() {
            return Err(Error::input("score field: at least one basis model is required"));
        }
        let d = basis[0].dim();
        if basis.iter().any(|b| b.dim() != d) {
            return Err(Error::input("score field: basis dimensions differ"));
        }
        match &beta {
            BetaFn::Constant { weights } => {
                if weights.len() != basis.len() {
                    return Err(Error::input("score field: weight count differs from basis size"));
                }
                check_simplex(weights)?;
            }
            BetaFn::Network { network } => {
                if network.input_dim() != d || network.output_dim() != basis.len() {
                    return Err(Error::input("score field: network shape does not match basis"));
                }
            }
        }
        Ok(Self { basis, beta })
    }

    pub fn basis(&self) -> &[Model] {
        &self.basis
    }

    pub fn beta_fn(&self) -> &BetaFn {
        &self.beta
    }

    pub fn beta(&self, x: &Point) -> Result<Point> {
        check_point(self.dim(), x)?;
        let b = match &self.beta {
            BetaFn::Constant { weights } => Point::from_column_slice(weights),
            BetaFn::Network { network } => network.forward(x),
        };
        check_simplex(b.as_slice())?;
        Ok(b)
    }

    fn basis_grads(&self, x: &Point) -> Result<Vec<Point>> {
        self.basis.iter().map(|b| b.grad_log_density(x)).collect()
    }
}

fn check_simplex(w: &[f64]) -> Result<()> {
    let s: f64 = w.iter().sum();
    if w.iter().any(|v| !(*v >= 0.0)) || (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Numeric(format!("weights {w:?} are not on the simplex")));
    }
    Ok(())
}

impl ScoreModel for WeightedScoreField {
    fn dim(&self) -> usize {
        self.basis[0].dim()
    }

    fn log_density(&self, _x: &Point) -> Result<f64> {
        Err(Error::Unsupported(
            "a weighted score field has no log-density".into(),
        ))
    }

    fn grad_log_density(&self, x: &Point) -> Result<Point> {
        let b = self.beta(x)?;
        let grads = self.basis_grads(x)?;
        Ok(combine_fields(b.as_slice(), &grads, None).0)
    }

    /// Divergence of the field: `Σᵢ βᵢ Δ log pᵢ + Σᵢ ∇βᵢ · ∇ log pᵢ`.
    fn laplacian_log_density(&self, x: &Point) -> Result<f64> {
        check_point(self.dim(), x)?;
        let grads = self.basis_grads(x)?;
        let (beta, jac) = match &self.beta {
            BetaFn::Constant { weights } => (Point::from_column_slice(weights), None),
            BetaFn::Network { network } => {
                let (b, j) = network.forward_with_jacobian(x);
                (b, Some(j))
            }
        };
        check_simplex(beta.as_slice())?;
        let mut total = 0.0;
        for (i, b) in self.basis.iter().enumerate() {
            if beta[i] > 0.0 {
                total += beta[i] * b.laplacian_log_density(x)?;
            }
            if let Some(j) = &jac {
                total += j.row(i).transpose().dot(&grads[i]);
            }
        }
        Ok(total)
    }
}
