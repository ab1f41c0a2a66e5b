// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::{check_point, Model, ScoreModel};
use crate::stats::log_sum_exp;
use crate::{Error, Point, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Finite mixture `Σᵢ wᵢ pᵢ(x)` of basis models.
///
/// Component densities enter through `log_density`, so for components whose normalizer is
/// unknown the weights act on unnormalized masses.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "MixtureParams", into = "MixtureParams")]
pub struct MixtureModel {
    basis: Vec<Model>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct MixtureParams {
    basis: Vec<Model>,
    weights: Vec<f64>,
}

impl TryFrom<MixtureParams> for MixtureModel {
    type Error = Error;
    fn try_from(p: MixtureParams) -> Result<Self> {
        MixtureModel::new(p.basis, p.weights)
    }
}

impl From<MixtureModel> for MixtureParams {
    fn from(m: MixtureModel) -> Self {
        MixtureParams {
            basis: m.basis,
            weights: m.weights,
        }
    }
}

/// Posterior responsibilities `uᵢ(x) = wᵢ pᵢ(x) / Σⱼ wⱼ pⱼ(x)` from log-weighted densities.
pub(crate) fn responsibilities(log_terms: &[f64]) -> Option<Vec<f64>> {
    let max = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let e: Vec<f64> = log_terms.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = e.iter().sum();
    Some(e.into_iter().map(|v| v / total).collect())
}

/// `Σᵢ uᵢ gᵢ` and `Σᵢ uᵢ (Δᵢ + ‖gᵢ − ḡ‖²)` for weights `u` on the simplex.
///
/// Components with zero weight are skipped, so vertex weights reproduce the component exactly.
pub(crate) fn combine_fields(u: &[f64], grads: &[Point], laps: Option<&[f64]>) -> (Point, f64) {
    let d = grads[0].len();
    let active: Vec<usize> = (0..u.len()).filter(|&i| u[i] > 0.0).collect();
    if let [only] = active.as_slice() {
        if u[*only] == 1.0 {
            return (grads[*only].clone(), laps.map_or(0.0, |l| l[*only]));
        }
    }
    let mut mean = Point::zeros(d);
    for &i in &active {
        mean.axpy(u[i], &grads[i], 1.0);
    }
    let lap = laps.map_or(0.0, |l| {
        active
            .iter()
            .map(|&i| u[i] * (l[i] + (&grads[i] - &mean).norm_squared()))
            .sum()
    });
    (mean, lap)
}

impl MixtureModel {
    pub fn new(basis: Vec<Model>, weights: Vec<f64>) -> Result<Self> {
        if basis.is_empty() {
            return Err(Error::input("mixture: at least one component is required"));
        }
        if weights.len() != basis.len() {
            return Err(Error::input(format!(
                "mixture: {} weights for {} components",
                weights.len(),
                basis.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::input("mixture: weights must be finite and non-negative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::input(format!("mixture: weights sum to {sum}, expected 1")));
        }
        let d = basis[0].dim();
        if let Some(bad) = basis.iter().position(|b| b.dim() != d) {
            return Err(Error::input(format!(
                "mixture: component {bad} has dimension {}, expected {d}",
                basis[bad].dim()
            )));
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            basis,
            weights,
            log_weights,
        })
    }

    /// Mixture with weights renormalized from arbitrary non-negative values.
    pub fn normalized(basis: Vec<Model>, raw: &[f64]) -> Result<Self> {
        let s: f64 = raw.iter().sum();
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::input("mixture: weights must have positive finite sum"));
        }
        let mut w: Vec<f64> = raw.iter().map(|v| v / s).collect();
        // Push the rounding residue onto the largest weight so the sum check holds.
        let resid = 1.0 - w.iter().sum::<f64>();
        let imax = (0..w.len())
            .max_by(|&a, &b| w[a].total_cmp(&w[b]))
            .unwrap_or(0);
        w[imax] += resid;
        Self::new(basis, w)
    }

    pub fn uniform(basis: Vec<Model>) -> Result<Self> {
        let m = basis.len();
        Self::normalized(basis, &vec![1.0; m])
    }

    pub fn basis(&self) -> &[Model] {
        &self.basis
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Responsibilities `uᵢ(x)`.
    pub fn responsibilities(&self, x: &Point) -> Result<Vec<f64>> {
        check_point(self.dim(), x)?;
        let mut terms = Vec::with_capacity(self.basis.len());
        for (lw, b) in self.log_weights.iter().zip(&self.basis) {
            terms.push(if *lw == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                lw + b.log_density(x)?
            });
        }
        responsibilities(&terms).ok_or_else(|| {
            Error::Numeric(format!("mixture: every component underflows at x = {:?}", x.as_slice()))
        })
    }

    fn grads(&self, x: &Point, u: &[f64]) -> Result<Vec<Point>> {
        self.basis
            .iter()
            .zip(u)
            .map(|(b, &ui)| {
                if ui > 0.0 {
                    b.grad_log_density(x)
                } else {
                    Ok(Point::zeros(x.len()))
                }
            })
            .collect()
    }
}

impl ScoreModel for MixtureModel {
    fn dim(&self) -> usize {
        self.basis[0].dim()
    }

    fn log_density(&self, x: &Point) -> Result<f64> {
        check_point(self.dim(), x)?;
        let mut terms = Vec::with_capacity(self.basis.len());
        for (lw, b) in self.log_weights.iter().zip(&self.basis) {
            if *lw > f64::NEG_INFINITY {
                terms.push(lw + b.log_density(x)?);
            }
        }
        Ok(log_sum_exp(terms))
    }

    /// `Σᵢ uᵢ(x) ∇ log pᵢ(x)`.
    fn grad_log_density(&self, x: &Point) -> Result<Point> {
        let u = self.responsibilities(x)?;
        let grads = self.grads(x, &u)?;
        Ok(combine_fields(&u, &grads, None).0)
    }

    /// `Σᵢ uᵢ (Δ log pᵢ + ‖∇ log pᵢ − ∇ log s‖²)`, the variance form of
    /// `Σᵢ uᵢ (Δ log pᵢ + ‖∇ log pᵢ‖²) − ‖∇ log s‖²`.
    fn laplacian_log_density(&self, x: &Point) -> Result<f64> {
        let u = self.responsibilities(x)?;
        let grads = self.grads(x, &u)?;
        let mut laps = vec![0.0; u.len()];
        for (i, b) in self.basis.iter().enumerate() {
            if u[i] > 0.0 {
                laps[i] = b.laplacian_log_density(x)?;
            }
        }
        Ok(combine_fields(&u, &grads, Some(&laps)).1)
    }

    fn is_normalized(&self) -> bool {
        self.basis.iter().all(ScoreModel::is_normalized)
    }
}
