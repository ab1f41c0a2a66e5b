// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::{check_point, ScoreModel};
use crate::{Error, Point, Result};

/// Quartic exponential-family density
/// `p(x) ∝ exp(−τ (Σᵢ yᵢ⁴ + Σ_{i<j} yᵢ² yⱼ²))` with `y = x − μ`.
///
/// The normalizer depends on `τ` and is never computed.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "QuarticParams", into = "QuarticParams")]
pub struct QuarticExpModel {
    tau: f64,
    mu: f64,
    d: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct QuarticParams {
    tau: f64,
    mu: f64,
    d: usize,
}

impl TryFrom<QuarticParams> for QuarticExpModel {
    type Error = Error;
    fn try_from(p: QuarticParams) -> Result<Self> {
        QuarticExpModel::new(p.tau, p.mu, p.d)
    }
}

impl From<QuarticExpModel> for QuarticParams {
    fn from(m: QuarticExpModel) -> Self {
        QuarticParams {
            tau: m.tau,
            mu: m.mu,
            d: m.d,
        }
    }
}

impl QuarticExpModel {
    pub fn new(tau: f64, mu: f64, d: usize) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::input(format!("quartic_exp: tau must be > 0, got {tau}")));
        }
        if !mu.is_finite() {
            return Err(Error::input("quartic_exp: mu must be finite"));
        }
        if d == 0 {
            return Err(Error::input("quartic_exp: d must be at least 1"));
        }
        Ok(Self { tau, mu, d })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Unscaled energy `Σᵢ yᵢ⁴ + Σ_{i<j} yᵢ² yⱼ²`.
    pub fn energy(&self, x: &Point) -> f64 {
        let y: Vec<f64> = x.iter().map(|v| v - self.mu).collect();
        let mut e = 0.0;
        for i in 0..y.len() {
            e += y[i].powi(4);
            for j in (i + 1)..y.len() {
                e += y[i] * y[i] * y[j] * y[j];
            }
        }
        e
    }
}

impl ScoreModel for QuarticExpModel {
    fn dim(&self) -> usize {
        self.d
    }

    fn log_density(&self, x: &Point) -> Result<f64> {
        check_point(self.d, x)?;
        Ok(-self.tau * self.energy(x))
    }

    /// `∂ᵢ log p = −τ (4yᵢ³ + 2yᵢ Σ_{j≠i} yⱼ²)`.
    fn grad_log_density(&self, x: &Point) -> Result<Point> {
        check_point(self.d, x)?;
        let y = x.map(|v| v - self.mu);
        Ok(Point::from_fn(self.d, |i, _| {
            let cross: f64 = (0..self.d).filter(|&j| j != i).map(|j| y[j] * y[j]).sum();
            -self.tau * (4.0 * y[i].powi(3) + 2.0 * y[i] * cross)
        }))
    }

    /// `∂ᵢ² log p = −τ (12yᵢ² + 2 Σ_{j≠i} yⱼ²)`.
    fn laplacian_log_density(&self, x: &Point) -> Result<f64> {
        check_point(self.d, x)?;
        let y = x.map(|v| v - self.mu);
        Ok((0..self.d)
            .map(|i| {
                let cross: f64 = (0..self.d).filter(|&j| j != i).map(|j| y[j] * y[j]).sum();
                -self.tau * (12.0 * y[i] * y[i] + 2.0 * cross)
            })
            .sum())
    }

    /// Closed form in terms of `S = Σ yⱼ²`: `∂ᵢ = −2τ yᵢ (yᵢ² + S)` and `Δ = −τ (10 + 2d) S`.
    fn hyvarinen_score(&self, x: &Point) -> Result<f64> {
        check_point(self.d, x)?;
        let y = x.map(|v| v - self.mu);
        let s = y.norm_squared();
        let half_sq: f64 = y
            .iter()
            .map(|yi| {
                let g = 2.0 * self.tau * yi * (yi * yi + s);
                0.5 * g * g
            })
            .sum();
        Ok(half_sq - self.tau * (10.0 + 2.0 * self.d as f64) * s)
    }
}
