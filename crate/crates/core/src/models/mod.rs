// SPDX-License-Identifier: MIT OR Apache-2.0

//! Unnormalized statistical models and their Hyvärinen scores.

mod field;
mod gaussian;
mod mixture;
mod quartic;
mod rbm;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use field::{BetaFn, WeightedScoreField};
pub use gaussian::GaussianModel;
pub use mixture::MixtureModel;
pub use quartic::QuarticExpModel;
pub use rbm::GaussBernoulliRbm;

use crate::{Error, Point, Result};

/// A density known up to a multiplicative constant, exposed through derivatives of its log.
///
/// `log_density` is only meaningful up to an additive constant; everything score-based
/// (gradient, Laplacian, Hyvärinen score) is independent of that constant.
pub trait ScoreModel: Send + Sync + std::fmt::Debug {
    fn dim(&self) -> usize;

    /// `log p(x)` up to an additive constant. Fields that are not gradients of a known
    /// potential return [`Error::Unsupported`].
    fn log_density(&self, x: &Point) -> Result<f64>;

    /// `∇ₓ log p(x)`.
    fn grad_log_density(&self, x: &Point) -> Result<Point>;

    /// `Δₓ log p(x)`.
    fn laplacian_log_density(&self, x: &Point) -> Result<f64>;

    /// `½‖∇ₓ log p(x)‖² + Δₓ log p(x)`. Families override this with their closed form.
    fn hyvarinen_score(&self, x: &Point) -> Result<f64> {
        assembled_hyvarinen_score(self, x)
    }

    /// Whether `log_density` is exactly normalized (true only for Gaussians and their mixtures).
    fn is_normalized(&self) -> bool {
        false
    }
}

/// Hyvärinen score assembled from the model's gradient and Laplacian.
pub fn assembled_hyvarinen_score<M: ScoreModel + ?Sized>(model: &M, x: &Point) -> Result<f64> {
    let g = model.grad_log_density(x)?;
    let lap = model.laplacian_log_density(x)?;
    Ok(0.5 * g.norm_squared() + lap)
}

pub(crate) fn check_point(expected: usize, x: &Point) -> Result<()> {
    if x.len() != expected {
        return Err(Error::Dimension {
            expected,
            got: x.len(),
        });
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::input(format!("point has non-finite coordinate {i}")));
    }
    Ok(())
}

pub(crate) fn check_finite_vec(context: &'static str, v: &Point) -> Result<()> {
    match v.iter().position(|c| !c.is_finite()) {
        Some(coordinate) => Err(Error::NonFinite {
            context,
            coordinate,
        }),
        None => Ok(()),
    }
}

pub(crate) fn check_finite(context: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            context,
            coordinate: 0,
        })
    }
}

/// Serializable model families, discriminated by `"kind"` in JSON.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Gaussian(GaussianModel),
    QuarticExp(QuarticExpModel),
    Rbm(GaussBernoulliRbm),
    Mixture(MixtureModel),
}

impl Model {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()?).map_err(|e| Error::io(path, e))
    }

    fn inner(&self) -> &dyn ScoreModel {
        match self {
            Model::Gaussian(m) => m,
            Model::QuarticExp(m) => m,
            Model::Rbm(m) => m,
            Model::Mixture(m) => m,
        }
    }

    /// Natural starting point for MCMC chains on this model.
    pub fn location(&self) -> Point {
        match self {
            Model::Gaussian(m) => m.mean().clone(),
            Model::QuarticExp(m) => Point::from_element(m.dim(), m.mu()),
            Model::Rbm(m) => m.visible_bias().clone(),
            Model::Mixture(m) => {
                let mut acc = Point::zeros(m.dim());
                for (w, c) in m.weights().iter().zip(m.basis()) {
                    acc += c.location() * *w;
                }
                acc
            }
        }
    }
}

impl From<GaussianModel> for Model {
    fn from(m: GaussianModel) -> Self {
        Model::Gaussian(m)
    }
}

impl From<QuarticExpModel> for Model {
    fn from(m: QuarticExpModel) -> Self {
        Model::QuarticExp(m)
    }
}

impl From<GaussBernoulliRbm> for Model {
    fn from(m: GaussBernoulliRbm) -> Self {
        Model::Rbm(m)
    }
}

impl From<MixtureModel> for Model {
    fn from(m: MixtureModel) -> Self {
        Model::Mixture(m)
    }
}

impl ScoreModel for Model {
    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn log_density(&self, x: &Point) -> Result<f64> {
        self.inner().log_density(x)
    }

    fn grad_log_density(&self, x: &Point) -> Result<Point> {
        self.inner().grad_log_density(x)
    }

    fn laplacian_log_density(&self, x: &Point) -> Result<f64> {
        self.inner().laplacian_log_density(x)
    }

    fn hyvarinen_score(&self, x: &Point) -> Result<f64> {
        self.inner().hyvarinen_score(x)
    }

    fn is_normalized(&self) -> bool {
        self.inner().is_normalized()
    }
}

#[cfg(test)]
pub(crate) mod fd {
    //! Central finite-difference oracles on `log_density`.
    use super::ScoreModel;
    use crate::Point;

    pub fn grad<M: ScoreModel + ?Sized>(m: &M, x: &Point, h: f64) -> Point {
        Point::from_fn(x.len(), |i, _| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            (m.log_density(&xp).unwrap() - m.log_density(&xm).unwrap()) / (2.0 * h)
        })
    }

    /// Laplacian as the sum of central differences of the analytic gradient.
    pub fn laplacian_from_grad<M: ScoreModel + ?Sized>(m: &M, x: &Point, h: f64) -> f64 {
        (0..x.len())
            .map(|i| {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                (m.grad_log_density(&xp).unwrap()[i] - m.grad_log_density(&xm).unwrap()[i])
                    / (2.0 * h)
            })
            .sum()
    }

    /// Laplacian from second differences of `log_density` only.
    pub fn laplacian<M: ScoreModel + ?Sized>(m: &M, x: &Point, h: f64) -> f64 {
        let f0 = m.log_density(x).unwrap();
        (0..x.len())
            .map(|i| {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                (m.log_density(&xp).unwrap() - 2.0 * f0 + m.log_density(&xm).unwrap()) / (h * h)
            })
            .sum()
    }

    pub fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1.0)
    }
}
