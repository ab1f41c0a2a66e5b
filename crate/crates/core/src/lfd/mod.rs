// SPDX-License-Identifier: MIT OR Apache-2.0

//! Least-favorable distribution search over a convex uncertainty class.
//!
//! The class is the convex hull of `m` basis models. The LFD minimizes the Fisher divergence to
//! the pre-change model. Four search modes are provided:
//!
//! - [`lfd_gaussian_location`]: closed form for equal-covariance Gaussian candidates;
//! - [`lfd_basis_scan`]: Monte Carlo divergence of each vertex, argmin;
//! - [`lfd_simplex_optimize`]: constant weights `β ∈ Δ^{m−1}` by projected gradient;
//! - [`lfd_network_train`]: position-dependent weights `β(x)` from a softmax network.

mod network;
mod simplex;
mod train;

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use network::{Adam, BetaNetwork, Dense, ForwardCache, LossBatch, DEFAULT_HIDDEN};
pub use simplex::{lfd_simplex_optimize, project_to_simplex, SimplexConfig};
pub use train::{loss_batch, lfd_network_train, lfd_network_train_from, NetworkTrainConfig};

use crate::divergence::{fisher_divergence_gaussian, fisher_divergence_mc, DivergenceEstimate};
use crate::models::{GaussianModel, MixtureModel, Model, ScoreModel, WeightedScoreField};
use crate::sampling::{derive_seed, sample_model, SamplerOptions};
use crate::{Error, Point, Result};

/// Weight at or above which the detection LFD collapses to a single vertex.
pub const VERTEX_DOMINANCE: f64 = 0.99;

/// Two-sided 95% normal quantile used for the ambiguity check.
const CI_Z: f64 = 1.96;

/// Convex hull of `m ≥ 1` basis models of a common dimension.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UncertaintyClass {
    basis: Vec<Model>,
    #[serde(default)]
    description: String,
}

impl UncertaintyClass {
    pub fn new(basis: Vec<Model>, description: impl Into<String>) -> Result<Self> {
        if basis.is_empty() {
            return Err(Error::input("uncertainty class needs at least one basis model"));
        }
        let d = basis[0].dim();
        if let Some(i) = basis.iter().position(|b| b.dim() != d) {
            return Err(Error::input(format!(
                "uncertainty class: basis {i} has dimension {}, expected {d}",
                basis[i].dim()
            )));
        }
        Ok(Self {
            basis,
            description: description.into(),
        })
    }

    pub fn basis(&self) -> &[Model] {
        &self.basis
    }

    pub fn m(&self) -> usize {
        self.basis.len()
    }

    pub fn dim(&self) -> usize {
        self.basis[0].dim()
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LfdMode {
    ClosedForm,
    BasisScan,
    Simplex,
    Network,
}

/// The model an LFD search settles on.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LfdModel {
    Model(Model),
    Field(WeightedScoreField),
}

impl LfdModel {
    pub fn as_score_model(&self) -> &dyn ScoreModel {
        match self {
            LfdModel::Model(m) => m,
            LfdModel::Field(f) => f,
        }
    }
}

/// Outcome of an LFD search, serializable as a self-describing JSON record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LfdResult {
    pub mode: LfdMode,
    pub lfd_model: LfdModel,
    /// Estimate of `D_F(Q‖P∞)` for the returned model.
    pub divergence_to_pre: DivergenceEstimate,
    /// Weight vector (constant modes) or test-set average of `β(x)` (network mode).
    pub beta_averages: Vec<f64>,
    pub selected_index: usize,
    /// Per-vertex `D_F(Pᵢ‖P∞)`; empty when not computed.
    #[serde(default)]
    pub vertex_divergences: Vec<DivergenceEstimate>,
    /// Top two vertices have overlapping 95% intervals.
    #[serde(default)]
    pub ambiguous: bool,
    /// The optimizer stopped without meeting its tolerance.
    #[serde(default)]
    pub stalled: bool,
    /// Vertices whose divergence to the pre-change model is not distinguishable from zero.
    #[serde(default)]
    pub pre_overlap: Vec<usize>,
    #[serde(default)]
    pub loss_history: Vec<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl LfdResult {
    /// Index and value of the largest entry of `beta_averages` (lowest index on ties).
    pub fn dominant(&self) -> (usize, f64) {
        argmax(&self.beta_averages)
    }

    /// Model handed to a detector: the dominant vertex when its weight is at least
    /// [`VERTEX_DOMINANCE`], otherwise the constant-weight mixture.
    pub fn detection_model(&self) -> Result<Model> {
        let basis = match &self.lfd_model {
            LfdModel::Model(Model::Mixture(m)) => m.basis().to_vec(),
            LfdModel::Field(f) => f.basis().to_vec(),
            LfdModel::Model(m) => return Ok(m.clone()),
        };
        if basis.len() != self.beta_averages.len() {
            return Err(Error::input("lfd result: beta_averages does not match the basis"));
        }
        let (i, w) = self.dominant();
        if w >= VERTEX_DOMINANCE {
            Ok(basis[i].clone())
        } else {
            Ok(MixtureModel::normalized(basis, &self.beta_averages)?.into())
        }
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json_str(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

pub(crate) fn argmax(v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &x) in v.iter().enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

fn one_hot(m: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; m];
    v[i] = 1.0;
    v
}

/// Closed form for Gaussian candidates sharing covariance `cov`: the candidate mean closest to
/// the pre-change mean in the norm `‖v‖_V = ‖V⁻¹ v‖`. Ties go to the lowest index.
pub fn lfd_gaussian_location(
    pre: &GaussianModel,
    candidate_means: &[Point],
    cov: &DMatrix<f64>,
) -> Result<LfdResult> {
    if candidate_means.is_empty() {
        return Err(Error::input("closed form: at least one candidate mean is required"));
    }
    let candidates: Vec<GaussianModel> = candidate_means
        .iter()
        .map(|mu| GaussianModel::new(mu.clone(), cov.clone()))
        .collect::<Result<_>>()?;
    if candidates[0].dim() != pre.dim() {
        return Err(Error::Dimension {
            expected: pre.dim(),
            got: candidates[0].dim(),
        });
    }
    let mut best = (0, f64::INFINITY);
    let mut vertex_divergences = Vec::with_capacity(candidates.len());
    for (i, c) in candidates.iter().enumerate() {
        let v = c.mean() - pre.mean();
        let dist = (c.cov_inv() * &v).norm_squared();
        if dist < best.1 {
            best = (i, dist);
        }
        vertex_divergences.push(DivergenceEstimate::exact(fisher_divergence_gaussian(c, pre)?));
    }
    let i = best.0;
    Ok(LfdResult {
        mode: LfdMode::ClosedForm,
        lfd_model: LfdModel::Model(candidates[i].clone().into()),
        divergence_to_pre: vertex_divergences[i],
        beta_averages: one_hot(candidates.len(), i),
        selected_index: i,
        pre_overlap: overlap(&vertex_divergences),
        vertex_divergences,
        ambiguous: false,
        stalled: false,
        loss_history: Vec::new(),
        warnings: Vec::new(),
        seed: None,
        config: serde_json::Value::Null,
    })
}

fn overlap(est: &[DivergenceEstimate]) -> Vec<usize> {
    est.iter()
        .enumerate()
        .filter(|(_, e)| e.value <= 3.0 * e.std_error)
        .map(|(i, _)| i)
        .collect()
}

/// Monte Carlo `D_F(Pᵢ‖P∞)` for every vertex from `n_samples` draws each; returns the argmin.
pub fn lfd_basis_scan(
    class: &UncertaintyClass,
    pre: &Model,
    n_samples: usize,
    seed: u64,
    opts: &SamplerOptions,
) -> Result<LfdResult> {
    if n_samples == 0 {
        return Err(Error::input("basis scan: n_samples must be at least 1"));
    }
    if pre.dim() != class.dim() {
        return Err(Error::Dimension {
            expected: class.dim(),
            got: pre.dim(),
        });
    }
    let estimates: Vec<DivergenceEstimate> = class
        .basis()
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            let xs = sample_model(b, n_samples, derive_seed(seed, i as u64), opts)?;
            fisher_divergence_mc(b, pre, &xs)
        })
        .collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..estimates.len()).collect();
    order.sort_by(|&a, &b| estimates[a].value.total_cmp(&estimates[b].value).then(a.cmp(&b)));
    let i = order[0];
    let ambiguous = order.get(1).is_some_and(|&j| {
        let (a, b) = (&estimates[i], &estimates[j]);
        a.value + CI_Z * a.std_error >= b.value - CI_Z * b.std_error
    });
    let pre_overlap = overlap(&estimates);
    let mut warnings = Vec::new();
    if ambiguous {
        warnings.push(format!(
            "basis scan: vertices {i} and {} are within Monte Carlo error",
            order[1]
        ));
    }
    if !pre_overlap.is_empty() {
        warnings.push(format!(
            "basis scan: vertices {pre_overlap:?} are indistinguishable from the pre-change model"
        ));
    }
    Ok(LfdResult {
        mode: LfdMode::BasisScan,
        lfd_model: LfdModel::Model(class.basis()[i].clone()),
        divergence_to_pre: estimates[i],
        beta_averages: one_hot(class.m(), i),
        selected_index: i,
        vertex_divergences: estimates,
        ambiguous,
        stalled: false,
        pre_overlap,
        loss_history: Vec::new(),
        warnings,
        seed: Some(seed),
        config: serde_json::json!({ "n_samples": n_samples, "sampler": opts }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use nalgebra::dvector;

    fn mvn_class() -> (Model, UncertaintyClass) {
        let (pre, basis) = presets::mvn_mean_shift();
        (pre, UncertaintyClass::new(basis, "mean shift").unwrap())
    }

    #[test]
    fn closed_form_picks_smallest_shift() {
        let pre = presets::mvn_pre();
        let means: Vec<Point> = presets::MVN_MEAN_SHIFTS
            .iter()
            .map(|&e| dvector![e, e])
            .collect();
        let r = lfd_gaussian_location(&pre, &means, &presets::base_cov()).unwrap();
        assert_eq!(r.selected_index, 0);
        assert!((r.divergence_to_pre.value - 2.0 / 9.0).abs() < 1e-12);
        assert_eq!(r.beta_averages, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn closed_form_ties_go_to_lowest_index() {
        let pre = presets::mvn_pre();
        let means = vec![dvector![0.5, 0.5], dvector![-0.5, -0.5]];
        let r = lfd_gaussian_location(&pre, &means, &presets::base_cov()).unwrap();
        assert_eq!(r.selected_index, 0);
    }

    #[test]
    fn closed_form_single_candidate() {
        let pre = presets::mvn_pre();
        let r = lfd_gaussian_location(&pre, &[dvector![1.0, -1.0]], &presets::base_cov()).unwrap();
        assert_eq!(r.selected_index, 0);
        assert!(r.divergence_to_pre.value > 0.0);
    }

    #[test]
    fn basis_scan_selects_first_vertex() {
        let (pre, class) = mvn_class();
        let r = lfd_basis_scan(&class, &pre, 2000, 5, &SamplerOptions::default()).unwrap();
        assert_eq!(r.selected_index, 0);
        assert!(!r.ambiguous);
        assert!(r.pre_overlap.is_empty());
        // mean shift: the integrand is constant
        assert!((r.divergence_to_pre.value - 2.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn basis_scan_flags_pre_in_class() {
        let (pre, _) = mvn_class();
        let class = UncertaintyClass::new(vec![pre.clone(), presets::mvn_shifted(1.0).into()], "").unwrap();
        let r = lfd_basis_scan(&class, &pre, 500, 1, &SamplerOptions::default()).unwrap();
        assert_eq!(r.selected_index, 0);
        assert_eq!(r.pre_overlap, vec![0]);
    }

    #[test]
    fn basis_scan_flags_duplicates_as_ambiguous() {
        let (pre, _) = mvn_class();
        let v: Model = presets::mvn_shifted(0.5).into();
        let class = UncertaintyClass::new(vec![v.clone(), v], "").unwrap();
        let r = lfd_basis_scan(&class, &pre, 500, 1, &SamplerOptions::default()).unwrap();
        assert!(r.ambiguous);
        assert_eq!(r.selected_index, 0);
    }

    #[test]
    fn detection_model_collapses_dominant_vertex() {
        let (pre, class) = mvn_class();
        let r = lfd_basis_scan(&class, &pre, 100, 5, &SamplerOptions::default()).unwrap();
        assert!(matches!(r.detection_model().unwrap(), Model::Gaussian(_)));

        let mix = MixtureModel::new(class.basis().to_vec(), vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        let mut r2 = r.clone();
        r2.lfd_model = LfdModel::Model(mix.clone().into());
        r2.beta_averages = vec![0.5, 0.5, 0.0, 0.0];
        assert!(matches!(r2.detection_model().unwrap(), Model::Mixture(_)));
        r2.beta_averages = vec![0.995, 0.005, 0.0, 0.0];
        assert!(matches!(r2.detection_model().unwrap(), Model::Gaussian(_)));
    }

    #[test]
    fn result_round_trips_through_json() {
        let (pre, class) = mvn_class();
        let r = lfd_basis_scan(&class, &pre, 100, 5, &SamplerOptions::default()).unwrap();
        let back = LfdResult::from_json_str(&r.to_json_string().unwrap()).unwrap();
        assert_eq!(back.selected_index, r.selected_index);
        assert_eq!(back.mode, LfdMode::BasisScan);
        let x = dvector![0.3, -0.2];
        assert_eq!(
            back.lfd_model.as_score_model().hyvarinen_score(&x).unwrap(),
            r.lfd_model.as_score_model().hyvarinen_score(&x).unwrap()
        );
    }

    #[test]
    fn class_validation() {
        assert!(UncertaintyClass::new(vec![], "").is_err());
        let a: Model = presets::mvn_pre().into();
        let (_, q) = presets::quartic_exp(3);
        assert!(UncertaintyClass::new(vec![a, q[0].clone()], "").is_err());
    }
}
