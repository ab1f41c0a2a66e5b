// SPDX-License-Identifier: MIT OR Apache-2.0

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{argmax, LfdMode, LfdModel, LfdResult, UncertaintyClass};
use crate::divergence::DivergenceEstimate;
use crate::models::{MixtureModel, Model, ScoreModel};
use crate::sampling::{derive_seed, sample_model, SamplerOptions};
use crate::{Error, Point, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimplexConfig {
    /// Samples drawn from the current mixture each epoch.
    pub n_samples: usize,
    pub max_epochs: usize,
    /// Relative change in loss between epochs that counts as converged.
    pub tol: f64,
    /// Epochs without a new best loss before giving up.
    pub patience: usize,
    /// Projected-gradient iterations per epoch.
    pub inner_iters: usize,
    pub seed: u64,
    pub sampler: SamplerOptions,
}

impl Default for SimplexConfig {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            max_epochs: 100,
            tol: 1e-6,
            patience: 10,
            inner_iters: 10_000,
            seed: 0,
            sampler: SamplerOptions::default(),
        }
    }
}

/// Euclidean projection onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    let support: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
    if support.len() == 1 {
        w[support[0]] = 1.0;
    }
    w
}

/// Per-epoch quadratic `L(β) = βᵀGβ − 2hᵀβ + c` built from score samples.
struct Quadratic {
    g: DMatrix<f64>,
    h: DVector<f64>,
    c: f64,
}

impl Quadratic {
    fn from_samples(basis: &[Model], pre: &dyn ScoreModel, xs: &[Point]) -> Result<(Self, Vec<Vec<Point>>, Vec<Point>)> {
        let m = basis.len();
        let n = xs.len() as f64;
        let mut g = DMatrix::zeros(m, m);
        let mut h = DVector::zeros(m);
        let mut c = 0.0;
        let mut grads = Vec::with_capacity(xs.len());
        let mut pre_grads = Vec::with_capacity(xs.len());
        for x in xs {
            let gs: Vec<Point> = basis.iter().map(|b| b.grad_log_density(x)).collect::<Result<_>>()?;
            let g0 = pre.grad_log_density(x)?;
            for i in 0..m {
                h[i] += gs[i].dot(&g0) / n;
                for j in i..m {
                    let v = gs[i].dot(&gs[j]) / n;
                    g[(i, j)] += v;
                    if i != j {
                        g[(j, i)] += v;
                    }
                }
            }
            c += g0.norm_squared() / n;
            grads.push(gs);
            pre_grads.push(g0);
        }
        Ok((Self { g, h, c }, grads, pre_grads))
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        (w.dot(&(&self.g * w)) - 2.0 * self.h.dot(w) + self.c).max(0.0)
    }

    fn minimize(&self, start: &[f64], iters: usize) -> Vec<f64> {
        let lmax = SymmetricEigen::new(self.g.clone())
            .eigenvalues
            .iter()
            .cloned()
            .fold(0.0, f64::max);
        if lmax <= 0.0 {
            return start.to_vec();
        }
        let step = 1.0 / (2.0 * lmax);
        let mut w = DVector::from_column_slice(start);
        for _ in 0..iters {
            let grad = (&self.g * &w - &self.h) * 2.0;
            let next = DVector::from_vec(project_to_simplex((&w - grad * step).as_slice()));
            let delta = (&next - &w).amax();
            w = next;
            if delta < 1e-15 {
                break;
            }
        }
        w.as_slice().to_vec()
    }
}

/// Constant weights `β` minimizing `E_Q ‖Σᵢ βᵢ ∇ log pᵢ − ∇ log p∞‖²`, with `Q` the current
/// `β`-mixture resampled every epoch from a fixed seed.
pub fn lfd_simplex_optimize(class: &UncertaintyClass, pre: &Model, cfg: &SimplexConfig) -> Result<LfdResult> {
    if cfg.n_samples == 0 || cfg.max_epochs == 0 {
        return Err(Error::input("simplex: n_samples and max_epochs must be positive"));
    }
    if pre.dim() != class.dim() {
        return Err(Error::Dimension {
            expected: class.dim(),
            got: pre.dim(),
        });
    }
    let m = class.m();
    let mut w = vec![1.0 / m as f64; m];
    let mut history = Vec::new();
    let mut best: Option<(f64, Vec<f64>, DivergenceEstimate)> = None;
    let mut since_best = 0;
    let mut converged = false;
    let sample_seed = derive_seed(cfg.seed, 0);

    for _ in 0..cfg.max_epochs {
        let mixture: Model = MixtureModel::normalized(class.basis().to_vec(), &w)?.into();
        let xs = sample_model(&mixture, cfg.n_samples, sample_seed, &cfg.sampler)?;
        let (quad, grads, pre_grads) = Quadratic::from_samples(class.basis(), pre, &xs)?;
        w = quad.minimize(&w, cfg.inner_iters);
        let wv = DVector::from_column_slice(&w);
        let loss = quad.value(&wv);
        if !loss.is_finite() {
            return Err(Error::Numeric("simplex: loss is not finite".into()));
        }
        let per_sample: Vec<f64> = grads
            .iter()
            .zip(&pre_grads)
            .map(|(gs, g0)| {
                let mut r = -g0.clone();
                for (gi, wi) in gs.iter().zip(&w) {
                    r.axpy(*wi, gi, 1.0);
                }
                r.norm_squared()
            })
            .collect();
        let est = DivergenceEstimate::from_values(&per_sample)?;

        let prev = history.last().copied();
        history.push(loss);
        if best.as_ref().is_none_or(|(b, _, _)| loss < *b) {
            best = Some((loss, w.clone(), est));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if let Some(p) = prev {
            if (loss - p).abs() <= cfg.tol * p.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
        if since_best >= cfg.patience {
            break;
        }
    }

    let (_, weights, est) = best.expect("at least one epoch ran");
    let (i, _) = argmax(&weights);
    let mut warnings = Vec::new();
    if !converged {
        warnings.push("simplex: stopped before the loss tolerance was met".into());
    }
    Ok(LfdResult {
        mode: LfdMode::Simplex,
        lfd_model: LfdModel::Model(MixtureModel::normalized(class.basis().to_vec(), &weights)?.into()),
        divergence_to_pre: est,
        beta_averages: weights,
        selected_index: i,
        vertex_divergences: Vec::new(),
        ambiguous: false,
        stalled: !converged,
        pre_overlap: Vec::new(),
        loss_history: history,
        warnings,
        seed: Some(cfg.seed),
        config: serde_json::to_value(cfg)?,
    })
}
