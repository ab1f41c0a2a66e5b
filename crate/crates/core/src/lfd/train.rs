// SPDX-License-Identifier: MIT OR Apache-2.0

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::network::{Adam, BetaNetwork, LossBatch, DEFAULT_HIDDEN};
use super::{argmax, LfdMode, LfdModel, LfdResult, UncertaintyClass};
use crate::divergence::DivergenceEstimate;
use crate::models::{BetaFn, MixtureModel, Model, ScoreModel, WeightedScoreField};
use crate::sampling::{derive_seed, rng_from_seed, sample_model, SamplerOptions, SeededRng};
use crate::{Error, Point, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkTrainConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epochs: usize,
    /// Training population size; the whole population is one batch.
    pub n_train: usize,
    pub n_test: usize,
    /// MALA steps applied to the population each epoch.
    pub mala_steps: usize,
    /// MALA step size; `None` uses `0.3·d^{-1/3}`.
    pub step_size: Option<f64>,
    pub seed: u64,
    /// Used to draw the initial population and the test set.
    pub sampler: SamplerOptions,
}

impl Default for NetworkTrainConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN.to_vec(),
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epochs: 200,
            n_train: 5000,
            n_test: 10_000,
            mala_steps: 5,
            step_size: None,
            seed: 0,
            sampler: SamplerOptions::default(),
        }
    }
}

/// Loss batch for points given as a list: basis and pre-change gradients at each point.
pub fn loss_batch(basis: &[Model], pre: &dyn ScoreModel, points: &[Point]) -> Result<LossBatch> {
    let x = columns(points, pre.dim())?;
    let (basis_grads, pre_grad) = gradients(basis, pre, &x)?;
    Ok(LossBatch {
        x,
        basis_grads,
        pre_grad,
    })
}

fn columns(points: &[Point], d: usize) -> Result<DMatrix<f64>> {
    if points.is_empty() {
        return Err(Error::input("loss batch: no points"));
    }
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::Dimension {
            expected: d,
            got: p.len(),
        });
    }
    Ok(DMatrix::from_fn(d, points.len(), |i, j| points[j][i]))
}

fn gradients(
    basis: &[Model],
    pre: &dyn ScoreModel,
    x: &DMatrix<f64>,
) -> Result<(Vec<DMatrix<f64>>, DMatrix<f64>)> {
    let mut basis_grads = vec![DMatrix::zeros(x.nrows(), x.ncols()); basis.len()];
    let mut pre_grad = DMatrix::zeros(x.nrows(), x.ncols());
    for c in 0..x.ncols() {
        let p: Point = x.column(c).into_owned();
        for (g, b) in basis_grads.iter_mut().zip(basis) {
            g.set_column(c, &b.grad_log_density(&p)?);
        }
        pre_grad.set_column(c, &pre.grad_log_density(&p)?);
    }
    Ok((basis_grads, pre_grad))
}

/// Population of points with the learned drift `Σⱼ βⱼ(x) ∇ log pⱼ(x)` and a target log-density.
struct Population {
    x: DMatrix<f64>,
    drift: DMatrix<f64>,
    log_target: Vec<f64>,
}

fn field(net: &BetaNetwork, basis: &[Model], x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let beta = net.forward_batch(x).beta;
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for c in 0..x.ncols() {
        let p: Point = x.column(c).into_owned();
        for (j, b) in basis.iter().enumerate() {
            let g = b.grad_log_density(&p)?;
            out.column_mut(c).axpy(beta[(j, c)], &g, 1.0);
        }
    }
    Ok(out)
}

impl Population {
    fn new(x: DMatrix<f64>, net: &BetaNetwork, basis: &[Model], target: &MixtureModel) -> Result<Self> {
        let drift = field(net, basis, &x)?;
        let log_target = (0..x.ncols())
            .map(|c| target.log_density(&x.column(c).into_owned()))
            .collect::<Result<_>>()?;
        Ok(Self { x, drift, log_target })
    }

    /// One Metropolis-adjusted Langevin step for every point, with the network field as the
    /// proposal drift and `target` as the invariant density. Returns the number accepted.
    fn mala_step(
        &mut self,
        net: &BetaNetwork,
        basis: &[Model],
        target: &MixtureModel,
        eps: f64,
        rng: &mut SeededRng,
    ) -> Result<usize> {
        let (d, n) = self.x.shape();
        let half = 0.5 * eps * eps;
        let noise = DMatrix::from_fn(d, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &self.x + &self.drift * half + noise * eps;
        let drift_y = field(net, basis, &y)?;
        let inv = 1.0 / (2.0 * eps * eps);
        let mut accepted = 0;
        for c in 0..n {
            let u: f64 = rng.random();
            let yc: Point = y.column(c).into_owned();
            let lt = match target.log_density(&yc) {
                Ok(v) if v.is_finite() => v,
                Ok(_) | Err(Error::NonFinite { .. }) => continue,
                Err(e) => return Err(e),
            };
            if drift_y.column(c).iter().any(|v| !v.is_finite()) {
                continue;
            }
            let fwd = (y.column(c) - self.x.column(c) - self.drift.column(c) * half).norm_squared();
            let bwd = (self.x.column(c) - y.column(c) - drift_y.column(c) * half).norm_squared();
            let log_alpha = lt - self.log_target[c] - inv * bwd + inv * fwd;
            if log_alpha >= 0.0 || u.ln() < log_alpha {
                self.x.set_column(c, &y.column(c));
                self.drift.set_column(c, &drift_y.column(c));
                self.log_target[c] = lt;
                accepted += 1;
            }
        }
        Ok(accepted)
    }
}

fn mean_beta(net: &BetaNetwork, x: &DMatrix<f64>) -> Vec<f64> {
    let beta = net.forward_batch(x).beta;
    let n = beta.ncols() as f64;
    beta.row_iter().map(|r| r.sum() / n).collect()
}

/// Trains a fresh network of widths `cfg.hidden` (see [`lfd_network_train_from`]).
pub fn lfd_network_train(class: &UncertaintyClass, pre: &Model, cfg: &NetworkTrainConfig) -> Result<LfdResult> {
    let net = BetaNetwork::new(class.dim(), &cfg.hidden, class.m(), derive_seed(cfg.seed, 0))?;
    lfd_network_train_from(class, pre, net, cfg)
}

/// Minimizes `(1/N) Σₙ ‖Σⱼ βⱼ(xₙ) ∇ log pⱼ(xₙ) − ∇ log p∞(xₙ)‖²` over the network weights.
///
/// The population starts as draws from the uniform mixture. Each epoch it is moved by MALA
/// steps whose proposal follows the current learned field and whose invariant density is the
/// mixture at the population-average weights. After training, a fresh test set is drawn the
/// same way to report `beta_averages` and the divergence estimate.
pub fn lfd_network_train_from(
    class: &UncertaintyClass,
    pre: &Model,
    mut net: BetaNetwork,
    cfg: &NetworkTrainConfig,
) -> Result<LfdResult> {
    let (d, m) = (class.dim(), class.m());
    if pre.dim() != d {
        return Err(Error::Dimension { expected: d, got: pre.dim() });
    }
    if net.input_dim() != d || net.output_dim() != m {
        return Err(Error::input("network shape does not match the uncertainty class"));
    }
    if cfg.n_train == 0 || cfg.n_test == 0 {
        return Err(Error::input("network training: n_train and n_test must be positive"));
    }
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0) {
        return Err(Error::input("network training: learning_rate must be positive"));
    }
    let eps = cfg.step_size.unwrap_or(0.3 * (d as f64).powf(-1.0 / 3.0));
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::input("network training: step_size must be positive"));
    }
    let basis = class.basis();
    let start: Model = MixtureModel::uniform(basis.to_vec())?.into();
    let init = sample_model(&start, cfg.n_train, derive_seed(cfg.seed, 1), &cfg.sampler)?;
    let mut x = columns(&init, d)?;
    let mut rng = rng_from_seed(derive_seed(cfg.seed, 2));

    let mut params = net.params();
    let mut adam = Adam::new(params.len(), cfg.learning_rate, cfg.beta1, cfg.beta2);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let (mut accepted, mut proposed) = (0usize, 0usize);

    let diverged = |epoch| Error::TrainingDiverged {
        epoch,
        learning_rate: cfg.learning_rate,
    };
    for epoch in 0..cfg.epochs {
        let avg = mean_beta(&net, &x);
        if avg.iter().any(|b| !b.is_finite()) {
            return Err(diverged(epoch));
        }
        let target = MixtureModel::normalized(basis.to_vec(), &avg)?;
        if cfg.mala_steps > 0 {
            let mut pop = Population::new(x, &net, basis, &target)?;
            for _ in 0..cfg.mala_steps {
                accepted += pop.mala_step(&net, basis, &target, eps, &mut rng)?;
                proposed += cfg.n_train;
            }
            x = pop.x;
        }
        let (basis_grads, pre_grad) = gradients(basis, pre, &x)?;
        let batch = LossBatch {
            x: x.clone(),
            basis_grads,
            pre_grad,
        };
        let (loss, grad) = net.loss_and_grad(&batch);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(diverged(epoch));
        }
        history.push(loss);
        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, params.clone()));
        }
        adam.step(&mut params, &grad);
        net.set_params(&params)?;
    }
    if let Some((_, p)) = &best {
        net.set_params(p)?;
    }

    // test set: fresh draws from the final average-weight mixture, moved by the learned field
    let mut warnings = Vec::new();
    let target = MixtureModel::normalized(basis.to_vec(), &mean_beta(&net, &x))?;
    let test = sample_model(&target.clone().into(), cfg.n_test, derive_seed(cfg.seed, 3), &cfg.sampler)?;
    let mut pop = Population::new(columns(&test, d)?, &net, basis, &target)?;
    let mut test_rng = rng_from_seed(derive_seed(cfg.seed, 4));
    for _ in 0..cfg.mala_steps {
        accepted += pop.mala_step(&net, basis, &target, eps, &mut test_rng)?;
        proposed += cfg.n_test;
    }
    if proposed > 0 {
        let rate = accepted as f64 / proposed as f64;
        if rate < crate::sampling::LOW_ACCEPTANCE {
            warnings.push(format!("network training: MALA acceptance rate {rate:.3} is low"));
        }
    }
    let beta_averages = mean_beta(&net, &pop.x);
    let (_, pre_grad) = gradients(basis, pre, &pop.x)?;
    let residual_field = field(&net, basis, &pop.x)? - pre_grad;
    let per_sample: Vec<f64> = residual_field.column_iter().map(|c| c.norm_squared()).collect();
    let divergence_to_pre = DivergenceEstimate::from_values(&per_sample)?;

    let (i, _) = argmax(&beta_averages);
    Ok(LfdResult {
        mode: LfdMode::Network,
        lfd_model: LfdModel::Field(WeightedScoreField::new(basis.to_vec(), BetaFn::Network { network: net })?),
        divergence_to_pre,
        beta_averages,
        selected_index: i,
        vertex_divergences: Vec::new(),
        ambiguous: false,
        stalled: false,
        pre_overlap: Vec::new(),
        loss_history: history,
        warnings,
        seed: Some(cfg.seed),
        config: serde_json::to_value(cfg)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::fisher_divergence_mc;
    use crate::presets;
    use crate::sampling::sample_gaussian;

    fn small(epochs: usize) -> NetworkTrainConfig {
        NetworkTrainConfig {
            hidden: vec![16, 8],
            learning_rate: 1e-2,
            epochs,
            n_train: 300,
            n_test: 500,
            mala_steps: 2,
            seed: 9,
            ..Default::default()
        }
    }

    #[test]
    fn single_vertex_loss_is_the_divergence() {
        let pre = presets::mvn_pre();
        let v = presets::mvn_shifted(0.8);
        let class = UncertaintyClass::new(vec![v.clone().into()], "").unwrap();
        let r = lfd_network_train(&class, &pre.clone().into(), &small(3)).unwrap();
        assert_eq!(r.beta_averages, vec![1.0]);
        let xs = sample_gaussian(&v, 300, 1).unwrap();
        let mc = fisher_divergence_mc(&v, &pre, &xs).unwrap();
        // constant integrand for a mean shift
        assert!((r.loss_history[0] - mc.value).abs() < 1e-12);
    }

    #[test]
    fn mean_shift_class_learns_first_vertex() {
        let (pre, basis) = presets::mvn_mean_shift();
        let class = UncertaintyClass::new(basis, "").unwrap();
        let r = lfd_network_train(&class, &pre, &small(60)).unwrap();
        assert_eq!(r.selected_index, 0);
        assert!(r.beta_averages[0] >= 0.95, "{:?}", r.beta_averages);
        let s: f64 = r.beta_averages.iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn training_is_deterministic() {
        let (pre, basis) = presets::mvn_mean_shift();
        let class = UncertaintyClass::new(basis, "").unwrap();
        let a = lfd_network_train(&class, &pre, &small(4)).unwrap();
        let b = lfd_network_train(&class, &pre, &small(4)).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        assert_eq!(a.beta_averages, b.beta_averages);
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let (pre, basis) = presets::mvn_mean_shift();
        let class = UncertaintyClass::new(basis, "").unwrap();
        let cfg = NetworkTrainConfig {
            learning_rate: f64::MAX,
            ..small(5)
        };
        match lfd_network_train(&class, &pre, &cfg) {
            Err(Error::TrainingDiverged { learning_rate, .. }) => assert_eq!(learning_rate, f64::MAX),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
