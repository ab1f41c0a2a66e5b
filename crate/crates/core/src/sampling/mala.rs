// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::rng_from_seed;
use crate::models::{check_point, ScoreModel};
use crate::{Error, Point, Result};

/// Acceptance rate below which a run carries a warning.
pub const LOW_ACCEPTANCE: f64 = 0.05;

/// Metropolis-adjusted Langevin settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MalaConfig {
    pub step_size: f64,
    /// Iterations between retained samples.
    pub n_steps: usize,
    pub burn_in: usize,
    pub init: Point,
}

impl MalaConfig {
    /// `ε = 0.1 · d^{-1/3}`, 500 burn-in iterations, no thinning.
    pub fn default_for(dim: usize, init: Point) -> Self {
        Self {
            step_size: 0.1 * (dim as f64).powf(-1.0 / 3.0),
            n_steps: 1,
            burn_in: 500,
            init,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::input("mala: step_size must be > 0"));
        }
        if self.n_steps == 0 {
            return Err(Error::input("mala: n_steps must be at least 1"));
        }
        check_point(dim, &self.init)
    }
}

/// Current position of a chain with cached target value and drift.
#[derive(Clone, Debug)]
pub struct MalaState {
    pub x: Point,
    pub log_target: f64,
    pub drift: Point,
    pub accepted: usize,
    pub proposed: usize,
}

impl MalaState {
    pub fn new<T, D>(x: Point, log_target: T, drift: D) -> Result<Self>
    where
        T: Fn(&Point) -> Result<f64>,
        D: Fn(&Point) -> Result<Point>,
    {
        let lt = log_target(&x)?;
        if !lt.is_finite() {
            return Err(Error::Numeric("mala: target is not finite at the initial point".into()));
        }
        let drift = drift(&x)?;
        Ok(Self {
            x,
            log_target: lt,
            drift,
            accepted: 0,
            proposed: 0,
        })
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// One MALA transition: propose `x' = x + (ε²/2) d(x) + ε ξ`, accept with the
/// Metropolis-Hastings ratio for the asymmetric Gaussian proposal.
///
/// `drift` is normally `∇ log target`; any other drift keeps the chain exact for `log_target`.
pub fn mala_step<T, D, R>(
    state: &mut MalaState,
    step_size: f64,
    log_target: T,
    drift: D,
    rng: &mut R,
) -> Result<bool>
where
    T: Fn(&Point) -> Result<f64>,
    D: Fn(&Point) -> Result<Point>,
    R: Rng + ?Sized,
{
    let half_eps2 = 0.5 * step_size * step_size;
    let noise = Point::from_fn(state.x.len(), |_, _| rng.sample(StandardNormal));
    let proposal = &state.x + &state.drift * half_eps2 + noise * step_size;
    state.proposed += 1;

    let lt_new = match log_target(&proposal) {
        Ok(v) if v.is_finite() => v,
        Ok(_) => return Ok(false),
        Err(Error::NonFinite { .. }) => return Ok(false),
        Err(e) => return Err(e),
    };
    let drift_new = match drift(&proposal) {
        Ok(d) => d,
        Err(Error::NonFinite { .. }) => return Ok(false),
        Err(e) => return Err(e),
    };
    let inv = 1.0 / (2.0 * step_size * step_size);
    let fwd = (&proposal - &state.x - &state.drift * half_eps2).norm_squared();
    let bwd = (&state.x - &proposal - &drift_new * half_eps2).norm_squared();
    let log_alpha = lt_new - state.log_target - inv * bwd + inv * fwd;
    let u: f64 = rng.random();
    if log_alpha >= 0.0 || u.ln() < log_alpha {
        state.x = proposal;
        state.log_target = lt_new;
        state.drift = drift_new;
        state.accepted += 1;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Output of [`mala_sample`].
#[derive(Clone, Debug)]
pub struct MalaRun {
    pub samples: Vec<Point>,
    pub acceptance_rate: f64,
    pub warning: Option<String>,
}

/// `n` samples from the density `∝ exp(model.log_density)` after `cfg.burn_in` iterations,
/// keeping every `cfg.n_steps`-th state.
pub fn mala_sample<M: ScoreModel + ?Sized>(
    model: &M,
    cfg: &MalaConfig,
    n: usize,
    seed: u64,
) -> Result<MalaRun> {
    cfg.validate(model.dim())?;
    if n == 0 {
        return Err(Error::input("mala: n must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    let target = |x: &Point| model.log_density(x);
    let drift = |x: &Point| model.grad_log_density(x);
    let mut state = MalaState::new(cfg.init.clone(), target, drift)?;
    for _ in 0..cfg.burn_in {
        mala_step(&mut state, cfg.step_size, target, drift, &mut rng)?;
    }
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..cfg.n_steps {
            mala_step(&mut state, cfg.step_size, target, drift, &mut rng)?;
        }
        samples.push(state.x.clone());
    }
    let acceptance_rate = state.acceptance_rate();
    let warning = (acceptance_rate < LOW_ACCEPTANCE).then(|| {
        format!("mala acceptance rate {acceptance_rate:.3} is below {LOW_ACCEPTANCE}")
    });
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(MalaRun {
        samples,
        acceptance_rate,
        warning,
    })
}
