// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded samplers and change-point stream synthesis.
//!
//! Every sampler is a pure function of its inputs and a `u64` seed. Parallel callers derive
//! per-task seeds with [`derive_seed`], so results never depend on scheduling.

mod gaussian;
mod gibbs;
mod mala;
mod stream;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use gaussian::{draw_gaussian, sample_gaussian};
pub use gibbs::{rbm_gibbs_sample, DEFAULT_GIBBS_ITERS};
pub use mala::{mala_sample, mala_step, MalaConfig, MalaRun, MalaState, LOW_ACCEPTANCE};
pub use stream::{generate_stream, StreamSource, StreamSpec};

use crate::models::{Model, ScoreModel};
use crate::{Error, Point, Result};

pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for task `index` under `base`, independent of execution order.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// How non-Gaussian models are sampled.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SamplerOptions {
    /// Gibbs sweeps per RBM observation.
    pub gibbs_iters: usize,
    /// MALA settings; `None` uses [`MalaConfig::default_for`] started at the model's location.
    pub mala: Option<MalaConfig>,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self {
            gibbs_iters: DEFAULT_GIBBS_ITERS,
            mala: None,
        }
    }
}

/// An infinite, seeded source of observations from one model.
pub trait ObservationSource: Send {
    fn next_observation(&mut self) -> Result<Point>;
}

struct ExactSource {
    model: Model,
    rng: SeededRng,
}

impl ObservationSource for ExactSource {
    fn next_observation(&mut self) -> Result<Point> {
        draw_exact(&self.model, &mut self.rng)
    }
}

/// Exact draw for Gaussians and mixtures of normalized components.
fn draw_exact<R: Rng + ?Sized>(model: &Model, rng: &mut R) -> Result<Point> {
    match model {
        Model::Gaussian(g) => Ok(draw_gaussian(g, rng)),
        Model::Mixture(m) if m.is_normalized() => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = m.basis().len() - 1;
            for (i, w) in m.weights().iter().enumerate() {
                acc += w;
                if u < acc && *w > 0.0 {
                    pick = i;
                    break;
                }
            }
            // rounding can leave `u` past the cumulative sum; fall back to the last positive weight
            if m.weights()[pick] == 0.0 {
                pick = m.weights().iter().rposition(|w| *w > 0.0).unwrap_or(pick);
            }
            draw_exact(&m.basis()[pick], rng)
        }
        _ => Err(Error::Unsupported(
            "exact sampling is only available for Gaussian models and their mixtures".into(),
        )),
    }
}

struct GibbsSource {
    rbm: crate::models::GaussBernoulliRbm,
    iters: usize,
    rng: SeededRng,
}

impl ObservationSource for GibbsSource {
    fn next_observation(&mut self) -> Result<Point> {
        Ok(gibbs::one_chain(&self.rbm, self.iters, &mut self.rng))
    }
}

struct MalaSource {
    model: Model,
    cfg: MalaConfig,
    state: Option<MalaState>,
    rng: SeededRng,
}

impl ObservationSource for MalaSource {
    fn next_observation(&mut self) -> Result<Point> {
        let model = &self.model;
        let target = |x: &Point| model.log_density(x);
        let drift = |x: &Point| model.grad_log_density(x);
        let state = match self.state.as_mut() {
            Some(s) => s,
            None => {
                let mut s = MalaState::new(self.cfg.init.clone(), &target, &drift)?;
                for _ in 0..self.cfg.burn_in {
                    mala_step(&mut s, self.cfg.step_size, &target, &drift, &mut self.rng)?;
                }
                self.state.insert(s)
            }
        };
        for _ in 0..self.cfg.n_steps {
            mala_step(state, self.cfg.step_size, &target, &drift, &mut self.rng)?;
        }
        Ok(state.x.clone())
    }
}

/// Observation source for any [`Model`]: exact for Gaussians (and their mixtures), Gibbs for
/// RBMs, MALA otherwise.
pub fn observation_source(
    model: &Model,
    seed: u64,
    opts: &SamplerOptions,
) -> Result<Box<dyn ObservationSource>> {
    let rng = rng_from_seed(seed);
    Ok(match model {
        Model::Gaussian(_) => Box::new(ExactSource {
            model: model.clone(),
            rng,
        }),
        Model::Mixture(m) if m.is_normalized() => Box::new(ExactSource {
            model: model.clone(),
            rng,
        }),
        Model::Rbm(r) => {
            if opts.gibbs_iters == 0 {
                return Err(Error::input("gibbs_iters must be at least 1"));
            }
            Box::new(GibbsSource {
                rbm: r.clone(),
                iters: opts.gibbs_iters,
                rng,
            })
        }
        _ => {
            let cfg = match &opts.mala {
                Some(c) => c.clone(),
                None => MalaConfig::default_for(model.dim(), model.location()),
            };
            cfg.validate(model.dim())?;
            Box::new(MalaSource {
                model: model.clone(),
                cfg,
                state: None,
                rng,
            })
        }
    })
}

/// `n` observations from `model`.
pub fn sample_model(model: &Model, n: usize, seed: u64, opts: &SamplerOptions) -> Result<Vec<Point>> {
    let mut src = observation_source(model, seed, opts)?;
    (0..n).map(|_| src.next_observation()).collect()
}
