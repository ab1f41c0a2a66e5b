// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::Rng;
use rand_distr::StandardNormal;

use super::rng_from_seed;
use crate::models::GaussBernoulliRbm;
use crate::{Error, Point, Result};

/// Sweeps per observation when not configured otherwise.
pub const DEFAULT_GIBBS_ITERS: usize = 1000;

/// Runs one chain for `iters` sweeps of `h | x ~ Bernoulli(σ(Wᵀx + c))`,
/// `x | h ~ N(b + W h, I)` and returns the final visible state.
pub(crate) fn one_chain<R: Rng + ?Sized>(rbm: &GaussBernoulliRbm, iters: usize, rng: &mut R) -> Point {
    let dx = rbm.visible_bias().len();
    let dh = rbm.hidden_dim();
    let mut x = rbm.visible_bias() + Point::from_fn(dx, |_, _| rng.sample(StandardNormal));
    let mut h = Point::zeros(dh);
    for _ in 0..iters {
        let phi = rbm.hidden_probabilities(&x);
        for j in 0..dh {
            h[j] = if rng.random::<f64>() < phi[j] { 1.0 } else { 0.0 };
        }
        let mean = rbm.visible_bias() + rbm.weights() * &h;
        x = mean + Point::from_fn(dx, |_, _| rng.sample(StandardNormal));
    }
    x
}

/// `n` visible samples, one per independent chain of `iters` sweeps.
pub fn rbm_gibbs_sample(
    model: &GaussBernoulliRbm,
    n: usize,
    iters: usize,
    seed: u64,
) -> Result<Vec<Point>> {
    if iters == 0 {
        return Err(Error::input("gibbs: iters must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    Ok((0..n).map(|_| one_chain(model, iters, &mut rng)).collect())
}
