// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::Rng;
use rand_distr::StandardNormal;

use super::rng_from_seed;
use crate::models::GaussianModel;
use crate::{Error, Point, Result};

/// One draw `μ + L z` with `L` the Cholesky factor of the covariance.
pub fn draw_gaussian<R: Rng + ?Sized>(model: &GaussianModel, rng: &mut R) -> Point {
    let d = model.mean().len();
    let z = Point::from_fn(d, |_, _| rng.sample(StandardNormal));
    model.mean() + model.chol_l() * z
}

/// `n` i.i.d. draws from `model`.
pub fn sample_gaussian(model: &GaussianModel, n: usize, seed: u64) -> Result<Vec<Point>> {
    if n == 0 {
        return Err(Error::input("sample_gaussian: n must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    let l = model.chol_l();
    let d = model.mean().len();
    Ok((0..n)
        .map(|_| {
            let z = Point::from_fn(d, |_, _| rng.sample(StandardNormal));
            model.mean() + &l * z
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn mean_is_within_clt_bound() {
        let m = presets::mvn_pre();
        let xs = sample_gaussian(&m, 100_000, 1).unwrap();
        for k in 0..2 {
            let mean: f64 = xs.iter().map(|x| x[k]).sum::<f64>() / xs.len() as f64;
            assert!(mean.abs() < 0.02, "coordinate {k}: {mean}");
        }
        let cov01: f64 = xs.iter().map(|x| x[0] * x[1]).sum::<f64>() / xs.len() as f64;
        assert!((cov01 - 0.5).abs() < 0.02);
    }

    #[test]
    fn deterministic_and_single_draw() {
        let m = presets::mvn_shifted(1.0);
        assert_eq!(sample_gaussian(&m, 5, 3).unwrap(), sample_gaussian(&m, 5, 3).unwrap());
        let one = sample_gaussian(&m, 1, 3).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0].iter().all(|v| v.is_finite()) && one[0].len() == 2);
        assert!(sample_gaussian(&m, 0, 3).is_err());
    }
}
