// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::brent::brent_root;
use crate::models::ScoreModel;
use crate::stats::log_sum_exp;
use crate::{Error, Point, Result};

pub const DEFAULT_LAMBDA_TOL: f64 = 1e-8;
pub const DEFAULT_LAMBDA_MAX: f64 = 64.0;
pub const MIN_CALIBRATION_SAMPLES: usize = 100;

const SCAN_MIN_EXP: i32 = -10;
const SCAN_MAX_EXP: i32 = 6;
const DOWNWARD_MIN_EXP: i32 = -60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationStatus {
    RootFound,
    NoRootDegenerate,
    BracketExhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaCalibration {
    pub lambda_star: f64,
    pub residual: f64,
    pub bracket: (f64, f64),
    pub status: CalibrationStatus,
    pub n_samples: usize,
    pub warning: Option<String>,
}

/// `d(x) = S_H(x, P∞) − S_H(x, Q)` for each sample.
pub fn score_differences(
    samples: &[Point],
    pre: &dyn ScoreModel,
    post: &dyn ScoreModel,
) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|x| Ok(pre.hyvarinen_score(x)? - post.hyvarinen_score(x)?))
        .collect()
}

/// `ĥ(λ) = mean(exp(λ dⱼ)) − 1`, computed in log space.
pub fn moment_residual(diffs: &[f64], lambda: f64) -> f64 {
    let scaled: Vec<f64> = diffs.iter().map(|d| lambda * d).collect();
    (log_sum_exp(scaled.iter().copied()) - (diffs.len() as f64).ln()).exp_m1()
}

/// Largest positive root of `ĥ` found by scanning `λ = 2^k` up to `lambda_max`, refined by Brent.
pub fn calibrate_lambda(
    samples: &[Point],
    pre: &dyn ScoreModel,
    post: &dyn ScoreModel,
    tol: f64,
    lambda_max: f64,
) -> Result<LambdaCalibration> {
    if samples.len() < MIN_CALIBRATION_SAMPLES {
        return Err(Error::input(format!(
            "lambda calibration needs at least {MIN_CALIBRATION_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if !(lambda_max.is_finite() && lambda_max > 0.0) {
        return Err(Error::input(format!("lambda_max must be > 0, got {lambda_max}")));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::input(format!("tolerance must be > 0, got {tol}")));
    }
    let diffs = score_differences(samples, pre, post)?;
    calibrate_from_differences(&diffs, tol, lambda_max)
}

pub(crate) fn calibrate_from_differences(
    diffs: &[f64],
    tol: f64,
    lambda_max: f64,
) -> Result<LambdaCalibration> {
    if let Some(i) = diffs.iter().position(|d| !d.is_finite()) {
        return Err(Error::NonFinite {
            context: "score difference",
            coordinate: i,
        });
    }
    let n_samples = diffs.len();
    let h = |l: f64| moment_residual(diffs, l);
    let report = |lambda_star: f64, bracket, status, warning: Option<String>| {
        if let Some(w) = &warning {
            log::warn!("{w}");
        }
        LambdaCalibration {
            lambda_star,
            residual: h(lambda_star),
            bracket,
            status,
            n_samples,
            warning,
        }
    };

    if diffs.iter().all(|&d| d == 0.0) {
        return Ok(report(
            lambda_max,
            (0.0, lambda_max),
            CalibrationStatus::NoRootDegenerate,
            Some("score differences are identically zero; pre- and post-change scores coincide".into()),
        ));
    }

    let mut grid: Vec<f64> = (SCAN_MIN_EXP..=SCAN_MAX_EXP)
        .map(|k| 2f64.powi(k))
        .filter(|&l| l < lambda_max)
        .collect();
    grid.push(lambda_max);
    let values: Vec<f64> = grid.iter().map(|&l| h(l)).collect();

    let refine = |lo: f64, hi: f64| -> Result<f64> { brent_root(&h, lo, hi, tol, 200) };

    // largest sign change on the grid
    for i in (0..grid.len().saturating_sub(1)).rev() {
        if values[i] < 0.0 && values[i + 1] >= 0.0 || values[i] >= 0.0 && values[i + 1] < 0.0 {
            let root = refine(grid[i], grid[i + 1])?;
            return Ok(report(root, (grid[i], grid[i + 1]), CalibrationStatus::RootFound, None));
        }
    }

    if values.iter().all(|&v| v < 0.0) {
        return Ok(report(
            lambda_max,
            (grid[0], lambda_max),
            CalibrationStatus::NoRootDegenerate,
            Some(format!(
                "moment residual stays negative up to lambda = {lambda_max}; using lambda_max"
            )),
        ));
    }

    // positive everywhere on the grid: a root can only sit below the smallest grid point,
    // and only if the mean difference is negative
    let mean = diffs.iter().sum::<f64>() / n_samples as f64;
    if mean < 0.0 {
        let mut hi = grid[0];
        for k in (DOWNWARD_MIN_EXP..SCAN_MIN_EXP.min(hi.log2().floor() as i32)).rev() {
            let lo = 2f64.powi(k);
            if h(lo) < 0.0 {
                let root = refine(lo, hi)?;
                return Ok(report(root, (lo, hi), CalibrationStatus::RootFound, None));
            }
            hi = lo;
        }
        return Ok(report(
            hi,
            (hi, grid[0]),
            CalibrationStatus::BracketExhausted,
            Some(format!("no sign change found down to lambda = {hi}")),
        ));
    }
    Ok(report(
        grid[0],
        (grid[0], lambda_max),
        CalibrationStatus::BracketExhausted,
        Some("mean score difference is non-negative; no positive root exists".into()),
    ))
}
