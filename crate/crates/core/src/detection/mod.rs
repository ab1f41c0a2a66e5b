// SPDX-License-Identifier: MIT OR Apache-2.0

//! CUSUM-type detectors driven by log-likelihood ratios or Hyvärinen-score differences.
//!
//! All three kinds share one recursion, `Z(n) = max(Z(n−1) + z(Xₙ), 0)`, and stop at the
//! first `n` with `Z(n) ≥ τ`. They differ only in the increment `z`:
//!
//! - `cusum`: `log p₁(x) − log p∞(x)` (needs normalized or equally-normalized models);
//! - `scusum` / `rscusum`: `λ (S_H(x, P∞) − S_H(x, Q))`, with `Q` the true post-change model
//!   or the least-favorable one. The two are the same code path.

mod brent;
mod calibrate;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use brent::brent_root;
pub use calibrate::{
    calibrate_lambda, moment_residual, score_differences, CalibrationStatus, LambdaCalibration,
    DEFAULT_LAMBDA_MAX, DEFAULT_LAMBDA_TOL, MIN_CALIBRATION_SAMPLES,
};

use crate::models::ScoreModel;
use crate::{Error, Point, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Cusum,
    Scusum,
    Rscusum,
}

impl DetectorKind {
    pub fn is_score_based(self) -> bool {
        !matches!(self, DetectorKind::Cusum)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Cusum => "cusum",
            DetectorKind::Scusum => "scusum",
            DetectorKind::Rscusum => "rscusum",
        }
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cusum" => Ok(Self::Cusum),
            "scusum" => Ok(Self::Scusum),
            "rscusum" => Ok(Self::Rscusum),
            other => Err(Error::Usage(format!("unknown detector kind {other:?}"))),
        }
    }
}

/// Immutable detector settings. `lambda` is ignored by `cusum`.
#[derive(Clone, Debug)]
pub struct DetectorConfig {
    kind: DetectorKind,
    pre: Arc<dyn ScoreModel>,
    post: Arc<dyn ScoreModel>,
    lambda: f64,
    tau: f64,
}

impl DetectorConfig {
    pub fn new(
        kind: DetectorKind,
        pre: Arc<dyn ScoreModel>,
        post: Arc<dyn ScoreModel>,
        lambda: f64,
        tau: f64,
    ) -> Result<Self> {
        if kind.is_score_based() && !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::input(format!("detector: lambda must be > 0, got {lambda}")));
        }
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::input(format!("detector: tau must be finite and >= 0, got {tau}")));
        }
        if pre.dim() != post.dim() {
            return Err(Error::Dimension {
                expected: pre.dim(),
                got: post.dim(),
            });
        }
        Ok(Self {
            kind,
            pre,
            post,
            lambda: if kind.is_score_based() { lambda } else { 1.0 },
            tau,
        })
    }

    pub fn kind(&self) -> DetectorKind {
        self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn pre(&self) -> &Arc<dyn ScoreModel> {
        &self.pre
    }

    pub fn post(&self) -> &Arc<dyn ScoreModel> {
        &self.post
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::new(self.kind, self.pre.clone(), self.post.clone(), self.lambda, tau)
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.kind, self.pre.clone(), self.post.clone(), lambda, self.tau)
    }

    /// Increment `z(x)` added to the statistic.
    pub fn instantaneous_score(&self, x: &Point) -> Result<f64> {
        let z = match self.kind {
            DetectorKind::Cusum => self.post.log_density(x)? - self.pre.log_density(x)?,
            _ => self.lambda * (self.pre.hyvarinen_score(x)? - self.post.hyvarinen_score(x)?),
        };
        if z.is_nan() {
            return Err(Error::Numeric("detector increment is NaN".into()));
        }
        Ok(z)
    }
}

/// Free-function form of [`DetectorConfig::instantaneous_score`].
pub fn instantaneous_score(cfg: &DetectorConfig, x: &Point) -> Result<f64> {
    cfg.instantaneous_score(x)
}

/// Running statistic for one stream.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectorState {
    pub z: f64,
    pub n: usize,
    pub stopped_at: Option<usize>,
}

impl DetectorState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Applies one increment: `z' = max(z + increment, 0)`, stopping when `z' ≥ tau`.
    pub fn advance(&self, increment: f64, tau: f64) -> Result<Self> {
        if let Some(t) = self.stopped_at {
            return Err(Error::Usage(format!("detector already stopped at n = {t}")));
        }
        let z = (self.z + increment).max(0.0);
        let n = self.n + 1;
        Ok(Self {
            z,
            n,
            stopped_at: (z >= tau).then_some(n),
        })
    }

    pub fn step(&self, cfg: &DetectorConfig, x: &Point) -> Result<Self> {
        if let Some(t) = self.stopped_at {
            return Err(Error::Usage(format!("detector already stopped at n = {t}")));
        }
        self.advance(cfg.instantaneous_score(x)?, cfg.tau)
    }
}

/// Summary of running a detector over a finite stream.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub stopping_time: Option<usize>,
    pub final_stat: f64,
    pub n_processed: usize,
}

/// Runs until the first crossing (inclusive) or the end of the stream.
pub fn run_detector_outcome(cfg: &DetectorConfig, stream: &[Point]) -> Result<RunOutcome> {
    if stream.is_empty() {
        return Err(Error::input("run_detector: empty stream"));
    }
    let mut state = DetectorState::new();
    for x in stream {
        state = state.step(cfg, x)?;
        if state.stopped_at.is_some() {
            break;
        }
    }
    Ok(RunOutcome {
        stopping_time: state.stopped_at,
        final_stat: state.z,
        n_processed: state.n,
    })
}

/// `T = inf{n ≥ 1 : Z(n) ≥ τ}`, or `None` if the stream ends first.
pub fn run_detector(cfg: &DetectorConfig, stream: &[Point]) -> Result<Option<usize>> {
    Ok(run_detector_outcome(cfg, stream)?.stopping_time)
}

/// Stopping times for several thresholds from a single pass over one stream.
///
/// `taus` must be non-decreasing; `cfg.tau()` is ignored. Reads at most `max_len`
/// observations from `next`, stopping early once the largest threshold is crossed.
pub fn first_passage_times<F>(
    cfg: &DetectorConfig,
    taus: &[f64],
    max_len: usize,
    mut next: F,
) -> Result<Vec<Option<usize>>>
where
    F: FnMut() -> Result<Point>,
{
    if taus.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::input("first_passage_times: thresholds must be sorted"));
    }
    let mut out = vec![None; taus.len()];
    let mut pending = 0;
    let mut z = 0.0f64;
    for n in 1..=max_len {
        if pending == taus.len() {
            break;
        }
        z = (z + cfg.instantaneous_score(&next()?)?).max(0.0);
        while pending < taus.len() && z >= taus[pending] {
            out[pending] = Some(n);
            pending += 1;
        }
    }
    Ok(out)
}

/// Threshold guaranteeing `ARL ≥ γ` when the multiplier satisfies the moment condition: `τ = ln γ`.
pub fn threshold_for_arl(gamma: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma >= 1.0) {
        return Err(Error::input(format!("target ARL must be >= 1, got {gamma}")));
    }
    Ok(gamma.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::sampling::sample_gaussian;
    use nalgebra::dvector;
    use proptest::prelude::*;

    fn gaussian_cfg(lambda: f64, tau: f64) -> DetectorConfig {
        DetectorConfig::new(
            DetectorKind::Rscusum,
            Arc::new(presets::mvn_pre()),
            Arc::new(presets::mvn_shifted(0.5)),
            lambda,
            tau,
        )
        .unwrap()
    }

    #[test]
    fn identical_models_score_zero() {
        let m = Arc::new(presets::mvn_pre());
        let cfg = DetectorConfig::new(DetectorKind::Scusum, m.clone(), m, 1.3, 1.0).unwrap();
        assert_eq!(cfg.instantaneous_score(&dvector![0.7, -2.0]).unwrap(), 0.0);
    }

    #[test]
    fn score_is_linear_in_lambda() {
        let x = dvector![0.3, 1.1];
        let a = gaussian_cfg(0.8, 1.0).instantaneous_score(&x).unwrap();
        let b = gaussian_cfg(1.6, 1.0).instantaneous_score(&x).unwrap();
        assert_eq!(b, 2.0 * a);
    }

    #[test]
    fn score_at_post_mean_is_one_ninth() {
        let z = gaussian_cfg(1.0, 1.0)
            .instantaneous_score(&dvector![0.5, 0.5])
            .unwrap();
        assert!((z - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn recursion_examples() {
        let s = DetectorState::new().advance(-5.0, 2.0).unwrap();
        assert_eq!(s.z, 0.0);
        let s = DetectorState {
            z: 1.0,
            n: 3,
            stopped_at: None,
        }
        .advance(0.5, 2.0)
        .unwrap();
        assert_eq!((s.z, s.stopped_at), (1.5, None));
        let s = DetectorState {
            z: 1.8,
            n: 3,
            stopped_at: None,
        }
        .advance(0.5, 2.0)
        .unwrap();
        assert!((s.z - 2.3).abs() < 1e-15);
        assert_eq!(s.stopped_at, Some(4));
        assert!(matches!(s.advance(0.1, 2.0), Err(Error::Usage(_))));
    }

    #[test]
    fn zero_threshold_stops_immediately() {
        let xs = sample_gaussian(&presets::mvn_pre(), 10, 1).unwrap();
        assert_eq!(run_detector(&gaussian_cfg(1.0, 0.0), &xs).unwrap(), Some(1));
    }

    #[test]
    fn config_validation() {
        assert!(DetectorConfig::new(
            DetectorKind::Rscusum,
            Arc::new(presets::mvn_pre()),
            Arc::new(presets::mvn_shifted(0.5)),
            0.0,
            1.0
        )
        .is_err());
        assert!(DetectorConfig::new(
            DetectorKind::Cusum,
            Arc::new(presets::mvn_pre()),
            Arc::new(presets::mvn_shifted(0.5)),
            0.0,
            1.0
        )
        .is_ok());
        assert!(DetectorConfig::new(
            DetectorKind::Cusum,
            Arc::new(presets::mvn_pre()),
            Arc::new(presets::mvn_shifted(0.5)),
            1.0,
            -1.0
        )
        .is_err());
        assert!(threshold_for_arl(0.5).is_err());
    }

    #[test]
    fn cusum_uses_log_likelihood_ratio() {
        let pre = presets::mvn_pre();
        let post = presets::mvn_shifted(0.5);
        let cfg =
            DetectorConfig::new(DetectorKind::Cusum, Arc::new(pre.clone()), Arc::new(post.clone()), 1.0, 1.0)
                .unwrap();
        let x = dvector![0.2, 0.9];
        let llr = post.log_density(&x).unwrap() - pre.log_density(&x).unwrap();
        assert_eq!(cfg.instantaneous_score(&x).unwrap(), llr);
    }

    #[test]
    fn threshold_values() {
        assert_eq!(threshold_for_arl(1.0).unwrap(), 0.0);
        assert!((threshold_for_arl(100.0).unwrap() - 4.605_170_185_988_091).abs() < 1e-12);
        assert!((threshold_for_arl(3000.0).unwrap() - 8.006_367_567_650_246).abs() < 1e-12);
    }

    #[test]
    fn first_passages_agree_with_single_runs() {
        let xs = sample_gaussian(&presets::mvn_shifted(0.5), 400, 8).unwrap();
        let cfg = gaussian_cfg(1.5, 0.0);
        let taus = [0.5, 2.0, 4.0, 6.0];
        let mut it = xs.iter().cloned();
        let multi = first_passage_times(&cfg, &taus, xs.len(), || Ok(it.next().unwrap())).unwrap();
        for (tau, t) in taus.iter().zip(multi) {
            assert_eq!(run_detector(&cfg.with_tau(*tau).unwrap(), &xs).unwrap(), t);
        }
    }

    proptest! {
        #[test]
        fn statistic_stays_non_negative(incs in prop::collection::vec(-5.0f64..5.0, 1..200)) {
            let mut s = DetectorState::new();
            for inc in incs {
                s = s.advance(inc, f64::INFINITY).unwrap();
                prop_assert!(s.z >= 0.0);
            }
        }

        #[test]
        fn stopping_time_monotone_in_tau(seed in 0u64..500, t1 in 0.0f64..6.0, dt in 0.0f64..4.0) {
            let xs = sample_gaussian(&presets::mvn_shifted(0.3), 300, seed).unwrap();
            let a = run_detector(&gaussian_cfg(1.5, t1), &xs).unwrap().unwrap_or(usize::MAX);
            let b = run_detector(&gaussian_cfg(1.5, t1 + dt), &xs).unwrap().unwrap_or(usize::MAX);
            prop_assert!(a <= b);
        }

        #[test]
        fn lambda_tau_scaling_is_exact(seed in 0u64..500, k in -3i32..4) {
            // powers of two scale every partial sum exactly
            let c = 2f64.powi(k);
            let xs = sample_gaussian(&presets::mvn_shifted(0.5), 200, seed).unwrap();
            let a = run_detector(&gaussian_cfg(1.2, 3.0), &xs).unwrap();
            let b = run_detector(&gaussian_cfg(1.2 * c, 3.0 * c), &xs).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
