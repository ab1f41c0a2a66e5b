// SPDX-License-Identifier: MIT OR Apache-2.0

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{arl_matched_thresholds, stream_passages, ArlEstimate};
use crate::detection::{
    calibrate_lambda, threshold_for_arl, DetectorConfig, DetectorKind, LambdaCalibration,
    DEFAULT_LAMBDA_MAX, DEFAULT_LAMBDA_TOL,
};
use crate::models::{Model, ScoreModel};
use crate::sampling::{derive_seed, sample_model, SamplerOptions};
use crate::stats::mean_and_se;
use crate::{Error, Result};

const TAG_CALIBRATION: u64 = 0xCA1;
const TAG_ARL: u64 = 0xA41;
const TAG_EDD: u64 = 0xEDD;

/// One detector in a sweep. `lambda = None` calibrates the multiplier on pre-change samples.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub name: String,
    pub kind: DetectorKind,
    /// Post-change model the detector is designed against.
    pub post: Model,
    #[serde(default)]
    pub lambda: Option<f64>,
}

/// A true post-change law streams are drawn from.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PostSpec {
    pub id: String,
    pub model: Model,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ThresholdRule {
    /// `τ = ln γ`.
    Analytic,
    /// Smallest `τ` whose empirical ARL over `trials` change-free streams reaches `γ`;
    /// streams are censored at `horizon_factor · max γ`.
    ArlMatched { trials: usize, horizon_factor: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    pub pre: Model,
    pub detectors: Vec<DetectorSpec>,
    pub posts: Vec<PostSpec>,
    pub gammas: Vec<f64>,
    #[serde(default = "default_nu")]
    pub nu: usize,
    #[serde(default = "default_stream_length")]
    pub stream_length: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_rule")]
    pub threshold: ThresholdRule,
    #[serde(default = "default_calibration_samples")]
    pub calibration_samples: usize,
    /// Change-free runs per detector used to report the ARL of each threshold; 0 skips it.
    /// Ignored by the ARL-matched rule, which reports its own.
    #[serde(default)]
    pub arl_trials: usize,
    /// ARL runs are censored at `arl_horizon_factor · γ`.
    #[serde(default = "default_horizon_factor")]
    pub arl_horizon_factor: f64,
    #[serde(default)]
    pub sampler: SamplerOptions,
}

fn default_nu() -> usize {
    50
}
fn default_stream_length() -> usize {
    10_000
}
fn default_trials() -> usize {
    1000
}
fn default_rule() -> ThresholdRule {
    ThresholdRule::Analytic
}
fn default_calibration_samples() -> usize {
    10_000
}
fn default_horizon_factor() -> f64 {
    20.0
}

impl SweepConfig {
    /// Config with the default protocol (`ν = 50`, 10⁴-long streams, 1000 trials, `τ = ln γ`).
    pub fn new(pre: Model, detectors: Vec<DetectorSpec>, posts: Vec<PostSpec>, gammas: Vec<f64>) -> Self {
        Self {
            pre,
            detectors,
            posts,
            gammas,
            nu: default_nu(),
            stream_length: default_stream_length(),
            trials: default_trials(),
            base_seed: 0,
            threshold: default_rule(),
            calibration_samples: default_calibration_samples(),
            arl_trials: 0,
            arl_horizon_factor: default_horizon_factor(),
            sampler: SamplerOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::input("sweep: trials must be at least 1"));
        }
        if self.gammas.is_empty() || self.gammas.iter().any(|g| !(g.is_finite() && *g >= 1.0)) {
            return Err(Error::input("sweep: gammas must be non-empty and each >= 1"));
        }
        if self.nu == 0 || self.nu > self.stream_length {
            return Err(Error::input("sweep: need 1 <= nu <= stream_length"));
        }
        if self.detectors.is_empty() || self.posts.is_empty() {
            return Err(Error::input("sweep: at least one detector and one post model are required"));
        }
        let d = self.pre.dim();
        for det in &self.detectors {
            if det.post.dim() != d {
                return Err(Error::input(format!("sweep: detector {:?} has the wrong dimension", det.name)));
            }
        }
        for p in &self.posts {
            if p.model.dim() != d {
                return Err(Error::input(format!("sweep: post {:?} has the wrong dimension", p.id)));
            }
        }
        if let ThresholdRule::ArlMatched { trials, horizon_factor } = self.threshold {
            if trials == 0 || !(horizon_factor >= 1.0) {
                return Err(Error::input("sweep: arl matching needs trials >= 1 and horizon_factor >= 1"));
            }
        }
        if !(self.arl_horizon_factor >= 1.0) {
            return Err(Error::input("sweep: arl_horizon_factor must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub detector: String,
    pub true_post: String,
    pub gamma: f64,
    pub tau: f64,
    pub trial: usize,
    pub stopping_time: Option<usize>,
    /// `T − ν + 1` when `T ≥ ν`; absent on false alarms and censored runs.
    pub delay: Option<usize>,
    pub censored: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaRecord {
    pub detector: String,
    pub lambda: f64,
    pub calibration: Option<LambdaCalibration>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRecord {
    pub detector: String,
    pub gamma: f64,
    pub tau: f64,
    pub arl: Option<ArlEstimate>,
}

/// Per (detector, γ, true post) statistics. Censored runs enter the EDD at the stream end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub detector: String,
    pub true_post: String,
    pub gamma: f64,
    pub tau: f64,
    pub edd_mean: Option<f64>,
    pub edd_std_error: Option<f64>,
    pub delays: usize,
    pub false_alarms: usize,
    pub censored: usize,
    pub arl_mean: Option<f64>,
    pub arl_std_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepError {
    pub detector: String,
    pub true_post: Option<String>,
    pub trial: Option<usize>,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub nu: usize,
    pub stream_length: usize,
    pub rows: Vec<SweepRow>,
    pub cells: Vec<CellSummary>,
    pub thresholds: Vec<ThresholdRecord>,
    pub lambdas: Vec<LambdaRecord>,
    pub errors: Vec<SweepError>,
}

impl SweepResult {
    pub fn cell(&self, detector: &str, true_post: &str, gamma: f64) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.detector == detector && c.true_post == true_post && c.gamma == gamma)
    }
}

struct Prepared {
    name: String,
    cfg: DetectorConfig,
    taus: Vec<f64>,
    arls: Vec<Option<ArlEstimate>>,
}

fn prepare(sweep: &SweepConfig, spec: &DetectorSpec) -> Result<(Prepared, LambdaRecord)> {
    let (lambda, calibration) = match (spec.kind, spec.lambda) {
        (DetectorKind::Cusum, _) => (1.0, None),
        (_, Some(l)) => (l, None),
        (_, None) => {
            let xs = sample_model(
                &sweep.pre,
                sweep.calibration_samples,
                derive_seed(sweep.base_seed, TAG_CALIBRATION),
                &sweep.sampler,
            )?;
            let cal = calibrate_lambda(&xs, &sweep.pre, &spec.post, DEFAULT_LAMBDA_TOL, DEFAULT_LAMBDA_MAX)?;
            (cal.lambda_star, Some(cal))
        }
    };
    let cfg = DetectorConfig::new(
        spec.kind,
        Arc::new(sweep.pre.clone()),
        Arc::new(spec.post.clone()),
        lambda,
        0.0,
    )?;
    let gmax = sweep.gammas.iter().cloned().fold(1.0, f64::max);
    let arl_seed = derive_seed(sweep.base_seed, TAG_ARL);
    let (taus, arls) = match &sweep.threshold {
        ThresholdRule::Analytic => {
            let taus: Vec<f64> = sweep.gammas.iter().map(|&g| threshold_for_arl(g)).collect::<Result<_>>()?;
            let arls = if sweep.arl_trials > 0 {
                analytic_arls(sweep, &cfg, &taus, arl_seed)?
            } else {
                vec![None; taus.len()]
            };
            (taus, arls)
        }
        ThresholdRule::ArlMatched { trials, horizon_factor } => {
            let horizon = (horizon_factor * gmax).ceil() as usize;
            let m = arl_matched_thresholds(&cfg, &sweep.pre, &sweep.gammas, *trials, horizon, arl_seed, &sweep.sampler)?;
            (m.iter().map(|t| t.tau).collect(), m.iter().map(|t| Some(t.arl)).collect())
        }
    };
    Ok((
        Prepared {
            name: spec.name.clone(),
            cfg,
            taus,
            arls,
        },
        LambdaRecord {
            detector: spec.name.clone(),
            lambda,
            calibration,
        },
    ))
}

/// ARL of each analytic threshold from one pass per change-free stream.
fn analytic_arls(sweep: &SweepConfig, cfg: &DetectorConfig, taus: &[f64], seed: u64) -> Result<Vec<Option<ArlEstimate>>> {
    let order = sorted_order(taus);
    let sorted: Vec<f64> = order.iter().map(|&i| taus[i]).collect();
    let horizons: Vec<usize> = sweep
        .gammas
        .iter()
        .map(|g| (sweep.arl_horizon_factor * g).ceil() as usize)
        .collect();
    let max_h = horizons.iter().cloned().max().unwrap_or(1);
    let runs: Vec<Vec<Option<usize>>> = (0..sweep.arl_trials)
        .into_par_iter()
        .map(|t| stream_passages(cfg, &sweep.pre, &sweep.pre, None, &sorted, max_h, derive_seed(seed, t as u64), &sweep.sampler))
        .collect::<Result<_>>()?;
    let mut out = vec![None; taus.len()];
    for (k, &i) in order.iter().enumerate() {
        let h = horizons[i];
        let vals: Vec<f64> = runs.iter().map(|r| r[k].filter(|&t| t <= h).unwrap_or(h) as f64).collect();
        let censored = runs.iter().filter(|r| r[k].is_none_or(|t| t > h)).count();
        let (mean, std_error) = mean_and_se(&vals);
        out[i] = Some(ArlEstimate {
            mean,
            std_error,
            censored,
            trials: sweep.arl_trials,
        });
    }
    Ok(out)
}

fn sorted_order(v: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    order
}

/// Runs every (detector, γ, true post, trial) combination.
///
/// Each (true post, trial) pair has its own stream seed shared by all detectors and all γ, so
/// comparisons within a sweep use common random numbers. Rows are ordered by
/// (detector, γ, true post, trial) and do not depend on the thread count.
pub fn edd_vs_arl_sweep(sweep: &SweepConfig) -> Result<SweepResult> {
    sweep.validate()?;
    let mut result = SweepResult {
        nu: sweep.nu,
        stream_length: sweep.stream_length,
        ..Default::default()
    };
    let mut prepared = Vec::new();
    for spec in &sweep.detectors {
        match prepare(sweep, spec) {
            Ok((p, l)) => {
                for (k, &g) in sweep.gammas.iter().enumerate() {
                    result.thresholds.push(ThresholdRecord {
                        detector: p.name.clone(),
                        gamma: g,
                        tau: p.taus[k],
                        arl: p.arls[k],
                    });
                }
                result.lambdas.push(l);
                prepared.push(p);
            }
            Err(e) => result.errors.push(SweepError {
                detector: spec.name.clone(),
                true_post: None,
                trial: None,
                message: e.to_string(),
            }),
        }
    }

    let edd_seed = derive_seed(sweep.base_seed, TAG_EDD);
    let tasks: Vec<(usize, usize, usize)> = (0..prepared.len())
        .flat_map(|d| (0..sweep.posts.len()).flat_map(move |p| (0..sweep.trials).map(move |t| (d, p, t))))
        .collect();
    let outcomes: Vec<Result<Vec<Option<usize>>>> = tasks
        .par_iter()
        .map(|&(d, p, t)| {
            let det = &prepared[d];
            let order = sorted_order(&det.taus);
            let sorted: Vec<f64> = order.iter().map(|&i| det.taus[i]).collect();
            let seed = derive_seed(derive_seed(edd_seed, p as u64), t as u64);
            let times = stream_passages(
                &det.cfg,
                &sweep.pre,
                &sweep.posts[p].model,
                Some(sweep.nu),
                &sorted,
                sweep.stream_length,
                seed,
                &sweep.sampler,
            )?;
            let mut by_gamma = vec![None; det.taus.len()];
            for (k, &i) in order.iter().enumerate() {
                by_gamma[i] = times[k];
            }
            Ok(by_gamma)
        })
        .collect();

    let (np, nt, ng) = (sweep.posts.len(), sweep.trials, sweep.gammas.len());
    for (d, det) in prepared.iter().enumerate() {
        for (g, &gamma) in sweep.gammas.iter().enumerate() {
            for (p, post) in sweep.posts.iter().enumerate() {
                let mut delays = Vec::new();
                let (mut false_alarms, mut censored) = (0, 0);
                for t in 0..nt {
                    let times = match &outcomes[(d * np + p) * nt + t] {
                        Ok(v) => v,
                        Err(e) => {
                            if g == 0 {
                                result.errors.push(SweepError {
                                    detector: det.name.clone(),
                                    true_post: Some(post.id.clone()),
                                    trial: Some(t),
                                    message: e.to_string(),
                                });
                            }
                            continue;
                        }
                    };
                    let st = times[g];
                    let delay = st.filter(|&s| s >= sweep.nu).map(|s| s - sweep.nu + 1);
                    match (st, delay) {
                        (None, _) => {
                            censored += 1;
                            delays.push((sweep.stream_length - sweep.nu + 1) as f64);
                        }
                        (Some(_), None) => false_alarms += 1,
                        (Some(_), Some(dl)) => delays.push(dl as f64),
                    }
                    result.rows.push(SweepRow {
                        detector: det.name.clone(),
                        true_post: post.id.clone(),
                        gamma,
                        tau: det.taus[g],
                        trial: t,
                        stopping_time: st,
                        delay,
                        censored: st.is_none(),
                    });
                }
                let (edd_mean, edd_std_error) = if delays.is_empty() {
                    (None, None)
                } else {
                    let (m, s) = mean_and_se(&delays);
                    (Some(m), Some(s))
                };
                let arl = det.arls[g];
                result.cells.push(CellSummary {
                    detector: det.name.clone(),
                    true_post: post.id.clone(),
                    gamma,
                    tau: det.taus[g],
                    edd_mean,
                    edd_std_error,
                    delays: delays.len(),
                    false_alarms,
                    censored,
                    arl_mean: arl.map(|a| a.mean),
                    arl_std_error: arl.map(|a| a.std_error),
                });
            }
        }
    }
    debug_assert_eq!(result.cells.len(), prepared.len() * ng * np);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn small() -> SweepConfig {
        let (pre, basis) = presets::mvn_mean_shift();
        let mut cfg = SweepConfig::new(
            pre,
            vec![
                DetectorSpec {
                    name: "rscusum".into(),
                    kind: DetectorKind::Rscusum,
                    post: basis[0].clone(),
                    lambda: None,
                },
                DetectorSpec {
                    name: "cusum".into(),
                    kind: DetectorKind::Cusum,
                    post: basis[0].clone(),
                    lambda: None,
                },
            ],
            basis
                .iter()
                .enumerate()
                .take(2)
                .map(|(i, m)| PostSpec {
                    id: format!("p{}", i + 1),
                    model: m.clone(),
                })
                .collect(),
            vec![100.0, 10.0],
        );
        cfg.trials = 8;
        cfg.stream_length = 500;
        cfg.calibration_samples = 1000;
        cfg
    }

    #[test]
    fn cross_product_shape_and_order() {
        let r = edd_vs_arl_sweep(&small()).unwrap();
        assert_eq!(r.rows.len(), 2 * 2 * 2 * 8);
        assert_eq!(r.cells.len(), 2 * 2 * 2);
        assert!(r.errors.is_empty());
        assert_eq!(r.rows[0].detector, "rscusum");
        assert_eq!(r.rows[0].gamma, 100.0);
        assert_eq!(r.rows[8].true_post, "p2");
        assert_eq!(r.rows[16].gamma, 10.0);
        for row in &r.rows {
            if let Some(st) = row.stopping_time {
                assert!(st >= 1);
                assert_eq!(row.delay.is_none(), st < r.nu);
            }
        }
    }

    #[test]
    fn sweep_is_reproducible_and_schedule_independent() {
        let cfg = small();
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let parallel = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = serial.install(|| edd_vs_arl_sweep(&cfg)).unwrap();
        let b = parallel.install(|| edd_vs_arl_sweep(&cfg)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn larger_gamma_never_stops_earlier() {
        let r = edd_vs_arl_sweep(&small()).unwrap();
        let hi: Vec<_> = r.rows.iter().filter(|x| x.gamma == 100.0).collect();
        let lo: Vec<_> = r.rows.iter().filter(|x| x.gamma == 10.0).collect();
        for (a, b) in hi.iter().zip(&lo) {
            assert_eq!((&a.detector, &a.true_post, a.trial), (&b.detector, &b.true_post, b.trial));
            assert!(a.stopping_time.unwrap_or(usize::MAX) >= b.stopping_time.unwrap_or(usize::MAX));
        }
    }

    #[test]
    fn analytic_arl_reporting() {
        let mut cfg = small();
        cfg.gammas = vec![5.0];
        cfg.arl_trials = 20;
        let r = edd_vs_arl_sweep(&cfg).unwrap();
        assert!(r.cells.iter().all(|c| c.arl_mean.is_some()));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = small();
        cfg.trials = 0;
        assert!(edd_vs_arl_sweep(&cfg).is_err());
        let mut cfg = small();
        cfg.gammas = vec![0.5];
        assert!(edd_vs_arl_sweep(&cfg).is_err());
    }
}
