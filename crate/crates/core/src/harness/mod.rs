// SPDX-License-Identifier: MIT OR Apache-2.0

//! Monte Carlo estimation of run lengths and detection delays.
//!
//! Trials are independent and seeded by `derive_seed(base_seed, trial)`, so every estimate is a
//! pure function of its arguments regardless of how many worker threads rayon uses.

mod export;
mod sweep;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use export::{export_csv, export_gnuplot, export_results, export_summary, read_csv, CSV_HEADER};
pub use sweep::{
    edd_vs_arl_sweep, CellSummary, DetectorSpec, LambdaRecord, PostSpec, SweepConfig, SweepError,
    SweepResult, SweepRow, ThresholdRecord, ThresholdRule,
};

use crate::detection::{first_passage_times, DetectorConfig};
use crate::models::Model;
use crate::sampling::{derive_seed, SamplerOptions, StreamSource};
use crate::stats::mean_and_se;
use crate::{Error, Point, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArlEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Runs that never crossed; each counted as `max_len`.
    pub censored: usize,
    pub trials: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EddEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Runs that stopped before the change point; excluded from the mean.
    pub false_alarms: usize,
    /// Runs that never crossed; counted as stopping at the end of the stream.
    pub censored: usize,
    pub trials: usize,
}

fn stream_passages(
    cfg: &DetectorConfig,
    pre: &Model,
    post: &Model,
    nu: Option<usize>,
    taus: &[f64],
    max_len: usize,
    seed: u64,
    opts: &SamplerOptions,
) -> Result<Vec<Option<usize>>> {
    let mut src = StreamSource::new(pre.clone(), post.clone(), nu, seed, opts.clone())?;
    first_passage_times(cfg, taus, max_len, || src.next_observation())
}

/// Mean time to false alarm over `trials` change-free streams, censored at `max_len`.
pub fn estimate_arl(
    cfg: &DetectorConfig,
    pre: &Model,
    trials: usize,
    max_len: usize,
    base_seed: u64,
    opts: &SamplerOptions,
) -> Result<ArlEstimate> {
    if trials == 0 || max_len == 0 {
        return Err(Error::input("estimate_arl: trials and max_len must be positive"));
    }
    let times: Vec<Option<usize>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = derive_seed(base_seed, t as u64);
            Ok(stream_passages(cfg, pre, pre, None, &[cfg.tau()], max_len, seed, opts)?[0])
        })
        .collect::<Result<_>>()?;
    let censored = times.iter().filter(|t| t.is_none()).count();
    let values: Vec<f64> = times.iter().map(|t| t.unwrap_or(max_len) as f64).collect();
    let (mean, std_error) = mean_and_se(&values);
    Ok(ArlEstimate {
        mean,
        std_error,
        censored,
        trials,
    })
}

/// Mean delay `T − ν + 1` over trials with `T ≥ ν`, for streams changing at `nu`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_edd(
    cfg: &DetectorConfig,
    pre: &Model,
    post_truth: &Model,
    nu: usize,
    trials: usize,
    stream_length: usize,
    base_seed: u64,
    opts: &SamplerOptions,
) -> Result<EddEstimate> {
    if trials == 0 || nu == 0 || nu > stream_length {
        return Err(Error::input(format!(
            "estimate_edd: need trials >= 1 and 1 <= nu <= stream_length (got {trials}, {nu}, {stream_length})"
        )));
    }
    let times: Vec<Option<usize>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = derive_seed(base_seed, t as u64);
            Ok(stream_passages(cfg, pre, post_truth, Some(nu), &[cfg.tau()], stream_length, seed, opts)?[0])
        })
        .collect::<Result<_>>()?;
    let false_alarms = times.iter().filter(|t| t.is_some_and(|t| t < nu)).count();
    let censored = times.iter().filter(|t| t.is_none()).count();
    let delays: Vec<f64> = times
        .iter()
        .filter_map(|t| match t {
            Some(t) if *t >= nu => Some((t - nu + 1) as f64),
            Some(_) => None,
            None => Some((stream_length - nu + 1) as f64),
        })
        .collect();
    if delays.is_empty() {
        return Err(Error::Estimation(format!("all {trials} trials raised a false alarm")));
    }
    let (mean, std_error) = mean_and_se(&delays);
    Ok(EddEstimate {
        mean,
        std_error,
        false_alarms,
        censored,
        trials,
    })
}

/// The full path `Z(1), …, Z(n)` over `stream`, ignoring the threshold.
pub fn score_trajectory(cfg: &DetectorConfig, stream: &[Point]) -> Result<Vec<f64>> {
    let mut z = 0.0f64;
    stream
        .iter()
        .map(|x| {
            z = (z + cfg.instantaneous_score(x)?).max(0.0);
            Ok(z)
        })
        .collect()
}

/// Threshold whose empirical ARL first reaches `gamma` on a fixed set of change-free streams.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedThreshold {
    pub gamma: f64,
    pub tau: f64,
    pub arl: ArlEstimate,
}

/// Running-maximum records `(level, time)` of `Z` along one stream.
struct Ladder {
    records: Vec<(f64, usize)>,
}

impl Ladder {
    fn stopping_time(&self, tau: f64, horizon: usize) -> Option<usize> {
        let i = self.records.partition_point(|&(z, _)| z < tau);
        self.records.get(i).map(|&(_, t)| t).filter(|&t| t <= horizon)
    }
}

fn ladder<F>(cfg: &DetectorConfig, stop_at: f64, horizon: usize, mut next: F) -> Result<Ladder>
where
    F: FnMut() -> Result<Point>,
{
    let mut records = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut z = 0.0f64;
    for n in 1..=horizon {
        z = (z + cfg.instantaneous_score(&next()?)?).max(0.0);
        if z > best {
            best = z;
            records.push((z, n));
            if z >= stop_at {
                break;
            }
        }
    }
    Ok(Ladder { records })
}

fn arl_at(ladders: &[Ladder], tau: f64, horizon: usize) -> ArlEstimate {
    let times: Vec<Option<usize>> = ladders.iter().map(|l| l.stopping_time(tau, horizon)).collect();
    let values: Vec<f64> = times.iter().map(|t| t.unwrap_or(horizon) as f64).collect();
    let (mean, std_error) = mean_and_se(&values);
    ArlEstimate {
        mean,
        std_error,
        censored: times.iter().filter(|t| t.is_none()).count(),
        trials: ladders.len(),
    }
}

/// For each target `γ`, the smallest `τ` whose empirical ARL over `trials` change-free streams
/// (censored at `horizon`) is at least `γ`.
///
/// All targets share the same streams, so the returned thresholds are non-decreasing in `γ`.
pub fn arl_matched_thresholds(
    cfg: &DetectorConfig,
    pre: &Model,
    gammas: &[f64],
    trials: usize,
    horizon: usize,
    base_seed: u64,
    opts: &SamplerOptions,
) -> Result<Vec<MatchedThreshold>> {
    if trials == 0 || horizon == 0 {
        return Err(Error::input("arl matching: trials and horizon must be positive"));
    }
    if let Some(g) = gammas.iter().find(|g| !(g.is_finite() && **g >= 1.0)) {
        return Err(Error::input(format!("arl matching: target ARL must be >= 1, got {g}")));
    }
    let gmax = gammas.iter().cloned().fold(1.0, f64::max);
    if gmax > horizon as f64 {
        return Err(Error::input(format!(
            "arl matching: horizon {horizon} is below the largest target {gmax}"
        )));
    }
    let mut stop_at = gmax.ln() + 2.0;
    for _ in 0..4 {
        let ladders: Vec<Ladder> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut src = StreamSource::new(pre.clone(), pre.clone(), None, derive_seed(base_seed, t as u64), opts.clone())?;
                ladder(cfg, stop_at, horizon, || src.next_observation())
            })
            .collect::<Result<_>>()?;
        if arl_at(&ladders, stop_at, horizon).mean < gmax {
            stop_at = 2.0 * stop_at + 1.0;
            continue;
        }
        return Ok(gammas
            .iter()
            .map(|&gamma| {
                let (mut lo, mut hi) = (0.0, stop_at);
                if arl_at(&ladders, 0.0, horizon).mean >= gamma {
                    hi = 0.0;
                }
                while hi - lo > 1e-12 * hi.max(1.0) {
                    let mid = 0.5 * (lo + hi);
                    if arl_at(&ladders, mid, horizon).mean >= gamma {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                MatchedThreshold {
                    gamma,
                    tau: hi,
                    arl: arl_at(&ladders, hi, horizon),
                }
            })
            .collect());
    }
    Err(Error::Estimation(format!(
        "arl matching: empirical ARL stays below {gmax} up to tau = {stop_at}"
    )))
}
