// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use rscusum::detection::{DEFAULT_LAMBDA_MAX, DEFAULT_LAMBDA_TOL};
use rscusum::lfd::{LfdMode, LfdResult, NetworkTrainConfig, SimplexConfig};
use rscusum::sampling::SamplerOptions;
use rscusum::{presets, Model, Point, ScoreModel};

use crate::Failure;

/// Reads a JSON config, reporting the offending field path on failure.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        Failure::Usage(format!("{}: at `{}`: {}", path.display(), e.path(), e.inner()))
    })
}

/// A model given inline or as `{"path": "model.json"}`.
///
/// A referenced file may hold a model or an LFD result; the latter resolves to its detection model.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Path { path: PathBuf },
    Inline(Model),
}

impl ModelRef {
    pub fn resolve(&self, base: &Path) -> Result<Model, Failure> {
        match self {
            ModelRef::Inline(m) => Ok(m.clone()),
            ModelRef::Path { path } => load_model(&base.join(path)),
        }
    }
}

pub fn load_model(path: &Path) -> Result<Model, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read model {}: {e}", path.display())))?;
    match Model::from_json_str(&text) {
        Ok(m) => Ok(m),
        Err(model_err) => match LfdResult::from_json_str(&text) {
            Ok(r) => Ok(r.detection_model()?),
            Err(_) => Err(Failure::Usage(format!("{}: {model_err}", path.display()))),
        },
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PresetSpec {
    pub name: String,
    #[serde(default = "two")]
    pub dim: usize,
    #[serde(default = "two")]
    pub hidden: usize,
    #[serde(default)]
    pub seed: u64,
}

fn two() -> usize {
    2
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClassSpec {
    Preset { preset: PresetSpec },
    Explicit { pre: ModelRef, basis: Vec<ModelRef> },
}

impl ClassSpec {
    pub fn resolve(&self, base: &Path) -> Result<(Model, Vec<Model>), Failure> {
        match self {
            ClassSpec::Preset { preset } => match preset.name.as_str() {
                "mvn_mean_shift" => Ok(presets::mvn_mean_shift()),
                "mvn_covariance_shift" => Ok(presets::mvn_covariance_shift()),
                "quartic_exp" => Ok(presets::quartic_exp(preset.dim)),
                "rbm" => Ok(presets::rbm(preset.dim, preset.hidden, preset.seed)),
                other => Err(Failure::Usage(format!(
                    "unknown preset {other:?} (expected mvn_mean_shift, mvn_covariance_shift, quartic_exp or rbm)"
                ))),
            },
            ClassSpec::Explicit { pre, basis } => Ok((
                pre.resolve(base)?,
                basis.iter().map(|b| b.resolve(base)).collect::<Result<_, _>>()?,
            )),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LfdConfig {
    #[serde(flatten)]
    pub class: ClassSpec,
    pub mode: LfdMode,
    #[serde(default)]
    pub seed: u64,
    /// Samples per vertex for the basis scan.
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub simplex: SimplexConfig,
    #[serde(default)]
    pub network: NetworkTrainConfig,
    #[serde(default)]
    pub sampler: SamplerOptions,
}

fn default_samples() -> usize {
    10_000
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrateConfig {
    pub pre: ModelRef,
    pub post: ModelRef,
    /// CSV of pre-change observations (`t,x_1,..,x_d`); drawn from `pre` when absent.
    #[serde(default)]
    pub samples: Option<PathBuf>,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_lambda_max")]
    pub lambda_max: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sampler: SamplerOptions,
}

fn default_tol() -> f64 {
    DEFAULT_LAMBDA_TOL
}

fn default_lambda_max() -> f64 {
    DEFAULT_LAMBDA_MAX
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleConfig {
    pub pre: ModelRef,
    pub post: ModelRef,
    /// 1-based change point; absent means no change.
    #[serde(default)]
    pub nu: Option<usize>,
    pub length: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sampler: SamplerOptions,
}

/// Reads `t,x_1,..,x_d` rows, checking the dimension against `model`.
pub fn read_stream(reader: impl std::io::Read, source: &str, model: &dyn ScoreModel) -> Result<Vec<Point>, Failure> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r
        .headers()
        .map_err(|e| Failure::Usage(format!("{source}: {e}")))?
        .clone();
    if headers.get(0) != Some("t") {
        return Err(Failure::Usage(format!("{source}: first column must be `t`")));
    }
    let d = headers.len() - 1;
    if d != model.dim() {
        return Err(Failure::Usage(format!(
            "{source}: stream has {d} coordinates, model expects {}",
            model.dim()
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Failure::Usage(format!("{source}: {e}")))?;
        let xs: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| Failure::Usage(format!("{source}: row {}: {e}", i + 1)))?;
        out.push(Point::from_vec(xs));
    }
    Ok(out)
}

/// Writes `t,x_1,..,x_d` rows with 17 significant digits.
pub fn write_stream(path: &Path, xs: &[Point]) -> Result<(), Failure> {
    let io = |e: csv::Error| Failure::Runtime(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let d = xs.first().map_or(0, |x| x.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("x_{i}")));
    w.write_record(&header).map_err(io)?;
    for (t, x) in xs.iter().enumerate() {
        let mut rec = vec![(t + 1).to_string()];
        rec.extend(x.iter().map(|v| format!("{v:.16e}")));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}
