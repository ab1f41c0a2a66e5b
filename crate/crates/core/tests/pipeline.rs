// SPDX-License-Identifier: MIT OR Apache-2.0

use std::sync::Arc;

use rscusum::detection::{calibrate_lambda, run_detector_outcome, DetectorConfig, DetectorKind};
use rscusum::harness::{edd_vs_arl_sweep, export_results, read_csv, DetectorSpec, PostSpec, SweepConfig, ThresholdRule};
use rscusum::lfd::{lfd_basis_scan, LfdResult, UncertaintyClass};
use rscusum::sampling::{generate_stream, sample_model, SamplerOptions, StreamSpec};
use rscusum::{presets, Model, ScoreModel};

#[test]
fn lfd_to_detection_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (pre, basis) = presets::mvn_mean_shift();
    let opts = SamplerOptions::default();
    let class = UncertaintyClass::new(basis.clone(), "mean shift").unwrap();
    let lfd = lfd_basis_scan(&class, &pre, 2000, 4, &opts).unwrap();

    let path = dir.path().join("lfd.json");
    lfd.save(&path).unwrap();
    let back = LfdResult::load(&path).unwrap();
    let q = back.detection_model().unwrap();
    assert_eq!(q.to_json_string().unwrap(), basis[0].to_json_string().unwrap());

    let xs = sample_model(&pre, 3000, 5, &opts).unwrap();
    let cal = calibrate_lambda(&xs, &pre, &q, 1e-8, 64.0).unwrap();
    let cfg = DetectorConfig::new(DetectorKind::Rscusum, Arc::new(pre.clone()), Arc::new(q), cal.lambda_star, 500f64.ln()).unwrap();
    let stream = generate_stream(
        &StreamSpec {
            pre,
            post: basis[2].clone(),
            nu: Some(200),
            length: 1000,
            seed: 6,
        },
        &opts,
    )
    .unwrap();
    let out = run_detector_outcome(&cfg, &stream).unwrap();
    let t = out.stopping_time.expect("change is detected");
    assert!(t >= 150, "early alarm at {t}");
}

#[test]
fn quartic_pipeline_uses_mala() {
    let (pre, basis) = presets::quartic_exp(2);
    let opts = SamplerOptions::default();
    let xs = sample_model(&pre, 500, 1, &opts).unwrap();
    assert_eq!(xs.len(), 500);
    assert!(xs.iter().all(|x| x.len() == pre.dim() && x.iter().all(|v| v.is_finite())));
    let class = UncertaintyClass::new(basis, "quartic").unwrap();
    let lfd = lfd_basis_scan(&class, &pre, 500, 2, &opts).unwrap();
    assert_eq!(lfd.vertex_divergences.len(), 4);
}

#[test]
fn sweep_exports_and_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let (pre, basis) = presets::mvn_mean_shift();
    let mut cfg = SweepConfig::new(
        pre.clone(),
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
        vec![PostSpec {
            id: "P3".into(),
            model: basis[2].clone(),
        }],
        vec![50.0, 200.0],
    );
    cfg.trials = 30;
    cfg.stream_length = 1000;
    cfg.calibration_samples = 1000;
    cfg.threshold = ThresholdRule::ArlMatched {
        trials: 50,
        horizon_factor: 10.0,
    };
    let res = edd_vs_arl_sweep(&cfg).unwrap();
    assert!(res.errors.is_empty());
    assert_eq!(res.thresholds.len(), 4);
    assert!(res.thresholds.iter().all(|t| t.arl.is_some()));

    let files = export_results(&res, dir.path(), true).unwrap();
    assert_eq!(files.len(), 3);
    let rows = read_csv(&files[0]).unwrap();
    assert_eq!(rows, res.rows);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&files[1]).unwrap()).unwrap();
    assert_eq!(summary["cells"].as_array().unwrap().len(), 4);
    let dat = std::fs::read_to_string(&files[2]).unwrap();
    assert!(dat.lines().any(|l| l.starts_with('#')));
}

#[test]
fn models_load_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let (_, basis) = presets::rbm(2, 2, 3);
    let path = dir.path().join("rbm.json");
    basis[1].save(&path).unwrap();
    let back = Model::load(&path).unwrap();
    let x = nalgebra::dvector![0.3, -1.2];
    assert_eq!(back.hyvarinen_score(&x).unwrap(), basis[1].hyvarinen_score(&x).unwrap());
    let err = Model::load(dir.path().join("missing.json")).unwrap_err();
    assert!(err.to_string().contains("missing.json"));
}
