// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;
use std::sync::Arc;

use rscusum::detection::{calibrate_lambda, run_detector_outcome, DetectorConfig, DetectorKind};
use rscusum::harness::{edd_vs_arl_sweep, export_results, SweepConfig};
use rscusum::lfd::{
    lfd_basis_scan, lfd_gaussian_location, lfd_network_train, lfd_simplex_optimize, LfdMode,
    UncertaintyClass,
};
use rscusum::models::GaussianModel;
use rscusum::sampling::{generate_stream, sample_model, StreamSpec};
use rscusum::Model;

use crate::config::{
    load_model, read_config, read_stream, write_stream, CalibrateConfig, LfdConfig, SampleConfig,
};
use crate::manifest::Manifest;
use crate::{BenchArgs, DetectArgs, Failure};

fn base_dir(config: &Path) -> &Path {
    config.parent().unwrap_or(Path::new("."))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn gaussian_candidates(pre: &Model, basis: &[Model]) -> Result<(GaussianModel, Vec<GaussianModel>), Failure> {
    let as_gaussian = |m: &Model| match m {
        Model::Gaussian(g) => Ok(g.clone()),
        _ => Err(Failure::Usage("closed_form mode needs Gaussian pre and basis models".into())),
    };
    let pre = as_gaussian(pre)?;
    let basis: Vec<GaussianModel> = basis.iter().map(as_gaussian).collect::<Result<_, _>>()?;
    if basis.iter().any(|b| b.cov() != basis[0].cov()) {
        return Err(Failure::Usage("closed_form mode needs a common basis covariance".into()));
    }
    Ok((pre, basis))
}

pub fn lfd(config: &Path, out: &Path, seed: Option<u64>, manifest: &mut Manifest) -> Result<(), Failure> {
    let mut cfg: LfdConfig = read_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.simplex.seed = cfg.seed;
    cfg.network.seed = cfg.seed;
    cfg.simplex.sampler = cfg.sampler.clone();
    cfg.network.sampler = cfg.sampler.clone();
    manifest.config(config, &cfg);
    manifest.seed(cfg.seed);

    let (pre, basis) = cfg.class.resolve(base_dir(config))?;
    let result = match cfg.mode {
        LfdMode::ClosedForm => {
            let (pre, basis) = gaussian_candidates(&pre, &basis)?;
            let means: Vec<_> = basis.iter().map(|b| b.mean().clone()).collect();
            lfd_gaussian_location(&pre, &means, basis[0].cov())?
        }
        mode => {
            let class = UncertaintyClass::new(basis, "")?;
            match mode {
                LfdMode::BasisScan => lfd_basis_scan(&class, &pre, cfg.n_samples, cfg.seed, &cfg.sampler)?,
                LfdMode::Simplex => lfd_simplex_optimize(&class, &pre, &cfg.simplex)?,
                _ => lfd_network_train(&class, &pre, &cfg.network)?,
            }
        }
    };
    for w in &result.warnings {
        log::warn!("{w}");
    }
    result.save(out)?;
    manifest.output(out);
    Ok(())
}

pub fn calibrate(config: &Path, out: &Path, seed: Option<u64>, manifest: &mut Manifest) -> Result<(), Failure> {
    let mut cfg: CalibrateConfig = read_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    manifest.config(config, &cfg);
    manifest.seed(cfg.seed);
    let base = base_dir(config);
    let pre = cfg.pre.resolve(base)?;
    let post = cfg.post.resolve(base)?;
    let samples = match &cfg.samples {
        Some(p) => {
            let p = base.join(p);
            let f = std::fs::File::open(&p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            read_stream(f, &p.display().to_string(), &pre)?
        }
        None => sample_model(&pre, cfg.n_samples, cfg.seed, &cfg.sampler)?,
    };
    let cal = calibrate_lambda(&samples, &pre, &post, cfg.tol, cfg.lambda_max)?;
    write_json(out, &cal)?;
    manifest.output(out);
    Ok(())
}

pub fn detect(args: &DetectArgs, manifest: &mut Manifest) -> Result<(), Failure> {
    let kind: DetectorKind = args.kind.parse()?;
    let pre = load_model(&args.pre)?;
    let post = load_model(&args.post)?;
    let cfg = DetectorConfig::new(kind, Arc::new(pre.clone()), Arc::new(post), args.lambda, args.tau)?;
    manifest.config(
        &args.pre,
        serde_json::json!({
            "pre": args.pre, "post": args.post, "input": args.input,
            "kind": kind, "lambda": args.lambda, "tau": args.tau,
        }),
    );
    let stream = if args.input == Path::new("-") {
        read_stream(std::io::stdin().lock(), "stdin", &pre)?
    } else {
        let f = std::fs::File::open(&args.input)
            .map_err(|e| Failure::Usage(format!("{}: {e}", args.input.display())))?;
        read_stream(f, &args.input.display().to_string(), &pre)?
    };
    let outcome = run_detector_outcome(&cfg, &stream)?;
    println!(
        "{}",
        serde_json::to_string(&outcome).map_err(|e| Failure::Runtime(e.to_string()))?
    );
    Ok(())
}

pub fn bench(args: &BenchArgs, seed: Option<u64>, manifest: &mut Manifest) -> Result<(), Failure> {
    let mut cfg: SweepConfig = read_config(&args.config)?;
    if let Some(s) = seed {
        cfg.base_seed = s;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    manifest.config(&args.config, &cfg);
    manifest.seed(cfg.base_seed);
    let result = edd_vs_arl_sweep(&cfg)?;
    for e in &result.errors {
        log::warn!("sweep: {} / {:?} / {:?}: {}", e.detector, e.true_post, e.trial, e.message);
    }
    for p in export_results(&result, &args.out_dir, args.gnuplot)? {
        manifest.output(p);
    }
    Ok(())
}

pub fn sample(config: &Path, out: &Path, seed: Option<u64>, manifest: &mut Manifest) -> Result<(), Failure> {
    let mut cfg: SampleConfig = read_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    manifest.config(config, &cfg);
    manifest.seed(cfg.seed);
    let base = base_dir(config);
    let spec = StreamSpec {
        pre: cfg.pre.resolve(base)?,
        post: cfg.post.resolve(base)?,
        nu: cfg.nu,
        length: cfg.length,
        seed: cfg.seed,
    };
    let xs = generate_stream(&spec, &cfg.sampler)?;
    write_stream(out, &xs)?;
    manifest.output(out);
    Ok(())
}
