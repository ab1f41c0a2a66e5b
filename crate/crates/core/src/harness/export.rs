// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::sweep::{SweepResult, SweepRow};
use crate::{Error, Result};

pub const CSV_HEADER: [&str; 8] = [
    "detector",
    "true_post",
    "gamma",
    "tau",
    "trial",
    "stopping_time",
    "delay",
    "censored",
];

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One line per row; floats carry 17 significant digits, missing values are empty fields.
pub fn export_csv(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(CSV_HEADER)?;
    for r in &result.rows {
        w.write_record([
            r.detector.clone(),
            r.true_post.clone(),
            float(r.gamma),
            float(r.tau),
            r.trial.to_string(),
            opt(r.stopping_time),
            opt(r.delay),
            r.censored.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn parse<T: std::str::FromStr>(field: &str, what: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::input(format!("csv: cannot parse {what} from {field:?}")))
}

fn parse_opt(field: &str, what: &str) -> Result<Option<usize>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse(field, what).map(Some)
    }
}

/// Reads a file written by [`export_csv`].
pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    if r.headers()?.iter().ne(CSV_HEADER) {
        return Err(Error::input(format!("{}: unexpected header", path.display())));
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(SweepRow {
                detector: rec[0].to_string(),
                true_post: rec[1].to_string(),
                gamma: parse(&rec[2], "gamma")?,
                tau: parse(&rec[3], "tau")?,
                trial: parse(&rec[4], "trial")?,
                stopping_time: parse_opt(&rec[5], "stopping_time")?,
                delay: parse_opt(&rec[6], "delay")?,
                censored: parse(&rec[7], "censored")?,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct Summary<'a> {
    nu: usize,
    stream_length: usize,
    lambdas: &'a [super::sweep::LambdaRecord],
    thresholds: &'a [super::sweep::ThresholdRecord],
    cells: &'a [super::sweep::CellSummary],
    errors: &'a [super::sweep::SweepError],
}

/// Everything except the per-trial rows, as pretty JSON.
pub fn export_summary(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let s = Summary {
        nu: result.nu,
        stream_length: result.stream_length,
        lambdas: &result.lambdas,
        thresholds: &result.thresholds,
        cells: &result.cells,
        errors: &result.errors,
    };
    std::fs::write(path, serde_json::to_string_pretty(&s)?).map_err(|e| Error::io(path, e))
}

/// Gnuplot data: one indexed block per (detector, true post) with columns
/// `gamma log_gamma edd edd_se arl`.
pub fn export_gnuplot(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let mut keys: Vec<(&str, &str)> = Vec::new();
    for c in &result.cells {
        let k = (c.detector.as_str(), c.true_post.as_str());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for (i, (det, post)) in keys.iter().enumerate() {
        if i > 0 {
            writeln!(w, "\n").map_err(io)?;
        }
        writeln!(w, "# {det} {post}").map_err(io)?;
        writeln!(w, "# gamma log_gamma edd edd_se arl").map_err(io)?;
        let mut cells: Vec<_> = result
            .cells
            .iter()
            .filter(|c| c.detector == *det && c.true_post == *post)
            .collect();
        cells.sort_by(|a, b| a.gamma.total_cmp(&b.gamma));
        let na = |v: Option<f64>| v.map(float).unwrap_or_else(|| "NaN".into());
        for c in cells {
            writeln!(
                w,
                "{} {} {} {} {}",
                float(c.gamma),
                float(c.gamma.ln()),
                na(c.edd_mean),
                na(c.edd_std_error),
                na(c.arl_mean)
            )
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Writes `sweep.csv`, `summary.json` and, if asked, `edd_vs_logarl.dat` into `dir`.
pub fn export_results(result: &SweepResult, dir: impl AsRef<Path>, gnuplot: bool) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = vec![dir.join("sweep.csv"), dir.join("summary.json")];
    export_csv(result, &out[0])?;
    export_summary(result, &out[1])?;
    if gnuplot {
        out.push(dir.join("edd_vs_logarl.dat"));
        export_gnuplot(result, &out[2])?;
    }
    Ok(out)
}
