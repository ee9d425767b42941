use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use rolem::inference::{frobenius_error, hpd_interval};
use rolem::linalg::Mat;
use serde_json::json;

use super::{base_config, pool};
use crate::commands::fit::DRAWS_FILE;
use crate::config::{check_level, ScoreConfig};
use crate::draws::DrawsTable;
use crate::error::{CliError, CliResult};
use crate::io::{ensure_dir, fmt_f64, read_json, rows_mat, write_file, Standardization, TruthFile};
use crate::manifest::{Manifest, MANIFEST_FILE};
use crate::ScoreArgs;

pub const METRICS_FILE: &str = "metrics.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";

/// z for a two-sided 95% interval.
const Z95: f64 = 1.959_963_984_540_054;

fn resolve(args: &ScoreArgs) -> CliResult<ScoreConfig> {
    let mut c: ScoreConfig = base_config(&args.common, "score")?;
    if !args.fits.is_empty() {
        c.fits = args.fits.clone();
    }
    if !args.truths.is_empty() {
        c.truths = args.truths.clone();
    }
    if let Some(v) = args.level {
        c.level = v;
    }
    if let Some(v) = args.workers {
        c.workers = v;
    }
    if c.fits.is_empty() || c.fits.len() != c.truths.len() {
        return Err(CliError::usage(format!(
            "need one --truth per --fit (got {} fits, {} truths)",
            c.fits.len(),
            c.truths.len()
        )));
    }
    check_level(c.level)?;
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateScore {
    pub d_beta: f64,
    pub d_sigma: f64,
    /// Row-major over β entries.
    pub hpd_length: Vec<f64>,
    pub covered: Vec<bool>,
    pub shape: (usize, usize),
}

fn standardization_of(fit_dir: &Path) -> CliResult<Option<Standardization>> {
    let path = fit_dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let m = Manifest::read(&path)?;
    match m.details.get("standardization") {
        None | Some(serde_json::Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| CliError::data(format!("{}: standardization record: {e}", path.display()))),
    }
}

/// Scores one fit directory against a truth file, on the original scale of
/// the data when the fit was standardized.
pub fn score_one(fit_dir: &Path, truth_path: &Path, level: f64) -> CliResult<ReplicateScore> {
    let table = DrawsTable::read(&fit_dir.join(DRAWS_FILE))?;
    let truth: TruthFile = read_json(truth_path)?;
    let beta_true = rows_mat(&truth.beta, "truth beta")?;
    let sigma_true = rows_mat(&truth.sigma_eps, "truth sigma_eps")?;
    let (r, p) = beta_true.shape();
    if table.matrix_shape("beta") != Some((r, p)) || table.matrix_shape("sigma_eps") != Some((r, r)) {
        return Err(CliError::data(format!(
            "dimension mismatch: truth has beta {r}x{p}, draws in {} have beta {:?}",
            fit_dir.display(),
            table.matrix_shape("beta")
        )));
    }
    let scaling = standardization_of(fit_dir)?;
    let beta_factor = |i: usize, j: usize| scaling.as_ref().map_or(1.0, |s| s.y_sd[i] / s.x_sd[j]);

    let mut beta_hat = table.mean_matrix("beta", r, p, false)?;
    let mut sigma_hat = table.mean_matrix("sigma_eps", r, r, true)?;
    if let Some(s) = &scaling {
        beta_hat = s.beta_to_original(&beta_hat);
        sigma_hat = s.sigma_to_original(&sigma_hat);
    }
    let mut hpd_length = Vec::with_capacity(r * p);
    let mut covered = Vec::with_capacity(r * p);
    for i in 0..r {
        for j in 0..p {
            let f = beta_factor(i, j);
            let xs: Vec<f64> = table.column(&format!("beta_{}_{}", i + 1, j + 1)).expect("shape checked").iter().map(|v| v * f).collect();
            let (lo, hi) = hpd_interval(&xs, level)?;
            hpd_length.push(hi - lo);
            covered.push(lo <= beta_true[(i, j)] && beta_true[(i, j)] <= hi);
        }
    }
    Ok(ReplicateScore {
        d_beta: frobenius_error(&beta_hat, &beta_true)?,
        d_sigma: frobenius_error(&sigma_hat, &sigma_true)?,
        hpd_length,
        covered,
        shape: (r, p),
    })
}

pub fn metrics_csv(scores: &[ReplicateScore]) -> String {
    let mut out = String::from("replicate,quantity,index,value\n");
    for (k, s) in scores.iter().enumerate() {
        let rep = k + 1;
        let _ = writeln!(out, "{rep},d_beta,,{}", fmt_f64(s.d_beta));
        let _ = writeln!(out, "{rep},d_sigma_eps,,{}", fmt_f64(s.d_sigma));
        let p = s.shape.1;
        for (e, (len, cov)) in s.hpd_length.iter().zip(&s.covered).enumerate() {
            let idx = format!("{}:{}", e / p + 1, e % p + 1);
            let _ = writeln!(out, "{rep},hpd_length,{idx},{}", fmt_f64(*len));
            let _ = writeln!(out, "{rep},covered,{idx},{}", u8::from(*cov));
        }
    }
    out
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let phat = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (phat + z * z / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    (centre - half, centre + half)
}

pub fn aggregate_csv(scores: &[ReplicateScore]) -> String {
    let n = scores.len() as f64;
    let mean = |f: &dyn Fn(&ReplicateScore) -> f64| scores.iter().map(f).sum::<f64>() / n;
    let sd = |f: &dyn Fn(&ReplicateScore) -> f64, m: f64| {
        (scores.iter().map(|s| (f(s) - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
    };
    let md = mean(&|s| s.d_beta);
    let ms = mean(&|s| s.d_sigma);
    let hits: usize = scores.iter().map(|s| s.covered.iter().filter(|&&c| c).count()).sum();
    let total: usize = scores.iter().map(|s| s.covered.len()).sum();
    let lengths: Vec<f64> = scores.iter().flat_map(|s| s.hpd_length.iter().copied()).collect();
    let (lo, hi) = wilson_interval(hits, total, Z95);
    let rows = [
        ("replicates", n),
        ("mean_d_beta", md),
        ("sd_d_beta", sd(&|s| s.d_beta, md)),
        ("mean_d_sigma_eps", ms),
        ("sd_d_sigma_eps", sd(&|s| s.d_sigma, ms)),
        ("mean_hpd_length", lengths.iter().sum::<f64>() / lengths.len() as f64),
        ("coverage", hits as f64 / total as f64),
        ("coverage_ci95_lower", lo),
        ("coverage_ci95_upper", hi),
    ];
    let mut out = String::from("quantity,value\n");
    for (name, v) in rows {
        let _ = writeln!(out, "{name},{}", fmt_f64(v));
    }
    out
}

pub fn run(args: ScoreArgs) -> CliResult<()> {
    let start = Instant::now();
    let config = resolve(&args)?;
    let pairs: Vec<(PathBuf, PathBuf)> = config.fits.iter().cloned().zip(config.truths.iter().cloned()).collect();
    let scores = pool(config.workers)?
        .install(|| pairs.par_iter().map(|(f, t)| score_one(f, t, config.level)).collect::<Vec<_>>())
        .into_iter()
        .collect::<CliResult<Vec<_>>>()?;
    let out = &args.common.out;
    ensure_dir(out)?;
    let mut manifest = Manifest::new("score", &config, None);
    for (f, t) in &pairs {
        manifest.add_input(&f.join(DRAWS_FILE))?;
        manifest.add_input(t)?;
    }
    write_file(&out.join(METRICS_FILE), &metrics_csv(&scores))?;
    manifest.add_output(out, METRICS_FILE)?;
    if scores.len() > 1 {
        write_file(&out.join(AGGREGATE_FILE), &aggregate_csv(&scores))?;
        manifest.add_output(out, AGGREGATE_FILE)?;
    }
    manifest.details = json!({ "replicates": scores.len() });
    manifest.wall_time_secs = start.elapsed().as_secs_f64();
    manifest.write(out)
}

/// Frobenius error helper re-exported for tests.
pub fn d(estimate: &Mat<f64>, truth: &Mat<f64>) -> f64 {
    frobenius_error(estimate, truth).expect("same shape")
}
