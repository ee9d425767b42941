use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use rolem::inference::{bayes_factor, model_score, ModelScore};
use rolem::sampler::run_chain;
use rolem::{CorrKind, Dataset64};
use serde_json::json;

use super::{apply_model_args, base_config, check_u, frame_choice, load_data, pool, ModelFields};
use crate::config::{Criterion, SelectConfig};
use crate::error::CliResult;
use crate::io::{ensure_dir, fmt_f64, write_file};
use crate::manifest::Manifest;
use crate::SelectArgs;

pub const SELECTION_FILE: &str = "selection.csv";

fn resolve(args: &SelectArgs) -> CliResult<SelectConfig> {
    let mut c: SelectConfig = base_config(&args.common, "select")?;
    apply_model_args(
        &args.model,
        ModelFields {
            data: &mut c.data,
            error_model: &mut c.error_model,
            prior: &mut c.prior,
            sampling: &mut c.sampling,
            workers: &mut c.workers,
            standardize: &mut c.standardize,
            strict_missing: &mut c.strict_missing,
            frame: &mut c.frame,
        },
    );
    if let Some(v) = &args.u_grid {
        c.u_grid = v.clone();
    }
    if let Some(v) = &args.corr_grid {
        c.corr_grid = v.clone();
    }
    if let Some(v) = args.criterion {
        c.criterion = v;
    }
    c.validate()?;
    Ok(c)
}

pub struct Candidate {
    pub u: usize,
    pub corr: CorrKind,
    pub result: CliResult<ModelScore>,
}

fn fit_candidate(config: &SelectConfig, data: &Dataset64, u: usize, corr: CorrKind) -> CliResult<ModelScore> {
    check_u(u, data.r())?;
    let prior = config.prior.build(data.r(), data.p(), u, config.error_model)?;
    let tuning = config.sampling.tuning(0)?;
    let out = run_chain(data, &prior, corr, &tuning, frame_choice(config.frame))?;
    Ok(model_score(&out, data.p())?)
}

/// Fits every (u, corr) pair with the same seed. Failed candidates keep a
/// row with the failure message.
pub fn evaluate(config: &SelectConfig, data: &Dataset64) -> CliResult<Vec<Candidate>> {
    let grid: Vec<(usize, CorrKind)> =
        config.u_grid.iter().flat_map(|&u| config.corr_grid.iter().map(move |&c| (u, c))).collect();
    Ok(pool(config.workers)?.install(|| {
        grid.par_iter()
            .map(|&(u, corr)| Candidate {
                u,
                corr,
                result: fit_candidate(config, data, u, corr),
            })
            .collect()
    }))
}

/// Table sorted by the chosen criterion, failures last. The Bayes factor of
/// each candidate is `exp(−ΔBIC/2)` against the lowest BIC.
pub fn selection_csv(cands: &[Candidate], criterion: Criterion) -> String {
    let key = |s: &ModelScore| match criterion {
        Criterion::Bic => s.bic,
        Criterion::Waic => s.waic,
    };
    let mut order: Vec<&Candidate> = cands.iter().collect();
    order.sort_by(|a, b| match (&a.result, &b.result) {
        (Ok(x), Ok(y)) => key(x).total_cmp(&key(y)),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => std::cmp::Ordering::Equal,
    });
    let best_bic = cands.iter().filter_map(|c| c.result.as_ref().ok()).map(|s| s.bic).fold(f64::INFINITY, f64::min);
    let mut out = String::from("rank,u,corr,bic,waic,p_bic,p_waic,lppd,bayes_factor,status\n");
    for (k, c) in order.iter().enumerate() {
        match &c.result {
            Ok(s) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},ok",
                    k + 1,
                    c.u,
                    c.corr,
                    fmt_f64(s.bic),
                    fmt_f64(s.waic),
                    s.p_bic,
                    fmt_f64(s.p_waic),
                    fmt_f64(s.lppd),
                    fmt_f64(bayes_factor(s.bic - best_bic))
                );
            }
            Err(msg) => {
                let clean = msg.to_string().replace([',', '\n'], ";");
                let _ = writeln!(out, "{},{},{},,,,,,,failed: {clean}", k + 1, c.u, c.corr);
            }
        }
    }
    out
}

pub fn run(args: SelectArgs) -> CliResult<()> {
    let start = Instant::now();
    let config = resolve(&args)?;
    let data_path = config.data.clone().expect("validated");
    let (data, scaling) = load_data(&data_path, config.strict_missing, config.standardize)?;
    let cands = evaluate(&config, &data)?;
    if cands.iter().all(|c| c.result.is_err()) {
        // Report the first failure with its own exit code.
        return Err(cands.into_iter().find_map(|c| c.result.err()).expect("grid is non-empty"));
    }
    let out = &args.common.out;
    ensure_dir(out)?;
    write_file(&out.join(SELECTION_FILE), &selection_csv(&cands, config.criterion))?;
    let mut manifest = Manifest::new("select", &config, Some(config.sampling.seed));
    manifest.add_input(&data_path)?;
    manifest.add_output(out, SELECTION_FILE)?;
    manifest.details = json!({
        "n_subjects": data.n(),
        "r": data.r(),
        "p": data.p(),
        "failed_candidates": cands.iter().filter(|c| c.result.is_err()).count(),
        "standardization": scaling,
    });
    manifest.wall_time_secs = start.elapsed().as_secs_f64();
    manifest.write(out)
}
