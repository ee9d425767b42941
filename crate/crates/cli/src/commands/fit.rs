use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use rolem::inference::{model_score, ModelScore};
use rolem::sampler::{run_chain, AcceptCounts, ChainOutput, Counter};
use rolem::{Dataset64, ErrorModel};
use serde_json::json;

use super::{apply_model_args, base_config, check_u, frame_choice, load_data, pool, ModelFields};
use crate::config::FitConfig;
use crate::draws::{is_monitored, summarize_columns, summary_csv, DrawsTable};
use crate::error::{CliError, CliResult};
use crate::io::{ensure_dir, fmt_f64, mat_rows, write_file};
use crate::manifest::Manifest;
use crate::FitArgs;

pub const DRAWS_FILE: &str = "draws.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const ACF_FILE: &str = "acf.csv";
pub const SCORES_FILE: &str = "scores.csv";

fn resolve(args: &FitArgs) -> CliResult<FitConfig> {
    let mut c: FitConfig = base_config(&args.common, "fit")?;
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
    c.u = args.u.or(c.u);
    if let Some(v) = args.corr {
        c.corr = v;
    }
    if let Some(v) = args.chains {
        c.chains = v;
    }
    if let Some(v) = args.level {
        c.hpd_level = v;
    }
    c.validate()?;
    Ok(c)
}

/// Runs `config.chains` chains (seeds `seed`, `seed + 1`, ...).
pub fn fit_chains(config: &FitConfig, data: &Dataset64) -> CliResult<Vec<ChainOutput<f64>>> {
    let u = config.u.expect("validated");
    check_u(u, data.r())?;
    let prior = config.prior.build(data.r(), data.p(), u, config.error_model)?;
    let tunings = (0..config.chains).map(|c| config.sampling.tuning(c)).collect::<CliResult<Vec<_>>>()?;
    let results: Vec<_> = pool(config.workers)?.install(|| {
        tunings
            .par_iter()
            .map(|t| run_chain(data, &prior, config.corr, t, frame_choice(config.frame)))
            .collect()
    });
    results.into_iter().map(|r| r.map_err(CliError::from)).collect()
}

fn add(a: Counter, b: Counter) -> Counter {
    Counter { accepted: a.accepted + b.accepted, attempted: a.attempted + b.attempted }
}

/// All chains' draws as one output, for information criteria.
pub fn pooled(chains: &[ChainOutput<f64>]) -> ChainOutput<f64> {
    let mut out = chains[0].clone();
    for c in &chains[1..] {
        out.draws.extend(c.draws.iter().cloned());
        out.accept = AcceptCounts {
            nu: add(out.accept.nu, c.accept.nu),
            projection: add(out.accept.projection, c.accept.projection),
            rho: add(out.accept.rho, c.accept.rho),
            frame_failures: out.accept.frame_failures + c.accept.frame_failures,
        };
    }
    out
}

pub fn scores_csv(s: &ModelScore) -> String {
    format!(
        "bic,waic,lppd,p_waic,p_bic,max_loglik\n{},{},{},{},{},{}\n",
        fmt_f64(s.bic),
        fmt_f64(s.waic),
        fmt_f64(s.lppd),
        fmt_f64(s.p_waic),
        s.p_bic,
        fmt_f64(s.max_loglik)
    )
}

fn diagnostics_csv(chains: &[ChainOutput<f64>], summary: &[crate::draws::ColumnSummary]) -> String {
    let mut out = String::from("section,name,chain,value\n");
    for (k, c) in chains.iter().enumerate() {
        let chain = k + 1;
        let mut blocks = vec![("projection", c.accept.projection)];
        if c.corr.has_rho() {
            blocks.push(("rho", c.accept.rho));
        }
        if c.error_model == ErrorModel::T {
            blocks.push(("nu", c.accept.nu));
        }
        for (name, counter) in blocks {
            let _ = writeln!(out, "acceptance_rate,{name},{chain},{}", fmt_f64(counter.rate()));
            let _ = writeln!(out, "accepted,{name},{chain},{}", counter.accepted);
            let _ = writeln!(out, "attempted,{name},{chain},{}", counter.attempted);
        }
        let _ = writeln!(out, "frame_failures,projection,{chain},{}", c.accept.frame_failures);
        let _ = writeln!(out, "proposal_scale,sigma2_p,{chain},{}", fmt_f64(c.scales.sigma2_p));
        if c.corr.has_rho() {
            let _ = writeln!(out, "proposal_scale,delta_rho,{chain},{}", fmt_f64(c.scales.delta_rho));
        }
        if c.error_model == ErrorModel::T {
            let _ = writeln!(out, "proposal_scale,delta_nu,{chain},{}", fmt_f64(c.scales.delta_nu));
        }
    }
    for e in summary {
        let _ = writeln!(out, "ess,{}[{}],all,{}", e.parameter, e.index, fmt_f64(e.ess));
        if let Some(rhat) = e.rhat {
            let _ = writeln!(out, "split_rhat,{}[{}],all,{}", e.parameter, e.index, fmt_f64(rhat));
        }
    }
    out
}

fn acf_csv(summary: &[crate::draws::ColumnSummary]) -> String {
    let mut out = String::from("parameter,index,lag,acf\n");
    for e in summary {
        for (lag, v) in e.acf.iter().enumerate() {
            let _ = writeln!(out, "{},{},{lag},{}", e.parameter, e.index, fmt_f64(*v));
        }
    }
    out
}

pub fn run(args: FitArgs) -> CliResult<()> {
    let start = Instant::now();
    let config = resolve(&args)?;
    let data_path = config.data.clone().expect("validated");
    let (data, scaling) = load_data(&data_path, config.strict_missing, config.standardize)?;
    let chains = fit_chains(&config, &data)?;
    let out: &Path = &args.common.out;
    ensure_dir(out)?;

    let table = DrawsTable::from_chains(&chains);
    let summary = summarize_columns(&table, config.hpd_level, is_monitored)?;
    let score = model_score(&pooled(&chains), data.p())?;
    let files = [
        (DRAWS_FILE, table.to_csv()),
        (SUMMARY_FILE, summary_csv(&summary)),
        (DIAGNOSTICS_FILE, diagnostics_csv(&chains, &summary)),
        (ACF_FILE, acf_csv(&summary)),
        (SCORES_FILE, scores_csv(&score)),
    ];
    let mut manifest = Manifest::new("fit", &config, Some(config.sampling.seed));
    manifest.add_input(&data_path)?;
    for (name, contents) in &files {
        write_file(&out.join(name), contents)?;
        manifest.add_output(out, name)?;
    }
    let per_chain: Vec<_> = chains
        .iter()
        .map(|c| {
            json!({
                "frame": mat_rows(c.frame.matrix()),
                "acceptance": {
                    "projection": c.accept.projection.rate(),
                    "rho": c.corr.has_rho().then(|| c.accept.rho.rate()),
                    "nu": (c.error_model == ErrorModel::T).then(|| c.accept.nu.rate()),
                    "frame_failures": c.accept.frame_failures,
                },
                "scales": c.scales,
            })
        })
        .collect();
    manifest.details = json!({
        "mode": if config.error_model == ErrorModel::T { "robust (matrix-t errors)" } else { "normal errors" },
        "n_subjects": data.n(),
        "r": data.r(),
        "p": data.p(),
        "chains": per_chain,
        "standardization": scaling,
    });
    manifest.wall_time_secs = start.elapsed().as_secs_f64();
    manifest.write(out)
}
