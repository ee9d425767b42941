use std::time::Instant;

use rolem::simgen::{generate, replicate_rng, ErrorKind, MIXTURE_VARIANCES, MIXTURE_WEIGHTS, NORMAL_VARIANCE, T4_DOF};
use serde_json::json;

use super::base_config;
use crate::config::SimulateConfig;
use crate::error::CliResult;
use crate::io::{dataset_to_csv, ensure_dir, to_json, write_file, TruthFile};
use crate::manifest::Manifest;
use crate::SimulateArgs;

pub const DATA_FILE: &str = "data.csv";
pub const TRUTH_FILE: &str = "truth.json";

fn resolve(args: &SimulateArgs) -> CliResult<SimulateConfig> {
    let mut c: SimulateConfig = base_config(&args.common, "simulate")?;
    if let Some(v) = args.preset {
        c.preset = v;
    }
    c.r = args.r.or(c.r);
    c.p = args.p.or(c.p);
    c.u = args.u.or(c.u);
    c.n = args.n.or(c.n);
    c.j = args.j.or(c.j);
    c.rho = args.rho.or(c.rho);
    c.corr = args.corr.or(c.corr);
    c.error_kind = args.error_kind.or(c.error_kind);
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if let Some(v) = args.replicates {
        c.replicates = v;
    }
    Ok(c)
}

fn error_law(kind: ErrorKind) -> serde_json::Value {
    match kind {
        ErrorKind::T4 => json!({ "kind": kind.as_str(), "dof": T4_DOF }),
        ErrorKind::NormalVar2 => json!({ "kind": kind.as_str(), "variance": NORMAL_VARIANCE }),
        ErrorKind::Mixture => json!({
            "kind": kind.as_str(),
            "weights": [MIXTURE_WEIGHTS.0, MIXTURE_WEIGHTS.1],
            "variances": [MIXTURE_VARIANCES.0, MIXTURE_VARIANCES.1],
        }),
    }
}

/// Writes `data.csv` and `truth.json`, in `out` for one replicate or in
/// `out/rep_001`, `out/rep_002`, ... for several. Replicate k draws from
/// stream k of the seed.
pub fn run(args: SimulateArgs) -> CliResult<()> {
    let start = Instant::now();
    let config = resolve(&args)?;
    let design = config.design()?;
    let out = &args.common.out;
    ensure_dir(out)?;
    let mut manifest = Manifest::new("simulate", &config, Some(config.seed));
    let width = config.replicates.to_string().len().max(3);
    for k in 0..config.replicates {
        let (data, truth) = generate::<f64, _>(&design, &mut replicate_rng(config.seed, k as u64))?;
        let rel = if config.replicates == 1 { String::new() } else { format!("rep_{:0width$}/", k + 1) };
        ensure_dir(&out.join(&rel))?;
        write_file(&out.join(format!("{rel}{DATA_FILE}")), &dataset_to_csv(&data))?;
        write_file(&out.join(format!("{rel}{TRUTH_FILE}")), &to_json(&TruthFile::from(&truth)))?;
        manifest.add_output(out, &format!("{rel}{DATA_FILE}"))?;
        manifest.add_output(out, &format!("{rel}{TRUTH_FILE}"))?;
    }
    manifest.details = json!({ "design": design, "error_law": error_law(design.error_kind) });
    manifest.wall_time_secs = start.elapsed().as_secs_f64();
    manifest.write(out)
}
