pub mod fit;
pub mod score;
pub mod select;
pub mod simulate;
pub mod summarize;

use std::path::Path;

use rolem::sampler::FrameChoice;
use rolem::Dataset64;
use serde::de::DeserializeOwned;

use crate::config::{read_config, FrameKind, PriorConfig, SamplingConfig};
use crate::error::{CliError, CliResult};
use crate::io::{ingest, standardize, Standardization};
use crate::manifest::Manifest;
use crate::{CommonArgs, ModelArgs};

/// Base config before flags: the manifest's if rerunning, else the JSON
/// config file, else defaults.
pub(crate) fn base_config<T: DeserializeOwned + Default>(common: &CommonArgs, command: &str) -> CliResult<T> {
    if let Some(path) = &common.from_manifest {
        let manifest = Manifest::read(path)?;
        manifest.verify_inputs()?;
        return manifest.config_for(command);
    }
    match &common.config {
        Some(path) => read_config(path),
        None => Ok(T::default()),
    }
}

pub(crate) struct ModelFields<'a> {
    pub data: &'a mut Option<std::path::PathBuf>,
    pub error_model: &'a mut rolem::ErrorModel,
    pub prior: &'a mut PriorConfig,
    pub sampling: &'a mut SamplingConfig,
    pub workers: &'a mut usize,
    pub standardize: &'a mut bool,
    pub strict_missing: &'a mut bool,
    pub frame: &'a mut FrameKind,
}

pub(crate) fn apply_model_args(args: &ModelArgs, f: ModelFields<'_>) {
    if let Some(v) = &args.data {
        *f.data = Some(v.clone());
    }
    if let Some(v) = args.error_model {
        *f.error_model = v;
    }
    if let Some(v) = args.prior {
        f.prior.preset = v;
    }
    if let Some(v) = args.structured_prior {
        f.prior.structured = Some(v);
    }
    let s = f.sampling;
    if let Some(v) = args.burn_in {
        s.burn_in = v;
    }
    if let Some(v) = args.samples {
        s.n_samples = v;
    }
    if let Some(v) = args.thin {
        s.thin = v;
    }
    if let Some(v) = args.seed {
        s.seed = v;
    }
    if args.no_autotune {
        s.autotune = false;
    }
    if let Some(v) = args.tune_window {
        s.tune_window = v;
    }
    if let Some(v) = args.workers {
        *f.workers = v;
    }
    if args.standardize {
        *f.standardize = true;
    }
    if args.strict_missing {
        *f.strict_missing = true;
    }
    if let Some(v) = args.frame {
        *f.frame = v;
    }
}

pub(crate) fn load_data(path: &Path, strict_missing: bool, scale: bool) -> CliResult<(Dataset64, Option<Standardization>)> {
    let data = ingest(path, strict_missing)?;
    if scale {
        let (d, s) = standardize(&data)?;
        Ok((d, Some(s)))
    } else {
        Ok((data, None))
    }
}

pub(crate) fn check_u(u: usize, r: usize) -> CliResult<()> {
    if u == 0 || u >= r {
        Err(CliError::usage(format!("envelope dimension must satisfy 1 <= u < r = {r}, got {u}")))
    } else {
        Ok(())
    }
}

pub(crate) fn frame_choice(kind: FrameKind) -> FrameChoice<f64> {
    match kind {
        FrameKind::Qr => FrameChoice::QrOfBeta,
        FrameKind::Identity => FrameChoice::Identity,
    }
}

/// Thread pool bounded by `workers` (0 means one thread per core). Results
/// never depend on the worker count.
pub(crate) fn pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::usage(format!("cannot start worker pool: {e}")))
}
