//! Run configuration. Each command resolves its config from, in increasing
//! precedence: built-in defaults, `--config` JSON, the config recorded in a
//! `--from-manifest` file, then explicit flags.

use std::path::{Path, PathBuf};

use rolem::linalg::Mat;
use rolem::sampler::{PriorSpec, ProposalScales, TuningSpec};
use rolem::simgen::{structured_prior_design, ErrorKind, SimDesign};
use rolem::{CorrKind, ErrorModel};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, CliResult};
use crate::io::rows_mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PriorPreset {
    /// Scale 1e-3 on H, Ψ, Ψ₀ and M.
    Vague,
    /// Scale 1e-6.
    NearlyNoninformative,
}

/// Prior hyperparameters: a preset plus optional overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub preset: PriorPreset,
    pub k: Option<f64>,
    pub k0: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// Full r × p prior location of β.
    pub xi: Option<Vec<Vec<f64>>>,
    /// Full r × r Langevin parameter; conflicts with `structured`.
    pub m: Option<Vec<Vec<f64>>>,
    /// Structured Langevin prior M₁..M₄ (1..=4); needs r divisible by 4.
    pub structured: Option<usize>,
    pub structured_s1: f64,
    pub structured_s0: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            preset: PriorPreset::Vague,
            k: None,
            k0: None,
            a: None,
            b: None,
            xi: None,
            m: None,
            structured: None,
            structured_s1: 1e5,
            structured_s0: 1e-6,
        }
    }
}

impl PriorConfig {
    pub fn build(&self, r: usize, p: usize, u: usize, em: ErrorModel) -> CliResult<PriorSpec<f64>> {
        let mut prior = match self.preset {
            PriorPreset::Vague => PriorSpec::vague(r, p, u, em),
            PriorPreset::NearlyNoninformative => PriorSpec::nearly_noninformative(r, p, u, em),
        };
        if let Some(v) = self.k {
            prior.k = v;
        }
        if let Some(v) = self.k0 {
            prior.k0 = v;
        }
        if let Some(v) = self.a {
            prior.a = v;
        }
        if let Some(v) = self.b {
            prior.b = v;
        }
        if let Some(rows) = &self.xi {
            prior.xi = rows_mat(rows, "prior xi").map_err(|e| CliError::usage(e.to_string()))?;
        }
        match (&self.m, self.structured) {
            (Some(_), Some(_)) => return Err(CliError::usage("prior m and structured are mutually exclusive")),
            (Some(rows), None) => prior.m = rows_mat(rows, "prior m").map_err(|e| CliError::usage(e.to_string()))?,
            (None, Some(which)) => {
                prior.m = structured_prior_design::<f64>(r, self.structured_s1, self.structured_s0, which)
                    .map_err(|e| CliError::usage(e.to_string()))?
            }
            (None, None) => {}
        }
        prior.validate(r, p, u).map_err(|e| CliError::usage(format!("prior: {e}")))?;
        Ok(prior)
    }
}

/// Sampler settings, flattened so a JSON config can set any subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub burn_in: usize,
    pub n_samples: usize,
    pub thin: usize,
    pub seed: u64,
    pub autotune: bool,
    pub tune_window: usize,
    pub delta_rho: f64,
    pub delta_nu: f64,
    pub sigma2_p: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        let t = TuningSpec::default();
        Self {
            burn_in: t.burn_in,
            n_samples: t.n_samples,
            thin: t.thin,
            seed: t.seed,
            autotune: t.autotune,
            tune_window: t.tune_window,
            delta_rho: t.scales.delta_rho,
            delta_nu: t.scales.delta_nu,
            sigma2_p: t.scales.sigma2_p,
        }
    }
}

impl SamplingConfig {
    /// Tuning for chain `c` (0-based); chain c uses seed `seed + c`.
    pub fn tuning(&self, chain: usize) -> CliResult<TuningSpec> {
        let t = TuningSpec {
            scales: ProposalScales { delta_rho: self.delta_rho, delta_nu: self.delta_nu, sigma2_p: self.sigma2_p },
            burn_in: self.burn_in,
            n_samples: self.n_samples,
            thin: self.thin,
            seed: self.seed.wrapping_add(chain as u64),
            autotune: self.autotune,
            tune_window: self.tune_window,
        };
        t.validate().map_err(|e| CliError::usage(e.to_string()))?;
        if t.n_samples / t.thin < rolem::inference::MIN_HPD_SAMPLES {
            return Err(CliError::usage(format!(
                "n_samples / thin must keep at least {} draws",
                rolem::inference::MIN_HPD_SAMPLES
            )));
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    /// Q factor of the least-squares β.
    Qr,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub data: Option<PathBuf>,
    pub u: Option<usize>,
    pub corr: CorrKind,
    pub error_model: ErrorModel,
    pub prior: PriorConfig,
    pub sampling: SamplingConfig,
    pub chains: usize,
    /// Worker threads for running chains; 0 uses all cores.
    pub workers: usize,
    pub hpd_level: f64,
    pub standardize: bool,
    pub strict_missing: bool,
    pub frame: FrameKind,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            data: None,
            u: None,
            corr: CorrKind::Ar1,
            error_model: ErrorModel::T,
            prior: PriorConfig::default(),
            sampling: SamplingConfig::default(),
            chains: 1,
            workers: 0,
            hpd_level: 0.95,
            standardize: false,
            strict_missing: false,
            frame: FrameKind::Qr,
        }
    }
}

pub fn check_level(level: f64) -> CliResult<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(CliError::usage(format!("HPD level must lie in (0, 1), got {level}")))
    }
}

impl FitConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.data.is_none() {
            return Err(CliError::usage("no data file given (--data or config \"data\")"));
        }
        if self.u.is_none() {
            return Err(CliError::usage("no envelope dimension given (--u or config \"u\")"));
        }
        if self.chains == 0 {
            return Err(CliError::usage("chains must be at least 1"));
        }
        check_level(self.hpd_level)?;
        self.sampling.tuning(0).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Bic,
    Waic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectConfig {
    pub data: Option<PathBuf>,
    pub u_grid: Vec<usize>,
    pub corr_grid: Vec<CorrKind>,
    pub error_model: ErrorModel,
    pub prior: PriorConfig,
    pub sampling: SamplingConfig,
    pub workers: usize,
    pub criterion: Criterion,
    pub standardize: bool,
    pub strict_missing: bool,
    pub frame: FrameKind,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            data: None,
            u_grid: vec![1, 2, 3],
            corr_grid: vec![CorrKind::Ar1],
            error_model: ErrorModel::T,
            prior: PriorConfig::default(),
            sampling: SamplingConfig::default(),
            workers: 0,
            criterion: Criterion::Bic,
            standardize: false,
            strict_missing: false,
            frame: FrameKind::Qr,
        }
    }
}

impl SelectConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.data.is_none() {
            return Err(CliError::usage("no data file given (--data or config \"data\")"));
        }
        if self.u_grid.is_empty() || self.corr_grid.is_empty() {
            return Err(CliError::usage("u grid and correlation grid must be non-empty"));
        }
        self.sampling.tuning(0).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// r=5, p=6, u=3: the scale used by the acceptance replicates.
    Desk,
    /// r=20, p=30, u=3 with A ~ uniform(−1, 1).
    #[value(name = "paper-5.1")]
    #[serde(rename = "paper-5.1")]
    FullScale,
    /// r=20, p=30, u=3 with the fixed structured coordinates.
    Structured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub preset: Preset,
    pub r: Option<usize>,
    pub p: Option<usize>,
    pub u: Option<usize>,
    pub n: Option<usize>,
    pub j: Option<usize>,
    pub rho: Option<f64>,
    pub corr: Option<CorrKind>,
    pub error_kind: Option<ErrorKind>,
    pub seed: u64,
    /// Number of replicate datasets; each uses its own stream of the seed.
    pub replicates: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Desk,
            r: None,
            p: None,
            u: None,
            n: None,
            j: None,
            rho: None,
            corr: None,
            error_kind: None,
            seed: 1,
            replicates: 1,
        }
    }
}

impl SimulateConfig {
    pub fn design(&self) -> CliResult<SimDesign> {
        let mut d = match self.preset {
            Preset::Desk => SimDesign { r: 5, p: 6, u: 3, ..SimDesign::default() },
            Preset::FullScale | Preset::Structured => SimDesign { r: 20, p: 30, u: 3, ..SimDesign::default() },
        };
        d.r = self.r.unwrap_or(d.r);
        d.p = self.p.unwrap_or(d.p);
        d.u = self.u.unwrap_or(d.u);
        d.n = self.n.unwrap_or(d.n);
        d.j = self.j.unwrap_or(d.j);
        d.rho_true = self.rho.unwrap_or(d.rho_true);
        d.corr_kind = self.corr.unwrap_or(d.corr_kind);
        d.error_kind = self.error_kind.unwrap_or(d.error_kind);
        d.seed = self.seed;
        if self.preset == Preset::Structured {
            if d.u != 3 {
                return Err(CliError::usage("the structured preset needs u = 3"));
            }
            d.fixed_a = Some(rolem::simgen::structured_fixed_a(d.r).map_err(|e| CliError::usage(e.to_string()))?);
        }
        if self.replicates == 0 {
            return Err(CliError::usage("replicates must be at least 1"));
        }
        d.validate().map_err(|e| CliError::usage(e.to_string()))?;
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    /// Fit output directories, paired with `truths`.
    pub fits: Vec<PathBuf>,
    pub truths: Vec<PathBuf>,
    pub level: f64,
    pub workers: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self { fits: Vec::new(), truths: Vec::new(), level: 0.95, workers: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarizeConfig {
    pub fit: Option<PathBuf>,
    pub level: f64,
    /// Summarize every column rather than α, β, Σ_ε, ρ, ν.
    pub all: bool,
}

impl Default for SummarizeConfig {
    fn default() -> Self {
        Self { fit: None, level: 0.95, all: false }
    }
}

pub fn read_config<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
}

/// Parses a matrix given as JSON rows, e.g. `[[1,0],[0,1]]`.
pub fn parse_matrix(s: &str) -> Result<Vec<Vec<f64>>, String> {
    serde_json::from_str(s).map_err(|e| format!("expected JSON rows like [[1,0],[0,1]]: {e}"))
}

pub fn mat_from(rows: &[Vec<f64>]) -> CliResult<Mat<f64>> {
    rows_mat(rows, "matrix").map_err(|e| CliError::usage(e.to_string()))
}
