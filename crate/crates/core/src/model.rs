//! The robust longitudinal envelope model: data, parameters and likelihoods.
//!
//! Subject i contributes `Y_i ~ SMMN(α1ᵀ + βX_i, Σ_ε, R_i(ρ), G)` with
//! `β = Γη` and `Σ_ε = ΓΩΓᵀ + Γ₀Ω₀Γ₀ᵀ`. With the latent precision `τ_i`
//! the conditional law is `MN(α1ᵀ + βX_i, τ_i⁻¹Σ_ε, R_i)`; `τ_i` scales the
//! response covariance so that `R_i` stays a correlation matrix.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corrstruct::{corr_inverse_logdet, CorrKind, CorrelationSpec};
use crate::error::{Result, RolemError};
use crate::grassmann::EnvelopeBasis;
use crate::linalg::{chol_logdet, cholesky, Mat, Vector};
use crate::matvar::{mn_log_kernel, mt_log_kernel};
use crate::scalar::Real;

/// Error law of the model: matrix-t (robust) or matrix-normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorModel {
    T,
    Normal,
}

impl ErrorModel {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorModel::T => "t",
            ErrorModel::Normal => "normal",
        }
    }
}

impl fmt::Display for ErrorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorModel {
    type Err = RolemError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "t" => Ok(ErrorModel::T),
            "normal" => Ok(ErrorModel::Normal),
            other => Err(RolemError::invalid(format!("unknown error model {other:?} (expected t or normal)"))),
        }
    }
}

/// One subject: responses `y` (r × J_i) and covariates `x` (p × J_i).
#[derive(Debug, Clone, PartialEq)]
pub struct Subject<T: Real> {
    pub id: String,
    pub y: Mat<T>,
    pub x: Mat<T>,
}

impl<T: Real> Subject<T> {
    pub fn times(&self) -> usize {
        self.y.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalDataset<T: Real> {
    subjects: Vec<Subject<T>>,
    r: usize,
    p: usize,
}

impl<T: Real> LongitudinalDataset<T> {
    /// Unbalanced designs (different `J_i`) are allowed.
    pub fn new(subjects: Vec<Subject<T>>, r: usize, p: usize) -> Result<Self> {
        for s in &subjects {
            if s.y.nrows() != r || s.x.nrows() != p {
                return Err(RolemError::dim(format!(
                    "subject {} has {} responses and {} covariates, expected {r} and {p}",
                    s.id,
                    s.y.nrows(),
                    s.x.nrows()
                )));
            }
            if s.y.ncols() == 0 || s.y.ncols() != s.x.ncols() {
                return Err(RolemError::dim(format!(
                    "subject {} has {} response columns and {} covariate columns",
                    s.id,
                    s.y.ncols(),
                    s.x.ncols()
                )));
            }
        }
        Ok(Self { subjects, r, p })
    }

    pub fn subjects(&self) -> &[Subject<T>] {
        &self.subjects
    }

    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Σ_i J_i.
    pub fn total_times(&self) -> usize {
        self.subjects.iter().map(Subject::times).sum()
    }

    /// Sub-dataset with the listed subjects, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self { subjects: idx.iter().map(|&i| self.subjects[i].clone()).collect(), r: self.r, p: self.p }
    }
}

/// One point of the parameter space plus the latent precisions.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState<T: Real> {
    pub alpha: Vector<T>,
    /// u × p.
    pub eta: Mat<T>,
    pub basis: EnvelopeBasis<T>,
    pub omega: Mat<T>,
    pub omega0: Mat<T>,
    pub rho: T,
    pub nu: T,
    pub tau: Vector<T>,
}

impl<T: Real> ParameterState<T> {
    pub fn r(&self) -> usize {
        self.basis.r()
    }

    pub fn u(&self) -> usize {
        self.basis.u()
    }

    pub fn corr_spec(&self, kind: CorrKind) -> Result<CorrelationSpec<T>> {
        if kind.has_rho() {
            CorrelationSpec::new(kind, self.rho)
        } else {
            Ok(CorrelationSpec::uncorrelated())
        }
    }

    /// Checks the state's invariants against a dataset.
    pub fn validate(&self, data: &LongitudinalDataset<T>, error_model: ErrorModel) -> Result<()> {
        let (r, u, p) = (data.r(), self.u(), data.p());
        if self.r() != r || self.alpha.len() != r || self.eta.shape() != (u, p) {
            return Err(RolemError::dim("parameter state does not match the dataset dimensions"));
        }
        if self.omega.shape() != (u, u) || self.omega0.shape() != (r - u, r - u) {
            return Err(RolemError::dim("Omega blocks have the wrong size"));
        }
        if self.tau.len() != data.n() {
            return Err(RolemError::dim("one latent precision per subject is required"));
        }
        if self.tau.iter().any(|&t| !(t > T::zero())) {
            return Err(RolemError::invalid("latent precisions must be positive"));
        }
        if error_model == ErrorModel::T && !(self.nu > T::lit(2.0)) {
            return Err(RolemError::invalid(format!("degrees of freedom must exceed 2, got {}", self.nu)));
        }
        cholesky(&self.omega, "Omega")?;
        cholesky(&self.omega0, "Omega0")?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeAssembly<T: Real> {
    /// r × p, `Γη`.
    pub beta: Mat<T>,
    /// r × r, `ΓΩΓᵀ + Γ₀Ω₀Γ₀ᵀ`.
    pub sigma_eps: Mat<T>,
}

pub fn assemble<T: Real>(state: &ParameterState<T>) -> EnvelopeAssembly<T> {
    let g = &state.basis.gamma;
    let g0 = &state.basis.gamma0;
    let beta = g * &state.eta;
    let sigma = g * &state.omega * g.transpose() + g0 * &state.omega0 * g0.transpose();
    EnvelopeAssembly { beta, sigma_eps: crate::linalg::symmetrize(&sigma) }
}

/// Residual `Y_i − α1ᵀ − βX_i`.
pub fn residual<T: Real>(y: &Mat<T>, x: &Mat<T>, beta: &Mat<T>, alpha: &Vector<T>) -> Mat<T> {
    let mut e = y - beta * x;
    for mut col in e.column_iter_mut() {
        col -= alpha;
    }
    e
}

/// `Δ_i = tr(Σ_ε⁻¹ E R_i⁻¹ Eᵀ)` with `E = Y_i − α1ᵀ − βX_i`.
pub fn delta_i<T: Real>(
    y: &Mat<T>,
    x: &Mat<T>,
    assembly: &EnvelopeAssembly<T>,
    alpha: &Vector<T>,
    corr_inv: &Mat<T>,
) -> Result<T> {
    let j = y.ncols();
    if corr_inv.shape() != (j, j) || x.ncols() != j || alpha.len() != y.nrows() {
        return Err(RolemError::dim("delta_i argument sizes disagree"));
    }
    let sigma_inv = cholesky(&assembly.sigma_eps, "Sigma_eps")?.inverse();
    let e = residual(y, x, &assembly.beta, alpha);
    Ok(quad_trace(&sigma_inv, &e, corr_inv))
}

/// `tr(S E Q Eᵀ)` for symmetric `S`, `Q`.
pub(crate) fn quad_trace<T: Real>(s: &Mat<T>, e: &Mat<T>, q: &Mat<T>) -> T {
    (s * e).component_mul(&(e * q)).sum()
}

/// Shared pieces for evaluating every subject's likelihood at one state.
pub(crate) struct LikelihoodParts<T: Real> {
    pub(crate) sigma_inv: Mat<T>,
    pub(crate) sigma_logdet: T,
    pub(crate) corr: BTreeMap<usize, (Mat<T>, T)>,
    pub(crate) assembly: EnvelopeAssembly<T>,
}

impl<T: Real> LikelihoodParts<T> {
    pub(crate) fn new(data: &LongitudinalDataset<T>, state: &ParameterState<T>, kind: CorrKind) -> Result<Self> {
        let assembly = assemble(state);
        let ch = cholesky(&assembly.sigma_eps, "Sigma_eps")?;
        let spec = state.corr_spec(kind)?;
        let mut corr = BTreeMap::new();
        for s in data.subjects() {
            let j = s.times();
            if let Entry::Vacant(e) = corr.entry(j) {
                e.insert(corr_inverse_logdet(&spec, j)?);
            }
        }
        Ok(Self { sigma_inv: ch.inverse(), sigma_logdet: chol_logdet(&ch), corr, assembly })
    }

    pub(crate) fn delta(&self, s: &Subject<T>, alpha: &Vector<T>) -> T {
        let e = residual(&s.y, &s.x, &self.assembly.beta, alpha);
        quad_trace(&self.sigma_inv, &e, &self.corr[&s.times()].0)
    }

    /// `(J/2) log|Σ| + (r/2) log|R|`.
    pub(crate) fn log_dets(&self, s: &Subject<T>) -> T {
        let (r, j) = s.y.shape();
        let half = T::lit(0.5);
        T::lit(j as f64) * half * self.sigma_logdet + T::lit(r as f64) * half * self.corr[&j].1
    }
}

/// Complete-data log-likelihood `Σ_i log MN(Y_i; α1ᵀ+βX_i, τ_i⁻¹Σ_ε, R_i)`.
pub fn loglik_conditional<T: Real>(
    data: &LongitudinalDataset<T>,
    state: &ParameterState<T>,
    kind: CorrKind,
) -> Result<T> {
    let parts = LikelihoodParts::new(data, state, kind)?;
    let mut total = T::zero();
    for (i, s) in data.subjects().iter().enumerate() {
        let tau = state.tau[i];
        let rj = s.y.len();
        let delta = parts.delta(s, &state.alpha);
        total += mn_log_kernel(tau * delta, rj) - parts.log_dets(s) + T::lit(rj as f64 * 0.5) * tau.ln();
    }
    Ok(total)
}

/// Per-subject marginal log densities (τ integrated out in t mode).
pub fn pointwise_loglik_marginal<T: Real>(
    data: &LongitudinalDataset<T>,
    state: &ParameterState<T>,
    kind: CorrKind,
    error_model: ErrorModel,
) -> Result<Vec<T>> {
    if error_model == ErrorModel::T && !(state.nu > T::zero()) {
        return Err(RolemError::invalid("degrees of freedom must be positive"));
    }
    let parts = LikelihoodParts::new(data, state, kind)?;
    Ok(data
        .subjects()
        .iter()
        .map(|s| {
            let delta = parts.delta(s, &state.alpha);
            let kernel = match error_model {
                ErrorModel::T => mt_log_kernel(delta, state.nu, s.y.len()),
                ErrorModel::Normal => mn_log_kernel(delta, s.y.len()),
            };
            kernel - parts.log_dets(s)
        })
        .collect())
}

/// Σ_i of [`pointwise_loglik_marginal`], summed in subject order.
pub fn loglik_marginal<T: Real>(
    data: &LongitudinalDataset<T>,
    state: &ParameterState<T>,
    kind: CorrKind,
    error_model: ErrorModel,
) -> Result<T> {
    Ok(pointwise_loglik_marginal(data, state, kind, error_model)?
        .into_iter()
        .fold(T::zero(), |a, b| a + b))
}
