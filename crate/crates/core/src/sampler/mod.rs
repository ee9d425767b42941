//! Posterior sampling: conjugate Gibbs blocks for τ, α, η, Ω, Ω₀ and
//! random-walk Metropolis-Hastings for ν, P and ρ.
//!
//! One sweep updates, in order, τ, ν, Ω, Ω₀, P, ρ, α, η. Under normal errors
//! τ is pinned at 1 and the ν step is skipped; under `uncor` the ρ step is
//! skipped.

mod chain;
mod init;
mod prior;
mod steps;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RolemError};
use crate::grassmann::Frame;
use crate::linalg::{cholesky, max_abs_asymmetry, Mat, Vector};
use crate::model::{ErrorModel, ParameterState};
use crate::scalar::Real;
use crate::CorrKind;

pub use chain::{posterior_mean_frame, run_chain, run_chain_from, run_chain_two_pass};
pub use init::{initialize, FrameChoice, Initialization};
pub use prior::{sample_from_prior, sample_langevin};
pub use steps::Sampler;

/// Optional proper prior `α ~ N(mean, cov)`, independent of the other
/// parameters. The default (`None`) is the flat prior `π(α) ∝ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaPrior<T: Real> {
    pub mean: Vector<T>,
    pub cov: Mat<T>,
}

/// Hyperparameters of the prior.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec<T: Real> {
    /// r × p prior location of β.
    pub xi: Mat<T>,
    /// p × p prior precision of η; zero gives a flat prior.
    pub h: Mat<T>,
    pub k: T,
    /// u × u.
    pub psi: Mat<T>,
    pub k0: T,
    /// (r−u) × (r−u).
    pub psi0: Mat<T>,
    /// r × r symmetric Langevin parameter.
    pub m: Mat<T>,
    /// Gamma(a, b) prior on ν, truncated to ν > 2.
    pub a: T,
    pub b: T,
    pub error_model: ErrorModel,
    pub alpha_prior: Option<AlphaPrior<T>>,
}

impl<T: Real> PriorSpec<T> {
    /// Vague defaults: ξ = 0, H = sI, k = u+1, Ψ = sI, k₀ = r−u+1, Ψ₀ = sI,
    /// M = sI, a = 1.4, b = 0.04. `scale` is 1e-3 for vague priors and 1e-6
    /// for nearly non-informative ones.
    pub fn with_scale(r: usize, p: usize, u: usize, scale: T, error_model: ErrorModel) -> Self {
        Self {
            xi: Mat::zeros(r, p),
            h: Mat::identity(p, p) * scale,
            k: T::lit((u + 1) as f64),
            psi: Mat::identity(u, u) * scale,
            k0: T::lit((r - u + 1) as f64),
            psi0: Mat::identity(r - u, r - u) * scale,
            m: Mat::identity(r, r) * scale,
            a: T::lit(1.4),
            b: T::lit(0.04),
            error_model,
            alpha_prior: None,
        }
    }

    pub fn vague(r: usize, p: usize, u: usize, error_model: ErrorModel) -> Self {
        Self::with_scale(r, p, u, T::lit(1e-3), error_model)
    }

    pub fn nearly_noninformative(r: usize, p: usize, u: usize, error_model: ErrorModel) -> Self {
        Self::with_scale(r, p, u, T::lit(1e-6), error_model)
    }

    pub fn u(&self) -> usize {
        self.psi.nrows()
    }

    pub fn validate(&self, r: usize, p: usize, u: usize) -> Result<()> {
        if self.xi.shape() != (r, p) || self.h.shape() != (p, p) || self.m.shape() != (r, r) {
            return Err(RolemError::dim("prior xi, H or M has the wrong size"));
        }
        if self.psi.shape() != (u, u) || self.psi0.shape() != (r - u, r - u) {
            return Err(RolemError::dim("prior Psi or Psi0 has the wrong size"));
        }
        for (name, v) in [("k", self.k), ("k0", self.k0), ("a", self.a), ("b", self.b)] {
            if !(v > T::zero()) {
                return Err(RolemError::invalid(format!("prior {name} must be positive")));
            }
        }
        cholesky(&self.psi, "prior Psi")?;
        cholesky(&self.psi0, "prior Psi0")?;
        if max_abs_asymmetry(&self.m) > T::tol(1e-10) * crate::linalg::max_abs(&self.m).max(T::one()) {
            return Err(RolemError::invalid("prior M must be symmetric"));
        }
        if max_abs_asymmetry(&self.h) > T::tol(1e-10) * crate::linalg::max_abs(&self.h).max(T::one()) {
            return Err(RolemError::invalid("prior H must be symmetric"));
        }
        let min_eig = nalgebra::SymmetricEigen::new(self.h.clone())
            .eigenvalues
            .iter()
            .fold(T::max_value().unwrap_or(T::one()), |a, &b| a.min(b));
        if min_eig < -T::tol(1e-10) {
            return Err(RolemError::invalid("prior H must be positive semidefinite"));
        }
        if let Some(ap) = &self.alpha_prior {
            if ap.mean.len() != r || ap.cov.shape() != (r, r) {
                return Err(RolemError::dim("alpha prior has the wrong size"));
            }
            cholesky(&ap.cov, "alpha prior covariance")?;
        }
        Ok(())
    }
}

/// Proposal scales of the three Metropolis-Hastings blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalScales {
    pub delta_rho: f64,
    pub delta_nu: f64,
    pub sigma2_p: f64,
}

impl Default for ProposalScales {
    fn default() -> Self {
        Self { delta_rho: 0.1, delta_nu: 2.0, sigma2_p: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningSpec {
    pub scales: ProposalScales,
    pub burn_in: usize,
    /// Post-burn-in sweeps; `n_samples / thin` draws are kept.
    pub n_samples: usize,
    pub thin: usize,
    pub seed: u64,
    /// Adapt the proposal scales toward the (0.2, 0.5) acceptance band
    /// during burn-in. Scales are frozen once sampling starts.
    pub autotune: bool,
    pub tune_window: usize,
}

impl Default for TuningSpec {
    fn default() -> Self {
        Self {
            scales: ProposalScales::default(),
            burn_in: 2000,
            n_samples: 5000,
            thin: 5,
            seed: 1,
            autotune: true,
            tune_window: 100,
        }
    }
}

impl TuningSpec {
    pub fn validate(&self) -> Result<()> {
        let s = &self.scales;
        if !(s.delta_rho > 0.0 && s.delta_nu > 0.0 && s.sigma2_p > 0.0) {
            return Err(RolemError::invalid("proposal scales must be positive"));
        }
        if self.thin == 0 || self.n_samples == 0 || self.tune_window == 0 {
            return Err(RolemError::invalid("n_samples, thin and tune_window must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counter {
    pub accepted: u64,
    pub attempted: u64,
}

impl Counter {
    pub fn record(&mut self, accepted: bool) {
        self.attempted += 1;
        if accepted {
            self.accepted += 1;
        }
    }

    pub fn rate(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.accepted as f64 / self.attempted as f64
        }
    }
}

/// Acceptance bookkeeping. Proposals rejected because the frame could not
/// represent them still count as attempts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptCounts {
    pub nu: Counter,
    pub projection: Counter,
    pub rho: Counter,
    pub frame_failures: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Draw<T: Real> {
    pub state: ParameterState<T>,
    /// Σ_i of `pointwise`.
    pub loglik: T,
    /// Marginal log density of each subject.
    pub pointwise: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput<T: Real> {
    pub draws: Vec<Draw<T>>,
    /// Post-burn-in acceptance counts.
    pub accept: AcceptCounts,
    pub frame: Frame<T>,
    /// Proposal scales in force during sampling (after any tuning).
    pub scales: ProposalScales,
    pub u: usize,
    pub corr: CorrKind,
    pub error_model: ErrorModel,
    pub n_subjects: usize,
}

impl<T: Real> ChainOutput<T> {
    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }
}
