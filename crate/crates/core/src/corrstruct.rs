//! Working correlation structures for the repeated measures of one subject.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RolemError};
use crate::linalg::Mat;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrKind {
    /// Independent time points, `R = I`.
    Uncor,
    /// Compound symmetry, `(1−ρ)I + ρ11ᵀ`.
    Cs,
    /// First-order autoregressive, `ρ^{|s−l|}`.
    Ar1,
}

impl CorrKind {
    pub const ALL: [CorrKind; 3] = [CorrKind::Uncor, CorrKind::Cs, CorrKind::Ar1];

    /// Whether `ρ` is a free parameter of the structure.
    pub fn has_rho(self) -> bool {
        !matches!(self, CorrKind::Uncor)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CorrKind::Uncor => "uncor",
            CorrKind::Cs => "cs",
            CorrKind::Ar1 => "ar1",
        }
    }
}

impl fmt::Display for CorrKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorrKind {
    type Err = RolemError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uncor" => Ok(CorrKind::Uncor),
            "cs" => Ok(CorrKind::Cs),
            "ar1" => Ok(CorrKind::Ar1),
            other => Err(RolemError::invalid(format!("unknown correlation kind {other:?} (expected uncor, cs, ar1)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationSpec<T: Real> {
    kind: CorrKind,
    rho: T,
}

impl<T: Real> CorrelationSpec<T> {
    /// `rho` must lie strictly inside (0, 1) unless the kind is `Uncor`, for
    /// which it is ignored.
    pub fn new(kind: CorrKind, rho: T) -> Result<Self> {
        if kind.has_rho() && !(rho > T::zero() && rho < T::one()) {
            return Err(RolemError::invalid(format!("correlation rho must be in (0, 1), got {rho}")));
        }
        Ok(Self { kind, rho })
    }

    pub fn uncorrelated() -> Self {
        Self { kind: CorrKind::Uncor, rho: T::zero() }
    }

    pub fn kind(&self) -> CorrKind {
        self.kind
    }

    pub fn rho(&self) -> T {
        self.rho
    }
}

pub fn corr_matrix<T: Real>(spec: &CorrelationSpec<T>, j: usize) -> Result<Mat<T>> {
    if j == 0 {
        return Err(RolemError::invalid("need at least one time point"));
    }
    let rho = spec.rho;
    Ok(match spec.kind {
        CorrKind::Uncor => Mat::identity(j, j),
        CorrKind::Cs => Mat::from_fn(j, j, |s, l| if s == l { T::one() } else { rho }),
        CorrKind::Ar1 => Mat::from_fn(j, j, |s, l| rho.powi(s.abs_diff(l) as i32)),
    })
}

/// Closed-form inverse and log-determinant of `corr_matrix(spec, j)`.
pub fn corr_inverse_logdet<T: Real>(spec: &CorrelationSpec<T>, j: usize) -> Result<(Mat<T>, T)> {
    if j == 0 {
        return Err(RolemError::invalid("need at least one time point"));
    }
    if j == 1 {
        return Ok((Mat::identity(1, 1), T::zero()));
    }
    let rho = spec.rho;
    let one = T::one();
    let jm1 = T::lit((j - 1) as f64);
    match spec.kind {
        CorrKind::Uncor => Ok((Mat::identity(j, j), T::zero())),
        CorrKind::Cs => {
            let denom = one + jm1 * rho;
            if !(rho < one) || !(denom > T::zero()) {
                return Err(RolemError::invalid(format!("compound symmetry is singular at rho = {rho}")));
            }
            let c = rho / denom;
            let scale = one / (one - rho);
            let inv = Mat::from_fn(j, j, |s, l| if s == l { (one - c) * scale } else { -c * scale });
            let logdet = jm1 * (one - rho).ln() + denom.ln();
            Ok((inv, logdet))
        }
        CorrKind::Ar1 => {
            let one_m = one - rho * rho;
            if !(one_m > T::zero()) {
                return Err(RolemError::invalid(format!("AR(1) is singular at rho = {rho}")));
            }
            let mut inv = Mat::zeros(j, j);
            for s in 0..j {
                let edge = s == 0 || s == j - 1;
                inv[(s, s)] = if edge { one } else { one + rho * rho } / one_m;
                if s + 1 < j {
                    inv[(s, s + 1)] = -rho / one_m;
                    inv[(s + 1, s)] = -rho / one_m;
                }
            }
            Ok((inv, jm1 * one_m.ln()))
        }
    }
}
