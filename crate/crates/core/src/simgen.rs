//! Synthetic longitudinal envelope data.
//!
//! Parameters are regenerated for every dataset: `A ~ U(−1, 1)` entrywise
//! (unless fixed) in the identity frame, Ω and Ω₀ diagonal with entries from
//! U(0, 1) and U(5, 10), α and η entrywise U(−5, 5), and X entrywise N(0, 1).
//! All three error kinds share the covariance `2 (R ⊗ Σ_ε)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::corrstruct::{corr_matrix, CorrKind, CorrelationSpec};
use crate::error::{Result, RolemError};
use crate::grassmann::{basis_from_coordinates, Frame};
use crate::linalg::{cholesky, Mat, Vector};
use crate::model::{assemble, LongitudinalDataset, Subject};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Matrix-t with 4 degrees of freedom.
    T4,
    /// iid N(0, 2) innovations.
    NormalVar2,
    /// iid 0.9 N(0, 1) + 0.1 N(0, 11) innovations.
    Mixture,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 3] = [ErrorKind::T4, ErrorKind::NormalVar2, ErrorKind::Mixture];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::T4 => "t4",
            ErrorKind::NormalVar2 => "normal_var2",
            ErrorKind::Mixture => "mixture",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorKind {
    type Err = RolemError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "t4" => Ok(ErrorKind::T4),
            "normal_var2" | "normal" => Ok(ErrorKind::NormalVar2),
            "mixture" => Ok(ErrorKind::Mixture),
            other => Err(RolemError::invalid(format!("unknown error kind {other:?} (expected t4, normal_var2, mixture)"))),
        }
    }
}

pub const T4_DOF: f64 = 4.0;
/// Component weights, written out so records do not show `1 − 0.9` rounding.
pub const MIXTURE_WEIGHTS: (f64, f64) = (0.9, 0.1);
pub const MIXTURE_VARIANCES: (f64, f64) = (1.0, 11.0);
pub const NORMAL_VARIANCE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub r: usize,
    pub p: usize,
    pub u: usize,
    pub n: usize,
    pub j: usize,
    pub rho_true: f64,
    pub corr_kind: CorrKind,
    pub error_kind: ErrorKind,
    pub seed: u64,
    /// Rows of a fixed (r−u) × u coordinate matrix replacing the random A.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_a: Option<Vec<Vec<f64>>>,
}

impl Default for SimDesign {
    fn default() -> Self {
        Self {
            r: 20,
            p: 30,
            u: 3,
            n: 100,
            j: 5,
            rho_true: 0.5,
            corr_kind: CorrKind::Ar1,
            error_kind: ErrorKind::T4,
            seed: 1,
            fixed_a: None,
        }
    }
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        if self.u == 0 || self.u >= self.r {
            return Err(RolemError::invalid(format!("need 1 <= u < r, got u={}, r={}", self.u, self.r)));
        }
        if self.p == 0 || self.n == 0 || self.j == 0 {
            return Err(RolemError::invalid("p, n and J must be positive"));
        }
        if self.corr_kind.has_rho() && !(self.rho_true > 0.0 && self.rho_true < 1.0) {
            return Err(RolemError::invalid("rho_true must lie in (0, 1)"));
        }
        if let Some(a) = &self.fixed_a {
            if a.len() != self.r - self.u || a.iter().any(|row| row.len() != self.u) {
                return Err(RolemError::dim("fixed_a must be (r-u) x u"));
            }
        }
        Ok(())
    }

    /// RNG for this design's seed.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Independent stream `k` of a master seed, for replicate `k`.
pub fn replicate_rng(master: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(k);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<T: Real> {
    pub alpha: Vector<T>,
    pub beta: Mat<T>,
    pub sigma_eps: Mat<T>,
    pub gamma: Mat<T>,
    pub gamma0: Mat<T>,
    pub eta: Mat<T>,
    pub omega: Mat<T>,
    pub omega0: Mat<T>,
    pub rho: T,
    /// Degrees of freedom for t errors, `None` otherwise.
    pub nu: Option<T>,
}

fn uniform<T: Real, R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> T {
    T::lit(lo) + T::lit(hi - lo) * T::uniform_open01(rng)
}

/// One innovation from the scalar law of a non-t error kind.
fn innovation<T: Real, R: Rng + ?Sized>(kind: ErrorKind, rng: &mut R) -> T {
    match kind {
        ErrorKind::T4 => T::std_normal(rng),
        ErrorKind::NormalVar2 => T::lit(NORMAL_VARIANCE.sqrt()) * T::std_normal(rng),
        ErrorKind::Mixture => {
            let sd = if T::uniform_open01(rng) < T::lit(MIXTURE_WEIGHTS.0) {
                MIXTURE_VARIANCES.0.sqrt()
            } else {
                MIXTURE_VARIANCES.1.sqrt()
            };
            T::lit(sd) * T::std_normal(rng)
        }
    }
}

/// Error matrix `L Z Lᵣᵀ` where `L`, `Lᵣ` are Cholesky factors of Σ_ε and
/// R. For `T4` the whole matrix is divided by `√τ`, `τ ~ Gamma(2, 2)`.
pub fn sample_error<T: Real, R: Rng + ?Sized>(
    kind: ErrorKind,
    l_sigma: &Mat<T>,
    l_corr: &Mat<T>,
    rng: &mut R,
) -> Mat<T> {
    let (r, j) = (l_sigma.nrows(), l_corr.nrows());
    let z = Mat::from_fn(r, j, |_, _| innovation::<T, _>(kind, rng));
    let e = l_sigma * z * l_corr.transpose();
    match kind {
        ErrorKind::T4 => {
            let half = T::lit(T4_DOF * 0.5);
            let tau = T::sample_gamma(half, half, rng);
            e / tau.sqrt()
        }
        _ => e,
    }
}

/// Draws parameters and a dataset from the design.
pub fn generate<T: Real, R: Rng + ?Sized>(
    design: &SimDesign,
    rng: &mut R,
) -> Result<(LongitudinalDataset<T>, GroundTruth<T>)> {
    design.validate()?;
    let SimDesign { r, p, u, n, j, .. } = *design;
    let a = match &design.fixed_a {
        Some(rows) => Mat::from_fn(r - u, u, |i, k| T::lit(rows[i][k])),
        None => Mat::from_fn(r - u, u, |_, _| uniform(-1.0, 1.0, rng)),
    };
    let basis = basis_from_coordinates(&a, &Frame::identity(r))?;
    let omega = Mat::from_diagonal(&Vector::from_fn(u, |_, _| uniform(0.0, 1.0, rng)));
    let omega0 = Mat::from_diagonal(&Vector::from_fn(r - u, |_, _| uniform(5.0, 10.0, rng)));
    let alpha = Vector::from_fn(r, |_, _| uniform(-5.0, 5.0, rng));
    let eta = Mat::from_fn(u, p, |_, _| uniform(-5.0, 5.0, rng));
    let rho = if design.corr_kind.has_rho() { T::lit(design.rho_true) } else { T::zero() };

    let state = crate::model::ParameterState {
        alpha: alpha.clone(),
        eta: eta.clone(),
        basis: basis.clone(),
        omega: omega.clone(),
        omega0: omega0.clone(),
        rho,
        nu: T::lit(T4_DOF),
        tau: Vector::zeros(0),
    };
    let asm = assemble(&state);
    let l_sigma = cholesky(&asm.sigma_eps, "Sigma_eps")?.unpack();
    let spec = if design.corr_kind.has_rho() {
        CorrelationSpec::new(design.corr_kind, rho)?
    } else {
        CorrelationSpec::uncorrelated()
    };
    let l_corr = cholesky(&corr_matrix(&spec, j)?, "R")?.unpack();

    let width = n.to_string().len();
    let subjects = (0..n)
        .map(|i| {
            let x = Mat::from_fn(p, j, |_, _| T::std_normal(rng));
            let mut y = &asm.beta * &x + sample_error(design.error_kind, &l_sigma, &l_corr, rng);
            for mut c in y.column_iter_mut() {
                c += &alpha;
            }
            Subject { id: format!("s{:0width$}", i + 1), y, x }
        })
        .collect();
    let data = LongitudinalDataset::new(subjects, r, p)?;
    let truth = GroundTruth {
        alpha,
        beta: asm.beta,
        sigma_eps: asm.sigma_eps,
        gamma: basis.gamma,
        gamma0: basis.gamma0,
        eta,
        omega,
        omega0,
        rho,
        nu: (design.error_kind == ErrorKind::T4).then(|| T::lit(T4_DOF)),
    };
    Ok((data, truth))
}

/// The three orthonormal directions used by the structured Langevin priors:
/// `1_m ⊗ (1,1,1,1)`, `1_m ⊗ (1,−1,1,−1)` and `1_m ⊗ (1,1,−1,−1)`, each
/// divided by `√r`. Requires `r` divisible by 4.
pub fn structured_gammas<T: Real>(r: usize) -> Result<[Vector<T>; 3]> {
    if r == 0 || !r.is_multiple_of(4) {
        return Err(RolemError::invalid(format!("structured prior needs r divisible by 4, got {r}")));
    }
    let s = T::one() / T::lit(r as f64).sqrt();
    let pattern = |v: [f64; 4]| Vector::from_fn(r, |i, _| T::lit(v[i % 4]) * s);
    Ok([pattern([1.0, 1.0, 1.0, 1.0]), pattern([1.0, -1.0, 1.0, -1.0]), pattern([1.0, 1.0, -1.0, -1.0])])
}

/// `M_which`: `s0·I` plus `s1·γ_kγ_kᵀ` for the first `which − 1` structured
/// directions (`which` in 1..=4).
pub fn structured_prior_design<T: Real>(r: usize, s1: T, s0: T, which: usize) -> Result<Mat<T>> {
    if !(1..=4).contains(&which) {
        return Err(RolemError::invalid(format!("structured prior index must be 1..=4, got {which}")));
    }
    let gammas = structured_gammas::<T>(r)?;
    let mut m = Mat::identity(r, r) * s0;
    for g in gammas.iter().take(which - 1) {
        m += g * g.transpose() * s1;
    }
    Ok(m)
}

/// Coordinates `A = (a, I₃, a, I₃, …, a)ᵀ` with `a = (−1, 1, 1)ᵀ` for u = 3.
/// With the identity frame the envelope is then spanned by the three
/// structured directions. Requires `r` divisible by 4.
pub fn structured_fixed_a(r: usize) -> Result<Vec<Vec<f64>>> {
    if r < 4 || !r.is_multiple_of(4) {
        return Err(RolemError::invalid(format!("structured design needs r divisible by 4, got {r}")));
    }
    let blocks = r / 4;
    let mut rows = Vec::with_capacity(r - 3);
    for b in 0..blocks {
        rows.push(vec![-1.0, 1.0, 1.0]);
        if b + 1 < blocks {
            rows.extend([vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        }
    }
    Ok(rows)
}
