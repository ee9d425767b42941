//! Matrix-variate densities and samplers.
//!
//! `MN(M, Λ₁, Λ₂)` is parameterized by a row covariance Λ₁ (a×a) and a column
//! covariance Λ₂ (b×b), so that `vec(Y) ~ N(vec(M), Λ₂ ⊗ Λ₁)`. The matrix-t is
//! the Gamma(ν/2, ν/2) scale mixture of that normal.
//!
//! Inverse-Wishart convention: `IW(k, Ψ)` has density proportional to
//! `|Ω|^{-(k+d+1)/2} etr(-½ Ψ Ω⁻¹)`, so `E[Ω] = Ψ / (k - d - 1)`. Software
//! packages disagree on this; everything in this crate uses this form.

use std::f64::consts::PI;

use nalgebra::{Cholesky, Dyn};
use rand::Rng;

use crate::error::{Result, RolemError};
use crate::linalg::{chol_logdet, cholesky, Mat, Vector};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct MatNormalParams<T: Real> {
    mean: Mat<T>,
    row_cov: Mat<T>,
    col_cov: Mat<T>,
    row_chol: Cholesky<T, Dyn>,
    col_chol: Cholesky<T, Dyn>,
}

impl<T: Real> MatNormalParams<T> {
    pub fn new(mean: Mat<T>, row_cov: Mat<T>, col_cov: Mat<T>) -> Result<Self> {
        if row_cov.nrows() != mean.nrows() || col_cov.nrows() != mean.ncols() {
            return Err(RolemError::dim(format!(
                "mean is {}x{} but covariances are {}x{} and {}x{}",
                mean.nrows(),
                mean.ncols(),
                row_cov.nrows(),
                row_cov.ncols(),
                col_cov.nrows(),
                col_cov.ncols()
            )));
        }
        let row_chol = cholesky(&row_cov, "row covariance")?;
        let col_chol = cholesky(&col_cov, "column covariance")?;
        Ok(Self { mean, row_cov, col_cov, row_chol, col_chol })
    }

    /// Builds from precomputed Cholesky factors (the covariances are rebuilt).
    pub fn from_factors(mean: Mat<T>, row_chol: Cholesky<T, Dyn>, col_chol: Cholesky<T, Dyn>) -> Result<Self> {
        let row_cov = { let l = row_chol.l(); &l * l.transpose() };
        let col_cov = { let l = col_chol.l(); &l * l.transpose() };
        if row_cov.nrows() != mean.nrows() || col_cov.nrows() != mean.ncols() {
            return Err(RolemError::dim("factor sizes do not match the mean"));
        }
        Ok(Self { mean, row_cov, col_cov, row_chol, col_chol })
    }

    pub fn mean(&self) -> &Mat<T> {
        &self.mean
    }

    pub fn row_cov(&self) -> &Mat<T> {
        &self.row_cov
    }

    pub fn col_cov(&self) -> &Mat<T> {
        &self.col_cov
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mean.shape()
    }

    /// `tr(Λ₁⁻¹ (Y−M) Λ₂⁻¹ (Y−M)ᵀ)`.
    pub fn quadratic_form(&self, y: &Mat<T>) -> Result<T> {
        if y.shape() != self.mean.shape() {
            return Err(RolemError::dim(format!(
                "observation is {}x{}, expected {}x{}",
                y.nrows(),
                y.ncols(),
                self.mean.nrows(),
                self.mean.ncols()
            )));
        }
        let resid = y - &self.mean;
        // W = L₁⁻¹ E, then V = L₂⁻¹ Wᵀ; the form is ‖V‖².
        let w = self.row_chol.l_dirty().solve_lower_triangular(&resid).expect("nonsingular factor");
        let v = self
            .col_chol
            .l_dirty()
            .solve_lower_triangular(&w.transpose())
            .expect("nonsingular factor");
        Ok(v.norm_squared())
    }

    fn log_norm_dets(&self) -> T {
        let (a, b) = self.shape();
        T::lit(b as f64 * 0.5) * chol_logdet(&self.row_chol) + T::lit(a as f64 * 0.5) * chol_logdet(&self.col_chol)
    }
}

pub fn mn_logpdf<T: Real>(y: &Mat<T>, params: &MatNormalParams<T>) -> Result<T> {
    let (a, b) = params.shape();
    let q = params.quadratic_form(y)?;
    let ab = (a * b) as f64;
    Ok(T::lit(-0.5 * ab * (2.0 * PI).ln()) - params.log_norm_dets() - T::lit(0.5) * q)
}

/// Draw `M + L₁ Z L₂ᵀ` with `Z` iid standard normal.
pub fn mn_sample<T: Real, R: Rng + ?Sized>(params: &MatNormalParams<T>, rng: &mut R) -> Mat<T> {
    let (a, b) = params.shape();
    let z = Mat::from_fn(a, b, |_, _| T::std_normal(rng));
    let l1 = params.row_chol.l();
    let l2 = params.col_chol.l();
    &params.mean + l1 * z * l2.transpose()
}

#[derive(Debug, Clone)]
pub struct MatTParams<T: Real> {
    dof: T,
    normal: MatNormalParams<T>,
}

impl<T: Real> MatTParams<T> {
    pub fn new(dof: T, mean: Mat<T>, row_cov: Mat<T>, col_cov: Mat<T>) -> Result<Self> {
        Self::from_normal(dof, MatNormalParams::new(mean, row_cov, col_cov)?)
    }

    pub fn from_normal(dof: T, normal: MatNormalParams<T>) -> Result<Self> {
        if !(dof > T::zero()) || !dof.is_finite() {
            return Err(RolemError::invalid(format!("degrees of freedom must be positive, got {dof}")));
        }
        Ok(Self { dof, normal })
    }

    pub fn dof(&self) -> T {
        self.dof
    }

    pub fn normal(&self) -> &MatNormalParams<T> {
        &self.normal
    }
}

pub fn mt_logpdf<T: Real>(y: &Mat<T>, params: &MatTParams<T>) -> Result<T> {
    let (a, b) = params.normal.shape();
    let q = params.normal.quadratic_form(y)?;
    let nu = params.dof;
    Ok(mt_log_kernel(q, nu, a * b) - params.normal.log_norm_dets())
}

/// Matrix-t log density with the determinant terms excluded, as a function of
/// the quadratic form `q` and the element count `ab`.
pub(crate) fn mt_log_kernel<T: Real>(q: T, nu: T, ab: usize) -> T {
    let half = T::lit(0.5);
    let abt = T::lit(ab as f64);
    ((abt + nu) * half).lgamma() - (nu * half).lgamma() - abt * half * (nu * T::pi()).ln()
        - (abt + nu) * half * (q / nu).ln_1p()
}

/// Matrix-normal log density with determinant terms excluded.
pub(crate) fn mn_log_kernel<T: Real>(q: T, ab: usize) -> T {
    T::lit(-0.5 * ab as f64 * (2.0 * PI).ln()) - T::lit(0.5) * q
}

/// Draw from `MT(ν, M, Λ₁, Λ₂)` through its scale-mixture representation.
pub fn mt_sample<T: Real, R: Rng + ?Sized>(params: &MatTParams<T>, rng: &mut R) -> Mat<T> {
    let half_nu = params.dof * T::lit(0.5);
    let tau = T::sample_gamma(half_nu, half_nu, rng);
    let mean = params.normal.mean();
    let z = mn_sample(&params.normal, rng) - mean;
    mean + z / tau.sqrt()
}

#[derive(Debug, Clone)]
pub struct InvWishartParams<T: Real> {
    dof: T,
    scale: Mat<T>,
    scale_chol: Cholesky<T, Dyn>,
}

impl<T: Real> InvWishartParams<T> {
    pub fn new(dof: T, scale: Mat<T>) -> Result<Self> {
        let d = scale.nrows();
        if !(dof > T::lit(d as f64 - 1.0)) {
            return Err(RolemError::invalid(format!(
                "inverse-Wishart dof {dof} must exceed dim - 1 = {}",
                d as f64 - 1.0
            )));
        }
        let scale_chol = cholesky(&scale, "inverse-Wishart scale")?;
        Ok(Self { dof, scale, scale_chol })
    }

    pub fn dof(&self) -> T {
        self.dof
    }

    pub fn scale(&self) -> &Mat<T> {
        &self.scale
    }

    pub fn dim(&self) -> usize {
        self.scale.nrows()
    }
}

/// log of the multivariate gamma function Γ_d(x).
pub fn ln_mv_gamma<T: Real>(x: T, d: usize) -> T {
    let df = d as f64;
    let mut acc = T::lit(df * (df - 1.0) / 4.0 * PI.ln());
    for j in 0..d {
        acc += (x - T::lit(j as f64 * 0.5)).lgamma();
    }
    acc
}

pub fn invwishart_logpdf<T: Real>(omega: &Mat<T>, params: &InvWishartParams<T>) -> Result<T> {
    let d = params.dim();
    if omega.shape() != (d, d) {
        return Err(RolemError::dim("inverse-Wishart argument has the wrong shape"));
    }
    let ch = cholesky(omega, "inverse-Wishart argument")?;
    let k = params.dof;
    let half = T::lit(0.5);
    let dt = T::lit(d as f64);
    let trace = (&params.scale * ch.inverse()).trace();
    Ok(k * half * chol_logdet(&params.scale_chol)
        - k * dt * half * T::lit(2.0).ln()
        - ln_mv_gamma(k * half, d)
        - (k + dt + T::one()) * half * chol_logdet(&ch)
        - half * trace)
}

/// Bartlett-decomposition draw. With `Ψ = C Cᵀ` and `A` the Bartlett factor of
/// a standard Wishart, the draw is `(C A⁻ᵀ)(C A⁻ᵀ)ᵀ`.
pub fn invwishart_sample<T: Real, R: Rng + ?Sized>(params: &InvWishartParams<T>, rng: &mut R) -> Mat<T> {
    let d = params.dim();
    let mut a = Mat::zeros(d, d);
    for i in 0..d {
        let shape = (params.dof - T::lit(i as f64)) * T::lit(0.5);
        a[(i, i)] = (T::lit(2.0) * T::sample_gamma(shape, T::one(), rng)).sqrt();
        for j in 0..i {
            a[(i, j)] = T::std_normal(rng);
        }
    }
    // B = C A⁻ᵀ  <=>  A Bᵀ = Cᵀ.
    let c = params.scale_chol.l();
    let bt = a.solve_lower_triangular(&c.transpose()).expect("Bartlett factor has a positive diagonal");
    let b = bt.transpose();
    let out = &b * b.transpose();
    crate::linalg::symmetrize(&out)
}

/// Gamma density in shape/rate form.
pub fn gamma_logpdf<T: Real>(x: T, shape: T, rate: T) -> T {
    if x <= T::zero() {
        return T::min_value().unwrap_or_else(|| T::lit(f64::MIN));
    }
    shape * rate.ln() - shape.lgamma() + (shape - T::one()) * x.ln() - rate * x
}

/// Multivariate normal density with a dense covariance.
pub fn mvn_logpdf<T: Real>(x: &Vector<T>, mean: &Vector<T>, cov: &Mat<T>) -> Result<T> {
    let n = x.len();
    if mean.len() != n || cov.shape() != (n, n) {
        return Err(RolemError::dim("multivariate normal argument sizes disagree"));
    }
    let ch = cholesky(cov, "covariance")?;
    let z = ch.l_dirty().solve_lower_triangular(&(x - mean)).expect("nonsingular factor");
    Ok(T::lit(-0.5 * n as f64 * (2.0 * PI).ln()) - T::lit(0.5) * chol_logdet(&ch) - T::lit(0.5) * z.norm_squared())
}
