use rand::Rng;

use super::PriorSpec;
use crate::corrstruct::CorrKind;
use crate::error::{Result, RolemError};
use crate::grassmann::{basis_from_projection, sample_uniform_projection, Frame, Projection};
use crate::linalg::{sorted_symmetric_eigen, spd_inverse, Mat, Vector};
use crate::matvar::{invwishart_sample, mn_sample, InvWishartParams, MatNormalParams};
use crate::model::{ErrorModel, ParameterState};
use crate::scalar::Real;

const MAX_REJECTIONS: usize = 1_000_000;

/// Exact draw from the matrix Langevin law `∝ etr(MP)` by rejection from the
/// uniform law. The acceptance rate is `E_unif[exp(tr(MP) − max tr(MP))]`,
/// so this is only practical for weakly concentrated `M`.
pub fn sample_langevin<T: Real, R: Rng + ?Sized>(m: &Mat<T>, u: usize, rng: &mut R) -> Result<Projection<T>> {
    let r = m.nrows();
    let (values, _) = sorted_symmetric_eigen(m);
    let bound = values.iter().take(u).fold(T::zero(), |a, &v| a + v);
    for _ in 0..MAX_REJECTIONS {
        let p = sample_uniform_projection::<T, _>(r, u, rng)?;
        let log_acc = m.component_mul(p.matrix()).sum() - bound;
        if T::uniform_open01(rng).ln() < log_acc {
            return Ok(p);
        }
    }
    Err(RolemError::invalid("Langevin rejection sampler exceeded its attempt budget; M is too concentrated"))
}

/// Draw `(θ, τ)` from a proper prior. Requires an α prior and a positive
/// definite `H`; ν is drawn from Gamma(a, b) restricted to ν > 2.
pub fn sample_from_prior<T: Real, R: Rng + ?Sized>(
    prior: &PriorSpec<T>,
    corr: CorrKind,
    n: usize,
    frame: &Frame<T>,
    rng: &mut R,
) -> Result<ParameterState<T>> {
    let (r, p, u) = (prior.xi.nrows(), prior.xi.ncols(), prior.u());
    prior.validate(r, p, u)?;
    let ap = prior
        .alpha_prior
        .as_ref()
        .ok_or_else(|| RolemError::invalid("sampling from the prior needs a proper alpha prior"))?;
    let h_inv = spd_inverse(&prior.h, "prior H")?;

    let alpha = {
        let l = crate::linalg::cholesky(&ap.cov, "alpha prior covariance")?.unpack();
        &ap.mean + l * Vector::from_fn(r, |_, _| T::std_normal(rng))
    };
    let omega = invwishart_sample(&InvWishartParams::new(prior.k, prior.psi.clone())?, rng);
    let omega0 = invwishart_sample(&InvWishartParams::new(prior.k0, prior.psi0.clone())?, rng);
    let basis = loop {
        let proj = sample_langevin(&prior.m, u, rng)?;
        match basis_from_projection(&proj, frame) {
            Ok(b) => break b,
            Err(RolemError::FrameFailure { .. }) => continue,
            Err(e) => return Err(e),
        }
    };
    let eta_law = MatNormalParams::new(basis.gamma.transpose() * &prior.xi, omega.clone(), h_inv)?;
    let eta = mn_sample(&eta_law, rng);
    let rho = if corr.has_rho() { T::uniform_open01(rng) } else { T::zero() };
    let (nu, tau) = match prior.error_model {
        ErrorModel::T => {
            let nu = truncated_gamma_above_two(prior.a, prior.b, rng)?;
            let half = nu * T::lit(0.5);
            (nu, Vector::from_fn(n, |_, _| T::sample_gamma(half, half, rng)))
        }
        ErrorModel::Normal => (T::lit(f64::INFINITY), Vector::from_element(n, T::one())),
    };
    Ok(ParameterState { alpha, eta, basis, omega, omega0, rho, nu, tau })
}

fn truncated_gamma_above_two<T: Real, R: Rng + ?Sized>(a: T, b: T, rng: &mut R) -> Result<T> {
    for _ in 0..MAX_REJECTIONS {
        let v = T::sample_gamma(a, b, rng);
        if v > T::lit(2.0) {
            return Ok(v);
        }
    }
    Err(RolemError::invalid("Gamma(a, b) puts almost no mass above 2"))
}
