//! Independent reference computations. Everything here is written against
//! dense nalgebra matrices and vec/Kronecker forms so it shares no code path
//! with the library densities it checks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rolem::sampler::PriorSpec;
use rolem::{CorrKind, ErrorModel, LongitudinalDataset, ParameterState, Subject};
use statrs::function::gamma::ln_gamma;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Log density of `x ~ N(mean, cov)` by dense Cholesky.
pub fn mvn_dense(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let ch = cov.clone().cholesky().expect("oracle covariance must be SPD");
    let d = x - mean;
    let z = ch.l().solve_lower_triangular(&d).unwrap();
    let logdet: f64 = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (x.len() as f64 * LN_2PI + logdet + z.norm_squared())
}

/// Matrix normal through `vec(Y) ~ N(vec(M), V ⊗ U)`.
pub fn mn_kron(y: &DMatrix<f64>, mean: &DMatrix<f64>, row_cov: &DMatrix<f64>, col_cov: &DMatrix<f64>) -> f64 {
    mvn_dense(&vec_of(y), &vec_of(mean), &col_cov.kronecker(row_cov))
}

pub fn gamma_dens(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

pub fn invwishart_dens(omega: &DMatrix<f64>, dof: f64, scale: &DMatrix<f64>) -> f64 {
    let d = omega.nrows() as f64;
    let ln_mvg: f64 = d * (d - 1.0) / 4.0 * std::f64::consts::PI.ln()
        + (0..omega.nrows()).map(|j| ln_gamma(dof / 2.0 - j as f64 / 2.0)).sum::<f64>();
    let inv = omega.clone().try_inverse().unwrap();
    dof / 2.0 * scale.determinant().ln() - dof * d / 2.0 * 2f64.ln() - ln_mvg
        - (dof + d + 1.0) / 2.0 * omega.determinant().ln()
        - 0.5 * (scale * inv).trace()
}

/// Dense correlation matrix built entry by entry.
pub fn corr_dense(kind: CorrKind, rho: f64, j: usize) -> DMatrix<f64> {
    DMatrix::from_fn(j, j, |a, b| {
        if a == b {
            1.0
        } else {
            match kind {
                CorrKind::Uncor => 0.0,
                CorrKind::Cs => rho,
                CorrKind::Ar1 => rho.powi((a as i32 - b as i32).abs()),
            }
        }
    })
}

pub fn beta_sigma(st: &ParameterState<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let g = &st.basis.gamma;
    let g0 = &st.basis.gamma0;
    let beta = g * &st.eta;
    let sigma = g * &st.omega * g.transpose() + g0 * &st.omega0 * g0.transpose();
    (beta, sigma)
}

fn mean_of(s: &Subject<f64>, alpha: &DVector<f64>, beta: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = beta * &s.x;
    for mut c in m.column_iter_mut() {
        c += alpha;
    }
    m
}

/// Unnormalized joint log posterior of `(θ, τ)` written term by term from
/// the model: matrix-normal likelihood given τ, Gamma(ν/2, ν/2) mixing,
/// the conjugate priors, `etr(MP)` and the Gamma(a, b) prior on ν.
pub fn joint_log_posterior(
    data: &LongitudinalDataset<f64>,
    st: &ParameterState<f64>,
    prior: &PriorSpec<f64>,
    corr: CorrKind,
) -> f64 {
    let (beta, sigma) = beta_sigma(st);
    let mut lp = 0.0;
    for (i, s) in data.subjects().iter().enumerate() {
        let tau = st.tau[i];
        let r = corr_dense(corr, st.rho, s.times());
        lp += mn_kron(&s.y, &mean_of(s, &st.alpha, &beta), &(&sigma / tau), &r);
        if prior.error_model == ErrorModel::T {
            lp += gamma_dens(tau, st.nu / 2.0, st.nu / 2.0);
        }
    }
    if let Some(ap) = &prior.alpha_prior {
        lp += mvn_dense(&st.alpha, &ap.mean, &ap.cov);
    }
    let g = &st.basis.gamma;
    let h_inv = prior.h.clone().try_inverse().unwrap();
    lp += mn_kron(&st.eta, &(g.transpose() * &prior.xi), &st.omega, &h_inv);
    lp += invwishart_dens(&st.omega, prior.k, &prior.psi);
    lp += invwishart_dens(&st.omega0, prior.k0, &prior.psi0);
    lp += (&prior.m * st.basis.projection.matrix()).trace();
    if prior.error_model == ErrorModel::T {
        lp += (prior.a - 1.0) * st.nu.ln() - prior.b * st.nu;
    }
    lp
}

/// Fresh responses from the likelihood given `(θ, τ)`, keeping each
/// subject's covariates.
pub fn resimulate<R: Rng>(
    data: &LongitudinalDataset<f64>,
    st: &ParameterState<f64>,
    corr: CorrKind,
    rng: &mut R,
) -> LongitudinalDataset<f64> {
    let (beta, sigma) = beta_sigma(st);
    let ls = sigma.cholesky().expect("Sigma_eps SPD").unpack();
    let subjects = data
        .subjects()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let j = s.times();
            let lr = corr_dense(corr, st.rho, j).cholesky().expect("R SPD").unpack();
            let z = DMatrix::from_fn(s.y.nrows(), j, |_, _| StandardNormal.sample(rng));
            let y = mean_of(s, &st.alpha, &beta) + &ls * z * lr.transpose() / st.tau[i].sqrt();
            Subject { id: s.id.clone(), y, x: s.x.clone() }
        })
        .collect();
    LongitudinalDataset::new(subjects, data.r(), data.p()).unwrap()
}

/// Random SPD matrix `B Bᵀ + d·I`.
pub fn random_spd<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(n, n) * rng.random_range(0.2..1.5)
}

/// Matrix-t log density by integrating the scale mixture
/// `∫ N(vec Y; vec M, (V⊗U)/τ) Gamma(τ; ν/2, ν/2) dτ` over `s = ln τ` with
/// composite Simpson on a window around the mode of the integrand.
pub fn mt_by_quadrature(
    y: &DMatrix<f64>,
    mean: &DMatrix<f64>,
    row_cov: &DMatrix<f64>,
    col_cov: &DMatrix<f64>,
    nu: f64,
) -> f64 {
    let cov = col_cov.kronecker(row_cov);
    let base = mvn_dense(&vec_of(y), &vec_of(mean), &cov);
    let d = y.len() as f64;
    // log N(·; ·, cov/τ) = base + (d/2) ln τ − (τ − 1) q/2, with q from base.
    let logdet = 2.0 * cov.clone().cholesky().unwrap().l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let q = -2.0 * base - d * LN_2PI - logdet;
    let g = |s: f64| {
        let tau = s.exp();
        base + 0.5 * d * s - 0.5 * (tau - 1.0) * q + gamma_dens(tau, nu / 2.0, nu / 2.0) + s
    };
    let s_star = ((d + nu) / (q + nu)).ln();
    let (lo, hi) = (s_star - 120.0, s_star + 8.0);
    let m = 40_000;
    let h = (hi - lo) / m as f64;
    let g_star = g(s_star);
    let mut acc = 0.0;
    for k in 0..=m {
        let w = if k == 0 || k == m {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * (g(lo + k as f64 * h) - g_star).exp();
    }
    g_star + (acc * h / 3.0).ln()
}
