use crate::corrstruct::CorrKind;
use crate::error::{Result, RolemError};
use crate::grassmann::{basis_from_coordinates, coordinates_from_basis, EnvelopeBasis, Frame};
use crate::linalg::{cholesky, sorted_symmetric_eigen, symmetrize, Mat, Vector};
use crate::model::{LongitudinalDataset, ParameterState};
use crate::scalar::Real;

/// Reference frame used to parameterize the Grassmann coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum FrameChoice<T: Real> {
    Identity,
    /// Q factor of the least-squares `β⁽⁰⁾`, completed to r columns.
    #[default]
    QrOfBeta,
    Fixed(Frame<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Initialization<T: Real> {
    pub state: ParameterState<T>,
    pub frame: Frame<T>,
    /// Per-response least-squares fit (r × p) and its residual covariance.
    pub beta_ls: Mat<T>,
    pub sigma_ls: Mat<T>,
}

const RHO_FLOOR: f64 = 0.001;
const RHO_CEIL: f64 = 0.999;

/// Least-squares starting point: τ = 1, ν = 10, (α, β) from per-response
/// regressions, Γ from the leading eigenvectors of `M + c·β⁽⁰⁾β⁽⁰⁾ᵀ/tr(β⁽⁰⁾β⁽⁰⁾ᵀ)`
/// with c the number of observations, and ρ from the lag-1 correlation of
/// standardized residuals. Without `prior_m` this is the leading left
/// singular subspace of β⁽⁰⁾.
///
/// A sharp prior on part of the envelope pins those directions within a few
/// sweeps and shrinks the projection proposal accordingly, so the remaining
/// directions barely move afterwards. Starting them at the data's best guess
/// orthogonal to the prior's directions avoids getting stuck.
///
/// If the requested frame cannot represent Γ⁽⁰⁾, the QR frame, the identity
/// and finally the frame completing Γ⁽⁰⁾ itself are tried in turn.
pub fn initialize<T: Real>(
    data: &LongitudinalDataset<T>,
    u: usize,
    corr: CorrKind,
    choice: FrameChoice<T>,
    prior_m: Option<&Mat<T>>,
) -> Result<Initialization<T>> {
    let (r, p, n) = (data.r(), data.p(), data.n());
    if u == 0 || u >= r {
        return Err(RolemError::invalid(format!("envelope dimension must satisfy 1 <= u < r, got u={u}, r={r}")));
    }
    if n == 0 {
        return Err(RolemError::invalid("dataset has no subjects"));
    }
    let (alpha, beta, resid) = least_squares(data)?;
    let sigma = residual_covariance(&resid, p + 1)?;

    let mut score = &beta * beta.transpose();
    if let Some(m) = prior_m {
        let tr = score.trace();
        if tr > T::zero() {
            score *= T::lit(data.total_times() as f64) / tr;
        }
        score += m;
    }
    let (_, vecs) = sorted_symmetric_eigen(&symmetrize(&score));
    let gamma_ls = vecs.columns(0, u).into_owned();

    let requested = match choice {
        FrameChoice::Identity => Frame::identity(r),
        FrameChoice::QrOfBeta => Frame::completing(&beta),
        FrameChoice::Fixed(f) => f,
    };
    let candidates = [requested, Frame::completing(&beta), Frame::identity(r), Frame::completing(&gamma_ls)];
    let mut chosen = None;
    for (k, frame) in candidates.into_iter().enumerate() {
        match coordinates_from_basis(&gamma_ls, &frame).and_then(|a| basis_from_coordinates(&a, &frame)) {
            Ok(basis) => {
                if k > 0 {
                    log::warn!("initial frame could not represent the starting subspace; using fallback {k}");
                }
                chosen = Some((frame, basis));
                break;
            }
            Err(RolemError::FrameFailure { condition }) => {
                log::debug!("frame candidate {k} failed with condition {condition:.3e}");
            }
            Err(e) => return Err(e),
        }
    }
    let (frame, basis) = chosen.ok_or(RolemError::FrameFailure { condition: f64::INFINITY })?;

    let state = state_from_moments(&basis, alpha, &beta, &sigma, initial_rho(data, &resid, &sigma, corr), n);
    Ok(Initialization { state, frame, beta_ls: beta, sigma_ls: sigma })
}

fn state_from_moments<T: Real>(
    basis: &EnvelopeBasis<T>,
    alpha: Vector<T>,
    beta: &Mat<T>,
    sigma: &Mat<T>,
    rho: T,
    n: usize,
) -> ParameterState<T> {
    let g = &basis.gamma;
    let g0 = &basis.gamma0;
    ParameterState {
        alpha,
        eta: g.transpose() * beta,
        omega: symmetrize(&(g.transpose() * sigma * g)),
        omega0: symmetrize(&(g0.transpose() * sigma * g0)),
        basis: basis.clone(),
        rho,
        nu: T::lit(10.0),
        tau: Vector::from_element(n, T::one()),
    }
}

/// Per-response regression of every observation on `(1, x)`, solved through
/// the pseudo-inverse so rank-deficient designs still give an answer.
/// Returns `(α, β, residuals per subject)`.
/// (α⁽⁰⁾, β⁽⁰⁾, per-subject residuals)
type LsFit<T> = (Vector<T>, Mat<T>, Vec<Mat<T>>);

fn least_squares<T: Real>(data: &LongitudinalDataset<T>) -> Result<LsFit<T>> {
    let (r, p) = (data.r(), data.p());
    let total = data.total_times();
    let mut design = Mat::zeros(total, p + 1);
    let mut resp = Mat::zeros(total, r);
    let mut row = 0;
    for s in data.subjects() {
        for j in 0..s.times() {
            design[(row, 0)] = T::one();
            for k in 0..p {
                design[(row, k + 1)] = s.x[(k, j)];
            }
            for k in 0..r {
                resp[(row, k)] = s.y[(k, j)];
            }
            row += 1;
        }
    }
    if design.iter().chain(resp.iter()).any(|v| !v.is_finite()) {
        return Err(RolemError::invalid("data contain non-finite values"));
    }
    let svd = design.svd(true, true);
    let smax = svd.singular_values.iter().fold(T::zero(), |a, &s| a.max(s));
    let eps = smax * T::lit((total.max(p + 1) as f64) * T::EPS);
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    if rank < p + 1 {
        log::warn!("design matrix has rank {rank} < {}; least-squares start uses the pseudo-inverse", p + 1);
    }
    let coef = svd.solve(&resp, eps).map_err(|e| RolemError::RankDeficient(e.to_string()))?;
    let alpha = coef.row(0).transpose();
    let beta = coef.rows(1, p).transpose();
    let resid = data
        .subjects()
        .iter()
        .map(|s| crate::model::residual(&s.y, &s.x, &beta, &alpha))
        .collect();
    Ok((alpha, beta, resid))
}

/// Residual covariance with a small ridge if it is not positive definite
/// (e.g. noiseless or very short data).
fn residual_covariance<T: Real>(resid: &[Mat<T>], n_coef: usize) -> Result<Mat<T>> {
    let r = resid[0].nrows();
    let total: usize = resid.iter().map(|e| e.ncols()).sum();
    let mut s = Mat::zeros(r, r);
    for e in resid {
        s += e * e.transpose();
    }
    let denom = if total > n_coef { total - n_coef } else { total.max(1) };
    let mut sigma = symmetrize(&(s / T::lit(denom as f64)));
    if cholesky(&sigma, "residual covariance").is_err() {
        let scale = (sigma.trace() / T::lit(r as f64)).max(T::one());
        let ridge = scale * T::tol(1e-8);
        log::warn!("residual covariance is singular; adding ridge {ridge}");
        sigma += Mat::identity(r, r) * ridge;
        cholesky(&sigma, "residual covariance")?;
    }
    Ok(sigma)
}

/// Pooled lag-1 correlation of standardized residuals, clamped into the open
/// unit interval.
fn initial_rho<T: Real>(data: &LongitudinalDataset<T>, resid: &[Mat<T>], sigma: &Mat<T>, corr: CorrKind) -> T {
    if !corr.has_rho() {
        return T::zero();
    }
    let sd: Vec<T> = (0..sigma.nrows()).map(|k| sigma[(k, k)].sqrt()).collect();
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    let (mut sx, mut sy, mut m) = (T::zero(), T::zero(), 0usize);
    for (s, e) in data.subjects().iter().zip(resid) {
        for j in 1..s.times() {
            for (k, &d) in sd.iter().enumerate() {
                let a = e[(k, j - 1)] / d;
                let b = e[(k, j)] / d;
                sx += a;
                sy += b;
                sxx += a * a;
                syy += b * b;
                sxy += a * b;
                m += 1;
            }
        }
    }
    let raw = if m < 2 {
        T::lit(0.5)
    } else {
        let mf = T::lit(m as f64);
        let cov = sxy / mf - sx * sy / (mf * mf);
        let vx = sxx / mf - sx * sx / (mf * mf);
        let vy = syy / mf - sy * sy / (mf * mf);
        let c = cov / (vx * vy).sqrt();
        if c.is_finite() {
            c
        } else {
            T::lit(0.5)
        }
    };
    raw.max(T::lit(RHO_FLOOR)).min(T::lit(RHO_CEIL))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Subject;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(rng: &mut ChaCha8Rng, noise: f64) -> LongitudinalDataset<f64> {
        let beta = Mat::from_row_slice(3, 2, &[1.0, 0.0, 2.0, -1.0, 0.0, 0.5]);
        let alpha = Vector::from_vec(vec![0.5, -1.0, 2.0]);
        let subjects = (0..20)
            .map(|i| {
                let x = Mat::from_fn(2, 4, |_, _| f64::std_normal(rng));
                let mut y = &beta * &x + Mat::from_fn(3, 4, |_, _| noise * f64::std_normal(rng));
                for mut c in y.column_iter_mut() {
                    c += &alpha;
                }
                Subject { id: i.to_string(), y, x }
            })
            .collect();
        LongitudinalDataset::new(subjects, 3, 2).unwrap()
    }

    #[test]
    fn least_squares_recovers_noiseless_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = toy(&mut rng, 0.0);
        let init = initialize(&data, 2, CorrKind::Ar1, FrameChoice::Identity, None).unwrap();
        let want = Mat::from_row_slice(3, 2, &[1.0, 0.0, 2.0, -1.0, 0.0, 0.5]);
        assert!((&init.beta_ls - want).abs().max() < 1e-10);
        let st = &init.state;
        assert!((&st.basis.gamma * &st.eta - &init.beta_ls).abs().max() < 1e-9);
        assert!((st.alpha[2] - 2.0).abs() < 1e-10);
        let r = st.rho;
        assert!((0.001..=0.999).contains(&r));
        assert_eq!(st.nu, 10.0);
    }

    #[test]
    fn init_state_is_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data = toy(&mut rng, 1.0);
        for choice in [FrameChoice::Identity, FrameChoice::QrOfBeta] {
            let init = initialize(&data, 1, CorrKind::Cs, choice, None).unwrap();
            init.state.validate(&data, crate::ErrorModel::T).unwrap();
        }
        let init = initialize(&data, 1, CorrKind::Uncor, FrameChoice::Identity, None).unwrap();
        assert_eq!(init.state.rho, 0.0);
    }

    #[test]
    fn rejects_full_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data = toy(&mut rng, 1.0);
        assert!(initialize(&data, 3, CorrKind::Ar1, FrameChoice::Identity, None).is_err());
    }
}
