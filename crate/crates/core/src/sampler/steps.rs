use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use rand::Rng;

use super::{AcceptCounts, PriorSpec, ProposalScales};
use crate::corrstruct::{corr_inverse_logdet, CorrKind, CorrelationSpec};
use crate::error::{Result, RolemError};
use crate::grassmann::{basis_from_projection, propose_projection, EnvelopeBasis, Frame};
use crate::linalg::{cholesky, spd_inverse, symmetrize, Mat, Vector};
use crate::matvar::{invwishart_sample, mn_sample, InvWishartParams, MatNormalParams};
use crate::model::{assemble, quad_trace, residual, ErrorModel, LongitudinalDataset, ParameterState};
use crate::scalar::Real;

/// ρ-dependent per-subject quantities.
#[derive(Debug, Clone)]
struct SubjectStats<T: Real> {
    rinv: Mat<T>,
    xrx: Mat<T>,
    xr1: Vector<T>,
    one_r1: T,
    yry: Mat<T>,
    yrx: Mat<T>,
    yr1: Vector<T>,
}

/// τ-weighted sums of [`SubjectStats`].
#[derive(Debug, Clone)]
struct Aggregates<T: Real> {
    s_yy: Mat<T>,
    s_yx: Mat<T>,
    s_y1: Vector<T>,
    s_xx: Mat<T>,
    s_x1: Vector<T>,
    s_11: T,
}

/// Gibbs/Metropolis-Hastings kernel for one dataset, prior and correlation
/// structure. Caches the ρ- and τ-dependent sufficient statistics between
/// steps.
#[derive(Debug, Clone)]
pub struct Sampler<'a, T: Real> {
    data: &'a LongitudinalDataset<T>,
    prior: &'a PriorSpec<T>,
    corr: CorrKind,
    frame: Frame<T>,
    scales: ProposalScales,
    accept: AcceptCounts,
    stats: Vec<SubjectStats<T>>,
    stats_key: Option<T>,
    agg: Option<Aggregates<T>>,
    agg_tau: Vector<T>,
}

impl<'a, T: Real> Sampler<'a, T> {
    pub fn new(
        data: &'a LongitudinalDataset<T>,
        prior: &'a PriorSpec<T>,
        corr: CorrKind,
        frame: Frame<T>,
        scales: ProposalScales,
    ) -> Result<Self> {
        let (r, p, u) = (data.r(), data.p(), prior.u());
        if u == 0 || u >= r {
            return Err(RolemError::invalid(format!("envelope dimension must satisfy 1 <= u < r, got u={u}, r={r}")));
        }
        if frame.dim() != r {
            return Err(RolemError::dim("frame size differs from the response dimension"));
        }
        prior.validate(r, p, u)?;
        Ok(Self {
            data,
            prior,
            corr,
            frame,
            scales,
            accept: AcceptCounts::default(),
            stats: Vec::new(),
            stats_key: None,
            agg: None,
            agg_tau: Vector::zeros(0),
        })
    }

    pub fn frame(&self) -> &Frame<T> {
        &self.frame
    }

    pub fn scales(&self) -> ProposalScales {
        self.scales
    }

    pub fn set_scales(&mut self, scales: ProposalScales) {
        self.scales = scales;
    }

    pub fn accept(&self) -> AcceptCounts {
        self.accept
    }

    pub fn reset_accept(&mut self) {
        self.accept = AcceptCounts::default();
    }

    fn error_model(&self) -> ErrorModel {
        self.prior.error_model
    }

    fn key(&self, rho: T) -> T {
        if self.corr.has_rho() {
            rho
        } else {
            T::zero()
        }
    }

    fn spec(&self, rho: T) -> Result<CorrelationSpec<T>> {
        if self.corr.has_rho() {
            CorrelationSpec::new(self.corr, rho)
        } else {
            Ok(CorrelationSpec::uncorrelated())
        }
    }

    fn corr_table(&self, rho: T) -> Result<BTreeMap<usize, (Mat<T>, T)>> {
        let spec = self.spec(rho)?;
        let mut table = BTreeMap::new();
        for s in self.data.subjects() {
            let j = s.times();
            if let Entry::Vacant(e) = table.entry(j) {
                e.insert(corr_inverse_logdet(&spec, j)?);
            }
        }
        Ok(table)
    }

    fn refresh(&mut self, rho: T, tau: &Vector<T>) -> Result<()> {
        let key = self.key(rho);
        if self.stats_key != Some(key) {
            let table = self.corr_table(rho)?;
            self.stats = self
                .data
                .subjects()
                .iter()
                .map(|s| {
                    let rinv = table[&s.times()].0.clone();
                    let r1 = rinv.column_sum();
                    let xr = &s.x * &rinv;
                    let yr = &s.y * &rinv;
                    SubjectStats {
                        xrx: &xr * s.x.transpose(),
                        xr1: &s.x * &r1,
                        one_r1: r1.sum(),
                        yry: &yr * s.y.transpose(),
                        yrx: &yr * s.x.transpose(),
                        yr1: &s.y * &r1,
                        rinv,
                    }
                })
                .collect();
            self.stats_key = Some(key);
            self.agg = None;
        }
        if self.agg.is_none() || self.agg_tau != *tau {
            let (r, p) = (self.data.r(), self.data.p());
            let mut a = Aggregates {
                s_yy: Mat::zeros(r, r),
                s_yx: Mat::zeros(r, p),
                s_y1: Vector::zeros(r),
                s_xx: Mat::zeros(p, p),
                s_x1: Vector::zeros(p),
                s_11: T::zero(),
            };
            for (st, &t) in self.stats.iter().zip(tau.iter()) {
                a.s_yy += &st.yry * t;
                a.s_yx += &st.yrx * t;
                a.s_y1 += &st.yr1 * t;
                a.s_xx += &st.xrx * t;
                a.s_x1 += &st.xr1 * t;
                a.s_11 += st.one_r1 * t;
            }
            a.s_yy = symmetrize(&a.s_yy);
            a.s_xx = symmetrize(&a.s_xx);
            self.agg = Some(a);
            self.agg_tau = tau.clone();
        }
        Ok(())
    }

    fn agg(&mut self, state: &ParameterState<T>) -> Result<&Aggregates<T>> {
        self.refresh(state.rho, &state.tau)?;
        Ok(self.agg.as_ref().expect("aggregates refreshed"))
    }

    /// `Σ_i τ_i (Y_i − α1ᵀ − βX_i) R_i⁻¹ (·)ᵀ`.
    pub fn weighted_scatter(&mut self, state: &ParameterState<T>, alpha: &Vector<T>, beta: &Mat<T>) -> Result<Mat<T>> {
        let a = self.agg(state)?;
        let bx1 = beta * &a.s_x1;
        let cross = &a.s_yx * beta.transpose() + &a.s_y1 * alpha.transpose() - &bx1 * alpha.transpose();
        let s = &a.s_yy - &cross - cross.transpose() + beta * &a.s_xx * beta.transpose()
            + alpha * alpha.transpose() * a.s_11;
        Ok(symmetrize(&s))
    }

    /// Gamma (shape, rate) of each `τ_i` given everything else.
    pub fn tau_conditional(&mut self, state: &ParameterState<T>) -> Result<Vec<(T, T)>> {
        let deltas = self.deltas(state, state.rho)?;
        let r = T::lit(self.data.r() as f64);
        let half = T::lit(0.5);
        Ok(self
            .data
            .subjects()
            .iter()
            .zip(deltas)
            .map(|(s, d)| ((state.nu + T::lit(s.times() as f64) * r) * half, (state.nu + d) * half))
            .collect())
    }

    fn sigma_inv(state: &ParameterState<T>) -> Result<Mat<T>> {
        let g = &state.basis.gamma;
        let g0 = &state.basis.gamma0;
        let oi = spd_inverse(&state.omega, "Omega")?;
        let o0i = spd_inverse(&state.omega0, "Omega0")?;
        Ok(symmetrize(&(g * oi * g.transpose() + g0 * o0i * g0.transpose())))
    }

    /// `Δ_i` of every subject at correlation parameter `rho`.
    fn deltas(&mut self, state: &ParameterState<T>, rho: T) -> Result<Vec<T>> {
        let sigma_inv = Self::sigma_inv(state)?;
        let beta = &state.basis.gamma * &state.eta;
        let table = if self.stats_key == Some(self.key(rho)) { None } else { Some(self.corr_table(rho)?) };
        let out: Vec<T> = self
            .data
            .subjects()
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let e = residual(&s.y, &s.x, &beta, &state.alpha);
                let rinv = match &table {
                    Some(t) => &t[&s.times()].0,
                    None => &self.stats[i].rinv,
                };
                quad_trace(&sigma_inv, &e, rinv)
            })
            .collect();
        check_finite(&out, "tau", state)?;
        Ok(out)
    }

    /// Normal `(mean, covariance)` of α given everything else.
    pub fn alpha_conditional(&mut self, state: &ParameterState<T>) -> Result<(Vector<T>, Mat<T>)> {
        let beta = &state.basis.gamma * &state.eta;
        let sigma = assemble(state).sigma_eps;
        let prior = self.prior.alpha_prior.clone();
        let a = self.agg(state)?;
        if !(a.s_11 > T::zero()) || !a.s_11.is_finite() {
            return Err(RolemError::RankDeficient(format!("alpha precision {} is not positive", a.s_11)));
        }
        let b = &a.s_y1 - &beta * &a.s_x1;
        match prior {
            None => Ok((b / a.s_11, sigma / a.s_11)),
            Some(ap) => {
                let sigma_inv = Self::sigma_inv(state)?;
                let v_inv = spd_inverse(&ap.cov, "alpha prior covariance")?;
                let q = &sigma_inv * a.s_11 + &v_inv;
                let cov = spd_inverse(&q, "alpha posterior precision")?;
                let mean = &cov * (&sigma_inv * b + v_inv * &ap.mean);
                Ok((mean, cov))
            }
        }
    }

    /// Matrix-normal law of η given everything else.
    pub fn eta_conditional(&mut self, state: &ParameterState<T>) -> Result<MatNormalParams<T>> {
        let (xi, h) = (&self.prior.xi, &self.prior.h);
        let xih = xi * h;
        let h_base = h.clone();
        let a = self.agg(state)?;
        let h_tilde = symmetrize(&(h_base + &a.s_xx));
        let ch = cholesky(&h_tilde, "H + sum tau X R^-1 X^T")
            .map_err(|_| RolemError::RankDeficient("covariate cross-product is singular".into()))?;
        let h_inv = symmetrize(&ch.inverse());
        let rhs = xih + &a.s_yx - &state.alpha * a.s_x1.transpose();
        let xi_tilde = rhs * &h_inv;
        let mean = state.basis.gamma.transpose() * xi_tilde;
        MatNormalParams::new(mean, state.omega.clone(), h_inv)
    }

    fn eta_prior_scatter(&self, state: &ParameterState<T>, gamma: &Mat<T>) -> Mat<T> {
        let dev = &state.eta - gamma.transpose() * &self.prior.xi;
        &dev * &self.prior.h * dev.transpose()
    }

    /// Inverse-Wishart law of Ω given everything else.
    pub fn omega_conditional(&mut self, state: &ParameterState<T>) -> Result<InvWishartParams<T>> {
        let g = state.basis.gamma.clone();
        let beta = &g * &state.eta;
        let s = self.weighted_scatter(state, &state.alpha, &beta)?;
        let psi = &self.prior.psi + self.eta_prior_scatter(state, &g) + g.transpose() * s * &g;
        let dof = self.prior.k + T::lit((self.data.p() + self.data.total_times()) as f64);
        InvWishartParams::new(dof, symmetrize(&psi))
    }

    /// Inverse-Wishart law of Ω₀ given everything else.
    pub fn omega0_conditional(&mut self, state: &ParameterState<T>) -> Result<InvWishartParams<T>> {
        let g0 = state.basis.gamma0.clone();
        let beta = &state.basis.gamma * &state.eta;
        let s = self.weighted_scatter(state, &state.alpha, &beta)?;
        let psi = &self.prior.psi0 + g0.transpose() * s * &g0;
        let dof = self.prior.k0 + T::lit(self.data.total_times() as f64);
        InvWishartParams::new(dof, symmetrize(&psi))
    }

    /// Unnormalized log full conditional of ν (prior Gamma(a, b) on ν > 2).
    pub fn nu_log_target(&self, state: &ParameterState<T>, nu: T) -> T {
        if !(nu > T::lit(2.0)) {
            return T::min_value().unwrap_or_else(|| T::lit(f64::MIN));
        }
        let n = T::lit(state.tau.len() as f64);
        let half = T::lit(0.5);
        let (sum_log, sum) = state.tau.iter().fold((T::zero(), T::zero()), |(l, s), &t| (l + t.ln(), s + t));
        n * nu * half * (nu * half).ln() - n * (nu * half).lgamma() + (nu * half - T::one()) * sum_log
            - nu * half * sum
            + (self.prior.a - T::one()) * nu.ln()
            - self.prior.b * nu
    }

    /// Unnormalized log full conditional of ρ (uniform prior on (0, 1)).
    pub fn rho_log_target(&mut self, state: &ParameterState<T>, rho: T) -> Result<T> {
        let g = self.residual_grams(state)?;
        self.rho_target_from_grams(state, &g, rho)
    }

    fn residual_grams(&self, state: &ParameterState<T>) -> Result<Vec<Mat<T>>> {
        let sigma_inv = Self::sigma_inv(state)?;
        let beta = &state.basis.gamma * &state.eta;
        Ok(self
            .data
            .subjects()
            .iter()
            .map(|s| {
                let e = residual(&s.y, &s.x, &beta, &state.alpha);
                e.transpose() * &sigma_inv * e
            })
            .collect())
    }

    fn rho_target_from_grams(&self, state: &ParameterState<T>, grams: &[Mat<T>], rho: T) -> Result<T> {
        let table = self.corr_table(rho)?;
        let half = T::lit(0.5);
        let r = T::lit(self.data.r() as f64);
        let mut total = T::zero();
        for ((s, g), &t) in self.data.subjects().iter().zip(grams).zip(state.tau.iter()) {
            let (rinv, logdet) = &table[&s.times()];
            total -= r * half * *logdet + half * t * rinv.component_mul(g).sum();
        }
        Ok(total)
    }

    /// Unnormalized log full conditional of the projection `P` whose
    /// coordinates are `basis`, holding α, η, Ω, Ω₀, ρ and τ fixed.
    pub fn projection_log_target(&mut self, state: &ParameterState<T>, basis: &EnvelopeBasis<T>) -> Result<T> {
        let omega_inv = spd_inverse(&state.omega, "Omega")?;
        let omega0_inv = spd_inverse(&state.omega0, "Omega0")?;
        let m = self.prior.m.clone();
        let eta = state.eta.clone();
        let alpha = state.alpha.clone();
        let a = self.agg(state)?;
        let s_dd = symmetrize(
            &(&a.s_yy - &a.s_y1 * alpha.transpose() - &alpha * a.s_y1.transpose()
                + &alpha * alpha.transpose() * a.s_11),
        );
        let c = &eta * (a.s_yx.transpose() - &a.s_x1 * alpha.transpose());
        let s_gg = &eta * &a.s_xx * eta.transpose();
        let (g, g0) = (&basis.gamma, &basis.gamma0);
        let s_inv = g * &omega_inv * g.transpose() + g0 * &omega0_inv * g0.transpose();
        let two = T::lit(2.0);
        let half = T::lit(0.5);
        let weighted = s_inv.component_mul(&s_dd).sum() - two * (&omega_inv * &c * g).trace()
            + omega_inv.component_mul(&s_gg).sum();
        let prior_eta = (&omega_inv * self.eta_prior_scatter(state, g)).trace();
        let langevin = m.component_mul(basis.projection.matrix()).sum();
        let out = -half * weighted - half * prior_eta + langevin;
        if !out.is_finite() {
            return Err(non_finite("P", state, "projection log target"));
        }
        Ok(out)
    }

    pub fn step_tau<R: Rng + ?Sized>(&mut self, state: &mut ParameterState<T>, rng: &mut R) -> Result<()> {
        let params = self.tau_conditional(state)?;
        for (t, (shape, rate)) in state.tau.iter_mut().zip(params) {
            *t = T::sample_gamma(shape, rate, rng);
        }
        check_finite(state.tau.as_slice(), "tau", state)
    }

    pub fn step_nu<R: Rng + ?Sized>(&mut self, state: &mut ParameterState<T>, rng: &mut R) -> Result<()> {
        let delta = T::lit(self.scales.delta_nu);
        let two = T::lit(2.0);
        let step = (two * T::uniform_open01(rng) - T::one()) * delta;
        let mut prop = state.nu + step;
        if prop < two {
            prop = T::lit(4.0) - prop;
        }
        let cur = self.nu_log_target(state, state.nu);
        let new = self.nu_log_target(state, prop);
        if !cur.is_finite() || !new.is_finite() {
            return Err(non_finite("nu", state, "degrees-of-freedom log target"));
        }
        let ok = metropolis(new - cur, rng);
        if ok {
            state.nu = prop;
        }
        self.accept.nu.record(ok);
        Ok(())
    }

    pub fn step_omega<R: Rng + ?Sized>(&mut self, state: &mut ParameterState<T>, rng: &mut R) -> Result<()> {
        let params = self.omega_conditional(state)?;
        state.omega = invwishart_sample(&params, rng);
        check_finite(state.omega.as_slice(), "Omega", state)
    }

    pub fn step_omega0<R: Rng + ?Sized>(&mut self, state: &mut ParameterState<T>, rng: &mut R) -> Result<()> {
        let params = self.omega0_conditional(state)?;
        state.omega0 = invwishart_sample(&params, rng);
        check_finite(state.omega0.as_slice(), "Omega0", state)
    }

    pub fn step_projection<R: Rng + ?Sized>(&mut self, state: &mut ParameterState<T>, rng: &mut R) -> Result<()> {
        let sigma2 = T::lit(self.scales.sigma2_p);
        let proposal = propose_projection(&state.basis.projection, sigma2, rng)?;
        let basis = match basis_from_projection(&proposal, &self.frame) {
            Ok(b) => b,
            Err(RolemError::FrameFailure { condition }) => {
                log::debug!("projection proposal rejected: frame condition {condition:.3e}");
                self.accept.frame_failures += 1;
                self.accept.projection.record(false);
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        let cur = self.projection_log_target(state, &state.basis.clone())?;
        let new = self.projection_log_target(state, &basis)?;
        let ok = metropolis(new - cur, rng);
        if ok {
            state.basis = basis;
        }
        self.accept.projection.record(ok);
        Ok(())
    }

    pub fn step_rho<R: Rng + ?Sized>(&mut self, state: &mut ParameterState<T>, rng: &mut R) -> Result<()> {
        let delta = T::lit(self.scales.delta_rho);
        let step = (T::lit(2.0) * T::uniform_open01(rng) - T::one()) * delta;
        let prop = reflect_unit(state.rho + step);
        if !(prop > T::zero() && prop < T::one()) {
            self.accept.rho.record(false);
            return Ok(());
        }
        let grams = self.residual_grams(state)?;
        let cur = self.rho_target_from_grams(state, &grams, state.rho)?;
        let new = self.rho_target_from_grams(state, &grams, prop)?;
        if !cur.is_finite() || !new.is_finite() {
            return Err(non_finite("rho", state, "correlation log target"));
        }
        let ok = metropolis(new - cur, rng);
        if ok {
            state.rho = prop;
        }
        self.accept.rho.record(ok);
        Ok(())
    }

    pub fn step_alpha<R: Rng + ?Sized>(&mut self, state: &mut ParameterState<T>, rng: &mut R) -> Result<()> {
        let (mean, cov) = self.alpha_conditional(state)?;
        let l = cholesky(&cov, "alpha conditional covariance")?.unpack();
        let z = Vector::from_fn(mean.len(), |_, _| T::std_normal(rng));
        state.alpha = mean + l * z;
        check_finite(state.alpha.as_slice(), "alpha", state)
    }

    pub fn step_eta<R: Rng + ?Sized>(&mut self, state: &mut ParameterState<T>, rng: &mut R) -> Result<()> {
        let params = self.eta_conditional(state)?;
        state.eta = mn_sample(&params, rng);
        check_finite(state.eta.as_slice(), "eta", state)
    }

    /// One full sweep in the order τ, ν, Ω, Ω₀, P, ρ, α, η.
    pub fn sweep<R: Rng + ?Sized>(&mut self, state: &mut ParameterState<T>, rng: &mut R) -> Result<()> {
        if self.error_model() == ErrorModel::T {
            self.step_tau(state, rng)?;
            self.step_nu(state, rng)?;
        }
        self.step_omega(state, rng)?;
        self.step_omega0(state, rng)?;
        self.step_projection(state, rng)?;
        if self.corr.has_rho() {
            self.step_rho(state, rng)?;
        }
        self.step_alpha(state, rng)?;
        self.step_eta(state, rng)?;
        Ok(())
    }
}

/// Reflects a random-walk draw back into (0, 1): below 0 maps to `|x|`,
/// above 1 maps to `2 − x`.
pub(crate) fn reflect_unit<T: Real>(mut x: T) -> T {
    let two = T::lit(2.0);
    for _ in 0..64 {
        if x < T::zero() {
            x = -x;
        } else if x > T::one() {
            x = two - x;
        } else {
            break;
        }
    }
    x
}

fn metropolis<T: Real, R: Rng + ?Sized>(log_ratio: T, rng: &mut R) -> bool {
    log_ratio >= T::zero() || T::uniform_open01(rng).ln() < log_ratio
}

fn check_finite<T: Real>(values: &[T], block: &'static str, state: &ParameterState<T>) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(non_finite(block, state, "update produced a non-finite value"))
    }
}

fn non_finite<T: Real>(block: &'static str, state: &ParameterState<T>, what: &str) -> RolemError {
    let tau_min = state.tau.iter().fold(T::max_value().unwrap_or(T::one()), |a, &b| a.min(b));
    let tau_max = state.tau.iter().fold(T::zero(), |a, &b| a.max(b));
    let detail = format!(
        "{what}; state: rho={} nu={} alpha={:?} Omega diag={:?} Omega0 diag={:?} tau range=[{tau_min}, {tau_max}]",
        state.rho,
        state.nu,
        state.alpha.as_slice(),
        state.omega.diagonal().as_slice(),
        state.omega0.diagonal().as_slice(),
    );
    log::error!("non-finite value in {block}: {detail}");
    RolemError::NonFinite { block, detail }
}
