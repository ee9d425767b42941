//! Posterior summaries, model-selection criteria and chain diagnostics.
//!
//! Everything here is post-processing over a finished [`ChainOutput`], so it
//! works in `f64` regardless of the scalar type used for sampling.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corrstruct::CorrKind;
use crate::error::{Result, RolemError};
use crate::linalg::{frobenius, Mat, Vector};
use crate::model::{assemble, pointwise_loglik_marginal, ErrorModel, LongitudinalDataset};
use crate::sampler::{AcceptCounts, ChainOutput};
use crate::scalar::Real;

pub const MIN_HPD_SAMPLES: usize = 20;
pub const MAX_ACF_LAG: usize = 50;

/// Number of free parameters: α, η, P, Ω, Ω₀, ρ and ν. `uncor` has no ρ and
/// the normal model has no ν.
pub fn p_bic(r: usize, p: usize, u: usize, corr: CorrKind, error_model: ErrorModel) -> usize {
    let full = r + u * p + (r - u) * u + u * (u + 1) / 2 + (r - u) * (r - u + 1) / 2 + 2;
    full - usize::from(!corr.has_rho()) - usize::from(error_model == ErrorModel::Normal)
}

/// `−2·max_loglik + p_bic·log n`.
pub fn bic_from(max_loglik: f64, p_bic: usize, n: usize) -> f64 {
    -2.0 * max_loglik + p_bic as f64 * (n as f64).ln()
}

/// Approximate Bayes factor of model a over model b, `exp(−ΔBIC/2)` with
/// `delta_bic = bic_a − bic_b`.
pub fn bayes_factor(delta_bic: f64) -> f64 {
    (-0.5 * delta_bic).exp()
}

/// Largest marginal log-likelihood over the retained draws; a lower bound of
/// the true maximum.
pub fn max_loglik<T: Real>(chain: &ChainOutput<T>) -> Result<f64> {
    if chain.is_empty() {
        return Err(RolemError::TooFewSamples { needed: 1, got: 0 });
    }
    Ok(chain.draws.iter().map(|d| d.loglik.as_f64()).fold(f64::NEG_INFINITY, f64::max))
}

pub fn bic<T: Real>(chain: &ChainOutput<T>, p: usize) -> Result<f64> {
    let r = chain.draws.first().map(|d| d.state.r()).ok_or(RolemError::TooFewSamples { needed: 1, got: 0 })?;
    let k = p_bic(r, p, chain.u, chain.corr, chain.error_model);
    Ok(bic_from(max_loglik(chain)?, k, chain.n_subjects))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waic {
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
}

/// Stable `log(mean(exp(x)))`.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + (s / xs.len() as f64).ln()
}

fn unbiased_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// WAIC from a draws × subjects table of log densities.
pub fn waic_from_pointwise(pointwise: &[Vec<f64>]) -> Result<Waic> {
    if pointwise.len() < 2 {
        return Err(RolemError::TooFewSamples { needed: 2, got: pointwise.len() });
    }
    let n = pointwise[0].len();
    if pointwise.iter().any(|row| row.len() != n) {
        return Err(RolemError::dim("pointwise log densities have ragged rows"));
    }
    let (mut lppd, mut p_waic) = (0.0, 0.0);
    let mut col = vec![0.0; pointwise.len()];
    for i in 0..n {
        for (c, row) in col.iter_mut().zip(pointwise) {
            *c = row[i];
        }
        lppd += log_mean_exp(&col);
        p_waic += unbiased_variance(&col);
    }
    Ok(Waic { waic: -2.0 * lppd + 2.0 * p_waic, lppd, p_waic })
}

pub fn waic<T: Real>(chain: &ChainOutput<T>) -> Result<Waic> {
    let table: Vec<Vec<f64>> =
        chain.draws.iter().map(|d| d.pointwise.iter().map(|v| v.as_f64()).collect()).collect();
    waic_from_pointwise(&table)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub bic: f64,
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
    pub max_loglik: f64,
    pub p_bic: usize,
}

/// BIC and WAIC of a chain fitted to a dataset with `p` covariates.
pub fn model_score<T: Real>(chain: &ChainOutput<T>, p: usize) -> Result<ModelScore> {
    let w = waic(chain)?;
    let r = chain.draws[0].state.r();
    let k = p_bic(r, p, chain.u, chain.corr, chain.error_model);
    let ml = max_loglik(chain)?;
    Ok(ModelScore { bic: bic_from(ml, k, chain.n_subjects), waic: w.waic, lppd: w.lppd, p_waic: w.p_waic, max_loglik: ml, p_bic: k })
}

/// Shortest interval spanning `⌈level·n⌉` consecutive order statistics.
pub fn hpd_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(RolemError::invalid(format!("HPD level must lie in (0, 1), got {level}")));
    }
    if samples.len() < MIN_HPD_SAMPLES {
        return Err(RolemError::TooFewSamples { needed: MIN_HPD_SAMPLES, got: samples.len() });
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(RolemError::invalid("HPD samples contain NaN"));
    }
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let n = s.len();
    // Guard against 0.95 * 100 landing a hair above 95.
    let k = ((level * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let (mut best, mut lo) = (f64::INFINITY, 0);
    for i in 0..=(n - k) {
        let w = s[i + k - 1] - s[i];
        if w < best {
            best = w;
            lo = i;
        }
    }
    Ok((s[lo], s[lo + k - 1]))
}

pub fn frobenius_error<T: Real>(estimate: &Mat<T>, truth: &Mat<T>) -> Result<T> {
    if estimate.shape() != truth.shape() {
        return Err(RolemError::dim(format!("estimate is {:?}, truth is {:?}", estimate.shape(), truth.shape())));
    }
    Ok(frobenius(&(estimate - truth)))
}

/// Sample autocorrelations at lags `0..=max_lag` (biased autocovariance).
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c0 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    (0..=max_lag.min(n - 1))
        .map(|k| {
            if c0 == 0.0 {
                return if k == 0 { 1.0 } else { 0.0 };
            }
            let ck = (0..n - k).map(|t| (x[t] - mean) * (x[t + k] - mean)).sum::<f64>() / n as f64;
            ck / c0
        })
        .collect()
}

/// Effective sample size with the initial positive sequence truncation:
/// sums of adjacent autocorrelation pairs are accumulated while positive.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c0 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    if c0 == 0.0 {
        return n as f64;
    }
    let acf = |k: usize| (0..n - k).map(|t| (x[t] - mean) * (x[t + k] - mean)).sum::<f64>() / c0;
    let mut sum = 0.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = acf(2 * m) + acf(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        m += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    n as f64 / tau
}

/// Split-chain potential scale reduction factor.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    let half = chains.iter().map(Vec::len).min().unwrap_or(0) / 2;
    if chains.is_empty() || half < 2 {
        return Err(RolemError::TooFewSamples { needed: 4, got: half * 2 });
    }
    let pieces: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..half], &c[half..2 * half]]).collect();
    let m = pieces.len() as f64;
    let nh = half as f64;
    let means: Vec<f64> = pieces.iter().map(|p| p.iter().sum::<f64>() / nh).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = nh / (m - 1.0) * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>();
    let w = pieces.iter().map(|p| unbiased_variance(p)).sum::<f64>() / m;
    if w == 0.0 {
        return Ok(1.0);
    }
    let var_plus = (nh - 1.0) / nh * w + b / nh;
    Ok((var_plus / w).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub parameter: String,
    /// 1-based entry index, `i` or `i:j`.
    pub index: String,
    pub mean: f64,
    pub hpd_lower: f64,
    pub hpd_upper: f64,
    pub ess: f64,
    /// Autocorrelations at lags 0..=50 (fewer for short chains).
    pub acf: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub level: f64,
    pub entries: Vec<ParameterSummary>,
    pub acceptance: AcceptCounts,
}

impl PosteriorSummary {
    pub fn get(&self, parameter: &str, index: &str) -> Option<&ParameterSummary> {
        self.entries.iter().find(|e| e.parameter == parameter && e.index == index)
    }

    /// CSV with columns parameter,index,mean,hpd_lower,hpd_upper,ess.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("parameter,index,mean,hpd_lower,hpd_upper,ess\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                e.parameter, e.index, e.mean, e.hpd_lower, e.hpd_upper, e.ess
            );
        }
        out
    }

    /// Long-format autocorrelation table: parameter,index,lag,acf.
    pub fn acf_csv(&self) -> String {
        let mut out = String::from("parameter,index,lag,acf\n");
        for e in &self.entries {
            for (k, v) in e.acf.iter().enumerate() {
                let _ = writeln!(out, "{},{},{k},{v:.16e}", e.parameter, e.index);
            }
        }
        out
    }
}

/// Scalar traces monitored by the summaries: α, β entries, Σ_ε upper
/// triangle, and ρ / ν when present in the model.
pub fn scalar_traces<T: Real>(chain: &ChainOutput<T>) -> Vec<(String, String, Vec<f64>)> {
    let Some(first) = chain.draws.first() else {
        return Vec::new();
    };
    let r = first.state.r();
    let p = first.state.eta.ncols();
    let asm: Vec<_> = chain.draws.iter().map(|d| assemble(&d.state)).collect();
    let mut out = Vec::new();
    for k in 0..r {
        out.push(("alpha".into(), format!("{}", k + 1), chain.draws.iter().map(|d| d.state.alpha[k].as_f64()).collect()));
    }
    for i in 0..r {
        for j in 0..p {
            out.push(("beta".into(), format!("{}:{}", i + 1, j + 1), asm.iter().map(|a| a.beta[(i, j)].as_f64()).collect()));
        }
    }
    for i in 0..r {
        for j in i..r {
            out.push((
                "sigma_eps".into(),
                format!("{}:{}", i + 1, j + 1),
                asm.iter().map(|a| a.sigma_eps[(i, j)].as_f64()).collect(),
            ));
        }
    }
    if chain.corr.has_rho() {
        out.push(("rho".into(), "1".into(), chain.draws.iter().map(|d| d.state.rho.as_f64()).collect()));
    }
    if chain.error_model == ErrorModel::T {
        out.push(("nu".into(), "1".into(), chain.draws.iter().map(|d| d.state.nu.as_f64()).collect()));
    }
    out
}

/// Entrywise posterior means, HPD intervals, ESS and autocorrelations.
pub fn summarize<T: Real>(chain: &ChainOutput<T>, level: f64) -> Result<PosteriorSummary> {
    let entries = scalar_traces(chain)
        .into_iter()
        .map(|(parameter, index, xs)| {
            let (hpd_lower, hpd_upper) = hpd_interval(&xs, level)?;
            Ok(ParameterSummary {
                mean: xs.iter().sum::<f64>() / xs.len() as f64,
                hpd_lower,
                hpd_upper,
                ess: effective_sample_size(&xs),
                acf: autocorrelation(&xs, MAX_ACF_LAG),
                parameter,
                index,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if entries.is_empty() {
        return Err(RolemError::TooFewSamples { needed: MIN_HPD_SAMPLES, got: 0 });
    }
    Ok(PosteriorSummary { level, entries, acceptance: chain.accept })
}

/// Posterior means of α, β and Σ_ε.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMeans<T: Real> {
    pub alpha: Vector<T>,
    pub beta: Mat<T>,
    pub sigma_eps: Mat<T>,
}

pub fn posterior_means<T: Real>(chain: &ChainOutput<T>) -> Result<PosteriorMeans<T>> {
    let first = chain.draws.first().ok_or(RolemError::TooFewSamples { needed: 1, got: 0 })?;
    let (r, p) = (first.state.r(), first.state.eta.ncols());
    let mut m = PosteriorMeans { alpha: Vector::zeros(r), beta: Mat::zeros(r, p), sigma_eps: Mat::zeros(r, r) };
    for d in &chain.draws {
        let a = assemble(&d.state);
        m.alpha += &d.state.alpha;
        m.beta += a.beta;
        m.sigma_eps += a.sigma_eps;
    }
    let k = T::lit(chain.draws.len() as f64);
    m.alpha /= k;
    m.beta /= k;
    m.sigma_eps /= k;
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvScores {
    pub mlpd: f64,
    pub mae: f64,
}

/// Deterministic assignment of `n` subjects to `k` folds of near-equal size.
pub fn kfold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(RolemError::invalid(format!("need 2 <= K <= n folds, got K={k}, n={n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (pos, i) in idx.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Held-out log predictive density of each test subject (log of the
/// draw-averaged marginal density) and its L1 prediction error under the
/// posterior-mean fit `α̂ + β̂x`.
pub fn holdout_scores<T: Real>(chain: &ChainOutput<T>, test: &LongitudinalDataset<T>) -> Result<(Vec<f64>, Vec<f64>)> {
    if chain.is_empty() {
        return Err(RolemError::TooFewSamples { needed: 1, got: 0 });
    }
    let mut per_draw: Vec<Vec<f64>> = Vec::with_capacity(chain.len());
    for d in &chain.draws {
        let lp = pointwise_loglik_marginal(test, &d.state, chain.corr, chain.error_model)?;
        per_draw.push(lp.into_iter().map(|v| v.as_f64()).collect());
    }
    let means = posterior_means(chain)?;
    let mut lpd = Vec::with_capacity(test.n());
    let mut abs_err = Vec::with_capacity(test.n());
    let mut col = vec![0.0; per_draw.len()];
    for (i, s) in test.subjects().iter().enumerate() {
        for (c, row) in col.iter_mut().zip(&per_draw) {
            *c = row[i];
        }
        lpd.push(log_mean_exp(&col));
        let e = crate::model::residual(&s.y, &s.x, &means.beta, &means.alpha);
        abs_err.push(e.iter().map(|v| v.abs().as_f64()).sum());
    }
    Ok((lpd, abs_err))
}

/// K-fold cross-validation. `fit` is called once per fold with the training
/// subjects; MLPD and MAE are averaged over all held-out subjects.
pub fn cv_scores<T, F>(data: &LongitudinalDataset<T>, folds: &[Vec<usize>], mut fit: F) -> Result<CvScores>
where
    T: Real,
    F: FnMut(&LongitudinalDataset<T>) -> Result<ChainOutput<T>>,
{
    if folds.len() < 2 {
        return Err(RolemError::invalid("cross-validation needs at least two folds"));
    }
    let (mut lpd_sum, mut mae_sum, mut count) = (0.0, 0.0, 0usize);
    for (f, test_idx) in folds.iter().enumerate() {
        if test_idx.is_empty() {
            return Err(RolemError::invalid(format!("fold {f} has no test subjects")));
        }
        let train_idx: Vec<usize> = (0..data.n()).filter(|i| !test_idx.contains(i)).collect();
        let chain = fit(&data.select(&train_idx))?;
        let (lpd, err) = holdout_scores(&chain, &data.select(test_idx))?;
        lpd_sum += lpd.iter().sum::<f64>();
        mae_sum += err.iter().sum::<f64>();
        count += test_idx.len();
    }
    Ok(CvScores { mlpd: lpd_sum / count as f64, mae: mae_sum / count as f64 })
}
