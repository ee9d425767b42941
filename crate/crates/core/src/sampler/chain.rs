use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{initialize, ChainOutput, Draw, FrameChoice, PriorSpec, ProposalScales, Sampler, TuningSpec};
use crate::corrstruct::CorrKind;
use crate::error::{Result, RolemError};
use crate::grassmann::{basis_from_projection, Frame, Projection};
use crate::linalg::{sorted_symmetric_eigen, symmetrize, Mat};
use crate::model::{pointwise_loglik_marginal, LongitudinalDataset, ParameterState};
use crate::scalar::Real;

const TARGET_LOW: f64 = 0.2;
const TARGET_HIGH: f64 = 0.5;

/// Initializes from least squares and runs one chain seeded by `tuning.seed`.
pub fn run_chain<T: Real>(
    data: &LongitudinalDataset<T>,
    prior: &PriorSpec<T>,
    corr: CorrKind,
    tuning: &TuningSpec,
    choice: FrameChoice<T>,
) -> Result<ChainOutput<T>> {
    let init = initialize(data, prior.u(), corr, choice, Some(&prior.m))?;
    let mut rng = ChaCha8Rng::seed_from_u64(tuning.seed);
    run_chain_from(data, prior, corr, tuning, init.state, init.frame, &mut rng)
}

/// Runs burn-in (with optional scale adaptation) and then the recorded
/// sweeps from an explicit starting state.
pub fn run_chain_from<T: Real, R: Rng + ?Sized>(
    data: &LongitudinalDataset<T>,
    prior: &PriorSpec<T>,
    corr: CorrKind,
    tuning: &TuningSpec,
    mut state: ParameterState<T>,
    frame: Frame<T>,
    rng: &mut R,
) -> Result<ChainOutput<T>> {
    tuning.validate()?;
    state.validate(data, prior.error_model)?;
    if prior.error_model == crate::ErrorModel::Normal && state.tau.iter().any(|&t| t != T::one()) {
        return Err(RolemError::invalid("normal error model requires unit latent precisions"));
    }
    let mut sampler = Sampler::new(data, prior, corr, frame, tuning.scales)?;

    for it in 1..=tuning.burn_in {
        sampler.sweep(&mut state, rng)?;
        if tuning.autotune && it % tuning.tune_window == 0 {
            let tuned = adapt(sampler.scales(), &sampler.accept());
            log::debug!("burn-in sweep {it}: scales {tuned:?}");
            sampler.set_scales(tuned);
            sampler.reset_accept();
        }
    }
    sampler.reset_accept();

    let mut draws = Vec::with_capacity(tuning.n_samples / tuning.thin);
    for it in 1..=tuning.n_samples {
        sampler.sweep(&mut state, rng)?;
        if it % tuning.thin == 0 {
            let pointwise = pointwise_loglik_marginal(data, &state, corr, prior.error_model)?;
            let loglik = pointwise.iter().fold(T::zero(), |a, &b| a + b);
            if !loglik.is_finite() {
                return Err(RolemError::NonFinite {
                    block: "log-likelihood",
                    detail: format!("draw {} has log-likelihood {loglik}", draws.len()),
                });
            }
            draws.push(Draw { state: state.clone(), loglik, pointwise });
        }
    }

    let accept = sampler.accept();
    if accept.frame_failures > 0 {
        log::info!(
            "{} of {} projection proposals were rejected by the frame",
            accept.frame_failures,
            accept.projection.attempted
        );
    }
    Ok(ChainOutput {
        draws,
        accept,
        frame: sampler.frame().clone(),
        scales: sampler.scales(),
        u: prior.u(),
        corr,
        error_model: prior.error_model,
        n_subjects: data.n(),
    })
}

/// Doubles or halves each scale whose acceptance rate left (0.2, 0.5).
fn adapt(s: ProposalScales, acc: &super::AcceptCounts) -> ProposalScales {
    let tune = |v: f64, c: &super::Counter, cap: f64| {
        if c.attempted == 0 {
            v
        } else if c.rate() < TARGET_LOW {
            (v * 0.5).max(1e-8)
        } else if c.rate() > TARGET_HIGH {
            (v * 2.0).min(cap)
        } else {
            v
        }
    };
    ProposalScales {
        delta_rho: tune(s.delta_rho, &acc.rho, 1.0),
        delta_nu: tune(s.delta_nu, &acc.nu, 1e3),
        sigma2_p: tune(s.sigma2_p, &acc.projection, 1e2),
    }
}

/// Frame built from the leading eigenvectors of the posterior mean of `P`.
pub fn posterior_mean_frame<T: Real>(out: &ChainOutput<T>) -> Result<Frame<T>> {
    let first = out.draws.first().ok_or(RolemError::TooFewSamples { needed: 1, got: 0 })?;
    let r = first.state.r();
    let mut mean = Mat::zeros(r, r);
    for d in &out.draws {
        mean += d.state.basis.projection.matrix();
    }
    mean /= T::lit(out.draws.len() as f64);
    let (_, vecs) = sorted_symmetric_eigen(&symmetrize(&mean));
    Ok(Frame::completing(&vecs.columns(0, out.u).into_owned()))
}

/// Two-pass fit: a first chain locates the posterior mean of `P`, whose
/// leading eigenvectors become the frame of a second chain started from the
/// first chain's final state. The second pass uses stream 1 of the seed.
pub fn run_chain_two_pass<T: Real>(
    data: &LongitudinalDataset<T>,
    prior: &PriorSpec<T>,
    corr: CorrKind,
    tuning: &TuningSpec,
    choice: FrameChoice<T>,
) -> Result<ChainOutput<T>> {
    let first = run_chain(data, prior, corr, tuning, choice)?;
    let frame = posterior_mean_frame(&first)?;
    let mut state = first.draws.last().expect("non-empty chain").state.clone();
    let proj = Projection::new(state.basis.projection.matrix().clone(), state.u())?;
    state.basis = basis_from_projection(&proj, &frame)?;
    let mut rng = ChaCha8Rng::seed_from_u64(tuning.seed);
    rng.set_stream(1);
    let mut second = tuning.clone();
    second.scales = first.scales;
    run_chain_from(data, prior, corr, &second, state, frame, &mut rng)
}
