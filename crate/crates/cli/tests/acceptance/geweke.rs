//! Joint-distribution ("getting it right") test. Marginal-conditional draws
//! come straight from the prior; successive-conditional draws alternate one
//! sampler sweep with a fresh response draw. Both target the same joint law
//! of the parameters, so every monitored summary must agree in mean.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rolem::inference::effective_sample_size;
use rolem::sampler::{sample_from_prior, AlphaPrior, PriorSpec, ProposalScales, Sampler};
use rolem::{CorrKind, ErrorModel, Frame, LongitudinalDataset, ParameterState, Subject};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::oracles::{beta_sigma, resimulate};
use crate::Outcome;

pub const FAMILY_LEVEL: f64 = 0.01;
const MARGINAL_DRAWS: usize = 100_000;
const SUCCESSIVE_ROUNDS: usize = 300_000;
const CORR: CorrKind = CorrKind::Ar1;

fn prior() -> PriorSpec<f64> {
    let (r, p, u) = (3, 2, 1);
    let mut prior = PriorSpec::<f64>::vague(r, p, u, ErrorModel::T);
    prior.xi = DMatrix::from_row_slice(r, p, &[0.5, -0.3, 0.2, 0.4, -0.1, 0.3]);
    prior.h = DMatrix::identity(p, p);
    prior.k = 8.0;
    prior.psi = DMatrix::identity(u, u) * 4.0;
    prior.k0 = 9.0;
    prior.psi0 = DMatrix::identity(r - u, r - u) * 6.0;
    prior.m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, 0.0]));
    prior.a = 20.0;
    prior.b = 4.0;
    prior.alpha_prior = Some(AlphaPrior { mean: DVector::zeros(r), cov: DMatrix::identity(r, r) });
    prior
}

fn design(rng: &mut ChaCha8Rng) -> LongitudinalDataset<f64> {
    let subjects = (0..5)
        .map(|i| Subject {
            id: format!("s{i}"),
            y: DMatrix::zeros(3, 2),
            x: DMatrix::from_fn(2, 2, |_, _| StandardNormal.sample(rng)),
        })
        .collect();
    LongitudinalDataset::new(subjects, 3, 2).unwrap()
}

pub const STAT_NAMES: [&str; 17] = [
    "alpha1", "alpha2", "alpha3", "beta11", "beta21", "beta31", "beta12", "beta22", "beta32", "rho", "nu",
    "eig1(Sigma)", "eig2(Sigma)", "eig3(Sigma)", "P11", "P22", "P33",
];

fn stats(st: &ParameterState<f64>) -> Vec<f64> {
    let (beta, sigma) = beta_sigma(st);
    let mut eig: Vec<f64> = sigma.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let p = st.basis.projection.matrix();
    let mut out: Vec<f64> = st.alpha.iter().copied().collect();
    out.extend(beta.iter().copied());
    out.extend([st.rho, st.nu]);
    out.extend(eig);
    out.extend((0..3).map(|k| p[(k, k)]));
    out
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

pub fn geweke() -> Outcome {
    let prior = prior();
    let frame = Frame::identity(3);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let data = design(&mut rng);

    let k = STAT_NAMES.len();
    let mut marginal = vec![Vec::with_capacity(MARGINAL_DRAWS); k];
    for _ in 0..MARGINAL_DRAWS {
        let st = sample_from_prior(&prior, CORR, data.n(), &frame, &mut rng).unwrap();
        for (col, v) in marginal.iter_mut().zip(stats(&st)) {
            col.push(v);
        }
    }

    let scales = ProposalScales { delta_rho: 0.3, delta_nu: 2.0, sigma2_p: 0.3 };
    let mut successive = vec![Vec::with_capacity(SUCCESSIVE_ROUNDS); k];
    let mut state = sample_from_prior(&prior, CORR, data.n(), &frame, &mut rng).unwrap();
    let mut current = resimulate(&data, &state, CORR, &mut rng);
    let (mut acc_p, mut acc_rho, mut acc_nu) = (0u64, 0u64, 0u64);
    for _ in 0..SUCCESSIVE_ROUNDS {
        let mut sampler = Sampler::new(&current, &prior, CORR, frame.clone(), scales).unwrap();
        sampler.sweep(&mut state, &mut rng).unwrap();
        let a = sampler.accept();
        acc_p += a.projection.accepted;
        acc_rho += a.rho.accepted;
        acc_nu += a.nu.accepted;
        for (col, v) in successive.iter_mut().zip(stats(&state)) {
            col.push(v);
        }
        current = resimulate(&current, &state, CORR, &mut rng);
    }

    let z_crit = Normal::new(0.0, 1.0).unwrap().inverse_cdf(1.0 - FAMILY_LEVEL / (2.0 * k as f64));
    let mut worst = (0.0f64, "");
    let mut failures = Vec::new();
    for (i, name) in STAT_NAMES.iter().enumerate() {
        let (m1, v1) = mean_var(&marginal[i]);
        let (m2, v2) = mean_var(&successive[i]);
        let ess = effective_sample_size(&successive[i]).max(1.0);
        let z = (m1 - m2) / (v1 / MARGINAL_DRAWS as f64 + v2 / ess).sqrt();
        if z.abs() > worst.0 {
            worst = (z.abs(), name);
        }
        if z.abs() > z_crit {
            failures.push(format!("{name} z={z:.2}"));
        }
    }
    let rounds = SUCCESSIVE_ROUNDS as f64;
    Outcome::new(
        failures.is_empty(),
        format!(
            "{k} summaries, max |z| = {:.2} ({}), Bonferroni critical {z_crit:.2}; acceptance P {:.2}, rho {:.2}, nu {:.2}{}",
            worst.0,
            worst.1,
            acc_p as f64 / rounds,
            acc_rho as f64 / rounds,
            acc_nu as f64 / rounds,
            if failures.is_empty() { String::new() } else { format!("; failing: {}", failures.join(", ")) }
        ),
    )
}
