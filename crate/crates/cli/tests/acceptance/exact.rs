use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rolem::grassmann::{basis_from_coordinates, induced_logdensity, sample_uniform_projection};
use rolem::inference::p_bic;
use rolem::matvar::{mn_logpdf, mt_logpdf, MatNormalParams, MatTParams};
use rolem::sampler::{AlphaPrior, PriorSpec, ProposalScales, Sampler};
use rolem::{CorrKind, ErrorModel, Frame, LongitudinalDataset, ParameterState, Subject};

use crate::oracles::*;
use crate::Outcome;

pub const GRID_TOL: f64 = 1e-8;
pub const SYMMETRY_TOL: f64 = 1e-9;
pub const MN_TOL: f64 = 1e-9;
pub const MT_TOL: f64 = 1e-6;
const INSTANCES: usize = 200;

pub fn p_bic_bookkeeping() -> Outcome {
    let a = p_bic(20, 30, 3, CorrKind::Ar1, ErrorModel::T);
    let b = p_bic(6, 6, 2, CorrKind::Ar1, ErrorModel::T);
    Outcome::new(a == 322 && b == 41, format!("p_BIC(20,30,3)={a} (want 322), p_BIC(6,6,2)={b} (want 41)"))
}

pub fn proposal_symmetry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for sigma2 in [0.01, 1.0, 100.0] {
        for _ in 0..INSTANCES {
            let r = rng.random_range(2..=7);
            let u = rng.random_range(1..r);
            let p1 = sample_uniform_projection::<f64, _>(r, u, &mut rng).unwrap();
            let p2 = sample_uniform_projection::<f64, _>(r, u, &mut rng).unwrap();
            let w1 = DMatrix::identity(r, r) * sigma2 + p1.matrix();
            let w2 = DMatrix::identity(r, r) * sigma2 + p2.matrix();
            let a = induced_logdensity(&p1, &w2).unwrap();
            let b = induced_logdensity(&p2, &w1).unwrap();
            worst = worst.max((a - b).abs());
        }
    }
    Outcome::new(
        worst < SYMMETRY_TOL,
        format!("max |q(P1|P2) - q(P2|P1)| = {worst:.2e} over {INSTANCES} pairs x 3 sigma2 (tol {SYMMETRY_TOL:.0e})"),
    )
}

pub fn density_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut worst_mn, mut worst_mt): (f64, f64) = (0.0, 0.0);
    for _ in 0..INSTANCES {
        let a = rng.random_range(1..=4);
        let b = rng.random_range(1..=4);
        let u = random_spd(a, &mut rng);
        let v = random_spd(b, &mut rng);
        let mean = DMatrix::from_fn(a, b, |_, _| rng.random_range(-2.0..2.0));
        let y = DMatrix::from_fn(a, b, |_, _| rng.random_range(-3.0..3.0));
        let params = MatNormalParams::new(mean.clone(), u.clone(), v.clone()).unwrap();
        worst_mn = worst_mn.max((mn_logpdf(&y, &params).unwrap() - mn_kron(&y, &mean, &u, &v)).abs());

        let nu = rng.random_range(0.5..30.0);
        let tparams = MatTParams::new(nu, mean.clone(), u.clone(), v.clone()).unwrap();
        worst_mt = worst_mt.max((mt_logpdf(&y, &tparams).unwrap() - mt_by_quadrature(&y, &mean, &u, &v, nu)).abs());
    }
    Outcome::new(
        worst_mn < MN_TOL && worst_mt < MT_TOL,
        format!(
            "mn vs Kronecker max err {worst_mn:.2e} (tol {MN_TOL:.0e}); mt vs quadrature max err {worst_mt:.2e} (tol {MT_TOL:.0e}); {INSTANCES} instances"
        ),
    )
}

/// Small unbalanced dataset plus a state drawn away from any mode.
fn grid_fixture(rng: &mut ChaCha8Rng, error_model: ErrorModel, alpha_prior: bool) -> (LongitudinalDataset<f64>, PriorSpec<f64>, ParameterState<f64>) {
    let (r, p, u) = (3, 2, 1);
    let times = [2, 3, 1, 4, 2];
    let subjects = times
        .iter()
        .enumerate()
        .map(|(i, &j)| Subject {
            id: format!("g{i}"),
            y: DMatrix::from_fn(r, j, |_, _| rng.random_range(-2.0..2.0)),
            x: DMatrix::from_fn(p, j, |_, _| rng.random_range(-1.5..1.5)),
        })
        .collect();
    let data = LongitudinalDataset::new(subjects, r, p).unwrap();
    let mut prior = PriorSpec::<f64>::vague(r, p, u, error_model);
    prior.xi = DMatrix::from_row_slice(r, p, &[0.5, -0.3, 0.2, 0.4, -0.1, 0.3]);
    prior.h = DMatrix::from_row_slice(p, p, &[1.5, 0.3, 0.3, 0.8]);
    prior.k = 4.0;
    prior.psi = DMatrix::from_element(1, 1, 0.7);
    prior.k0 = 5.0;
    prior.psi0 = DMatrix::from_row_slice(2, 2, &[1.2, 0.2, 0.2, 0.9]);
    prior.m = DMatrix::from_row_slice(r, r, &[2.0, 0.5, 0.0, 0.5, 1.0, -0.3, 0.0, -0.3, 0.2]);
    prior.a = 3.0;
    prior.b = 0.3;
    if alpha_prior {
        prior.alpha_prior = Some(AlphaPrior {
            mean: DVector::from_vec(vec![0.3, -0.2, 0.1]),
            cov: DMatrix::from_row_slice(r, r, &[2.0, 0.3, 0.1, 0.3, 1.0, 0.0, 0.1, 0.0, 1.5]),
        });
    }
    let a = DMatrix::from_column_slice(2, 1, &[0.4, -0.7]);
    let basis = basis_from_coordinates(&a, &Frame::identity(r)).unwrap();
    let tau = match error_model {
        ErrorModel::T => DVector::from_fn(times.len(), |_, _| rng.random_range(0.3..2.0)),
        ErrorModel::Normal => DVector::from_element(times.len(), 1.0),
    };
    let state = ParameterState {
        alpha: DVector::from_vec(vec![0.2, -0.4, 0.6]),
        eta: DMatrix::from_row_slice(u, p, &[0.8, -0.5]),
        basis,
        omega: DMatrix::from_element(1, 1, 0.6),
        omega0: DMatrix::from_row_slice(2, 2, &[1.4, 0.3, 0.3, 0.9]),
        rho: 0.35,
        nu: if error_model == ErrorModel::T { 6.0 } else { f64::INFINITY },
        tau,
    };
    (data, prior, state)
}

/// Tracks `implemented − joint` along a slice; the spread must stay below
/// the tolerance for the two to agree up to an additive constant.
#[derive(Default)]
struct Spread {
    first: Option<f64>,
    worst: f64,
}

impl Spread {
    fn push(&mut self, implemented: f64, joint: f64) {
        let d = implemented - joint;
        assert!(d.is_finite(), "non-finite log density on the grid");
        match self.first {
            None => self.first = Some(d),
            Some(f) => self.worst = self.worst.max((d - f).abs()),
        }
    }
}

fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> + Clone {
    (0..n).map(move |k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
}

/// Per-block worst spread for one fixture.
fn conditional_grids(
    error_model: ErrorModel,
    corr: CorrKind,
    alpha_prior: bool,
    seed: u64,
) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (data, prior, base) = grid_fixture(&mut rng, error_model, alpha_prior);
    let mut sampler = Sampler::new(&data, &prior, corr, Frame::identity(3), ProposalScales::default()).unwrap();
    let joint = |st: &ParameterState<f64>| joint_log_posterior(&data, st, &prior, corr);
    let mut base = base;
    if !corr.has_rho() {
        base.rho = 0.0;
    }
    let mut out = Vec::new();

    if error_model == ErrorModel::T {
        let mut sp = Spread::default();
        for i in 0..data.n() {
            let mut per = Spread::default();
            for t in grid(0.1, 4.0, 15) {
                let mut st = base.clone();
                st.tau[i] = t;
                let (shape, rate) = sampler.tau_conditional(&st).unwrap()[i];
                per.push(gamma_dens(t, shape, rate), joint(&st));
            }
            sp.worst = sp.worst.max(per.worst);
        }
        out.push(("tau", sp.worst));

        let mut sp = Spread::default();
        for nu in grid(2.2, 40.0, 25) {
            let mut st = base.clone();
            st.nu = nu;
            sp.push(sampler.nu_log_target(&st, nu), joint(&st));
        }
        out.push(("nu", sp.worst));
    }

    let mut sp = Spread::default();
    for (a0, a2) in grid(-1.5, 1.5, 7).flat_map(|a| grid(-1.0, 2.0, 7).map(move |b| (a, b))) {
        let mut st = base.clone();
        st.alpha[0] = a0;
        st.alpha[2] = a2;
        let (mean, cov) = sampler.alpha_conditional(&st).unwrap();
        sp.push(mvn_dense(&st.alpha, &mean, &cov), joint(&st));
    }
    out.push(("alpha", sp.worst));

    let mut sp = Spread::default();
    for (e0, e1) in grid(-1.0, 2.0, 7).flat_map(|a| grid(-2.0, 1.0, 7).map(move |b| (a, b))) {
        let mut st = base.clone();
        st.eta[(0, 0)] = e0;
        st.eta[(0, 1)] = e1;
        let law = sampler.eta_conditional(&st).unwrap();
        sp.push(mn_kron(&st.eta, law.mean(), law.row_cov(), law.col_cov()), joint(&st));
    }
    out.push(("eta", sp.worst));

    let mut sp = Spread::default();
    for w in grid(0.05, 5.0, 25) {
        let mut st = base.clone();
        st.omega[(0, 0)] = w;
        let law = sampler.omega_conditional(&st).unwrap();
        sp.push(invwishart_dens(&st.omega, law.dof(), law.scale()), joint(&st));
    }
    out.push(("omega", sp.worst));

    let mut sp = Spread::default();
    for (t, s) in grid(-0.8, 2.0, 7).flat_map(|a| grid(-0.4, 0.4, 7).map(move |b| (a, b))) {
        let mut st = base.clone();
        st.omega0[(0, 0)] += t;
        st.omega0[(0, 1)] += s;
        st.omega0[(1, 0)] += s;
        let law = sampler.omega0_conditional(&st).unwrap();
        sp.push(invwishart_dens(&st.omega0, law.dof(), law.scale()), joint(&st));
    }
    out.push(("omega0", sp.worst));

    if corr.has_rho() {
        let mut sp = Spread::default();
        for rho in grid(0.02, 0.98, 25) {
            let mut st = base.clone();
            st.rho = rho;
            sp.push(sampler.rho_log_target(&st, rho).unwrap(), joint(&st));
        }
        out.push(("rho", sp.worst));
    }

    let mut sp = Spread::default();
    for (a0, a1) in grid(-2.0, 2.0, 9).flat_map(|a| grid(-2.0, 2.0, 9).map(move |b| (a, b))) {
        let a = DMatrix::from_column_slice(2, 1, &[a0, a1]);
        let basis = basis_from_coordinates(&a, &Frame::identity(3)).unwrap();
        let mut st = base.clone();
        st.basis = basis.clone();
        sp.push(sampler.projection_log_target(&base, &basis).unwrap(), joint(&st));
    }
    out.push(("P", sp.worst));
    out
}

pub fn conditional_oracles() -> Outcome {
    let cases = [
        (ErrorModel::T, CorrKind::Ar1, true, 21),
        (ErrorModel::T, CorrKind::Cs, false, 22),
        (ErrorModel::T, CorrKind::Uncor, true, 23),
        (ErrorModel::Normal, CorrKind::Ar1, true, 24),
    ];
    let mut worst: f64 = 0.0;
    let mut worst_block = String::new();
    let mut blocks = 0;
    for (em, corr, ap, seed) in cases {
        for (name, spread) in conditional_grids(em, corr, ap, seed) {
            blocks += 1;
            if spread > worst {
                worst = spread;
                worst_block = format!("{name} ({}, {})", em.as_str(), corr.as_str());
            }
        }
    }
    Outcome::new(
        worst < GRID_TOL,
        format!("{blocks} block slices; worst |dlog| spread {worst:.2e} at {worst_block} (tol {GRID_TOL:.0e})"),
    )
}
