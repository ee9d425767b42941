//! The Grassmann manifold in its projection-matrix form.
//!
//! A u-dimensional subspace of R^r is stored as the rank-u orthogonal
//! projector `P`. Priors are matrix Langevin (`∝ etr(MP)`), proposals use the
//! law of the span of a matrix-normal draw, and a fixed orthogonal reference
//! frame `U = (U₁, U₂)` turns `P` into unique envelope bases `(Γ, Γ₀)`.

use rand::Rng;

use crate::error::{Result, RolemError};
use crate::linalg::{
    chol_logdet, cholesky, complete_orthonormal, condition_number, max_abs, max_abs_asymmetry,
    orthonormal_columns, sorted_symmetric_eigen, spd_inv_sqrt, Mat,
};
use crate::scalar::Real;

/// Largest acceptable condition number of `U₁ᵀΓ̃` when extracting a basis.
pub const MAX_FRAME_CONDITION: f64 = 1.0e10;

/// Retries for a numerically rank-deficient proposal draw.
const PROPOSAL_RETRIES: usize = 5;

/// A rank-u orthogonal projection matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection<T: Real> {
    matrix: Mat<T>,
    rank: usize,
}

impl<T: Real> Projection<T> {
    /// Validates symmetry, idempotence and trace.
    pub fn new(matrix: Mat<T>, rank: usize) -> Result<Self> {
        let r = matrix.nrows();
        if !matrix.is_square() || rank > r {
            return Err(RolemError::dim(format!("projection must be square with rank <= {r}")));
        }
        if max_abs_asymmetry(&matrix) > T::tol(1e-10) {
            return Err(RolemError::invalid("projection matrix is not symmetric"));
        }
        let sq = &matrix * &matrix;
        if max_abs(&(sq - &matrix)) > T::tol(1e-8) {
            return Err(RolemError::invalid("projection matrix is not idempotent"));
        }
        if (matrix.trace() - T::lit(rank as f64)).abs() > T::tol(1e-8) {
            return Err(RolemError::invalid(format!("projection trace differs from rank {rank}")));
        }
        Ok(Self { matrix, rank })
    }

    /// `Z (ZᵀZ)⁻¹ Zᵀ` for a full-column-rank `Z`, built from an orthonormal
    /// basis of its columns.
    pub fn from_span(z: &Mat<T>) -> Result<Self> {
        let u = z.ncols();
        if z.nrows() < u {
            return Err(RolemError::dim("spanning matrix has more columns than rows"));
        }
        if condition_number(z) > T::lit(MAX_FRAME_CONDITION) {
            return Err(RolemError::RankDeficient("spanning matrix is numerically rank deficient".into()));
        }
        let q = orthonormal_columns(z);
        Ok(Self::from_orthonormal(&q))
    }

    /// `ΓΓᵀ` for column-orthonormal `Γ` (not re-validated).
    pub fn from_orthonormal(gamma: &Mat<T>) -> Self {
        let m = gamma * gamma.transpose();
        Self { matrix: crate::linalg::symmetrize(&m), rank: gamma.ncols() }
    }

    pub fn matrix(&self) -> &Mat<T> {
        &self.matrix
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Frobenius distance between two projections.
    pub fn distance(&self, other: &Self) -> T {
        crate::linalg::frobenius(&(&self.matrix - &other.matrix))
    }
}

/// Fixed orthogonal reference matrix `U = (U₁, U₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T: Real>(Mat<T>);

impl<T: Real> Frame<T> {
    pub fn new(u: Mat<T>) -> Result<Self> {
        if !u.is_square() {
            return Err(RolemError::dim("frame must be square"));
        }
        let n = u.nrows();
        let gram = u.transpose() * &u;
        if max_abs(&(gram - Mat::identity(n, n))) > T::tol(1e-8) {
            return Err(RolemError::invalid("frame is not orthogonal"));
        }
        Ok(Self(u))
    }

    pub fn identity(r: usize) -> Self {
        Self(Mat::identity(r, r))
    }

    /// Frame whose leading columns span the same space as `leading`, completed
    /// to a full orthogonal matrix.
    pub fn completing(leading: &Mat<T>) -> Self {
        let q = orthonormal_columns(leading);
        Self(complete_orthonormal(&q))
    }

    pub fn matrix(&self) -> &Mat<T> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// Envelope coordinates of a projection relative to a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeBasis<T: Real> {
    pub projection: Projection<T>,
    /// r × u, orthonormal columns spanning the envelope.
    pub gamma: Mat<T>,
    /// r × (r−u), orthonormal complement.
    pub gamma0: Mat<T>,
    /// (r−u) × u coordinate matrix `A`.
    pub a_coord: Mat<T>,
}

impl<T: Real> EnvelopeBasis<T> {
    pub fn u(&self) -> usize {
        self.gamma.ncols()
    }

    pub fn r(&self) -> usize {
        self.gamma.nrows()
    }
}

/// `Γ = (U₁ + U₂A)(I + AᵀA)^{-1/2}`, `Γ₀ = (−U₁Aᵀ + U₂)(I + AAᵀ)^{-1/2}`.
pub fn basis_from_coordinates<T: Real>(a: &Mat<T>, frame: &Frame<T>) -> Result<EnvelopeBasis<T>> {
    let r = frame.dim();
    let u = a.ncols();
    if a.nrows() + u != r {
        return Err(RolemError::dim(format!("A is {}x{}, frame is {r}x{r}", a.nrows(), a.ncols())));
    }
    let uu = frame.matrix();
    let u1 = uu.columns(0, u);
    let u2 = uu.columns(u, r - u);
    let at = a.transpose();
    let left = spd_inv_sqrt(&(Mat::identity(u, u) + &at * a))?;
    let right = spd_inv_sqrt(&(Mat::identity(r - u, r - u) + a * &at))?;
    let gamma = (u1 + u2 * a) * left;
    let gamma0 = (u2 - u1 * at) * right;
    let projection = Projection::from_orthonormal(&gamma);
    Ok(EnvelopeBasis { projection, gamma, gamma0, a_coord: a.clone() })
}

/// Unique `(Γ, Γ₀, A)` representative of `P` in the given frame.
///
/// Uses the leading u eigenvectors `Γ̃` of `P` and `A = (U₂ᵀΓ̃)(U₁ᵀΓ̃)⁻¹`,
/// which is invariant to the rotation ambiguity in `Γ̃`.
pub fn basis_from_projection<T: Real>(p: &Projection<T>, frame: &Frame<T>) -> Result<EnvelopeBasis<T>> {
    let r = p.dim();
    let u = p.rank();
    if frame.dim() != r {
        return Err(RolemError::dim("frame and projection sizes differ"));
    }
    if u == 0 || u == r {
        return Err(RolemError::invalid(format!("envelope dimension must satisfy 1 <= u < r, got u={u}, r={r}")));
    }
    let (values, vectors) = sorted_symmetric_eigen(p.matrix());
    // Round-off from long chains: eigenvalues must still be {1,..,1,0,..,0}.
    let clamp = T::tol(1e-6);
    for (k, &v) in values.iter().enumerate() {
        let target = if k < u { T::one() } else { T::zero() };
        if (v - target).abs() > clamp {
            return Err(RolemError::invalid(format!("projection eigenvalue {v} is not within 1e-6 of {target}")));
        }
    }
    let gt = vectors.columns(0, u).into_owned();
    coordinates_from_basis(&gt, frame).and_then(|a| basis_from_coordinates(&a, frame)).map(|mut b| {
        b.projection = Projection { matrix: p.matrix.clone(), rank: u };
        b
    })
}

/// `A = (U₂ᵀΓ̃)(U₁ᵀΓ̃)⁻¹` for any orthonormal basis `Γ̃` of the subspace.
pub fn coordinates_from_basis<T: Real>(gt: &Mat<T>, frame: &Frame<T>) -> Result<Mat<T>> {
    let r = frame.dim();
    let u = gt.ncols();
    let uu = frame.matrix();
    let b1 = uu.columns(0, u).transpose() * gt;
    let b2 = uu.columns(u, r - u).transpose() * gt;
    let cond = condition_number(&b1);
    if !(cond <= T::lit(MAX_FRAME_CONDITION)) {
        return Err(RolemError::FrameFailure { condition: cond.as_f64() });
    }
    let inv = b1.try_inverse().ok_or(RolemError::FrameFailure { condition: f64::INFINITY })?;
    Ok(b2 * inv)
}

/// Unnormalized matrix Langevin log density `tr(MP)`.
pub fn langevin_logdensity_unnorm<T: Real>(p: &Projection<T>, m: &Mat<T>) -> Result<T> {
    check_symmetric(m, "Langevin parameter M")?;
    if m.shape() != p.matrix.shape() {
        return Err(RolemError::dim("M and P sizes differ"));
    }
    Ok(m.component_mul(&p.matrix).sum())
}

/// Density of the span of `Z ~ MN(0, W, I_u)` relative to the uniform law:
/// `−(u/2) log|W| − (r/2) log|I − P + W⁻¹P|`.
pub fn induced_logdensity<T: Real>(p: &Projection<T>, w: &Mat<T>) -> Result<T> {
    let r = p.dim();
    let u = p.rank();
    if w.shape() != (r, r) {
        return Err(RolemError::dim("W and P sizes differ"));
    }
    let ch = cholesky(w, "proposal matrix W")?;
    let w_inv = ch.inverse();
    let mid = Mat::identity(r, r) - &p.matrix + w_inv * &p.matrix;
    let lu = mid.lu();
    let det = lu.determinant();
    if !(det.abs() > T::zero()) || !det.is_finite() {
        return Err(RolemError::RankDeficient("I - P + W^-1 P is singular".into()));
    }
    let half = T::lit(0.5);
    Ok(-(T::lit(u as f64) * half) * chol_logdet(&ch) - T::lit(r as f64) * half * det.abs().ln())
}

/// Symmetric proposal centred at the current point: span of
/// `Z ~ MN(0, σ²I + P_current, I_u)`.
pub fn propose_projection<T: Real, R: Rng + ?Sized>(
    current: &Projection<T>,
    sigma2: T,
    rng: &mut R,
) -> Result<Projection<T>> {
    if !(sigma2 > T::zero()) {
        return Err(RolemError::invalid("proposal variance sigma2 must be positive"));
    }
    let r = current.dim();
    let w = Mat::identity(r, r) * sigma2 + &current.matrix;
    let l = cholesky(&w, "proposal matrix W")?.unpack();
    span_of_gaussian(&l, current.rank(), rng)
}

/// Uniform (Haar) draw on the Grassmannian.
pub fn sample_uniform_projection<T: Real, R: Rng + ?Sized>(r: usize, u: usize, rng: &mut R) -> Result<Projection<T>> {
    if u == 0 || u > r {
        return Err(RolemError::invalid(format!("need 1 <= u <= r, got u={u}, r={r}")));
    }
    span_of_gaussian(&Mat::identity(r, r), u, rng)
}

fn span_of_gaussian<T: Real, R: Rng + ?Sized>(l: &Mat<T>, u: usize, rng: &mut R) -> Result<Projection<T>> {
    let r = l.nrows();
    for _ in 0..PROPOSAL_RETRIES {
        let g = Mat::from_fn(r, u, |_, _| T::std_normal(rng));
        match Projection::from_span(&(l * g)) {
            Ok(p) => return Ok(p),
            Err(RolemError::RankDeficient(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(RolemError::RankDeficient(format!("{PROPOSAL_RETRIES} consecutive rank-deficient proposal draws")))
}

/// Mode `U₁U₁ᵀ` of the Langevin (or induced) law with parameter `M`, and
/// whether it is unique (`rank M ≥ u` and `λ_u > λ_{u+1}`).
pub fn projection_mode<T: Real>(m: &Mat<T>, u: usize) -> Result<(Projection<T>, bool)> {
    check_symmetric(m, "Langevin parameter M")?;
    let r = m.nrows();
    if u == 0 || u > r {
        return Err(RolemError::invalid(format!("need 1 <= u <= r, got u={u}, r={r}")));
    }
    let (values, vectors) = sorted_symmetric_eigen(m);
    let u1 = vectors.columns(0, u).into_owned();
    let scale = values.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
    let rel = T::lit(1e-10);
    let rank = values.iter().filter(|v| v.abs() > rel * scale && scale > T::zero()).count();
    let gap_ok = u == r || values[u - 1] - values[u] > rel * scale.max(T::one());
    let unique = rank >= u && gap_ok;
    Ok((Projection::from_orthonormal(&u1), unique))
}

fn check_symmetric<T: Real>(m: &Mat<T>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(RolemError::dim(format!("{what} must be square")));
    }
    let scale = max_abs(m).max(T::one());
    if max_abs_asymmetry(m) > T::tol(1e-10) * scale {
        return Err(RolemError::invalid(format!("{what} is not symmetric")));
    }
    Ok(())
}
