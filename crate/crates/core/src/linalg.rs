//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen, QR};

use crate::error::{Result, RolemError};
use crate::scalar::Real;

pub type Mat<T> = DMatrix<T>;
pub type Vector<T> = DVector<T>;

/// Cholesky factorization with no jitter. Failure means "not SPD".
pub fn cholesky<T: Real>(m: &Mat<T>, what: &'static str) -> Result<Cholesky<T, Dyn>> {
    if !m.is_square() {
        return Err(RolemError::dim(format!("{what} must be square, got {}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(RolemError::NotPositiveDefinite(what));
    }
    Cholesky::new(m.clone()).ok_or(RolemError::NotPositiveDefinite(what))
}

/// log-determinant from a Cholesky factor: 2 * sum(log diag L).
pub fn chol_logdet<T: Real>(ch: &Cholesky<T, Dyn>) -> T {
    let l = ch.l_dirty();
    let two = T::lit(2.0);
    (0..l.nrows()).fold(T::zero(), |acc, i| acc + two * l[(i, i)].ln())
}

pub fn spd_inverse<T: Real>(m: &Mat<T>, what: &'static str) -> Result<Mat<T>> {
    let inv = cholesky(m, what)?.inverse();
    Ok(symmetrize(&inv))
}

pub fn symmetrize<T: Real>(m: &Mat<T>) -> Mat<T> {
    (m + m.transpose()) * T::lit(0.5)
}

pub fn max_abs_asymmetry<T: Real>(m: &Mat<T>) -> T {
    let mut worst = T::zero();
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order. Ties keep the solver's order; each eigenvector is
/// sign-normalized so its first non-negligible component is positive.
pub fn sorted_symmetric_eigen<T: Real>(m: &Mat<T>) -> (Vector<T>, Mat<T>) {
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = Vector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = Mat::zeros(n, n);
    let tiny = T::tol(1e-12);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        if let Some(first) = col.iter().find(|v| v.abs() > tiny) {
            if *first < T::zero() {
                col.neg_mut();
            }
        }
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Inverse square root of an SPD matrix via its eigendecomposition.
pub fn spd_inv_sqrt<T: Real>(m: &Mat<T>) -> Result<Mat<T>> {
    let eig = SymmetricEigen::new(symmetrize(m));
    if eig.eigenvalues.iter().any(|&l| l <= T::zero() || !l.is_finite()) {
        return Err(RolemError::NotPositiveDefinite("inverse square-root argument"));
    }
    let d = Mat::from_diagonal(&eig.eigenvalues.map(|l| T::one() / l.sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Orthonormal basis of the column space of a full-column-rank matrix.
pub fn orthonormal_columns<T: Real>(z: &Mat<T>) -> Mat<T> {
    QR::new(z.clone()).q()
}

/// Completes the orthonormal columns `q` (r x k) to an r x r orthogonal
/// matrix whose first k columns span the same space as `q`. The first k
/// columns are `q` itself up to column signs, which are restored.
pub fn complete_orthonormal<T: Real>(q: &Mat<T>) -> Mat<T> {
    let r = q.nrows();
    let k = q.ncols();
    let mut aug = Mat::zeros(r, k + r);
    aug.view_mut((0, 0), (r, k)).copy_from(q);
    aug.view_mut((0, k), (r, r)).copy_from(&Mat::identity(r, r));
    let mut full = QR::new(aug).q();
    for j in 0..k {
        if full.column(j).dot(&q.column(j)) < T::zero() {
            full.column_mut(j).neg_mut();
        }
    }
    full
}

pub fn frobenius<T: Real>(m: &Mat<T>) -> T {
    m.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
}

pub fn max_abs<T: Real>(m: &Mat<T>) -> T {
    m.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
}

/// Kronecker product `a ⊗ b`.
pub fn kron<T: Real>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    a.kronecker(b)
}

/// Column-stacking vectorization.
pub fn vec<T: Real>(m: &Mat<T>) -> Vector<T> {
    Vector::from_column_slice(m.as_slice())
}

/// Ratio of extreme singular values; infinity for singular input.
pub fn condition_number<T: Real>(m: &Mat<T>) -> T {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().fold(T::zero(), |a, &s| a.max(s));
    let min = sv.iter().fold(max, |a, &s| a.min(s));
    if min <= T::zero() {
        T::max_value().unwrap_or_else(|| T::lit(f64::MAX))
    } else {
        max / min
    }
}
