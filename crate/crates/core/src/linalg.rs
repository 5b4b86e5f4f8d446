//! Small complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{numeric, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Draws a circularly-symmetric complex Gaussian sample with the given variance.
#[inline]
pub fn cscg<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// `rows x cols` matrix of i.i.d. CN(0, variance) entries, filled row-major.
pub fn cscg_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    variance: f64,
) -> CMatrix {
    let mut out = CMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            out[(r, c)] = cscg(rng, variance);
        }
    }
    out
}

/// Largest absolute deviation of `a` from the identity.
pub fn identity_defect(a: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            let target = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((a[(r, c)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Largest absolute deviation of `a` from its conjugate transpose.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            worst = worst.max((a[(r, c)] - a[(c, r)].conj()).norm());
        }
    }
    worst
}

/// Lower Cholesky factor of a Hermitian matrix, `None` unless it is
/// numerically positive definite. Only the lower triangle is read.
pub fn cholesky_lower(a: &CMatrix) -> Option<CMatrix> {
    let n = a.nrows();
    if a.ncols() != n {
        return None;
    }
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for p in 0..j {
            d -= l[(j, p)].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = Complex64::new(djj, 0.0);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Inverse of a Hermitian positive definite matrix via Cholesky.
pub fn hpd_inverse(a: &CMatrix) -> Result<CMatrix> {
    let Some(l) = cholesky_lower(a) else {
        return numeric("matrix is not Hermitian positive definite");
    };
    let n = a.nrows();
    // solve L Z = I column by column, then A^{-1} = Z^H Z
    let mut z = CMatrix::zeros(n, n);
    for c in 0..n {
        for i in c..n {
            let mut s = if i == c { Complex64::new(1.0, 0.0) } else { ZERO };
            for p in c..i {
                s -= l[(i, p)] * z[(p, c)];
            }
            z[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(z.adjoint() * z)
}

/// `x^T A x^*`, the quadratic form used with the conjugated covariance
/// convention (`A = E[v^* v^T]`). Real for Hermitian `A`.
pub fn quad_form_conj(x: &CVector, a: &CMatrix) -> f64 {
    let mut acc = ZERO;
    for i in 0..x.len() {
        let mut row = ZERO;
        for j in 0..x.len() {
            row += a[(i, j)] * x[j].conj();
        }
        acc += x[i] * row;
    }
    acc.re
}

/// Squared Frobenius norm of the difference of two matrices.
pub fn frob_dist2(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm_sqr()).sum()
}
