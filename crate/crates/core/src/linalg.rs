//! Dense linear algebra shared by the geometric routines.
//!
//! `f64` paths go through nalgebra with a conditioning guard. The `*_generic`
//! helpers operate on matrices of any [`Scalar`] so that metric fields can be
//! pushed through dual numbers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::calculus::Scalar;
use crate::error::{Error, Result};

/// Linear systems past this 1-norm condition number are refused.
pub const MAX_CONDITION: f64 = 1e12;

/// Relative downward shift applied before the Cholesky SPD check.
pub const SPD_SHIFT: f64 = 1e-12;

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse via LU with partial pivoting; errors when singular or too ill-conditioned.
pub fn inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::Numerics(format!(
            "cannot invert {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerics("matrix has non-finite entries".into()));
    }
    let inv = a
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Numerics("matrix is singular".into()))?;
    let cond = one_norm(a) * one_norm(&inv);
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(Error::Numerics(format!(
            "condition number {cond:e} exceeds {MAX_CONDITION:e}"
        )));
    }
    Ok(inv)
}

pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    match a.clone().lu().try_inverse() {
        Some(inv) => one_norm(a) * one_norm(&inv),
        None => f64::INFINITY,
    }
}

pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(inverse(a)? * b)
}

pub fn is_symmetric(a: &DMatrix<f64>, rel_tol: f64) -> bool {
    a.is_square() && {
        let scale = a.amax().max(1.0);
        (a - a.transpose()).amax() <= rel_tol * scale
    }
}

/// Validates symmetric positive-definiteness and returns the Cholesky factor.
///
/// The matrix must remain factorizable after subtracting
/// `SPD_SHIFT · max(1, max|G_ii|)` from its diagonal, so numerically singular
/// matrices are rejected.
pub fn spd_cholesky(g: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if !g.is_square() {
        return Err(Error::InvalidMetric(format!(
            "{}x{} matrix is not square",
            g.nrows(),
            g.ncols()
        )));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMetric("matrix has non-finite entries".into()));
    }
    if !is_symmetric(g, 1e-10) {
        return Err(Error::InvalidMetric("matrix is not symmetric".into()));
    }
    let n = g.nrows();
    let scale = (0..n).map(|i| g[(i, i)].abs()).fold(1.0, f64::max);
    let shifted = g - DMatrix::identity(n, n) * (SPD_SHIFT * scale);
    if Cholesky::new(shifted).is_none() {
        return Err(Error::InvalidMetric(
            "matrix is not positive definite".into(),
        ));
    }
    Cholesky::new(g.clone())
        .ok_or_else(|| Error::InvalidMetric("matrix is not positive definite".into()))
}

pub fn log_det_spd(g: &DMatrix<f64>) -> Result<f64> {
    let chol = spd_cholesky(g)?;
    Ok(2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

pub fn matmul_generic<S: Scalar>(a: &DMatrix<S>, b: &DMatrix<S>) -> DMatrix<S> {
    assert_eq!(a.ncols(), b.nrows(), "matmul shape mismatch");
    DMatrix::from_fn(a.nrows(), b.ncols(), |i, j| {
        let mut acc = S::zero();
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, j)];
        }
        acc
    })
}

pub fn transpose_generic<S: Scalar>(a: &DMatrix<S>) -> DMatrix<S> {
    DMatrix::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)])
}

pub fn from_f64<S: Scalar>(a: &DMatrix<f64>) -> DMatrix<S> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| S::from(a[(i, j)]))
}

pub fn values<S: Scalar>(a: &DMatrix<S>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].value())
}

/// LU factorization with partial pivoting over any scalar. Pivots are chosen
/// on primal values, so derivative parts follow the same elimination order.
struct GenericLu<S> {
    lu: DMatrix<S>,
    perm: Vec<usize>,
    sign: f64,
}

fn lu_generic<S: Scalar>(a: &DMatrix<S>) -> Option<GenericLu<S>> {
    let n = a.nrows();
    if n != a.ncols() {
        return None;
    }
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    for k in 0..n {
        let (p, pivot) =
            (k..n)
                .map(|r| (r, lu[(r, k)].value().abs()))
                .fold(
                    (k, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if pivot == 0.0 || !pivot.is_finite() {
            return None;
        }
        if p != k {
            lu.swap_rows(p, k);
            perm.swap(p, k);
            sign = -sign;
        }
        let inv_pivot = lu[(k, k)].recip();
        for r in (k + 1)..n {
            let factor = lu[(r, k)] * inv_pivot;
            lu[(r, k)] = factor;
            for c in (k + 1)..n {
                let update = factor * lu[(k, c)];
                lu[(r, c)] -= update;
            }
        }
    }
    Some(GenericLu { lu, perm, sign })
}

impl<S: Scalar> GenericLu<S> {
    fn solve(&self, b: &DMatrix<S>) -> DMatrix<S> {
        let n = self.lu.nrows();
        let mut x = DMatrix::from_fn(n, b.ncols(), |i, j| b[(self.perm[i], j)]);
        for col in 0..b.ncols() {
            for i in 0..n {
                let mut acc = x[(i, col)];
                for k in 0..i {
                    acc -= self.lu[(i, k)] * x[(k, col)];
                }
                x[(i, col)] = acc;
            }
            for i in (0..n).rev() {
                let mut acc = x[(i, col)];
                for k in (i + 1)..n {
                    acc -= self.lu[(i, k)] * x[(k, col)];
                }
                x[(i, col)] = acc / self.lu[(i, i)];
            }
        }
        x
    }
}

/// Solves `A X = B`; `None` when `A` is singular at the primal level.
pub fn solve_generic<S: Scalar>(a: &DMatrix<S>, b: &DMatrix<S>) -> Option<DMatrix<S>> {
    lu_generic(a).map(|lu| lu.solve(b))
}

pub fn inverse_generic<S: Scalar>(a: &DMatrix<S>) -> Option<DMatrix<S>> {
    let n = a.nrows();
    let eye = DMatrix::from_fn(n, n, |i, j| if i == j { S::one() } else { S::zero() });
    solve_generic(a, &eye)
}

/// `ln |det A|` over any scalar.
pub fn log_abs_det_generic<S: Scalar>(a: &DMatrix<S>) -> Option<S> {
    let lu = lu_generic(a)?;
    let mut acc = S::zero();
    for i in 0..a.nrows() {
        acc += lu.lu[(i, i)].abs().ln();
    }
    Some(acc)
}

/// Determinant over any scalar.
pub fn det_generic<S: Scalar>(a: &DMatrix<S>) -> S {
    match lu_generic(a) {
        Some(lu) => {
            let mut acc = S::from(lu.sign);
            for i in 0..a.nrows() {
                acc *= lu.lu[(i, i)];
            }
            acc
        }
        None => S::zero(),
    }
}
