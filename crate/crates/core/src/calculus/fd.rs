//! Central finite differences used as ground truth in tests.
//!
//! All three stencils have truncation error `O(step²)`. They evaluate the target
//! only at `f64` and never touch the dual-number machinery.

use nalgebra::{DMatrix, DVector};

use super::DomainBox;
use crate::error::{Error, Result};

/// Default step for first-order stencils (gradient, Jacobian).
pub const FIRST_ORDER_STEP: f64 = 1e-5;
/// Default step for the second-order stencil (Hessian).
pub const SECOND_ORDER_STEP: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FdKind {
    Gradient,
    Jacobian,
    Hessian,
}

/// What an oracle differentiates.
pub enum FdTarget<'a> {
    Scalar(&'a dyn Fn(&[f64]) -> f64),
    Vector(&'a dyn Fn(&[f64]) -> Vec<f64>),
}

fn check(domain: &DomainBox, x: &[f64], step: f64) -> Result<()> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Numerics(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    if !domain.contains_with_margin(x, step) {
        return Err(Error::domain(
            x,
            format!("stencil of width {step} leaves the domain"),
        ));
    }
    Ok(())
}

fn shifted(x: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut y = x.to_vec();
    for &(i, dx) in moves {
        y[i] += dx;
    }
    y
}

pub fn fd_gradient(
    f: impl Fn(&[f64]) -> f64,
    domain: &DomainBox,
    x: &[f64],
    step: f64,
) -> Result<DVector<f64>> {
    check(domain, x, step)?;
    Ok(DVector::from_fn(x.len(), |i, _| {
        (f(&shifted(x, &[(i, step)])) - f(&shifted(x, &[(i, -step)]))) / (2.0 * step)
    }))
}

pub fn fd_jacobian(
    f: impl Fn(&[f64]) -> Vec<f64>,
    domain: &DomainBox,
    x: &[f64],
    step: f64,
) -> Result<DMatrix<f64>> {
    check(domain, x, step)?;
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, x.len());
    for j in 0..x.len() {
        let plus = f(&shifted(x, &[(j, step)]));
        let minus = f(&shifted(x, &[(j, -step)]));
        for i in 0..m {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * step);
        }
    }
    Ok(jac)
}

pub fn fd_hessian(
    f: impl Fn(&[f64]) -> f64,
    domain: &DomainBox,
    x: &[f64],
    step: f64,
) -> Result<DMatrix<f64>> {
    check(domain, x, step)?;
    let d = x.len();
    let h2 = step * step;
    let f0 = f(x);
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        let fp = f(&shifted(x, &[(i, step)]));
        let fm = f(&shifted(x, &[(i, -step)]));
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / h2;
        for j in (i + 1)..d {
            let pp = f(&shifted(x, &[(i, step), (j, step)]));
            let pm = f(&shifted(x, &[(i, step), (j, -step)]));
            let mp = f(&shifted(x, &[(i, -step), (j, step)]));
            let mm = f(&shifted(x, &[(i, -step), (j, -step)]));
            let v = (pp - pm - mp + mm) / (4.0 * h2);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}

/// Dispatches to one of the stencils. Gradients come back as a `d × 1` matrix.
pub fn fd_oracle(
    kind: FdKind,
    target: FdTarget<'_>,
    domain: &DomainBox,
    x: &[f64],
    step: f64,
) -> Result<DMatrix<f64>> {
    match (kind, target) {
        (FdKind::Gradient, FdTarget::Scalar(f)) => {
            let g = fd_gradient(f, domain, x, step)?;
            Ok(DMatrix::from_column_slice(g.len(), 1, g.as_slice()))
        }
        (FdKind::Hessian, FdTarget::Scalar(f)) => fd_hessian(f, domain, x, step),
        (FdKind::Jacobian, FdTarget::Vector(f)) => fd_jacobian(f, domain, x, step),
        (kind, _) => Err(Error::Numerics(format!(
            "{kind:?} oracle does not accept this target"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_square() {
        let g = fd_gradient(|x| x[0] * x[0], &DomainBox::unbounded(1), &[1.0], 1e-5).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn jacobian_of_identity() {
        let dom = DomainBox::unbounded(3);
        let j = fd_oracle(
            FdKind::Jacobian,
            FdTarget::Vector(&|x: &[f64]| x.to_vec()),
            &dom,
            &[0.1, 5.0, -3.0],
            FIRST_ORDER_STEP,
        )
        .unwrap();
        assert!((j - DMatrix::identity(3, 3)).amax() < 1e-10);
    }

    #[test]
    fn hessian_of_constant_curvature() {
        let dom = DomainBox::unbounded(1);
        let h = fd_oracle(
            FdKind::Hessian,
            FdTarget::Scalar(&|x: &[f64]| 0.5 * 3.0 * x[0] * x[0]),
            &dom,
            &[0.0],
            1e-4,
        )
        .unwrap();
        assert!((h[(0, 0)] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn stencil_must_fit_in_domain() {
        let dom = DomainBox::positive(1);
        let r = fd_gradient(|x| x[0].ln(), &dom, &[1e-6], 1e-5);
        assert!(matches!(r, Err(Error::Domain { .. })));
        let r = fd_gradient(|x| x[0].ln(), &dom, &[1.0], 0.0);
        assert!(r.is_err());
    }

    #[test]
    fn mismatched_target_is_rejected() {
        let dom = DomainBox::unbounded(1);
        let r = fd_oracle(
            FdKind::Jacobian,
            FdTarget::Scalar(&|x: &[f64]| x[0]),
            &dom,
            &[0.0],
            1e-5,
        );
        assert!(r.is_err());
    }
}
