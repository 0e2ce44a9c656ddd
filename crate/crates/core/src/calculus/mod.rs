//! Differentiation engine.
//!
//! Exact first and second derivatives come from forward-mode dual numbers
//! (nested once for Hessians). The [`fd`] submodule holds central-difference
//! oracles that share no code path with the dual-number routines.

mod domain;
mod dual;
pub mod fd;

use nalgebra::{DMatrix, DVector};

pub use domain::{DomainBox, Interval};
pub use dual::{seed, seed_with, Dual, Scalar};

use crate::error::{Error, Result};

/// A smooth map `ℝᵈ ⊇ domain → ℝ`, evaluable at any [`Scalar`] level.
pub trait ScalarField {
    fn dim(&self) -> usize;

    fn domain(&self) -> DomainBox {
        DomainBox::unbounded(self.dim())
    }

    fn eval<S: Scalar>(&self, x: &[S]) -> S;
}

/// A smooth map `ℝᵈ ⊇ domain → ℝᵐ`.
pub trait VectorMap {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;

    fn domain(&self) -> DomainBox {
        DomainBox::unbounded(self.in_dim())
    }

    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S>;
}

impl<F: ScalarField> ScalarField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn domain(&self) -> DomainBox {
        (**self).domain()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        (**self).eval(x)
    }
}

impl<M: VectorMap> VectorMap for &M {
    fn in_dim(&self) -> usize {
        (**self).in_dim()
    }
    fn out_dim(&self) -> usize {
        (**self).out_dim()
    }
    fn domain(&self) -> DomainBox {
        (**self).domain()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        (**self).eval(x)
    }
}

/// Defines a unit struct implementing [`ScalarField`] from an expression.
///
/// ```
/// use repgeo_core::scalar_field;
/// scalar_field!(pub Bowl[2] |x| x[0] * x[0] + x[1] * x[1]);
/// let g = repgeo_core::calculus::gradient(&Bowl, &[1.0, 2.0]).unwrap();
/// assert_eq!(g.as_slice(), &[2.0, 4.0]);
/// ```
#[macro_export]
macro_rules! scalar_field {
    ($(#[$meta:meta])* $vis:vis $name:ident [$dim:expr] |$x:ident| $body:expr) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, Default)]
        $vis struct $name;

        impl $crate::calculus::ScalarField for $name {
            fn dim(&self) -> usize {
                $dim
            }
            #[allow(unused_variables)]
            fn eval<S: $crate::calculus::Scalar>(&self, $x: &[S]) -> S {
                $body
            }
        }
    };
    ($(#[$meta:meta])* $vis:vis $name:ident [$dim:expr; $domain:expr] |$x:ident| $body:expr) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, Default)]
        $vis struct $name;

        impl $crate::calculus::ScalarField for $name {
            fn dim(&self) -> usize {
                $dim
            }
            fn domain(&self) -> $crate::calculus::DomainBox {
                $domain
            }
            #[allow(unused_variables)]
            fn eval<S: $crate::calculus::Scalar>(&self, $x: &[S]) -> S {
                $body
            }
        }
    };
}

fn ensure_finite(values: impl IntoIterator<Item = f64>, what: &str) -> Result<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::Numerics(format!("non-finite value in {what}")))
    }
}

/// Gradient at any scalar level; no domain checks.
pub fn gradient_at<S: Scalar, F: ScalarField>(f: &F, x: &[S]) -> Vec<S> {
    (0..x.len()).map(|i| f.eval(&seed(x, i)).du).collect()
}

/// Jacobian (`out × in`) at any scalar level; no domain checks.
pub fn jacobian_at<S: Scalar, M: VectorMap>(map: &M, x: &[S]) -> DMatrix<S> {
    let n = x.len();
    let m = map.out_dim();
    let mut jac = DMatrix::from_element(m, n, S::zero());
    for j in 0..n {
        let column = map.eval(&seed(x, j));
        for (i, c) in column.into_iter().enumerate() {
            jac[(i, j)] = c.du;
        }
    }
    jac
}

/// Evaluates `f` at `x` after checking the domain.
pub fn value<F: ScalarField>(f: &F, x: &[f64]) -> Result<f64> {
    f.domain().check(x)?;
    let v = f.eval(x);
    ensure_finite([v], "function value")?;
    Ok(v)
}

pub fn gradient<F: ScalarField>(f: &F, x: &[f64]) -> Result<DVector<f64>> {
    f.domain().check(x)?;
    let g = DVector::from_vec(gradient_at(f, x));
    ensure_finite(g.iter().copied(), "gradient")?;
    Ok(g)
}

pub fn jacobian<M: VectorMap>(map: &M, x: &[f64]) -> Result<DMatrix<f64>> {
    map.domain().check(x)?;
    let j = jacobian_at(map, x);
    ensure_finite(j.iter().copied(), "jacobian")?;
    Ok(j)
}

/// Hessian by nested duals: entry `(i, j)` is the `ε_i ε_j` coefficient of
/// `f(x + ε_i e_i + ε_j e_j)`. The result is symmetrized.
pub fn hessian<F: ScalarField>(f: &F, x: &[f64]) -> Result<DMatrix<f64>> {
    f.domain().check(x)?;
    let h = hessian_unchecked(f, x);
    ensure_finite(h.iter().copied(), "hessian")?;
    Ok(h)
}

pub(crate) fn hessian_unchecked<F: ScalarField>(f: &F, x: &[f64]) -> DMatrix<f64> {
    let d = x.len();
    let mut h = DMatrix::zeros(d, d);
    for i in 0..d {
        let inner = seed(x, i);
        for j in i..d {
            let outer = seed(&inner, j);
            let v = f.eval(&outer).du.du;
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    symmetrize(&h)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// The gradient of a scalar field viewed as a vector map, so that
/// `jacobian(&GradientMap(f), x)` is a second, independent Hessian route.
#[derive(Clone, Copy, Debug)]
pub struct GradientMap<F>(pub F);

impl<F: ScalarField> VectorMap for GradientMap<F> {
    fn in_dim(&self) -> usize {
        self.0.dim()
    }
    fn out_dim(&self) -> usize {
        self.0.dim()
    }
    fn domain(&self) -> DomainBox {
        self.0.domain()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        gradient_at(&self.0, x)
    }
}
