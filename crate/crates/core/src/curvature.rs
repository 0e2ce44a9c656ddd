//! Second-order geometry: Christoffel symbols, the Riemannian Hessian, the
//! Hessian endomorphism and sharpness summaries.
//!
//! The connection is the Levi-Civita connection of the metric,
//! `Γᵏᵢⱼ = ½ gᵏˡ (∂ᵢ gⱼₗ + ∂ⱼ gᵢₗ − ∂ₗ gᵢⱼ)`.
//!
//! The Hessian `H` is a bilinear form, so its determinant, trace and spectrum
//! change with the chart. The endomorphism `E = G⁻¹H` transforms by similarity
//! and its trace, determinant and eigenvalues do not. Its eigenvalues are the
//! principal curvatures of the loss graph, its trace the mean curvature (up to
//! a factor) and its determinant the Gaussian curvature.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calculus::{self, fd, seed, DomainBox, ScalarField};
use crate::error::{Error, Result};
use crate::linalg;
use crate::metrics::MetricField;
use crate::report::{real, Tabular};

/// Below this gradient norm the Christoffel correction is skipped.
pub const CRITICAL_GRAD_NORM: f64 = 1e-8;

/// Relative bound on imaginary parts accepted from a general eigen-solve.
pub const IMAGINARY_TOLERANCE: f64 = 1e-9;

/// `Γᵏᵢⱼ`, stored as one symmetric `d × d` matrix per upper index `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Christoffel {
    pub symbols: Vec<DMatrix<f64>>,
}

impl Christoffel {
    pub fn dim(&self) -> usize {
        self.symbols.len()
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.symbols[k][(i, j)]
    }

    /// `Σₖ Γᵏᵢⱼ ωₖ`.
    pub fn contract(&self, covector: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        for (k, gamma) in self.symbols.iter().enumerate() {
            out += gamma * covector[k];
        }
        out
    }

    fn from_derivatives(g: &DMatrix<f64>, dg: &[DMatrix<f64>]) -> Result<Self> {
        let d = g.nrows();
        let g_inv = linalg::inverse(g)?;
        // first kind: Γ_{ijl} = ½ (∂ᵢ g_jl + ∂ⱼ g_il − ∂ₗ g_ij)
        let first =
            |i: usize, j: usize, l: usize| 0.5 * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
        let symbols = (0..d)
            .map(|k| {
                let mut m = DMatrix::zeros(d, d);
                for i in 0..d {
                    for j in i..d {
                        let v: f64 = (0..d).map(|l| g_inv[(k, l)] * first(i, j, l)).sum();
                        m[(i, j)] = v;
                        m[(j, i)] = v;
                    }
                }
                m
            })
            .collect();
        Ok(Christoffel { symbols })
    }
}

/// Christoffel symbols with metric derivatives from dual numbers.
pub fn christoffel<G: MetricField>(metric: &G, theta: &[f64]) -> Result<Christoffel> {
    let g = metric.eval(theta)?;
    let dg = (0..theta.len())
        .map(|l| {
            let lifted = metric.eval_at(&seed(theta, l));
            DMatrix::from_fn(lifted.nrows(), lifted.ncols(), |i, j| lifted[(i, j)].du)
        })
        .collect::<Vec<_>>();
    if dg.iter().any(|m| m.iter().any(|v| !v.is_finite())) {
        return Err(Error::Numerics("metric derivative is not finite".into()));
    }
    Christoffel::from_derivatives(&g, &dg)
}

/// Christoffel symbols with metric derivatives from central differences, for
/// metrics only available as `f64` closures.
pub fn christoffel_fd(
    metric: impl Fn(&[f64]) -> DMatrix<f64>,
    domain: &DomainBox,
    theta: &[f64],
    step: f64,
) -> Result<Christoffel> {
    let d = theta.len();
    let g = metric(theta);
    let flat = |x: &[f64]| metric(x).as_slice().to_vec();
    let jac = fd::fd_jacobian(flat, domain, theta, step)?;
    let dg = (0..d)
        .map(|l| DMatrix::from_column_slice(d, d, jac.column(l).as_slice()))
        .collect::<Vec<_>>();
    Christoffel::from_derivatives(&g, &dg)
}

/// A Riemannian Hessian together with how it was obtained.
#[derive(Clone, Debug, PartialEq)]
pub struct RiemannianHessian {
    pub matrix: DMatrix<f64>,
    pub grad_norm: f64,
    /// True when the gradient was small enough that the correction was skipped.
    pub at_critical: bool,
}

/// `Hᵢⱼ = ∂ᵢ∂ⱼL − Σₖ Γᵏᵢⱼ ∂ₖL`.
pub fn riemannian_hessian<F: ScalarField, G: MetricField>(
    loss: &F,
    metric: &G,
    theta: &[f64],
) -> Result<RiemannianHessian> {
    let grad = calculus::gradient(loss, theta)?;
    let hess = calculus::hessian(loss, theta)?;
    let grad_norm = grad.norm();
    if grad_norm <= CRITICAL_GRAD_NORM {
        return Ok(RiemannianHessian {
            matrix: hess,
            grad_norm,
            at_critical: true,
        });
    }
    let gamma = christoffel(metric, theta)?;
    let matrix = calculus::symmetrize(&(hess - gamma.contract(&grad)));
    Ok(RiemannianHessian {
        matrix,
        grad_norm,
        at_critical: false,
    })
}

/// `E = G⁻¹ H`.
pub fn hessian_endomorphism(g: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = linalg::spd_cholesky(g)?;
    if h.shape() != g.shape() {
        return Err(Error::Numerics(format!(
            "hessian shape {:?} does not match metric {:?}",
            h.shape(),
            g.shape()
        )));
    }
    Ok(chol.solve(h))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharpnessKind {
    /// The Hessian read as a bilinear form.
    Bilinear,
    /// The Hessian read as an endomorphism `G⁻¹H`.
    Endomorphism,
}

impl SharpnessKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SharpnessKind::Bilinear => "bilinear",
            SharpnessKind::Endomorphism => "endomorphism",
        }
    }
}

/// Determinant, trace and ascending eigenvalues of a curvature matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharpnessReport {
    pub kind: SharpnessKind,
    pub determinant: f64,
    pub trace: f64,
    pub eigenvalues: Vec<f64>,
}

impl SharpnessReport {
    pub fn eig_min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::NAN)
    }

    pub fn eig_max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(f64::NAN)
    }
}

impl Tabular for SharpnessReport {
    fn columns() -> Vec<String> {
        ["kind", "det", "trace", "eig_min", "eig_max"]
            .map(String::from)
            .to_vec()
    }
    fn row(&self) -> Vec<String> {
        vec![
            self.kind.as_str().into(),
            real(self.determinant),
            real(self.trace),
            real(self.eig_min()),
            real(self.eig_max()),
        ]
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn require_square(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::Numerics(format!(
            "sharpness needs a square matrix, got {:?}",
            m.shape()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerics("matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Summarizes a bilinear Hessian (symmetric spectrum) or an already formed
/// endomorphism (general spectrum; imaginary parts must be negligible).
pub fn sharpness(matrix: &DMatrix<f64>, kind: SharpnessKind) -> Result<SharpnessReport> {
    require_square(matrix)?;
    let eigenvalues = match kind {
        SharpnessKind::Bilinear => {
            let sym = calculus::symmetrize(matrix);
            sym.symmetric_eigenvalues().iter().copied().collect()
        }
        SharpnessKind::Endomorphism => {
            let schur = nalgebra::linalg::Schur::try_new(matrix.clone(), f64::EPSILON, 10_000)
                .ok_or_else(|| Error::Numerics("eigen-solver did not converge".into()))?;
            let complex = schur.complex_eigenvalues();
            let mut out = Vec::with_capacity(complex.len());
            for z in complex.iter() {
                if z.im.abs() > IMAGINARY_TOLERANCE * z.norm().max(1.0) {
                    return Err(Error::Numerics(format!(
                        "endomorphism has a complex eigenvalue {z}"
                    )));
                }
                out.push(z.re);
            }
            out
        }
    };
    Ok(SharpnessReport {
        kind,
        determinant: matrix.determinant(),
        trace: matrix.trace(),
        eigenvalues: sorted(eigenvalues),
    })
}

/// Sharpness of `E = G⁻¹H` from the metric and bilinear Hessian.
///
/// The spectrum is taken from the symmetric congruent form `L⁻¹ H L⁻ᵀ`, where
/// `G = L Lᵀ`, which shares the eigenvalues of `E` and keeps them real.
pub fn endomorphism_sharpness(g: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<SharpnessReport> {
    require_square(h)?;
    let chol = linalg::spd_cholesky(g)?;
    if h.shape() != g.shape() {
        return Err(Error::Numerics(format!(
            "hessian shape {:?} does not match metric {:?}",
            h.shape(),
            g.shape()
        )));
    }
    let l = chol.l();
    let left = l
        .solve_lower_triangular(&calculus::symmetrize(h))
        .ok_or_else(|| Error::Numerics("singular Cholesky factor".into()))?;
    let congruent = l
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::Numerics("singular Cholesky factor".into()))?;
    let congruent = calculus::symmetrize(&congruent);
    let log_det_g = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(SharpnessReport {
        kind: SharpnessKind::Endomorphism,
        determinant: h.determinant() * (-log_det_g).exp(),
        trace: congruent.trace(),
        eigenvalues: sorted(congruent.symmetric_eigenvalues().iter().copied().collect()),
    })
}
