//! Laplace approximation of the log marginal likelihood.
//!
//! With `L` the regularized negative log joint (prior folded in) and `θ*` its
//! minimizer, `log Z ≈ −L(θ*) + (d/2) log 2π − ½ log det ∇²L(θ*)`.
//!
//! Recomputing the Hessian in new coordinates gives `det Ĥ = det H / det J²`,
//! so the naive estimate shifts by `+log|det J|`. The invariant estimate
//! carries the ψ-side Hessian back as a bilinear form and reproduces the
//! θ-side value.

use serde::{Deserialize, Serialize};

use crate::calculus::{self, ScalarField};
use crate::charts::{
    pushforward_bilinear, pushforward_covector, pushforward_function, Diffeomorphism,
};
use crate::error::{Error, Result};
use crate::linalg;
use crate::report::{real, Tabular};

/// Largest gradient norm accepted at a MAP estimate.
pub const MAP_GRAD_TOLERANCE: f64 = 1e-6;

/// `log_z = neg_loss_term + remainder_term`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplaceReport {
    pub log_z: f64,
    /// `−L(θ*)`.
    pub neg_loss_term: f64,
    /// `(d/2) log 2π − ½ log det H`.
    pub remainder_term: f64,
    pub theta_map: Vec<f64>,
    pub hessian_logdet: f64,
}

impl Tabular for LaplaceReport {
    fn columns() -> Vec<String> {
        ["log_z", "neg_loss", "rest", "hessian_logdet"]
            .map(String::from)
            .to_vec()
    }
    fn row(&self) -> Vec<String> {
        vec![
            real(self.log_z),
            real(self.neg_loss_term),
            real(self.remainder_term),
            real(self.hessian_logdet),
        ]
    }
}

fn assemble(
    loss_value: f64,
    grad_norm: f64,
    hessian: &nalgebra::DMatrix<f64>,
    theta: Vec<f64>,
) -> Result<LaplaceReport> {
    if grad_norm > MAP_GRAD_TOLERANCE {
        return Err(Error::NotAtMap {
            grad_norm,
            tolerance: MAP_GRAD_TOLERANCE,
        });
    }
    let hessian_logdet = linalg::log_det_spd(hessian).map_err(|e| match e {
        Error::InvalidMetric(msg) => Error::InvalidHessian(msg),
        other => other,
    })?;
    let d = theta.len() as f64;
    let remainder_term = 0.5 * d * (2.0 * std::f64::consts::PI).ln() - 0.5 * hessian_logdet;
    let neg_loss_term = -loss_value;
    Ok(LaplaceReport {
        log_z: neg_loss_term + remainder_term,
        neg_loss_term,
        remainder_term,
        theta_map: theta,
        hessian_logdet,
    })
}

/// Laplace estimate from the loss and Hessian in the loss's own chart.
pub fn laplace_log_marginal<F: ScalarField>(loss: &F, theta_map: &[f64]) -> Result<LaplaceReport> {
    let value = calculus::value(loss, theta_map)?;
    let grad = calculus::gradient(loss, theta_map)?;
    let hess = calculus::hessian(loss, theta_map)?;
    assemble(value, grad.norm(), &hess, theta_map.to_vec())
}

/// Laplace estimate evaluated at `ψ* = φ(θ*)` through the transformation
/// rules: the ψ-side gradient and Hessian are carried back to Θ as a covector
/// and a bilinear form, so the result is the θ-side estimate.
pub fn laplace_log_marginal_invariant<F: ScalarField>(
    loss: &F,
    phi: &Diffeomorphism,
    psi_map: &[f64],
) -> Result<LaplaceReport> {
    let transported = pushforward_function(phi, loss);
    let theta = phi.apply_inverse(psi_map)?;
    let back = phi.inverted();
    let value = calculus::value(&transported, psi_map)?;
    let grad = pushforward_covector(&back, psi_map, &calculus::gradient(&transported, psi_map)?)?;
    let hess = pushforward_bilinear(&back, psi_map, &calculus::hessian(&transported, psi_map)?)?;
    assemble(value, grad.norm(), &calculus::symmetrize(&hess), theta)
}
