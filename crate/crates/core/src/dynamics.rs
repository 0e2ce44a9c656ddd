//! Gradient flows, their reparametrized counterparts, and Newton's method.
//!
//! Three vector fields are integrated:
//!
//! * `θ̇ = −G(θ)⁻¹ ∇L(θ)`, preconditioned flow in the original chart;
//! * `ψ̇ = −J⁻ᵀ ∇L`, the flow obtained by differentiating `L ∘ φ⁻¹` and
//!   ignoring the metric (not equivariant);
//! * `ψ̇ = −J G⁻¹ ∇L`, the pushforward of the first (equivariant).
//!
//! Euler with `G = I` is plain gradient descent. RK4 approaches the continuous
//! flow, where the equivariant pair agrees up to discretization error.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::calculus::{self, DomainBox, ScalarField};
use crate::charts::{pushforward_function, Diffeomorphism};
use crate::error::{Error, Result};
use crate::linalg;
use crate::metrics::MetricField;
use crate::report::{real, Table};

/// Gradient-norm threshold at which Newton's method stops.
pub const NEWTON_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    Rk4,
}

impl Integrator {
    pub fn as_str(self) -> &'static str {
        match self {
            Integrator::Euler => "euler",
            Integrator::Rk4 => "rk4",
        }
    }
}

/// A discretized path with its schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    pub chart_name: String,
    pub integrator: Integrator,
    pub step: f64,
    /// Index of the step that would have left the domain, if any.
    pub exit_step: Option<usize>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.points
            .last()
            .expect("trajectories hold at least the initial point")
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Columns `t, x1..xd`.
    pub fn table(&self) -> Table {
        let d = self.points.first().map_or(0, Vec::len);
        let mut t =
            Table::new(std::iter::once("t".to_string()).chain((1..=d).map(|i| format!("x{i}"))));
        for (time, p) in self.times.iter().zip(&self.points) {
            t.push(
                std::iter::once(real(*time))
                    .chain(p.iter().map(|v| real(*v)))
                    .collect(),
            );
        }
        t
    }

    pub fn to_csv(&self) -> String {
        self.table().to_csv()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectory serializes")
    }
}

fn axpy(x: &[f64], a: f64, v: &[f64]) -> Vec<f64> {
    x.iter().zip(v).map(|(xi, vi)| xi + a * vi).collect()
}

enum Stage {
    Ok(Vec<f64>),
    Exit,
}

fn stage(
    field: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    domain: &DomainBox,
    x: &[f64],
) -> Result<Stage> {
    if !domain.contains(x) {
        return Ok(Stage::Exit);
    }
    match field(x) {
        Ok(v) => Ok(Stage::Ok(v)),
        Err(Error::Domain { .. }) => Ok(Stage::Exit),
        Err(e) => Err(e),
    }
}

/// Integrates `ẋ = field(x)` for `steps` steps of size `step`.
///
/// Leaving `domain` ends the trajectory early and records the offending step.
pub fn integrate(
    field: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    domain: &DomainBox,
    x0: &[f64],
    step: f64,
    steps: usize,
    integrator: Integrator,
    chart_name: &str,
) -> Result<Trajectory> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Numerics(format!(
            "step size must be positive, got {step}"
        )));
    }
    domain.check(x0)?;
    let mut traj = Trajectory {
        points: vec![x0.to_vec()],
        times: vec![0.0],
        chart_name: chart_name.to_string(),
        integrator,
        step,
        exit_step: None,
    };
    let mut x = x0.to_vec();
    for t in 0..steps {
        let next = match integrator {
            Integrator::Euler => match stage(field, domain, &x)? {
                Stage::Ok(v) => Some(axpy(&x, step, &v)),
                Stage::Exit => None,
            },
            Integrator::Rk4 => rk4_step(field, domain, &x, step)?,
        };
        let next = match next {
            Some(n) if domain.contains(&n) => n,
            Some(n) if n.iter().any(|v| !v.is_finite()) => {
                return Err(Error::Numerics(format!(
                    "state became non-finite at step {}",
                    t + 1
                )));
            }
            _ => {
                traj.exit_step = Some(t + 1);
                break;
            }
        };
        x = next;
        traj.points.push(x.clone());
        traj.times.push((t + 1) as f64 * step);
    }
    Ok(traj)
}

fn rk4_step(
    field: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    domain: &DomainBox,
    x: &[f64],
    h: f64,
) -> Result<Option<Vec<f64>>> {
    let Stage::Ok(k1) = stage(field, domain, x)? else {
        return Ok(None);
    };
    let Stage::Ok(k2) = stage(field, domain, &axpy(x, 0.5 * h, &k1))? else {
        return Ok(None);
    };
    let Stage::Ok(k3) = stage(field, domain, &axpy(x, 0.5 * h, &k2))? else {
        return Ok(None);
    };
    let Stage::Ok(k4) = stage(field, domain, &axpy(x, h, &k3))? else {
        return Ok(None);
    };
    Ok(Some(
        (0..x.len())
            .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect(),
    ))
}

fn natural_gradient<F: ScalarField, G: MetricField>(
    loss: &F,
    metric: &G,
    theta: &[f64],
) -> Result<DVector<f64>> {
    let grad = calculus::gradient(loss, theta)?;
    let chol = linalg::spd_cholesky(&metric.eval(theta)?)?;
    Ok(chol.solve(&grad))
}

/// `θ̇ = −G(θ)⁻¹ ∇L(θ)` in the loss's own chart.
pub fn flow<F: ScalarField, G: MetricField>(
    loss: &F,
    metric: &G,
    theta0: &[f64],
    step: f64,
    steps: usize,
    integrator: Integrator,
) -> Result<Trajectory> {
    check_dims(loss.dim(), metric.dim())?;
    let field = |x: &[f64]| Ok((-natural_gradient(loss, metric, x)?).as_slice().to_vec());
    integrate(
        &field,
        &loss.domain(),
        theta0,
        step,
        steps,
        integrator,
        "identity",
    )
}

/// `ψ̇ = −J⁻ᵀ ∇L`: plain gradient flow of `L ∘ φ⁻¹`, ignoring the metric.
pub fn naive_reparam_flow<F: ScalarField>(
    loss: &F,
    phi: &Diffeomorphism,
    psi0: &[f64],
    step: f64,
    steps: usize,
    integrator: Integrator,
) -> Result<Trajectory> {
    check_dims(loss.dim(), phi.dim())?;
    let transported = pushforward_function(phi, loss);
    let field = |psi: &[f64]| {
        Ok((-calculus::gradient(&transported, psi)?)
            .as_slice()
            .to_vec())
    };
    integrate(
        &field,
        phi.codomain(),
        psi0,
        step,
        steps,
        integrator,
        phi.name(),
    )
}

/// `ψ̇ = −J(θ) G(θ)⁻¹ ∇L(θ)` with `θ = φ⁻¹(ψ)`: the θ-side flow carried over.
pub fn equivariant_reparam_flow<F: ScalarField, G: MetricField>(
    loss: &F,
    metric: &G,
    phi: &Diffeomorphism,
    psi0: &[f64],
    step: f64,
    steps: usize,
    integrator: Integrator,
) -> Result<Trajectory> {
    check_dims(loss.dim(), phi.dim())?;
    check_dims(loss.dim(), metric.dim())?;
    let field = |psi: &[f64]| {
        let theta = phi.apply_inverse(psi)?;
        let velocity = natural_gradient(loss, metric, &theta)?;
        Ok((-(phi.jacobian(&theta)? * velocity)).as_slice().to_vec())
    };
    integrate(
        &field,
        phi.codomain(),
        psi0,
        step,
        steps,
        integrator,
        phi.name(),
    )
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Numerics(format!("dimension mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// `max_t ‖φ(θ_t) − ψ_t‖₂` over the times both trajectories reach.
pub fn equivariance_gap(
    theta_side: &Trajectory,
    psi_side: &Trajectory,
    phi: &Diffeomorphism,
) -> Result<f64> {
    if theta_side.integrator != psi_side.integrator {
        return Err(Error::InvalidComparison(format!(
            "integrators differ: {} vs {}",
            theta_side.integrator.as_str(),
            psi_side.integrator.as_str()
        )));
    }
    if theta_side.step != psi_side.step {
        return Err(Error::InvalidComparison(format!(
            "step sizes differ: {} vs {}",
            theta_side.step, psi_side.step
        )));
    }
    let shared = theta_side.len().min(psi_side.len());
    if theta_side.times[..shared] != psi_side.times[..shared] {
        return Err(Error::InvalidComparison("time grids differ".into()));
    }
    let mut gap = 0.0f64;
    for (theta, psi) in theta_side.points.iter().zip(&psi_side.points).take(shared) {
        let mapped = phi.apply(theta)?;
        let dist = mapped
            .iter()
            .zip(psi)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        gap = gap.max(dist);
    }
    Ok(gap)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonResult {
    pub minimizer: Vec<f64>,
    pub steps_taken: usize,
    /// Iterates as a unit-step Euler path of the Newton field.
    pub trajectory: Trajectory,
    pub grad_norm: f64,
}

/// Undamped Newton iteration `θ ← θ − H⁻¹ ∇L`, stopping at `‖∇L‖ ≤ 1e-10`.
pub fn newton_minimize<F: ScalarField>(
    loss: &F,
    theta0: &[f64],
    max_steps: usize,
) -> Result<NewtonResult> {
    let domain = loss.domain();
    domain.check(theta0)?;
    let mut theta = theta0.to_vec();
    let mut trajectory = Trajectory {
        points: vec![theta.clone()],
        times: vec![0.0],
        chart_name: "identity".into(),
        integrator: Integrator::Euler,
        step: 1.0,
        exit_step: None,
    };
    let mut steps = 0;
    loop {
        let grad = calculus::gradient(loss, &theta)?;
        let grad_norm = grad.norm();
        if grad_norm <= NEWTON_TOLERANCE {
            return Ok(NewtonResult {
                minimizer: theta,
                steps_taken: steps,
                trajectory,
                grad_norm,
            });
        }
        if steps == max_steps {
            return Err(Error::NoConvergence {
                iterations: steps,
                grad_norm,
            });
        }
        let hess = calculus::hessian(loss, &theta)?;
        let delta = linalg::solve(&hess, &grad)
            .map_err(|e| Error::Numerics(format!("newton step {}: {e}", steps + 1)))?;
        theta = axpy(&theta, -1.0, delta.as_slice());
        domain.check(&theta)?;
        steps += 1;
        trajectory.points.push(theta.clone());
        trajectory.times.push(steps as f64);
    }
}
