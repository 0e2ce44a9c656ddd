//! Built-in test losses and a robust local minimizer.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::data::{generate_sine_dataset, SineDataset, DEFAULT_NOISE, DEFAULT_SAMPLES};
use super::mlp::TanhMLP;
use super::train::mlp_objective;
use crate::calculus::{self, DomainBox, Scalar, ScalarField};
use crate::error::{Error, Result};
use crate::metrics::ModelSpec;

pub const DEFAULT_HIDDEN: usize = 16;

fn default_hidden() -> usize {
    DEFAULT_HIDDEN
}
fn default_samples() -> usize {
    DEFAULT_SAMPLES
}
fn default_noise() -> f64 {
    DEFAULT_NOISE
}

/// Loss selection in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossSpec {
    /// `(w₁w₂ − 1)²`, minimized on a hyperbola.
    Dinh,
    /// `½ (θ − c)ᵀ A (θ − c)`.
    Quadratic {
        matrix: Vec<Vec<f64>>,
        center: Vec<f64>,
    },
    /// `½ Σ (log θᵢ − cᵢ)²` on the positive orthant.
    LogQuadratic { center: Vec<f64> },
    /// `(a − x)² + b (y − x²)²`.
    Rosenbrock { a: f64, b: f64 },
    /// `θ₁ + 1/θ₁ + 2θ₂ − log θ₂ + 0.3 (θ₁ − θ₂)²` on the positive orthant.
    Barrier,
    /// Mean squared error of a tanh network on noisy sine data.
    SineMlp {
        #[serde(default = "default_hidden")]
        hidden: usize,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default)]
        weight_decay: f64,
    },
}

impl LossSpec {
    pub fn sine_mlp_default() -> Self {
        LossSpec::SineMlp {
            hidden: DEFAULT_HIDDEN,
            samples: DEFAULT_SAMPLES,
            noise: DEFAULT_NOISE,
            weight_decay: 0.0,
        }
    }

    pub fn unit_quadratic(dim: usize) -> Self {
        LossSpec::Quadratic {
            matrix: (0..dim)
                .map(|i| (0..dim).map(|j| f64::from(u8::from(i == j))).collect())
                .collect(),
            center: vec![0.0; dim],
        }
    }
}

/// The network problem behind [`LossSpec::SineMlp`].
#[derive(Clone, Debug)]
pub struct MlpProblem {
    pub spec: ModelSpec<TanhMLP>,
    pub data: SineDataset,
    pub init: Vec<f64>,
}

/// A resolved built-in loss.
#[derive(Clone, Debug)]
pub enum BuiltinLoss {
    Dinh,
    Quadratic {
        matrix: DMatrix<f64>,
        center: Vec<f64>,
    },
    LogQuadratic {
        center: Vec<f64>,
    },
    Rosenbrock {
        a: f64,
        b: f64,
    },
    Barrier,
    SineMlp(Box<MlpProblem>),
}

impl BuiltinLoss {
    /// Resolves a spec; `seed` drives the data and initialization of network losses.
    pub fn from_spec(spec: &LossSpec, seed: u64) -> Result<Self> {
        Ok(match spec {
            LossSpec::Dinh => BuiltinLoss::Dinh,
            LossSpec::Quadratic { matrix, center } => {
                let d = center.len();
                if d == 0 || matrix.len() != d || matrix.iter().any(|r| r.len() != d) {
                    return Err(Error::InvalidData(
                        "quadratic needs a d×d matrix and a length-d center".into(),
                    ));
                }
                let m = DMatrix::from_fn(d, d, |i, j| matrix[i][j]);
                BuiltinLoss::Quadratic {
                    matrix: crate::calculus::symmetrize(&m),
                    center: center.clone(),
                }
            }
            LossSpec::LogQuadratic { center } => {
                if center.is_empty() {
                    return Err(Error::InvalidData(
                        "log-quadratic needs a non-empty center".into(),
                    ));
                }
                BuiltinLoss::LogQuadratic {
                    center: center.clone(),
                }
            }
            LossSpec::Rosenbrock { a, b } => BuiltinLoss::Rosenbrock { a: *a, b: *b },
            LossSpec::Barrier => BuiltinLoss::Barrier,
            LossSpec::SineMlp {
                hidden,
                samples,
                noise,
                weight_decay,
            } => {
                let model = TanhMLP::new(*hidden)?;
                let data = generate_sine_dataset(seed, *samples, *noise)?;
                let spec = mlp_objective(model, &data, *weight_decay);
                BuiltinLoss::SineMlp(Box::new(MlpProblem {
                    spec,
                    init: model.init_params(seed.wrapping_add(1)),
                    data,
                }))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            BuiltinLoss::Dinh => "dinh",
            BuiltinLoss::Quadratic { .. } => "quadratic",
            BuiltinLoss::LogQuadratic { .. } => "log_quadratic",
            BuiltinLoss::Rosenbrock { .. } => "rosenbrock",
            BuiltinLoss::Barrier => "barrier",
            BuiltinLoss::SineMlp(_) => "sine_mlp",
        }
    }

    /// A point at or near a minimizer: exact where known, else a start for [`locate_minimum`].
    pub fn reference_point(&self) -> Vec<f64> {
        match self {
            BuiltinLoss::Dinh => vec![1.0, 1.0],
            BuiltinLoss::Quadratic { center, .. } => center.clone(),
            BuiltinLoss::LogQuadratic { center } => center.iter().map(|c| c.exp()).collect(),
            BuiltinLoss::Rosenbrock { a, .. } => vec![*a, a * a],
            BuiltinLoss::Barrier => vec![1.0, 0.5],
            BuiltinLoss::SineMlp(p) => p.init.clone(),
        }
    }

    /// A start away from the minimizer, for flows and Newton runs.
    pub fn start_point(&self) -> Vec<f64> {
        match self {
            BuiltinLoss::Dinh => vec![0.5, 1.5],
            BuiltinLoss::Quadratic { center, .. } => center
                .iter()
                .enumerate()
                .map(|(i, c)| c + if i % 2 == 0 { 1.0 } else { -0.5 })
                .collect(),
            BuiltinLoss::LogQuadratic { center } => {
                center.iter().map(|c| (c + 0.5).exp()).collect()
            }
            BuiltinLoss::Rosenbrock { a, .. } => vec![a - 0.3, a * a + 0.2],
            BuiltinLoss::Barrier => vec![2.0, 0.8],
            BuiltinLoss::SineMlp(p) => p.init.clone(),
        }
    }

    pub fn mlp(&self) -> Option<&MlpProblem> {
        match self {
            BuiltinLoss::SineMlp(p) => Some(p),
            _ => None,
        }
    }
}

impl ScalarField for BuiltinLoss {
    fn dim(&self) -> usize {
        match self {
            BuiltinLoss::Dinh | BuiltinLoss::Rosenbrock { .. } | BuiltinLoss::Barrier => 2,
            BuiltinLoss::Quadratic { center, .. } | BuiltinLoss::LogQuadratic { center } => {
                center.len()
            }
            BuiltinLoss::SineMlp(p) => p.spec.dim(),
        }
    }

    fn domain(&self) -> DomainBox {
        match self {
            BuiltinLoss::LogQuadratic { .. } | BuiltinLoss::Barrier => {
                DomainBox::positive(self.dim())
            }
            _ => DomainBox::unbounded(self.dim()),
        }
    }

    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        match self {
            BuiltinLoss::Dinh => (x[0] * x[1] - 1.0).square(),
            BuiltinLoss::Quadratic { matrix, center } => {
                let d = center.len();
                let r: Vec<S> = x.iter().zip(center).map(|(&xi, &c)| xi - c).collect();
                let mut acc = S::zero();
                for i in 0..d {
                    for j in 0..d {
                        acc += r[i] * r[j] * matrix[(i, j)];
                    }
                }
                acc * 0.5
            }
            BuiltinLoss::LogQuadratic { center } => {
                let mut acc = S::zero();
                for (&xi, &c) in x.iter().zip(center) {
                    acc += (xi.ln() - c).square();
                }
                acc * 0.5
            }
            BuiltinLoss::Rosenbrock { a, b } => {
                (-x[0] + *a).square() + (x[1] - x[0] * x[0]).square() * *b
            }
            BuiltinLoss::Barrier => {
                x[0] + x[0].recip() + x[1] * 2.0 - x[1].ln() + (x[0] - x[1]).square() * 0.3
            }
            BuiltinLoss::SineMlp(p) => p.spec.eval(x),
        }
    }
}

/// Gradient-norm target of [`locate_minimum`].
pub const MINIMUM_TOLERANCE: f64 = 1e-10;

/// Levenberg–Marquardt-damped Newton descent to `‖∇L‖ ≤ 1e-10`.
///
/// Works on degenerate minima (where plain Newton has a singular Hessian)
/// because the damping keeps every linear system solvable.
pub fn locate_minimum<F: ScalarField>(
    loss: &F,
    start: &[f64],
    max_iterations: usize,
) -> Result<Vec<f64>> {
    let domain = loss.domain();
    let mut x = start.to_vec();
    let mut fx = calculus::value(loss, &x)?;
    let mut lambda = 1e-3;
    let mut grad_norm = f64::INFINITY;
    for _ in 0..max_iterations {
        let grad = calculus::gradient(loss, &x)?;
        grad_norm = grad.norm();
        if grad_norm <= MINIMUM_TOLERANCE {
            return Ok(x);
        }
        let hess = calculus::hessian(loss, &x)?;
        let mut accepted = false;
        while lambda < 1e12 {
            let shifted = &hess + DMatrix::identity(x.len(), x.len()) * lambda;
            if let Ok(step) = crate::linalg::solve(&shifted, &grad) {
                let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - s).collect();
                if domain.contains(&cand) {
                    if let Ok(fc) = calculus::value(loss, &cand) {
                        let slack = 1e-15 * fx.abs().max(1e-300);
                        let improves = fc < fx
                            || (fc <= fx + slack
                                && calculus::gradient(loss, &cand)
                                    .map(|g| g.norm() < grad_norm)
                                    .unwrap_or(false));
                        if improves {
                            x = cand;
                            fx = fc;
                            lambda = (lambda * 0.1).max(1e-14);
                            if lambda <= 1e-14 {
                                lambda = 0.0;
                            }
                            accepted = true;
                            break;
                        }
                    }
                }
            }
            lambda = if lambda == 0.0 { 1e-12 } else { lambda * 10.0 };
        }
        if !accepted {
            break;
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iterations,
        grad_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minima_of_analytic_losses() {
        let specs = [
            LossSpec::Dinh,
            LossSpec::Quadratic {
                matrix: vec![vec![3.0, 1.0], vec![1.0, 2.0]],
                center: vec![1.0, 2.0],
            },
            LossSpec::LogQuadratic {
                center: vec![0.3, -0.4],
            },
            LossSpec::Rosenbrock { a: 1.0, b: 10.0 },
            LossSpec::Barrier,
        ];
        for spec in &specs {
            let loss = BuiltinLoss::from_spec(spec, 0).unwrap();
            let m = locate_minimum(&loss, &loss.start_point(), 200).unwrap();
            assert!(
                calculus::gradient(&loss, &m).unwrap().norm() <= MINIMUM_TOLERANCE,
                "{}",
                loss.name()
            );
        }
        let q = BuiltinLoss::from_spec(&specs[1], 0).unwrap();
        let m = locate_minimum(&q, &q.start_point(), 50).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-12 && (m[1] - 2.0).abs() < 1e-12);
        let dinh = BuiltinLoss::Dinh;
        let m = locate_minimum(&dinh, &dinh.start_point(), 200).unwrap();
        assert!((m[0] * m[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn network_loss_resolves() {
        let loss = BuiltinLoss::from_spec(
            &LossSpec::SineMlp {
                hidden: 3,
                samples: 12,
                noise: 0.3,
                weight_decay: 0.0,
            },
            4,
        )
        .unwrap();
        assert_eq!(loss.dim(), 10);
        assert!(calculus::value(&loss, &loss.reference_point()).unwrap() > 0.0);
        assert!(BuiltinLoss::from_spec(
            &LossSpec::Quadratic {
                matrix: vec![vec![1.0]],
                center: vec![0.0, 1.0]
            },
            0
        )
        .is_err());
    }
}
