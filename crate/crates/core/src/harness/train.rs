//! Full-batch training of models on their empirical risk.

use serde::{Deserialize, Serialize};

use super::data::SineDataset;
use super::mlp::TanhMLP;
use crate::calculus::{self, ScalarField};
use crate::error::{Error, Result};
use crate::linalg;
use crate::metrics::{empirical_fisher, Loss, Model, ModelSpec, Reduction};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Optimizer {
    /// `θ ← θ − lr ∇L`.
    Gd { lr: f64 },
    /// `θ ← θ − lr (F + λI)⁻¹ ∇L` with `F` the empirical Fisher.
    FisherGd { lr: f64, damping: f64 },
    /// `θ ← θ − (∇²L + λI)⁻¹ ∇L`.
    Newton { damping: f64 },
}

impl Optimizer {
    pub fn name(&self) -> &'static str {
        match self {
            Optimizer::Gd { .. } => "gd",
            Optimizer::FisherGd { .. } => "fisher_gd",
            Optimizer::Newton { .. } => "newton",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub theta: Vec<f64>,
    /// Objective before each epoch, followed by the final value.
    pub loss_curve: Vec<f64>,
    pub grad_norm: f64,
}

fn direction<M: Model>(
    spec: &ModelSpec<M>,
    optimizer: Optimizer,
    theta: &[f64],
) -> Result<Vec<f64>> {
    let grad = calculus::gradient(spec, theta)?;
    let step = match optimizer {
        Optimizer::Gd { lr } => grad * lr,
        Optimizer::FisherGd { lr, damping } => {
            let mut f = empirical_fisher(spec, theta)?;
            for i in 0..f.nrows() {
                f[(i, i)] += damping;
            }
            linalg::solve(&f, &grad)? * lr
        }
        Optimizer::Newton { damping } => {
            let mut h = calculus::hessian(spec, theta)?;
            for i in 0..h.nrows() {
                h[(i, i)] += damping;
            }
            linalg::solve(&h, &grad)?
        }
    };
    Ok(step.as_slice().to_vec())
}

/// Runs `epochs` full-batch updates from `theta0`.
pub fn train<M: Model>(
    spec: &ModelSpec<M>,
    theta0: &[f64],
    epochs: usize,
    optimizer: Optimizer,
) -> Result<TrainReport> {
    let mut theta = theta0.to_vec();
    let mut loss_curve = Vec::with_capacity(epochs + 1);
    for epoch in 0..epochs {
        let loss = calculus::value(spec, &theta)?;
        loss_curve.push(loss);
        let step = direction(spec, optimizer, &theta)?;
        for (t, s) in theta.iter_mut().zip(&step) {
            *t -= s;
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerics(format!(
                "training diverged at epoch {}",
                epoch + 1
            )));
        }
    }
    let final_loss = calculus::value(spec, &theta).map_err(|e| match e {
        Error::Numerics(_) => Error::Numerics("training diverged".into()),
        other => other,
    })?;
    loss_curve.push(final_loss);
    let grad_norm = calculus::gradient(spec, &theta)?.norm();
    Ok(TrainReport {
        theta,
        loss_curve,
        grad_norm,
    })
}

/// The regression objective used for the tanh network: mean squared-error
/// halves plus `γ/2 ‖θ‖²`.
pub fn mlp_objective(model: TanhMLP, data: &SineDataset, weight_decay: f64) -> ModelSpec<TanhMLP> {
    ModelSpec::new(model, Loss::SquaredError, data.to_dataset())
        .expect("scalar targets match the network output")
        .with_reduction(Reduction::Mean)
        .with_weight_decay(weight_decay)
}

pub fn train_mlp(
    model: TanhMLP,
    data: &SineDataset,
    theta0: &[f64],
    epochs: usize,
    optimizer: Optimizer,
    weight_decay: f64,
) -> Result<TrainReport> {
    train(
        &mlp_objective(model, data, weight_decay),
        theta0,
        epochs,
        optimizer,
    )
}

/// Mean squared error `meanᵢ (f(xᵢ) − yᵢ)²`.
pub fn mse(model: &TanhMLP, data: &SineDataset, theta: &[f64]) -> f64 {
    let spec = mlp_objective(*model, data, 0.0);
    2.0 * spec.eval(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::data::{generate_sine_dataset, sine_dataset_from_inputs};

    #[test]
    fn zero_step_leaves_parameters() {
        let net = TanhMLP::new(3).unwrap();
        let data = generate_sine_dataset(0, 10, 0.3).unwrap();
        let theta0 = net.init_params(1);
        let r = train_mlp(net, &data, &theta0, 25, Optimizer::Gd { lr: 0.0 }, 0.0).unwrap();
        assert_eq!(r.theta, theta0);
        assert_eq!(r.loss_curve.len(), 26);
    }

    #[test]
    fn fits_two_noiseless_points() {
        let net = TanhMLP::new(8).unwrap();
        let data = sine_dataset_from_inputs(&[1.0, 4.0], 0.0, 0).unwrap();
        let r = train_mlp(
            net,
            &data,
            &net.init_params(0),
            1000,
            Optimizer::Gd { lr: 0.1 },
            0.0,
        )
        .unwrap();
        assert!(mse(&net, &data, &r.theta) <= 1e-3);
        assert!(r.loss_curve.last() < r.loss_curve.first());
    }

    #[test]
    fn divergence_is_reported() {
        let net = TanhMLP::new(2).unwrap();
        let data = generate_sine_dataset(0, 10, 0.3).unwrap();
        let r = train_mlp(
            net,
            &data,
            &net.init_params(0),
            200,
            Optimizer::Gd { lr: 1e200 },
            0.0,
        );
        assert!(matches!(r, Err(Error::Numerics(_))));
    }

    #[test]
    fn second_order_optimizers_reduce_loss() {
        let net = TanhMLP::new(4).unwrap();
        let data = generate_sine_dataset(2, 40, 0.1).unwrap();
        let theta0 = net.init_params(2);
        for opt in [
            Optimizer::FisherGd {
                lr: 0.1,
                damping: 1e-3,
            },
            Optimizer::Newton { damping: 1.0 },
        ] {
            let r = train_mlp(net, &data, &theta0, 30, opt, 1e-3).unwrap();
            assert!(
                r.loss_curve.last().unwrap() < &r.loss_curve[0],
                "{}",
                opt.name()
            );
        }
    }
}
