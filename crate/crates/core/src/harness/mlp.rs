//! One-hidden-layer tanh network for scalar regression.

use serde::{Deserialize, Serialize};

use super::rng::{seeded, standard_normal};
use crate::calculus::Scalar;
use crate::error::{Error, Result};
use crate::metrics::Model;

/// `f(x) = Σⱼ vⱼ tanh(wⱼ x + bⱼ) + c`.
///
/// Parameters are laid out as `[w (h), b (h), v (h), c]`, so `d = 3h + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TanhMLP {
    hidden: usize,
}

impl TanhMLP {
    pub fn new(hidden: usize) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::InvalidData(
                "a tanh network needs at least one hidden unit".into(),
            ));
        }
        Ok(TanhMLP { hidden })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Input weights and biases `~ N(0, 1)`, output weights `~ N(0, 1/h)`, output bias 0.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let h = self.hidden;
        let mut rng = seeded(seed);
        let mut theta: Vec<f64> = (0..2 * h).map(|_| standard_normal(&mut rng)).collect();
        let scale = (h as f64).sqrt().recip();
        theta.extend((0..h).map(|_| scale * standard_normal(&mut rng)));
        theta.push(0.0);
        theta
    }
}

impl Model for TanhMLP {
    fn n_params(&self) -> usize {
        3 * self.hidden + 1
    }

    fn out_dim(&self) -> usize {
        1
    }

    fn predict<S: Scalar>(&self, x: &[f64], theta: &[S]) -> Vec<S> {
        let h = self.hidden;
        let mut out = theta[3 * h];
        for j in 0..h {
            out += theta[2 * h + j] * (theta[j] * x[0] + theta[h + j]).tanh();
        }
        vec![out]
    }
}
