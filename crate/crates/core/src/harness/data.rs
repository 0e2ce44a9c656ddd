//! Noisy sine regression data.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rng::{seeded, standard_normal};
use crate::error::{Error, Result};
use crate::metrics::Dataset;

pub const DEFAULT_SAMPLES: usize = 150;
pub const DEFAULT_NOISE: f64 = 0.3;
pub const INPUT_RANGE: (f64, f64) = (0.0, 8.0);

/// `yᵢ = sin xᵢ + εᵢ` with `εᵢ ~ N(0, noise²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SineDataset {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub seed: u64,
    pub noise: f64,
}

impl SineDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn to_dataset(&self) -> Dataset {
        Dataset::scalar(&self.inputs, &self.targets).expect("inputs and targets have equal length")
    }
}

fn check_noise(noise: f64) -> Result<()> {
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidData(format!(
            "noise must be non-negative, got {noise}"
        )));
    }
    Ok(())
}

/// Draws `m` inputs uniformly from `[0, 8]`, then `m` noise values, from one stream.
pub fn generate_sine_dataset(seed: u64, m: usize, noise: f64) -> Result<SineDataset> {
    if m == 0 {
        return Err(Error::InvalidData(
            "dataset needs at least one sample".into(),
        ));
    }
    check_noise(noise)?;
    let mut rng = seeded(seed);
    let inputs: Vec<f64> = (0..m)
        .map(|_| rng.random_range(INPUT_RANGE.0..=INPUT_RANGE.1))
        .collect();
    let targets = inputs
        .iter()
        .map(|x| x.sin() + noise * standard_normal(&mut rng))
        .collect();
    Ok(SineDataset {
        inputs,
        targets,
        seed,
        noise,
    })
}

/// Sine targets for given inputs.
pub fn sine_dataset_from_inputs(inputs: &[f64], noise: f64, seed: u64) -> Result<SineDataset> {
    if inputs.is_empty() {
        return Err(Error::InvalidData(
            "dataset needs at least one sample".into(),
        ));
    }
    check_noise(noise)?;
    let mut rng = seeded(seed);
    let targets = inputs
        .iter()
        .map(|x| x.sin() + noise * standard_normal(&mut rng))
        .collect();
    Ok(SineDataset {
        inputs: inputs.to_vec(),
        targets,
        seed,
        noise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn noiseless_targets() {
        let d = sine_dataset_from_inputs(&[0.0, FRAC_PI_2], 0.0, 1).unwrap();
        assert_eq!(d.targets, vec![0.0, 1.0]);
    }

    #[test]
    fn deterministic_and_in_range() {
        let a = generate_sine_dataset(5, DEFAULT_SAMPLES, DEFAULT_NOISE).unwrap();
        let b = generate_sine_dataset(5, DEFAULT_SAMPLES, DEFAULT_NOISE).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 150);
        assert!(a.inputs.iter().all(|x| (0.0..=8.0).contains(x)));
        assert_ne!(
            a,
            generate_sine_dataset(6, DEFAULT_SAMPLES, DEFAULT_NOISE).unwrap()
        );
    }

    #[test]
    fn noise_has_zero_mean() {
        let d = generate_sine_dataset(11, 100_000, DEFAULT_NOISE).unwrap();
        let mean = d
            .inputs
            .iter()
            .zip(&d.targets)
            .map(|(x, y)| y - x.sin())
            .sum::<f64>()
            / d.len() as f64;
        assert!(mean.abs() < 0.01);
    }

    #[test]
    fn invalid_arguments() {
        assert!(generate_sine_dataset(0, 0, 0.3).is_err());
        assert!(generate_sine_dataset(0, 5, -0.1).is_err());
    }
}
