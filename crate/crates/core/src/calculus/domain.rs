use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One coordinate's admissible interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    /// Whether `lower` itself is excluded.
    pub lower_open: bool,
    /// Whether `upper` itself is excluded.
    pub upper_open: bool,
}

impl Interval {
    pub const REAL: Interval = Interval {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
        lower_open: true,
        upper_open: true,
    };

    pub const POSITIVE: Interval = Interval {
        lower: 0.0,
        upper: f64::INFINITY,
        lower_open: true,
        upper_open: true,
    };

    pub fn open(lower: f64, upper: f64) -> Self {
        Interval {
            lower,
            upper,
            lower_open: true,
            upper_open: true,
        }
    }

    pub fn closed(lower: f64, upper: f64) -> Self {
        Interval {
            lower,
            upper,
            lower_open: false,
            upper_open: false,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lower_open {
            x > self.lower
        } else {
            x >= self.lower
        };
        let below = if self.upper_open {
            x < self.upper
        } else {
            x <= self.upper
        };
        x.is_finite() && above && below
    }

    /// Whether every point of `self` also lies in `other`.
    pub fn is_subset_of(&self, other: &Interval) -> bool {
        let lower_ok = self.lower > other.lower
            || (self.lower == other.lower && (self.lower_open || !other.lower_open));
        let upper_ok = self.upper < other.upper
            || (self.upper == other.upper && (self.upper_open || !other.upper_open));
        lower_ok && upper_ok
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }
}

/// Axis-aligned product of intervals on which a map is defined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    axes: Vec<Interval>,
}

impl DomainBox {
    pub fn new(axes: Vec<Interval>) -> Result<Self> {
        for (i, a) in axes.iter().enumerate() {
            if a.lower.is_nan() || a.upper.is_nan() || a.lower >= a.upper {
                return Err(Error::InvalidData(format!(
                    "domain axis {i}: lower bound {} must be below upper bound {}",
                    a.lower, a.upper
                )));
            }
        }
        Ok(DomainBox { axes })
    }

    pub fn unbounded(dim: usize) -> Self {
        DomainBox {
            axes: vec![Interval::REAL; dim],
        }
    }

    pub fn positive(dim: usize) -> Self {
        DomainBox {
            axes: vec![Interval::POSITIVE; dim],
        }
    }

    pub fn uniform(dim: usize, axis: Interval) -> Result<Self> {
        Self::new(vec![axis; dim])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Interval] {
        &self.axes
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.axes.len() && self.axes.iter().zip(x).all(|(a, &v)| a.contains(v))
    }

    /// Whether the closed cube of half-width `radius` around `x` fits inside.
    pub fn contains_with_margin(&self, x: &[f64], radius: f64) -> bool {
        x.len() == self.axes.len()
            && self
                .axes
                .iter()
                .zip(x)
                .all(|(a, &v)| a.contains(v - radius) && a.contains(v + radius) && a.contains(v))
    }

    pub fn is_subset_of(&self, other: &DomainBox) -> bool {
        self.dim() == other.dim()
            && self
                .axes
                .iter()
                .zip(&other.axes)
                .all(|(a, b)| a.is_subset_of(b))
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.axes.len() {
            return Err(Error::domain(
                x,
                format!("expected {} coordinates, got {}", self.axes.len(), x.len()),
            ));
        }
        for (i, (a, &v)) in self.axes.iter().zip(x).enumerate() {
            if !a.contains(v) {
                return Err(Error::domain(
                    x,
                    format!("coordinate {i} = {v} outside ({}, {})", a.lower, a.upper),
                ));
            }
        }
        Ok(())
    }
}
