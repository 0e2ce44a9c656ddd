//! Normalization checks by tensor-product quadrature on boxes of dimension ≤ 2.
//!
//! Each axis `[a, b]` is mapped to `t ∈ [−T, T]` by the double-exponential
//! substitution `x = a + (b − a)·σ(π sinh t)` (σ the logistic function), and
//! composite Simpson is applied in `t`. The substitution never evaluates the
//! endpoints, so integrable endpoint singularities such as `x^{-1/2}` are fine.

use crate::calculus::DomainBox;
use crate::error::{Error, Result};

/// Default number of Simpson nodes per axis.
pub const DEFAULT_NODES: usize = 2001;

/// Half-width of the substituted interval.
const T_MAX: f64 = 3.0;

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Nodes and weights for one finite axis.
pub fn axis_rule(lower: f64, upper: f64, nodes: usize) -> Result<Vec<(f64, f64)>> {
    if !(lower.is_finite() && upper.is_finite() && lower < upper) {
        return Err(Error::InvalidData(format!(
            "quadrature needs a finite interval, got [{lower}, {upper}]"
        )));
    }
    if nodes < 3 || nodes.is_multiple_of(2) {
        return Err(Error::InvalidData(format!(
            "Simpson needs an odd node count ≥ 3, got {nodes}"
        )));
    }
    let width = upper - lower;
    let h = 2.0 * T_MAX / (nodes - 1) as f64;
    Ok((0..nodes)
        .map(|i| {
            let t = -T_MAX + i as f64 * h;
            let u = std::f64::consts::PI * t.sinh();
            let s = logistic(u);
            let x = if u < 0.0 {
                lower + width * s
            } else {
                upper - width * logistic(-u)
            };
            let dx_dt = width * s * logistic(-u) * std::f64::consts::PI * t.cosh();
            let simpson = if i == 0 || i == nodes - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            (x, simpson * h / 3.0 * dx_dt)
        })
        .collect())
}

/// `∫_box f` for `d ∈ {1, 2}`.
pub fn integrate_box(
    f: impl Fn(&[f64]) -> Result<f64>,
    bounds: &DomainBox,
    nodes: usize,
) -> Result<f64> {
    let rules = bounds
        .axes()
        .iter()
        .map(|axis| axis_rule(axis.lower, axis.upper, nodes))
        .collect::<Result<Vec<_>>>()?;
    match rules.as_slice() {
        [x] => {
            let mut acc = 0.0;
            for &(xi, wi) in x {
                acc += wi * f(&[xi])?;
            }
            Ok(acc)
        }
        [x, y] => {
            let mut acc = 0.0;
            for &(xi, wi) in x {
                for &(yj, wj) in y {
                    acc += wi * wj * f(&[xi, yj])?;
                }
            }
            Ok(acc)
        }
        _ => Err(Error::InvalidData(format!(
            "quadrature supports one or two dimensions, got {}",
            rules.len()
        ))),
    }
}
