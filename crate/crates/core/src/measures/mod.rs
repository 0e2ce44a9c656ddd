//! Probability densities under reparametrization.
//!
//! A density is only meaningful relative to a reference measure. Against
//! Lebesgue measure it picks up `|det J⁻¹|` under a chart change, which moves
//! its modes. Against the Riemannian volume `dV_G = |det G|^{1/2} dθ` the
//! density `q^G = q·|det G|^{-1/2}` transforms as a plain function, so its
//! modes move with the chart. Jeffreys' prior is the density that is uniform
//! with respect to `dV_G`.

mod laplace;
pub mod quadrature;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::calculus::{self, DomainBox, Scalar, ScalarField};
use crate::charts::{Diffeomorphism, Transported};
use crate::error::{Error, Result};
use crate::linalg;
use crate::metrics::MetricField;

pub use laplace::{
    laplace_log_marginal, laplace_log_marginal_invariant, LaplaceReport, MAP_GRAD_TOLERANCE,
};

/// A log-density as a smooth field, plus validity checks the domain box cannot
/// express (metric positivity, support of a transported base density).
pub trait LogDensity: ScalarField {
    fn validate(&self, _x: &[f64]) -> Result<()> {
        Ok(())
    }
}

impl<F: LogDensity> LogDensity for &F {
    fn validate(&self, x: &[f64]) -> Result<()> {
        (**self).validate(x)
    }
}

/// The measure a density is taken against.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reference {
    Lebesgue,
    Riemannian { metric: String },
}

#[derive(Clone, Debug)]
pub struct Density<F> {
    pub log_density: F,
    pub reference: Reference,
    pub chart_name: String,
}

impl<F: LogDensity> Density<F> {
    pub fn lebesgue(log_density: F) -> Self {
        Density {
            log_density,
            reference: Reference::Lebesgue,
            chart_name: "identity".into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.log_density.dim()
    }

    /// `log q(x)` with domain, validity and finiteness checks.
    pub fn log_prob(&self, x: &[f64]) -> Result<f64> {
        self.log_density.domain().check(x)?;
        self.log_density.validate(x)?;
        calculus::value(&self.log_density, x)
    }
}

/// Independent Gaussian coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Gaussian {
    pub fn standard(dim: usize) -> Self {
        Gaussian {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len()
            || mean.is_empty()
            || std.iter().any(|s| !(*s > 0.0 && s.is_finite()))
        {
            return Err(Error::InvalidData(
                "gaussian needs matching mean/std with positive std".into(),
            ));
        }
        Ok(Gaussian { mean, std })
    }
}

impl ScalarField for Gaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        let mut acc = S::zero();
        for ((&xi, &m), &s) in x.iter().zip(&self.mean).zip(&self.std) {
            acc -= ((xi - m) / s).square() * 0.5 + (s * (2.0 * std::f64::consts::PI).sqrt()).ln();
        }
        acc
    }
}

impl LogDensity for Gaussian {}

/// Uniform density on a bounded box.
#[derive(Clone, Debug, PartialEq)]
pub struct UniformBox {
    support: DomainBox,
    log_volume: f64,
}

impl UniformBox {
    pub fn new(support: DomainBox) -> Result<Self> {
        if !support.axes().iter().all(|a| a.is_bounded()) {
            return Err(Error::InvalidData(
                "uniform density needs a bounded box".into(),
            ));
        }
        let log_volume = support
            .axes()
            .iter()
            .map(|a| (a.upper - a.lower).ln())
            .sum();
        Ok(UniformBox {
            support,
            log_volume,
        })
    }
}

impl ScalarField for UniformBox {
    fn dim(&self) -> usize {
        self.support.dim()
    }
    fn domain(&self) -> DomainBox {
        self.support.clone()
    }
    fn eval<S: Scalar>(&self, _x: &[S]) -> S {
        S::from(-self.log_volume)
    }
}

impl LogDensity for UniformBox {}

/// Any scalar field read as a log-density.
#[derive(Clone, Copy, Debug)]
pub struct LogField<F>(pub F);

impl<F: ScalarField> ScalarField for LogField<F> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn domain(&self) -> DomainBox {
        self.0.domain()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        self.0.eval(x)
    }
}

impl<F: ScalarField> LogDensity for LogField<F> {}

fn validate_base<F: LogDensity>(chart: &Diffeomorphism, base: &F, psi: &[f64]) -> Result<()> {
    let theta = chart.apply_inverse(psi)?;
    base.domain().check(&theta)?;
    base.validate(&theta)
}

/// The function rule applied to a log-density: `ψ ↦ log q(φ⁻¹(ψ))`.
impl<F: LogDensity> LogDensity for Transported<F> {
    fn validate(&self, psi: &[f64]) -> Result<()> {
        validate_base(&self.chart, &self.field, psi)
    }
}

/// `log q_Ψ(ψ) = log q_Θ(θ) − log|det J(θ)|` with `θ = φ⁻¹(ψ)`.
#[derive(Clone, Debug)]
pub struct PushforwardLogDensity<F> {
    pub chart: Diffeomorphism,
    pub base: F,
}

impl<F: ScalarField> ScalarField for PushforwardLogDensity<F> {
    fn dim(&self) -> usize {
        self.chart.dim()
    }
    fn domain(&self) -> DomainBox {
        self.chart.codomain().clone()
    }
    fn eval<S: Scalar>(&self, psi: &[S]) -> S {
        let theta = self.chart.inverse(psi);
        let log_det = linalg::log_abs_det_generic(&self.chart.jacobian_generic(&theta))
            .unwrap_or_else(|| S::from(f64::INFINITY));
        self.base.eval(&theta) - log_det
    }
}

impl<F: LogDensity> LogDensity for PushforwardLogDensity<F> {
    fn validate(&self, psi: &[f64]) -> Result<()> {
        validate_base(&self.chart, &self.base, psi)
    }
}

/// `log q^G(θ) = log q(θ) − ½ log det G(θ)`.
#[derive(Clone, Debug)]
pub struct RiemannianLogDensity<F, G> {
    pub base: F,
    pub metric: G,
}

fn half_log_det<S: Scalar, G: MetricField>(metric: &G, x: &[S]) -> S {
    linalg::log_abs_det_generic(&metric.eval_at(x)).map_or(S::from(f64::NAN), |v| v * 0.5)
}

impl<F: ScalarField, G: MetricField> ScalarField for RiemannianLogDensity<F, G> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn domain(&self) -> DomainBox {
        self.base.domain()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        self.base.eval(x) - half_log_det(&self.metric, x)
    }
}

impl<F: LogDensity, G: MetricField> LogDensity for RiemannianLogDensity<F, G> {
    fn validate(&self, x: &[f64]) -> Result<()> {
        self.metric.eval_spd(x)?;
        self.base.validate(x)
    }
}

/// Unnormalized Jeffreys log-density `½ log det G(θ)` on a declared box.
#[derive(Clone, Debug)]
pub struct JeffreysLogDensity<G> {
    pub metric: G,
    pub support: DomainBox,
}

impl<G: MetricField> ScalarField for JeffreysLogDensity<G> {
    fn dim(&self) -> usize {
        self.metric.dim()
    }
    fn domain(&self) -> DomainBox {
        self.support.clone()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        half_log_det(&self.metric, x)
    }
}

impl<G: MetricField> LogDensity for JeffreysLogDensity<G> {
    fn validate(&self, x: &[f64]) -> Result<()> {
        self.metric.eval_spd(x).map(|_| ())
    }
}

/// Change of variables against Lebesgue measure.
pub fn lebesgue_pushforward<F: LogDensity + Clone>(
    q: &Density<F>,
    phi: &Diffeomorphism,
) -> Result<Density<PushforwardLogDensity<F>>> {
    if q.reference != Reference::Lebesgue {
        return Err(Error::InvalidData(
            "lebesgue pushforward needs a Lebesgue density".into(),
        ));
    }
    if q.dim() != phi.dim() {
        return Err(Error::InvalidChart(format!(
            "chart dimension {} vs density {}",
            phi.dim(),
            q.dim()
        )));
    }
    if !q.log_density.domain().is_subset_of(phi.domain()) {
        return Err(Error::InvalidChart(format!(
            "density support is not inside the domain of {}",
            phi.name()
        )));
    }
    Ok(Density {
        log_density: PushforwardLogDensity {
            chart: phi.clone(),
            base: q.log_density.clone(),
        },
        reference: Reference::Lebesgue,
        chart_name: phi.name().to_string(),
    })
}

/// The same distribution expressed against `dV_G`.
pub fn riemannian_density<F: LogDensity + Clone, G: MetricField>(
    q: &Density<F>,
    metric: G,
) -> Result<Density<RiemannianLogDensity<F, G>>> {
    if q.reference != Reference::Lebesgue {
        return Err(Error::InvalidData(
            "riemannian density is built from a Lebesgue density".into(),
        ));
    }
    if metric.dim() != q.dim() {
        return Err(Error::InvalidMetric(format!(
            "metric dimension {} vs density {}",
            metric.dim(),
            q.dim()
        )));
    }
    Ok(Density {
        reference: Reference::Riemannian {
            metric: metric.name(),
        },
        chart_name: q.chart_name.clone(),
        log_density: RiemannianLogDensity {
            base: q.log_density.clone(),
            metric,
        },
    })
}

/// The function rule on a density's log: the right transformation for `q^G`, whose
/// reference measure travels with the metric.
pub fn transport_density<F: LogDensity + Clone>(
    q: &Density<F>,
    phi: &Diffeomorphism,
) -> Density<Transported<F>> {
    Density {
        log_density: crate::charts::pushforward_function(phi, q.log_density.clone()),
        reference: q.reference.clone(),
        chart_name: phi.name().to_string(),
    }
}

/// Unnormalized Jeffreys prior `∝ |det G|^{1/2}`, a Lebesgue density.
///
/// Integrability on `support` is the caller's claim; [`normalizer`] can check
/// it in one or two dimensions.
pub fn jeffreys<G: MetricField>(
    metric: G,
    support: DomainBox,
) -> Result<Density<JeffreysLogDensity<G>>> {
    if metric.dim() != support.dim() {
        return Err(Error::InvalidMetric(format!(
            "metric dimension {} vs box {}",
            metric.dim(),
            support.dim()
        )));
    }
    Ok(Density::lebesgue(JeffreysLogDensity { metric, support }))
}

fn density_or_zero<F: LogDensity>(q: &Density<F>, x: &[f64]) -> Result<f64> {
    match q.log_prob(x) {
        Ok(v) => Ok(v.exp()),
        Err(Error::Domain { .. }) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// `∫ q dθ` over a finite box (dimension ≤ 2). Points outside the support count as zero.
pub fn normalizer<F: LogDensity>(q: &Density<F>, bounds: &DomainBox, nodes: usize) -> Result<f64> {
    quadrature::integrate_box(|x| density_or_zero(q, x), bounds, nodes)
}

/// `∫ q dV_G` over a finite box (dimension ≤ 2).
pub fn riemannian_normalizer<F: LogDensity, G: MetricField>(
    q: &Density<F>,
    metric: &G,
    bounds: &DomainBox,
    nodes: usize,
) -> Result<f64> {
    quadrature::integrate_box(
        |x| {
            let v = density_or_zero(q, x)?;
            if v == 0.0 {
                return Ok(0.0);
            }
            Ok(v * (0.5 * linalg::log_det_spd(&metric.eval(x)?)?).exp())
        },
        bounds,
        nodes,
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeOptions {
    pub max_iterations: usize,
    pub grad_tolerance: f64,
}

impl Default for ModeOptions {
    fn default() -> Self {
        ModeOptions {
            max_iterations: 500,
            grad_tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mode {
    pub point: Vec<f64>,
    pub log_density: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Local maximizer of `log q` by Newton ascent, falling back to gradient
/// ascent where the Hessian is not negative definite, with backtracking.
pub fn find_mode<F: LogDensity>(q: &Density<F>, start: &[f64], opts: ModeOptions) -> Result<Mode> {
    let mut x = start.to_vec();
    let mut fx = q.log_prob(&x)?;
    let mut grad_norm = f64::INFINITY;
    for it in 0..=opts.max_iterations {
        let grad = calculus::gradient(&q.log_density, &x)?;
        grad_norm = grad.norm();
        if grad_norm <= opts.grad_tolerance {
            return Ok(Mode {
                point: x,
                log_density: fx,
                iterations: it,
                grad_norm,
            });
        }
        if it == opts.max_iterations {
            break;
        }
        let neg_hess = -calculus::hessian(&q.log_density, &x)?;
        let (direction, mut t): (DVector<f64>, f64) = match linalg::spd_cholesky(&neg_hess) {
            Ok(chol) => (chol.solve(&grad), 1.0),
            Err(_) => (grad.clone(), 1.0f64.min(1.0 / grad_norm)),
        };
        let slack = 1e-14 * (1.0 + fx.abs());
        let mut accepted = None;
        while t > 1e-20 {
            let cand: Vec<f64> = x
                .iter()
                .zip(direction.iter())
                .map(|(a, d)| a + t * d)
                .collect();
            match q.log_prob(&cand) {
                Ok(fc) if fc >= fx - slack => {
                    accepted = Some((cand, fc));
                    break;
                }
                Ok(_) | Err(Error::Domain { .. }) => t *= 0.5,
                Err(Error::Numerics(_)) => t *= 0.5,
                Err(e) => return Err(e),
            }
        }
        match accepted {
            Some((cand, fc)) => {
                x = cand;
                fx = fc;
            }
            None => break,
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
        grad_norm,
    })
}

/// Runs [`find_mode`] from every start and keeps the highest log-density.
/// Values within `1e-10` tie and are broken by lexicographic coordinate order.
pub fn find_mode_multistart<F: LogDensity>(
    q: &Density<F>,
    starts: &[Vec<f64>],
    opts: ModeOptions,
) -> Result<Mode> {
    let mut best: Option<Mode> = None;
    let mut last_err = None;
    for start in starts {
        match find_mode(q, start, opts) {
            Ok(m) => {
                best = Some(match best {
                    None => m,
                    Some(b) => {
                        if (m.log_density - b.log_density).abs() <= 1e-10 {
                            if lexicographic_less(&m.point, &b.point) {
                                m
                            } else {
                                b
                            }
                        } else if m.log_density > b.log_density {
                            m
                        } else {
                            b
                        }
                    }
                })
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::InvalidData("no starting points".into())))
}

fn lexicographic_less(a: &[f64], b: &[f64]) -> bool {
    a.iter()
        .zip(b)
        .find(|(x, y)| x != y)
        .is_some_and(|(x, y)| x < y)
}
