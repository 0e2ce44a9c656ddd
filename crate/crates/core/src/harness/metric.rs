//! Config-driven metric selection.

use super::config::MetricSpec;
use crate::calculus::{DomainBox, Scalar};
use crate::error::{Error, Result};
use crate::metrics::{
    damped, diagonal_of, euclidean, ConstantMetric, Damped, DiagonalOf, EmpiricalFisherMetric,
    Euclidean, FamilyBMetric, GgnMetric, MetricField, Model, ModelSpec,
};
use nalgebra::DMatrix;

/// Any metric a config can name, over models of type `M`.
#[derive(Clone, Debug)]
pub enum AnyMetric<M> {
    Euclidean(Euclidean),
    Constant(ConstantMetric),
    Ggn(GgnMetric<M>),
    EmpiricalFisher(EmpiricalFisherMetric<M>),
    FamilyB(FamilyBMetric<M>),
    Diagonal(Box<DiagonalOf<AnyMetric<M>>>),
    Damped(Box<Damped<AnyMetric<M>>>),
}

/// Builds the metric described by `spec` in dimension `dim`. Network metrics
/// are evaluated on `model`, which may be a reparametrized model.
pub fn resolve_metric<M: Model + Clone>(
    spec: &MetricSpec,
    dim: usize,
    model: Option<&ModelSpec<M>>,
) -> Result<AnyMetric<M>> {
    let need_model = || {
        model.cloned().ok_or_else(|| {
            Error::config("metric.kind", "network metrics require a `sine_mlp` loss")
        })
    };
    Ok(match spec {
        MetricSpec::Euclidean => AnyMetric::Euclidean(euclidean(dim)),
        MetricSpec::Constant { matrix } => {
            if matrix.len() != dim || matrix.iter().any(|r| r.len() != dim) {
                return Err(Error::config(
                    "metric.matrix",
                    format!("expected a {dim}x{dim} matrix"),
                ));
            }
            let m = DMatrix::from_fn(dim, dim, |i, j| matrix[i][j]);
            AnyMetric::Constant(
                ConstantMetric::new(m)
                    .map_err(|e| Error::config("metric.matrix", e.to_string()))?,
            )
        }
        MetricSpec::Ggn => AnyMetric::Ggn(GgnMetric(need_model()?)),
        MetricSpec::GgnDiag => AnyMetric::Diagonal(Box::new(diagonal_of(AnyMetric::Ggn(
            GgnMetric(need_model()?),
        )))),
        MetricSpec::EmpiricalFisher => {
            AnyMetric::EmpiricalFisher(EmpiricalFisherMetric(need_model()?))
        }
        MetricSpec::FamilyB { weight } => AnyMetric::FamilyB(FamilyBMetric {
            spec: need_model()?,
            weight: weight.clone(),
        }),
        MetricSpec::Diagonal { base } => {
            AnyMetric::Diagonal(Box::new(diagonal_of(resolve_metric(base, dim, model)?)))
        }
        MetricSpec::Damped { base, lambda } => AnyMetric::Damped(Box::new(damped(
            resolve_metric(base, dim, model)?,
            *lambda,
        )?)),
    })
}

impl<M: Model> MetricField for AnyMetric<M> {
    fn dim(&self) -> usize {
        match self {
            AnyMetric::Euclidean(m) => m.dim(),
            AnyMetric::Constant(m) => m.dim(),
            AnyMetric::Ggn(m) => m.dim(),
            AnyMetric::EmpiricalFisher(m) => m.dim(),
            AnyMetric::FamilyB(m) => m.dim(),
            AnyMetric::Diagonal(m) => m.dim(),
            AnyMetric::Damped(m) => m.dim(),
        }
    }

    fn name(&self) -> String {
        match self {
            AnyMetric::Euclidean(m) => m.name(),
            AnyMetric::Constant(m) => m.name(),
            AnyMetric::Ggn(m) => m.name(),
            AnyMetric::EmpiricalFisher(m) => m.name(),
            AnyMetric::FamilyB(m) => m.name(),
            AnyMetric::Diagonal(m) => m.name(),
            AnyMetric::Damped(m) => m.name(),
        }
    }

    fn domain(&self) -> DomainBox {
        match self {
            AnyMetric::Euclidean(m) => m.domain(),
            AnyMetric::Constant(m) => m.domain(),
            AnyMetric::Ggn(m) => m.domain(),
            AnyMetric::EmpiricalFisher(m) => m.domain(),
            AnyMetric::FamilyB(m) => m.domain(),
            AnyMetric::Diagonal(m) => m.domain(),
            AnyMetric::Damped(m) => m.domain(),
        }
    }

    fn eval_at<S: Scalar>(&self, theta: &[S]) -> DMatrix<S> {
        match self {
            AnyMetric::Euclidean(m) => m.eval_at(theta),
            AnyMetric::Constant(m) => m.eval_at(theta),
            AnyMetric::Ggn(m) => m.eval_at(theta),
            AnyMetric::EmpiricalFisher(m) => m.eval_at(theta),
            AnyMetric::FamilyB(m) => m.eval_at(theta),
            AnyMetric::Diagonal(m) => m.eval_at(theta),
            AnyMetric::Damped(m) => m.eval_at(theta),
        }
    }
}
