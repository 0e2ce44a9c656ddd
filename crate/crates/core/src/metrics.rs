//! Riemannian metric fields on parameter space.
//!
//! Besides constant and analytic fields this module provides the family of
//! curvature matrices `B(θ) = mean[ J(θ;x)ᵀ A(x,y) J(θ;x) ]` built from a
//! model's output Jacobian. Evaluated on a reparametrized model `f(x; φ⁻¹(ψ))`
//! these pick up `J⁻ᵀ B J⁻¹` from the chain rule alone.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::calculus::{jacobian_at, DomainBox, Scalar, ScalarField, VectorMap};
use crate::charts::Diffeomorphism;
use crate::error::{Error, Result};
use crate::linalg::{self, matmul_generic, transpose_generic};

/// A field of symmetric positive-definite matrices `θ ↦ G(θ)`.
pub trait MetricField {
    fn dim(&self) -> usize;

    fn name(&self) -> String;

    fn domain(&self) -> DomainBox {
        DomainBox::unbounded(self.dim())
    }

    /// `G(θ)` at any scalar level, without checks.
    fn eval_at<S: Scalar>(&self, theta: &[S]) -> DMatrix<S>;

    /// `G(θ)` after a domain check, symmetrized.
    fn eval(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.domain().check(theta)?;
        let g = self.eval_at(theta);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerics(format!(
                "metric {} is not finite at {theta:?}",
                self.name()
            )));
        }
        Ok(crate::calculus::symmetrize(&g))
    }

    /// `G(θ)`, additionally validated as SPD.
    fn eval_spd(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.eval(theta)?;
        linalg::spd_cholesky(&g)?;
        Ok(g)
    }
}

impl<M: MetricField> MetricField for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn name(&self) -> String {
        (**self).name()
    }
    fn domain(&self) -> DomainBox {
        (**self).domain()
    }
    fn eval_at<S: Scalar>(&self, theta: &[S]) -> DMatrix<S> {
        (**self).eval_at(theta)
    }
}

/// Defines a unit struct implementing [`MetricField`] from an expression
/// returning a `DMatrix<S>`.
#[macro_export]
macro_rules! metric_field {
    ($(#[$meta:meta])* $vis:vis $name:ident [$dim:expr] |$x:ident| $body:expr) => {
        $crate::metric_field!($(#[$meta])* $vis $name [$dim; $crate::calculus::DomainBox::unbounded($dim)] |$x| $body);
    };
    ($(#[$meta:meta])* $vis:vis $name:ident [$dim:expr; $domain:expr] |$x:ident| $body:expr) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, Default)]
        $vis struct $name;

        impl $crate::metrics::MetricField for $name {
            fn dim(&self) -> usize {
                $dim
            }
            fn name(&self) -> String {
                stringify!($name).to_string()
            }
            fn domain(&self) -> $crate::calculus::DomainBox {
                $domain
            }
            #[allow(unused_variables)]
            fn eval_at<S: $crate::calculus::Scalar>(&self, $x: &[S]) -> $crate::nalgebra::DMatrix<S> {
                $body
            }
        }
    };
}

fn identity<S: Scalar>(n: usize) -> DMatrix<S> {
    DMatrix::from_fn(n, n, |i, j| if i == j { S::one() } else { S::zero() })
}

/// `G ≡ I`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Euclidean {
    pub dim: usize,
}

pub fn euclidean(dim: usize) -> Euclidean {
    Euclidean { dim }
}

impl MetricField for Euclidean {
    fn dim(&self) -> usize {
        self.dim
    }
    fn name(&self) -> String {
        "euclidean".into()
    }
    fn eval_at<S: Scalar>(&self, _theta: &[S]) -> DMatrix<S> {
        identity(self.dim)
    }
}

/// A position-independent SPD matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantMetric {
    matrix: DMatrix<f64>,
}

impl ConstantMetric {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        linalg::spd_cholesky(&matrix)?;
        Ok(ConstantMetric { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl MetricField for ConstantMetric {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn name(&self) -> String {
        "constant".into()
    }
    fn eval_at<S: Scalar>(&self, _theta: &[S]) -> DMatrix<S> {
        linalg::from_f64(&self.matrix)
    }
}

/// `θ ↦ diag(diag(M(θ)))`.
#[derive(Clone, Debug)]
pub struct DiagonalOf<M>(pub M);

pub fn diagonal_of<M: MetricField>(metric: M) -> DiagonalOf<M> {
    DiagonalOf(metric)
}

impl<M: MetricField> MetricField for DiagonalOf<M> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn name(&self) -> String {
        format!("{}_diag", self.0.name())
    }
    fn domain(&self) -> DomainBox {
        self.0.domain()
    }
    fn eval_at<S: Scalar>(&self, theta: &[S]) -> DMatrix<S> {
        let full = self.0.eval_at(theta);
        DMatrix::from_fn(full.nrows(), full.ncols(), |i, j| {
            if i == j {
                full[(i, i)]
            } else {
                S::zero()
            }
        })
    }
}

/// `θ ↦ M(θ) + λ I`.
#[derive(Clone, Debug)]
pub struct Damped<M> {
    pub inner: M,
    pub lambda: f64,
}

pub fn damped<M: MetricField>(metric: M, lambda: f64) -> Result<Damped<M>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidMetric(format!(
            "damping must be positive, got {lambda}"
        )));
    }
    Ok(Damped {
        inner: metric,
        lambda,
    })
}

impl<M: MetricField> MetricField for Damped<M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn name(&self) -> String {
        format!("damped({},{})", self.inner.name(), self.lambda)
    }
    fn domain(&self) -> DomainBox {
        self.inner.domain()
    }
    fn eval_at<S: Scalar>(&self, theta: &[S]) -> DMatrix<S> {
        let mut g = self.inner.eval_at(theta);
        for i in 0..g.nrows() {
            g[(i, i)] += S::from(self.lambda);
        }
        g
    }
}

/// A θ-side metric expressed in ψ-coordinates: `Ĝ(ψ) = J⁻ᵀ G(φ⁻¹(ψ)) J⁻¹`.
#[derive(Clone, Debug)]
pub struct PushforwardMetric<M> {
    pub chart: Diffeomorphism,
    pub metric: M,
}

pub fn pushforward_metric_field<M: MetricField>(
    chart: &Diffeomorphism,
    metric: M,
) -> PushforwardMetric<M> {
    PushforwardMetric {
        chart: chart.clone(),
        metric,
    }
}

impl<M: MetricField> MetricField for PushforwardMetric<M> {
    fn dim(&self) -> usize {
        self.metric.dim()
    }
    fn name(&self) -> String {
        format!("pushforward({},{})", self.metric.name(), self.chart.name())
    }
    fn domain(&self) -> DomainBox {
        self.chart.codomain().clone()
    }
    fn eval_at<S: Scalar>(&self, psi: &[S]) -> DMatrix<S> {
        let theta = self.chart.inverse(psi);
        let jac = self.chart.jacobian_generic(&theta);
        let g = self.metric.eval_at(&theta);
        match linalg::inverse_generic(&jac) {
            Some(j_inv) => matmul_generic(&matmul_generic(&transpose_generic(&j_inv), &g), &j_inv),
            None => DMatrix::from_element(g.nrows(), g.ncols(), S::from(f64::NAN)),
        }
    }
}

/// Parametric model `f(x; θ) ∈ ℝᵏ`.
pub trait Model {
    fn n_params(&self) -> usize;
    fn out_dim(&self) -> usize;

    fn param_domain(&self) -> DomainBox {
        DomainBox::unbounded(self.n_params())
    }

    fn predict<S: Scalar>(&self, x: &[f64], theta: &[S]) -> Vec<S>;
}

/// `f(x; φ⁻¹(ψ))`: the same model written in ψ-coordinates.
#[derive(Clone, Debug)]
pub struct ReparamModel<M> {
    pub model: M,
    pub chart: Diffeomorphism,
}

impl<M: Model> Model for ReparamModel<M> {
    fn n_params(&self) -> usize {
        self.model.n_params()
    }
    fn out_dim(&self) -> usize {
        self.model.out_dim()
    }
    fn param_domain(&self) -> DomainBox {
        self.chart.codomain().clone()
    }
    fn predict<S: Scalar>(&self, x: &[f64], psi: &[S]) -> Vec<S> {
        self.model.predict(x, &self.chart.inverse(psi))
    }
}

/// `f(x; θ) = W x + b` with `W` stored row-major ahead of `b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinearModel {
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Model for LinearModel {
    fn n_params(&self) -> usize {
        self.out_dim * (self.in_dim + 1)
    }
    fn out_dim(&self) -> usize {
        self.out_dim
    }
    fn predict<S: Scalar>(&self, x: &[f64], theta: &[S]) -> Vec<S> {
        let bias = self.out_dim * self.in_dim;
        (0..self.out_dim)
            .map(|o| {
                let mut acc = theta[bias + o];
                for (i, &xi) in x.iter().enumerate() {
                    acc += theta[o * self.in_dim + i] * xi;
                }
                acc
            })
            .collect()
    }
}

/// Linear model without bias: `f(x; θ) = θ·x` for scalar `x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScalarSlope;

impl Model for ScalarSlope {
    fn n_params(&self) -> usize {
        1
    }
    fn out_dim(&self) -> usize {
        1
    }
    fn predict<S: Scalar>(&self, x: &[f64], theta: &[S]) -> Vec<S> {
        vec![theta[0] * x[0]]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// `½ ‖y − f‖²`; output Hessian is the identity.
    SquaredError,
    /// `−Σ yⱼ log softmax(f)ⱼ`; output Hessian `diag(p) − p pᵀ`.
    SoftmaxCrossEntropy,
}

fn softmax<S: Scalar>(f: &[S]) -> Vec<S> {
    let max = f
        .iter()
        .map(|v| v.value())
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<S> = f.iter().map(|&v| (v - max).exp()).collect();
    let mut total = S::zero();
    for &e in &exps {
        total += e;
    }
    exps.into_iter().map(|e| e / total).collect()
}

impl Loss {
    pub fn value<S: Scalar>(&self, y: &[f64], f: &[S]) -> S {
        match self {
            Loss::SquaredError => {
                let mut acc = S::zero();
                for (&fi, &yi) in f.iter().zip(y) {
                    acc += (fi - yi).square();
                }
                acc * 0.5
            }
            Loss::SoftmaxCrossEntropy => {
                let p = softmax(f);
                let mut acc = S::zero();
                for (&pi, &yi) in p.iter().zip(y) {
                    if yi != 0.0 {
                        acc -= pi.ln() * yi;
                    }
                }
                acc
            }
        }
    }

    /// `∂ℓ/∂f`.
    pub fn output_gradient<S: Scalar>(&self, y: &[f64], f: &[S]) -> Vec<S> {
        match self {
            Loss::SquaredError => f.iter().zip(y).map(|(&fi, &yi)| fi - yi).collect(),
            Loss::SoftmaxCrossEntropy => {
                let total: f64 = y.iter().sum();
                softmax(f)
                    .into_iter()
                    .zip(y)
                    .map(|(p, &yi)| p * total - yi)
                    .collect()
            }
        }
    }

    /// `∂²ℓ/∂f²`.
    pub fn output_hessian<S: Scalar>(&self, y: &[f64], f: &[S]) -> DMatrix<S> {
        let k = f.len();
        match self {
            Loss::SquaredError => identity(k),
            Loss::SoftmaxCrossEntropy => {
                let total: f64 = y.iter().sum();
                let p = softmax(f);
                DMatrix::from_fn(k, k, |i, j| {
                    let diag = if i == j { p[i] } else { S::zero() };
                    (diag - p[i] * p[j]) * total
                })
            }
        }
    }
}

/// Inputs and targets, one row per sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::InvalidData(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        Ok(Dataset { inputs, targets })
    }

    /// Scalar inputs and targets.
    pub fn scalar(inputs: &[f64], targets: &[f64]) -> Result<Self> {
        Self::new(
            inputs.iter().map(|&x| vec![x]).collect(),
            targets.iter().map(|&y| vec![y]).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// How per-sample losses are combined into the training objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

/// Model, loss and data; also the (optionally regularized) empirical risk as a
/// [`ScalarField`] over parameters.
#[derive(Clone, Debug)]
pub struct ModelSpec<M> {
    pub model: M,
    pub loss: Loss,
    pub data: Dataset,
    pub weight_decay: f64,
    pub reduction: Reduction,
}

impl<M: Model> ModelSpec<M> {
    pub fn new(model: M, loss: Loss, data: Dataset) -> Result<Self> {
        for (i, y) in data.targets.iter().enumerate() {
            if y.len() != model.out_dim() {
                return Err(Error::InvalidData(format!(
                    "target {i} has {} entries, model emits {}",
                    y.len(),
                    model.out_dim()
                )));
            }
        }
        Ok(ModelSpec {
            model,
            loss,
            data,
            weight_decay: 0.0,
            reduction: Reduction::Sum,
        })
    }

    pub fn with_weight_decay(mut self, gamma: f64) -> Self {
        self.weight_decay = gamma;
        self
    }

    pub fn with_reduction(mut self, reduction: Reduction) -> Self {
        self.reduction = reduction;
        self
    }

    /// The same problem in ψ-coordinates, `θ = φ⁻¹(ψ)`.
    pub fn reparametrized(&self, chart: &Diffeomorphism) -> ModelSpec<ReparamModel<M>>
    where
        M: Clone,
    {
        ModelSpec {
            model: ReparamModel {
                model: self.model.clone(),
                chart: chart.clone(),
            },
            loss: self.loss,
            data: self.data.clone(),
            weight_decay: self.weight_decay,
            reduction: self.reduction,
        }
    }

    fn require_data(&self) -> Result<()> {
        if self.data.is_empty() {
            Err(Error::InvalidData("dataset is empty".into()))
        } else {
            Ok(())
        }
    }

    fn check_params(&self, theta: &[f64]) -> Result<()> {
        self.require_data()?;
        if theta.len() != self.model.n_params() {
            return Err(Error::InvalidData(format!(
                "expected {} parameters, got {}",
                self.model.n_params(),
                theta.len()
            )));
        }
        self.model.param_domain().check(theta)
    }

    /// Output Jacobian `∂f(x;θ)/∂θ` (k × d) for one input.
    pub fn output_jacobian_at<S: Scalar>(&self, x: &[f64], theta: &[S]) -> DMatrix<S> {
        jacobian_at(
            &Predictor {
                model: &self.model,
                x,
            },
            theta,
        )
    }

    /// Per-sample loss gradient `∇_θ ℓ(yᵢ, f(xᵢ;θ))`.
    pub fn sample_gradient_at<S: Scalar>(&self, i: usize, theta: &[S]) -> Vec<S> {
        let x = &self.data.inputs[i];
        let y = &self.data.targets[i];
        let jac = self.output_jacobian_at(x, theta);
        let out = self.model.predict(x, theta);
        let g_out = self.loss.output_gradient(y, &out);
        (0..theta.len())
            .map(|p| {
                let mut acc = S::zero();
                for (o, &go) in g_out.iter().enumerate() {
                    acc += jac[(o, p)] * go;
                }
                acc
            })
            .collect()
    }

    pub fn sample_gradient(&self, i: usize, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_params(theta)?;
        Ok(self.sample_gradient_at(i, theta))
    }
}

struct Predictor<'a, M> {
    model: &'a M,
    x: &'a [f64],
}

impl<M: Model> VectorMap for Predictor<'_, M> {
    fn in_dim(&self) -> usize {
        self.model.n_params()
    }
    fn out_dim(&self) -> usize {
        self.model.out_dim()
    }
    fn eval<S: Scalar>(&self, theta: &[S]) -> Vec<S> {
        self.model.predict(self.x, theta)
    }
}

impl<M: Model> ScalarField for ModelSpec<M> {
    fn dim(&self) -> usize {
        self.model.n_params()
    }
    fn domain(&self) -> DomainBox {
        self.model.param_domain()
    }
    fn eval<S: Scalar>(&self, theta: &[S]) -> S {
        let mut acc = S::zero();
        for (x, y) in self.data.inputs.iter().zip(&self.data.targets) {
            acc += self.loss.value(y, &self.model.predict(x, theta));
        }
        if self.reduction == Reduction::Mean && !self.data.is_empty() {
            acc = acc / self.data.len() as f64;
        }
        if self.weight_decay != 0.0 {
            let mut sq = S::zero();
            for &t in theta {
                sq += t * t;
            }
            acc += sq * (0.5 * self.weight_decay);
        }
        acc
    }
}

fn add_congruence<S: Scalar>(acc: &mut DMatrix<S>, jac: &DMatrix<S>, weight: &DMatrix<S>) {
    let jt = transpose_generic(jac);
    let term = matmul_generic(&matmul_generic(&jt, weight), jac);
    *acc += term;
}

/// `Σᵢ Jᵢᵀ H_f Jᵢ` at any scalar level.
pub fn ggn_at<M: Model, S: Scalar>(spec: &ModelSpec<M>, theta: &[S]) -> DMatrix<S> {
    let d = spec.model.n_params();
    let mut acc = DMatrix::from_element(d, d, S::zero());
    for (x, y) in spec.data.inputs.iter().zip(&spec.data.targets) {
        let jac = spec.output_jacobian_at(x, theta);
        let out = spec.model.predict(x, theta);
        add_congruence(&mut acc, &jac, &spec.loss.output_hessian(y, &out));
    }
    acc
}

/// Generalized Gauss-Newton matrix, summed over the dataset.
pub fn ggn<M: Model>(spec: &ModelSpec<M>, theta: &[f64]) -> Result<DMatrix<f64>> {
    spec.check_params(theta)?;
    Ok(crate::calculus::symmetrize(&ggn_at(spec, theta)))
}

/// `meanᵢ gᵢ gᵢᵀ` with per-sample loss gradients `gᵢ`.
pub fn empirical_fisher_at<M: Model, S: Scalar>(spec: &ModelSpec<M>, theta: &[S]) -> DMatrix<S> {
    let d = spec.model.n_params();
    let mut acc = DMatrix::from_element(d, d, S::zero());
    for i in 0..spec.data.len() {
        let g = spec.sample_gradient_at(i, theta);
        for r in 0..d {
            for c in 0..d {
                acc[(r, c)] += g[r] * g[c];
            }
        }
    }
    let m = spec.data.len().max(1) as f64;
    acc.map(|v| v / m)
}

pub fn empirical_fisher<M: Model>(spec: &ModelSpec<M>, theta: &[f64]) -> Result<DMatrix<f64>> {
    spec.check_params(theta)?;
    Ok(crate::calculus::symmetrize(&empirical_fisher_at(
        spec, theta,
    )))
}

/// The per-sample output-space weight `A(θ, x, y)` in the `B` family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OutputWeight {
    Identity,
    Scaled {
        factor: f64,
    },
    /// The same diagonal for every sample.
    Diagonal {
        entries: Vec<f64>,
    },
    /// One `k × k` matrix per sample, row-major.
    PerSample {
        matrices: Vec<Vec<Vec<f64>>>,
    },
    /// The loss Hessian with respect to the outputs (recovers the GGN).
    LossHessian,
}

impl OutputWeight {
    fn matrix_at<S: Scalar>(&self, loss: Loss, i: usize, y: &[f64], out: &[S]) -> DMatrix<S> {
        let k = out.len();
        match self {
            OutputWeight::Identity => identity(k),
            OutputWeight::Scaled { factor } => identity::<S>(k).map(|v| v * *factor),
            OutputWeight::Diagonal { entries } => DMatrix::from_fn(k, k, |r, c| {
                if r == c {
                    S::from(entries[r])
                } else {
                    S::zero()
                }
            }),
            OutputWeight::PerSample { matrices } => {
                DMatrix::from_fn(k, k, |r, c| S::from(matrices[i][r][c]))
            }
            OutputWeight::LossHessian => loss.output_hessian(y, out),
        }
    }

    fn validate<M: Model>(&self, spec: &ModelSpec<M>, theta: &[f64]) -> Result<()> {
        let k = spec.model.out_dim();
        if let OutputWeight::PerSample { matrices } = self {
            if matrices.len() != spec.data.len() {
                return Err(Error::InvalidMetric(format!(
                    "{} weight matrices for {} samples",
                    matrices.len(),
                    spec.data.len()
                )));
            }
        }
        if let OutputWeight::Diagonal { entries } = self {
            if entries.len() != k {
                return Err(Error::InvalidMetric(format!(
                    "diagonal weight needs {k} entries"
                )));
            }
        }
        for i in 0..spec.data.len() {
            if let OutputWeight::PerSample { matrices } = self {
                if matrices[i].len() != k || matrices[i].iter().any(|row| row.len() != k) {
                    return Err(Error::InvalidMetric(format!(
                        "weight matrix {i} must be {k}x{k}"
                    )));
                }
            }
            let out = spec.model.predict(&spec.data.inputs[i], theta);
            let a = self.matrix_at(spec.loss, i, &spec.data.targets[i], &out);
            linalg::inverse(&a).map_err(|e| {
                Error::InvalidMetric(format!(
                    "output weight for sample {i} is not invertible: {e}"
                ))
            })?;
        }
        Ok(())
    }
}

/// `meanᵢ Jᵢᵀ Aᵢ Jᵢ` at any scalar level.
pub fn family_b_at<M: Model, S: Scalar>(
    spec: &ModelSpec<M>,
    weight: &OutputWeight,
    theta: &[S],
) -> DMatrix<S> {
    let d = spec.model.n_params();
    let mut acc = DMatrix::from_element(d, d, S::zero());
    for (i, (x, y)) in spec.data.inputs.iter().zip(&spec.data.targets).enumerate() {
        let jac = spec.output_jacobian_at(x, theta);
        let out = spec.model.predict(x, theta);
        add_congruence(&mut acc, &jac, &weight.matrix_at(spec.loss, i, y, &out));
    }
    let m = spec.data.len().max(1) as f64;
    acc.map(|v| v / m)
}

pub fn family_b<M: Model>(
    spec: &ModelSpec<M>,
    weight: &OutputWeight,
    theta: &[f64],
) -> Result<DMatrix<f64>> {
    spec.check_params(theta)?;
    weight.validate(spec, theta)?;
    Ok(crate::calculus::symmetrize(&family_b_at(
        spec, weight, theta,
    )))
}

/// The GGN as a metric field.
#[derive(Clone, Debug)]
pub struct GgnMetric<M>(pub ModelSpec<M>);

/// The empirical Fisher as a metric field.
#[derive(Clone, Debug)]
pub struct EmpiricalFisherMetric<M>(pub ModelSpec<M>);

/// A member of the `B` family as a metric field.
#[derive(Clone, Debug)]
pub struct FamilyBMetric<M> {
    pub spec: ModelSpec<M>,
    pub weight: OutputWeight,
}

macro_rules! model_metric {
    ($ty:ident, $name:literal, |$s:ident, $theta:ident| $body:expr) => {
        impl<M: Model> MetricField for $ty<M> {
            fn dim(&self) -> usize {
                self.spec().model.n_params()
            }
            fn name(&self) -> String {
                $name.into()
            }
            fn domain(&self) -> DomainBox {
                self.spec().model.param_domain()
            }
            fn eval_at<S: Scalar>(&self, $theta: &[S]) -> DMatrix<S> {
                let $s = self;
                $body
            }
        }
    };
}

impl<M> GgnMetric<M> {
    fn spec(&self) -> &ModelSpec<M> {
        &self.0
    }
}

impl<M> EmpiricalFisherMetric<M> {
    fn spec(&self) -> &ModelSpec<M> {
        &self.0
    }
}

impl<M> FamilyBMetric<M> {
    fn spec(&self) -> &ModelSpec<M> {
        &self.spec
    }
}

model_metric!(GgnMetric, "ggn", |s, theta| ggn_at(&s.0, theta));
model_metric!(EmpiricalFisherMetric, "empirical_fisher", |s, theta| {
    empirical_fisher_at(&s.0, theta)
});
model_metric!(FamilyBMetric, "family_b", |s, theta| family_b_at(
    &s.spec, &s.weight, theta
));

/// Largest relative entrywise gap between two matrices, scaled by `max(1, |b|∞)`.
pub fn relative_mismatch(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::{make_chart, pushforward_bilinear, ChartKind};

    fn slope_spec(xs: &[f64]) -> ModelSpec<ScalarSlope> {
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x).collect();
        ModelSpec::new(
            ScalarSlope,
            Loss::SquaredError,
            Dataset::scalar(xs, &ys).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn euclidean_is_identity() {
        let g = euclidean(3).eval(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(g, DMatrix::identity(3, 3));
        assert_eq!(g.determinant(), 1.0);
        let phi = make_chart(&ChartKind::ElementwiseExp, 2).unwrap();
        let pushed = pushforward_metric_field(&phi, euclidean(2));
        let gh = pushed.eval(&phi.apply(&[0.0, 2f64.ln()]).unwrap()).unwrap();
        assert!((gh - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.25])).amax() < 1e-15);
    }

    #[test]
    fn ggn_of_scalar_slope() {
        let spec = slope_spec(&[1.0, 2.0]);
        assert_eq!(ggn(&spec, &[0.3]).unwrap()[(0, 0)], 5.0);
        let zero = slope_spec(&[0.0]);
        assert_eq!(ggn(&zero, &[0.3]).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let spec = ModelSpec::new(
            ScalarSlope,
            Loss::SquaredError,
            Dataset::scalar(&[], &[]).unwrap(),
        )
        .unwrap();
        assert!(matches!(ggn(&spec, &[1.0]), Err(Error::InvalidData(_))));
        assert!(matches!(
            empirical_fisher(&spec, &[1.0]),
            Err(Error::InvalidData(_))
        ));
        assert!(matches!(
            family_b(&spec, &OutputWeight::Identity, &[1.0]),
            Err(Error::InvalidData(_))
        ));
    }

    #[test]
    fn empirical_fisher_rank_one() {
        // Linear model with two parameters (w, b), input 1, target 0: g = (w + b)·(1, 1).
        let model = LinearModel {
            in_dim: 1,
            out_dim: 1,
        };
        let data = Dataset::scalar(&[1.0], &[0.0]).unwrap();
        let spec = ModelSpec::new(model, Loss::SquaredError, data).unwrap();
        let ef = empirical_fisher(&spec, &[0.5, 0.5]).unwrap();
        assert_eq!(ef, DMatrix::from_element(2, 2, 1.0));
        // Input 2 gives g = (f − y)·(2, 1) = (2, 1) at θ = (0.5, 0); here f − y = 1.
        let data = Dataset::scalar(&[2.0], &[0.0]).unwrap();
        let spec = ModelSpec::new(model, Loss::SquaredError, data).unwrap();
        let ef = empirical_fisher(&spec, &[0.5, 0.0]).unwrap();
        assert_eq!(ef, DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 1.0]));
        // At interpolation every per-sample gradient vanishes.
        let ef = empirical_fisher(&slope_spec(&[1.0, 3.0]), &[0.5]).unwrap();
        assert_eq!(ef[(0, 0)], 0.0);
    }

    #[test]
    fn family_b_special_cases() {
        let spec = slope_spec(&[1.0, 2.0, -0.5]);
        let m = spec.data.len() as f64;
        let g = ggn(&spec, &[0.2]).unwrap();
        let b = family_b(&spec, &OutputWeight::Identity, &[0.2]).unwrap();
        assert!((b * m - &g).amax() < 1e-14);
        let b2 = family_b(&spec, &OutputWeight::Scaled { factor: 2.0 }, &[0.2]).unwrap();
        assert!((b2 * m - &g * 2.0).amax() < 1e-14);
        let single = slope_spec(&[1.5]);
        assert_eq!(
            family_b(&single, &OutputWeight::Identity, &[0.2]).unwrap(),
            ggn(&single, &[0.2]).unwrap()
        );
        let singular = OutputWeight::Scaled { factor: 0.0 };
        assert!(matches!(
            family_b(&spec, &singular, &[0.2]),
            Err(Error::InvalidMetric(_))
        ));
    }

    #[test]
    fn damped_and_diagonal() {
        metric_field!(Zero[2] | x | DMatrix::from_element(2, 2, S::zero()));
        let id = damped(Zero, 1.0).unwrap().eval(&[0.0, 0.0]).unwrap();
        assert_eq!(id, DMatrix::identity(2, 2));
        assert!(matches!(damped(Zero, 0.0), Err(Error::InvalidMetric(_))));
        assert!(matches!(damped(Zero, -1.0), Err(Error::InvalidMetric(_))));

        let c = ConstantMetric::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let before = c.matrix().clone().symmetric_eigenvalues();
        let after = damped(c.clone(), 0.3)
            .unwrap()
            .eval(&[0.0, 0.0])
            .unwrap()
            .symmetric_eigenvalues();
        let mut b: Vec<f64> = before.iter().copied().collect();
        let mut a: Vec<f64> = after.iter().copied().collect();
        b.sort_by(f64::total_cmp);
        a.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y - 0.3).abs() < 1e-14);
        }

        let diag =
            ConstantMetric::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(
            diagonal_of(diag.clone()).eval(&[1.0, 1.0]).unwrap(),
            *diag.matrix()
        );
        assert_eq!(
            diagonal_of(c).eval(&[0.0, 0.0]).unwrap(),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0])
        );
    }

    #[test]
    fn ggn_transforms_under_scaling_chart() {
        let spec = slope_spec(&[1.0, 2.0]);
        let phi = make_chart(&ChartKind::scalar_affine(1, 2.0, 0.0), 1).unwrap();
        let theta = [0.7];
        let psi = phi.apply(&theta).unwrap();
        let auto = ggn(&spec.reparametrized(&phi), &psi).unwrap();
        let rule = pushforward_bilinear(&phi, &theta, &ggn(&spec, &theta).unwrap()).unwrap();
        assert!((auto[(0, 0)] - 1.25).abs() < 1e-14);
        assert!((rule[(0, 0)] - 1.25).abs() < 1e-14);
    }

    #[test]
    fn cross_entropy_output_curvature() {
        let loss = Loss::SoftmaxCrossEntropy;
        let f = [0.3, -0.2, 1.0];
        let y = [0.0, 1.0, 0.0];
        let h = loss.output_hessian(&y, &f);
        // rows of diag(p) − ppᵀ sum to zero
        for r in 0..3 {
            assert!(h.row(r).sum().abs() < 1e-15);
        }
        let g = loss.output_gradient(&y, &f);
        let lifted: Vec<crate::calculus::Dual<f64>> = crate::calculus::seed(&f, 1);
        assert!((loss.value(&y, &lifted).du - g[1]).abs() < 1e-15);
    }
}
