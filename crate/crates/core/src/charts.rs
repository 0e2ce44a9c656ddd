//! Reparametrizations and the transformation rules of geometric objects.
//!
//! A [`Diffeomorphism`] `φ: Θ → Ψ` carries an analytic inverse. Under `φ`:
//!
//! | object            | θ-coordinates | ψ-coordinates   |
//! |-------------------|---------------|-----------------|
//! | function          | `h`           | `h ∘ φ⁻¹`       |
//! | tangent vector    | `v`           | `J v`           |
//! | covector          | `ω`           | `J⁻ᵀ ω`         |
//! | metric / bilinear | `G`           | `J⁻ᵀ G J⁻¹`     |
//!
//! with `J = ∂ψ/∂θ` evaluated at `θ`. `J⁻¹` always means the matrix inverse of
//! `J(θ)`, never a separately differentiated inverse map.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::{jacobian_at, DomainBox, Scalar, ScalarField, VectorMap};
use crate::error::{Error, Result};
use crate::linalg;

/// Largest admissible perturbation size for [`ChartKind::TriangularPoly`].
pub const MAX_TRIANGULAR_EPSILON: f64 = 0.2;

/// Serializable description of a built-in chart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChartKind {
    Identity,
    /// `ψ = A θ + b`.
    Affine {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    ElementwiseExp,
    ElementwiseLog,
    /// `ψ = ln(1 + e^θ)` per coordinate.
    Softplus,
    /// The first `split` coordinates are multiplied by `alpha`, the rest divided by it.
    LayerScale {
        alpha: f64,
        split: usize,
    },
    /// `ψᵢ = θᵢ + ε·pᵢ(θ₁..θᵢ₋₁)` with seeded random quadratic polynomials `pᵢ`.
    TriangularPoly {
        seed: u64,
        epsilon: f64,
    },
    /// `second ∘ first`.
    Compose {
        first: Box<ChartKind>,
        second: Box<ChartKind>,
    },
}

impl ChartKind {
    /// Scalar affine map `ψ = a θ + b` in every coordinate.
    pub fn scalar_affine(dim: usize, a: f64, b: f64) -> Self {
        ChartKind::Affine {
            a: (0..dim)
                .map(|i| (0..dim).map(|j| if i == j { a } else { 0.0 }).collect())
                .collect(),
            b: vec![b; dim],
        }
    }

    pub fn compose(first: ChartKind, second: ChartKind) -> Self {
        ChartKind::Compose {
            first: Box::new(first),
            second: Box::new(second),
        }
    }

    /// A seeded random chart defined on the whole positive orthant.
    pub fn random(seed: u64, dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let affine = |rng: &mut ChaCha8Rng| {
            let a = (0..dim)
                .map(|i| {
                    (0..dim)
                        .map(|j| {
                            let noise = rng.random_range(-0.4..0.4);
                            if i == j {
                                rng.random_range(0.8..1.6)
                                    * if rng.random_bool(0.5) { 1.0 } else { -1.0 }
                            } else {
                                noise
                            }
                        })
                        .collect()
                })
                .collect();
            let b = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            ChartKind::Affine { a, b }
        };
        let triangular = |rng: &mut ChaCha8Rng| ChartKind::TriangularPoly {
            seed: rng.random(),
            epsilon: rng.random_range(0.05..0.2),
        };
        match rng.random_range(0..9u32) {
            0 => affine(&mut rng),
            1 => triangular(&mut rng),
            2 => ChartKind::LayerScale {
                alpha: rng.random_range(0.3..4.0),
                split: rng.random_range(0..=dim),
            },
            3 => ChartKind::Softplus,
            4 => ChartKind::ElementwiseExp,
            5 => ChartKind::ElementwiseLog,
            6 => {
                let t = triangular(&mut rng);
                ChartKind::compose(t, affine(&mut rng))
            }
            7 => ChartKind::compose(affine(&mut rng), ChartKind::ElementwiseExp),
            _ => {
                let t = triangular(&mut rng);
                ChartKind::compose(ChartKind::ElementwiseLog, t)
            }
        }
    }
}

#[derive(Clone, Debug)]
struct Polynomial {
    /// `(j, a_j)`: linear terms `a_j θ_j`.
    linear: Vec<(usize, f64)>,
    /// `(j, k, b_jk)`: quadratic terms `b_jk θ_j θ_k`.
    quadratic: Vec<(usize, usize, f64)>,
}

impl Polynomial {
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        let mut acc = S::zero();
        for &(j, a) in &self.linear {
            acc += x[j] * a;
        }
        for &(j, k, b) in &self.quadratic {
            acc += x[j] * x[k] * b;
        }
        acc
    }
}

#[derive(Clone, Debug)]
enum Map {
    Identity,
    Affine {
        a: DMatrix<f64>,
        b: DVector<f64>,
        a_inv: DMatrix<f64>,
    },
    Exp,
    Log,
    Softplus,
    LayerScale {
        alpha: f64,
        split: usize,
    },
    Triangular {
        epsilon: f64,
        polys: Vec<Polynomial>,
    },
    Compose(Box<Diffeomorphism>, Box<Diffeomorphism>),
    Inverse(Box<Diffeomorphism>),
}

/// A reparametrization `φ: Θ → Ψ` with analytic inverse.
#[derive(Clone, Debug)]
pub struct Diffeomorphism {
    dim: usize,
    name: String,
    map: Map,
    domain: DomainBox,
    codomain: DomainBox,
}

fn affine_apply<S: Scalar>(m: &DMatrix<f64>, shift: Option<&DVector<f64>>, x: &[S]) -> Vec<S> {
    (0..m.nrows())
        .map(|i| {
            let mut acc = match shift {
                Some(b) => S::from(b[i]),
                None => S::zero(),
            };
            for (j, &xj) in x.iter().enumerate() {
                acc += xj * m[(i, j)];
            }
            acc
        })
        .collect()
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

/// Builds a chart of the given kind on `ℝ^dim` (or the kind's natural sub-box).
pub fn make_chart(kind: &ChartKind, dim: usize) -> Result<Diffeomorphism> {
    if dim == 0 {
        return Err(Error::InvalidChart("dimension must be positive".into()));
    }
    let real = DomainBox::unbounded(dim);
    let positive = DomainBox::positive(dim);
    let chart = |name: String, map: Map, domain: DomainBox, codomain: DomainBox| Diffeomorphism {
        dim,
        name,
        map,
        domain,
        codomain,
    };
    match kind {
        ChartKind::Identity => Ok(chart("identity".into(), Map::Identity, real.clone(), real)),
        ChartKind::Affine { a, b } => {
            if a.len() != dim || a.iter().any(|row| row.len() != dim) || b.len() != dim {
                return Err(Error::InvalidChart(format!(
                    "affine chart needs a {dim}x{dim} matrix and {dim} offsets"
                )));
            }
            let a = DMatrix::from_fn(dim, dim, |i, j| a[i][j]);
            let a_inv = linalg::inverse(&a).map_err(|e| {
                Error::InvalidChart(format!("affine matrix is not invertible: {e}"))
            })?;
            let b = DVector::from_column_slice(b);
            Ok(chart(
                "affine".into(),
                Map::Affine { a, b, a_inv },
                real.clone(),
                real,
            ))
        }
        ChartKind::ElementwiseExp => Ok(chart("exp".into(), Map::Exp, real, positive)),
        ChartKind::ElementwiseLog => Ok(chart("log".into(), Map::Log, positive, real)),
        ChartKind::Softplus => Ok(chart("softplus".into(), Map::Softplus, real, positive)),
        ChartKind::LayerScale { alpha, split } => {
            if *alpha == 0.0 || !alpha.is_finite() {
                return Err(Error::InvalidChart(format!(
                    "layer scale factor must be finite and nonzero, got {alpha}"
                )));
            }
            if *split > dim {
                return Err(Error::InvalidChart(format!(
                    "split index {split} exceeds dimension {dim}"
                )));
            }
            Ok(chart(
                format!("layer_scale({},{split})", fmt_num(*alpha)),
                Map::LayerScale {
                    alpha: *alpha,
                    split: *split,
                },
                real.clone(),
                real,
            ))
        }
        ChartKind::TriangularPoly { seed, epsilon } => {
            if !epsilon.is_finite() || epsilon.abs() > MAX_TRIANGULAR_EPSILON {
                return Err(Error::InvalidChart(format!(
                    "triangular polynomial epsilon must satisfy |ε| ≤ {MAX_TRIANGULAR_EPSILON}, got {epsilon}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let polys = (0..dim)
                .map(|i| {
                    let linear = (0..i).map(|j| (j, rng.random_range(-1.0..1.0))).collect();
                    let mut quadratic = Vec::new();
                    for j in 0..i {
                        for k in j..i {
                            quadratic.push((j, k, rng.random_range(-1.0..1.0)));
                        }
                    }
                    Polynomial { linear, quadratic }
                })
                .collect();
            Ok(chart(
                format!("triangular_poly({seed},{})", fmt_num(*epsilon)),
                Map::Triangular {
                    epsilon: *epsilon,
                    polys,
                },
                real.clone(),
                real,
            ))
        }
        ChartKind::Compose { first, second } => {
            compose(&make_chart(first, dim)?, &make_chart(second, dim)?)
        }
    }
}

/// `second ∘ first`; the codomain of `first` must lie inside the domain of `second`.
pub fn compose(first: &Diffeomorphism, second: &Diffeomorphism) -> Result<Diffeomorphism> {
    if first.dim != second.dim {
        return Err(Error::InvalidChart(format!(
            "cannot compose charts of dimension {} and {}",
            first.dim, second.dim
        )));
    }
    if !first.codomain.is_subset_of(&second.domain) {
        return Err(Error::InvalidChart(format!(
            "codomain of {} is not contained in the domain of {}",
            first.name, second.name
        )));
    }
    Ok(Diffeomorphism {
        dim: first.dim,
        name: format!("compose({},{})", first.name, second.name),
        domain: first.domain.clone(),
        codomain: second.codomain.clone(),
        map: Map::Compose(Box::new(first.clone()), Box::new(second.clone())),
    })
}

impl Diffeomorphism {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Θ-side box.
    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    /// Ψ-side box.
    pub fn codomain(&self) -> &DomainBox {
        &self.codomain
    }

    /// `φ⁻¹` as a chart in its own right.
    pub fn inverted(&self) -> Diffeomorphism {
        if let Map::Inverse(inner) = &self.map {
            return (**inner).clone();
        }
        Diffeomorphism {
            dim: self.dim,
            name: format!("inverse({})", self.name),
            domain: self.codomain.clone(),
            codomain: self.domain.clone(),
            map: Map::Inverse(Box::new(self.clone())),
        }
    }

    /// Whether the Jacobian is diagonal everywhere.
    pub fn is_elementwise(&self) -> bool {
        match &self.map {
            Map::Identity | Map::Exp | Map::Log | Map::Softplus | Map::LayerScale { .. } => true,
            Map::Affine { a, .. } => {
                a.is_square()
                    && (0..a.nrows()).all(|i| (0..a.ncols()).all(|j| i == j || a[(i, j)] == 0.0))
            }
            Map::Triangular { epsilon, .. } => *epsilon == 0.0 || self.dim == 1,
            Map::Compose(a, b) => a.is_elementwise() && b.is_elementwise(),
            Map::Inverse(inner) => inner.is_elementwise(),
        }
    }

    /// `ψ = φ(θ)` at any scalar level, no domain checks.
    pub fn forward<S: Scalar>(&self, theta: &[S]) -> Vec<S> {
        match &self.map {
            Map::Identity => theta.to_vec(),
            Map::Affine { a, b, .. } => affine_apply(a, Some(b), theta),
            Map::Exp => theta.iter().map(|t| t.exp()).collect(),
            Map::Log => theta.iter().map(|t| t.ln()).collect(),
            Map::Softplus => theta.iter().map(|t| t.softplus()).collect(),
            Map::LayerScale { alpha, split } => theta
                .iter()
                .enumerate()
                .map(|(i, &t)| if i < *split { t * *alpha } else { t / *alpha })
                .collect(),
            Map::Triangular { epsilon, polys } => theta
                .iter()
                .zip(polys)
                .map(|(&t, p)| t + p.eval(theta) * *epsilon)
                .collect(),
            Map::Compose(first, second) => second.forward(&first.forward(theta)),
            Map::Inverse(inner) => inner.inverse(theta),
        }
    }

    /// `θ = φ⁻¹(ψ)` at any scalar level, no domain checks.
    pub fn inverse<S: Scalar>(&self, psi: &[S]) -> Vec<S> {
        match &self.map {
            Map::Identity => psi.to_vec(),
            Map::Affine { a_inv, b, .. } => {
                let centered: Vec<S> = psi.iter().zip(b.iter()).map(|(&p, &bi)| p - bi).collect();
                affine_apply(a_inv, None, &centered)
            }
            Map::Exp => psi.iter().map(|p| p.ln()).collect(),
            Map::Log => psi.iter().map(|p| p.exp()).collect(),
            // θ = ln(e^ψ − 1) = ψ + ln(−expm1(−ψ))
            Map::Softplus => psi.iter().map(|&p| p + (-(-p).exp_m1()).ln()).collect(),
            Map::LayerScale { alpha, split } => psi
                .iter()
                .enumerate()
                .map(|(i, &p)| if i < *split { p / *alpha } else { p * *alpha })
                .collect(),
            Map::Triangular { epsilon, polys } => {
                let mut theta: Vec<S> = Vec::with_capacity(psi.len());
                for (i, p) in polys.iter().enumerate() {
                    // p only reads coordinates before i, which are already solved.
                    let mut padded = theta.clone();
                    padded.resize(psi.len(), S::zero());
                    theta.push(psi[i] - p.eval(&padded) * *epsilon);
                }
                theta
            }
            Map::Compose(first, second) => first.inverse(&second.inverse(psi)),
            Map::Inverse(inner) => inner.forward(psi),
        }
    }

    pub fn apply(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.domain.check(theta)?;
        let psi = self.forward(theta);
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerics(format!(
                "{} produced a non-finite image",
                self.name
            )));
        }
        Ok(psi)
    }

    pub fn apply_inverse(&self, psi: &[f64]) -> Result<Vec<f64>> {
        self.codomain.check(psi)?;
        let theta = self.inverse(psi);
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerics(format!(
                "inverse of {} produced a non-finite image",
                self.name
            )));
        }
        Ok(theta)
    }

    /// `J(θ) = ∂ψ/∂θ` at any scalar level.
    pub fn jacobian_generic<S: Scalar>(&self, theta: &[S]) -> DMatrix<S> {
        jacobian_at(&ForwardMap(self), theta)
    }

    pub fn jacobian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        crate::calculus::jacobian(&ForwardMap(self), theta)
    }

    /// `J⁻¹(ψ)`, computed as the inverse of `J(φ⁻¹(ψ))`.
    pub fn inverse_jacobian(&self, psi: &[f64]) -> Result<DMatrix<f64>> {
        let theta = self.apply_inverse(psi)?;
        linalg::inverse(&self.jacobian(&theta)?)
    }

    pub fn log_abs_det_jacobian(&self, theta: &[f64]) -> Result<f64> {
        let j = self.jacobian(theta)?;
        let det = j.determinant();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::Numerics(format!(
                "degenerate Jacobian determinant {det}"
            )));
        }
        Ok(det.abs().ln())
    }
}

/// `φ` as a [`VectorMap`] on Θ.
#[derive(Clone, Copy, Debug)]
pub struct ForwardMap<'a>(pub &'a Diffeomorphism);

/// `φ⁻¹` as a [`VectorMap`] on Ψ.
#[derive(Clone, Copy, Debug)]
pub struct InverseMap<'a>(pub &'a Diffeomorphism);

impl VectorMap for ForwardMap<'_> {
    fn in_dim(&self) -> usize {
        self.0.dim
    }
    fn out_dim(&self) -> usize {
        self.0.dim
    }
    fn domain(&self) -> DomainBox {
        self.0.domain.clone()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        self.0.forward(x)
    }
}

impl VectorMap for InverseMap<'_> {
    fn in_dim(&self) -> usize {
        self.0.dim
    }
    fn out_dim(&self) -> usize {
        self.0.dim
    }
    fn domain(&self) -> DomainBox {
        self.0.codomain.clone()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        self.0.inverse(x)
    }
}

fn check_square(what: &str, m: &DMatrix<f64>, dim: usize) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::Numerics(format!(
            "{what} must be {dim}x{dim}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Tangent vector rule: `v ↦ J(θ) v`.
pub fn pushforward_vector(
    phi: &Diffeomorphism,
    theta: &[f64],
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    Ok(phi.jacobian(theta)? * v)
}

/// Covector rule: `ω ↦ J(θ)⁻ᵀ ω`.
pub fn pushforward_covector(
    phi: &Diffeomorphism,
    theta: &[f64],
    omega: &DVector<f64>,
) -> Result<DVector<f64>> {
    let j = phi.jacobian(theta)?;
    linalg::solve(&j.transpose(), omega)
}

fn congruence(phi: &Diffeomorphism, theta: &[f64], m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square("tensor", m, phi.dim)?;
    let j_inv = linalg::inverse(&phi.jacobian(theta)?)?;
    Ok(j_inv.transpose() * m * &j_inv)
}

/// Metric rule: `G ↦ J⁻ᵀ G J⁻¹`. Input and output are SPD.
pub fn pushforward_metric(
    phi: &Diffeomorphism,
    theta: &[f64],
    g: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    linalg::spd_cholesky(g)?;
    Ok(crate::calculus::symmetrize(&congruence(phi, theta, g)?))
}

/// Bilinear-form rule, identical to the metric rule without the SPD requirement.
pub fn pushforward_bilinear(
    phi: &Diffeomorphism,
    theta: &[f64],
    h: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    congruence(phi, theta, h)
}

/// A function transported to Ψ: `ψ ↦ f(φ⁻¹(ψ))`.
#[derive(Clone, Debug)]
pub struct Transported<F> {
    pub chart: Diffeomorphism,
    pub field: F,
}

impl<F: ScalarField> ScalarField for Transported<F> {
    fn dim(&self) -> usize {
        self.chart.dim
    }
    fn domain(&self) -> DomainBox {
        self.chart.codomain.clone()
    }
    fn eval<S: Scalar>(&self, psi: &[S]) -> S {
        self.field.eval(&self.chart.inverse(psi))
    }
}

/// Function rule: `f ↦ f ∘ φ⁻¹`.
pub fn pushforward_function<F: ScalarField>(phi: &Diffeomorphism, f: F) -> Transported<F> {
    Transported {
        chart: phi.clone(),
        field: f,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar_field;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1.0)
    }

    #[test]
    fn identity_chart() {
        let phi = make_chart(&ChartKind::Identity, 3).unwrap();
        assert_eq!(phi.apply(&[1.0, -2.0, 3.0]).unwrap(), vec![1.0, -2.0, 3.0]);
        assert_eq!(
            phi.jacobian(&[1.0, -2.0, 3.0]).unwrap(),
            DMatrix::identity(3, 3)
        );
    }

    #[test]
    fn log_chart_in_one_dimension() {
        let phi = make_chart(&ChartKind::ElementwiseLog, 1).unwrap();
        let e = std::f64::consts::E;
        assert!((phi.apply(&[e]).unwrap()[0] - 1.0).abs() < 1e-15);
        assert!((phi.jacobian(&[e]).unwrap()[(0, 0)] - 1.0 / e).abs() < 1e-15);
        assert!(phi.apply(&[-1.0]).is_err());
    }

    #[test]
    fn layer_scale_example() {
        let phi = make_chart(
            &ChartKind::LayerScale {
                alpha: 2.0,
                split: 1,
            },
            2,
        )
        .unwrap();
        assert_eq!(phi.apply(&[3.0, 4.0]).unwrap(), vec![6.0, 2.0]);
        let j = phi.jacobian(&[3.0, 4.0]).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]));
        assert_eq!(j.determinant(), 1.0);
    }

    #[test]
    fn invalid_charts() {
        let singular = ChartKind::Affine {
            a: vec![vec![1.0, 2.0], vec![2.0, 4.0]],
            b: vec![0.0, 0.0],
        };
        assert!(matches!(
            make_chart(&singular, 2),
            Err(Error::InvalidChart(_))
        ));
        let zero = ChartKind::LayerScale {
            alpha: 0.0,
            split: 1,
        };
        assert!(matches!(make_chart(&zero, 2), Err(Error::InvalidChart(_))));
        let big = ChartKind::TriangularPoly {
            seed: 1,
            epsilon: 0.5,
        };
        assert!(matches!(make_chart(&big, 2), Err(Error::InvalidChart(_))));
        let wrong_shape = ChartKind::scalar_affine(3, 2.0, 0.0);
        assert!(matches!(
            make_chart(&wrong_shape, 2),
            Err(Error::InvalidChart(_))
        ));
    }

    #[test]
    fn vector_and_covector_rules_under_exp() {
        let phi = make_chart(&ChartKind::ElementwiseExp, 2).unwrap();
        let theta = [0.0, 2f64.ln()];
        let ones = DVector::from_vec(vec![1.0, 1.0]);
        let v = pushforward_vector(&phi, &theta, &ones).unwrap();
        assert!((v - DVector::from_vec(vec![1.0, 2.0])).amax() < 1e-15);
        let w = pushforward_covector(&phi, &theta, &ones).unwrap();
        assert!((w - DVector::from_vec(vec![1.0, 0.5])).amax() < 1e-15);
        let g = pushforward_metric(&phi, &theta, &DMatrix::identity(2, 2)).unwrap();
        assert!((g - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.25])).amax() < 1e-15);
    }

    #[test]
    fn identity_leaves_tensors_unchanged() {
        let phi = make_chart(&ChartKind::Identity, 2).unwrap();
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        assert_eq!(pushforward_metric(&phi, &[0.1, 0.2], &g).unwrap(), g);
        let w = DVector::from_vec(vec![0.4, -1.0]);
        assert_eq!(pushforward_covector(&phi, &[0.1, 0.2], &w).unwrap(), w);
        assert_eq!(pushforward_vector(&phi, &[0.1, 0.2], &w).unwrap(), w);
    }

    #[test]
    fn bilinear_rule_dinh_example() {
        // J = diag(2, 1/2), J⁻¹ = diag(1/2, 2): [[2,2],[2,2]] -> [[0.5, 2], [2, 8]]
        let phi = make_chart(
            &ChartKind::LayerScale {
                alpha: 2.0,
                split: 1,
            },
            2,
        )
        .unwrap();
        let h = DMatrix::from_element(2, 2, 2.0);
        let hh = pushforward_bilinear(&phi, &[1.0, 1.0], &h).unwrap();
        assert_eq!(hh, DMatrix::from_row_slice(2, 2, &[0.5, 2.0, 2.0, 8.0]));
        let zero = pushforward_bilinear(&phi, &[1.0, 1.0], &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(zero, DMatrix::zeros(2, 2));
    }

    #[test]
    fn non_spd_metric_is_rejected() {
        let phi = make_chart(&ChartKind::Identity, 2).unwrap();
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            pushforward_metric(&phi, &[0.0, 0.0], &bad),
            Err(Error::InvalidMetric(_))
        ));
    }

    scalar_field!(Square[1] | x | x[0] * x[0]);
    scalar_field!(Const[1] | x | S::from(2.5));

    #[test]
    fn function_rule_agrees_pointwise() {
        let phi = make_chart(&ChartKind::ElementwiseLog, 1).unwrap();
        let fhat = pushforward_function(&phi, Square);
        assert!((crate::calculus::value(&fhat, &[0.0]).unwrap() - 1.0).abs() < 1e-15);
        let psi = 0.7;
        assert!(rel_err(fhat.eval(&[psi]), (2.0 * psi).exp()) < 1e-14);
        let chat = pushforward_function(&phi, Const);
        assert_eq!(chat.eval(&[3.0]), 2.5);
    }

    #[test]
    fn compose_checks_boxes() {
        let exp = make_chart(&ChartKind::ElementwiseExp, 2).unwrap();
        let log = make_chart(&ChartKind::ElementwiseLog, 2).unwrap();
        let id = make_chart(&ChartKind::Identity, 2).unwrap();
        // log after exp is fine; exp codomain is the positive orthant.
        assert!(compose(&exp, &log).is_ok());
        // log's domain is positive, identity's codomain is all of R².
        assert!(matches!(compose(&id, &log), Err(Error::InvalidChart(_))));
        let three = make_chart(&ChartKind::Identity, 3).unwrap();
        assert!(compose(&exp, &three).is_err());

        let round = compose(&log, &exp).unwrap();
        let x = [0.3, 4.0];
        let y = round.apply(&x).unwrap();
        assert!(rel_err(y[0], x[0]) < 1e-15 && rel_err(y[1], x[1]) < 1e-15);
    }

    #[test]
    fn inverted_swaps_sides() {
        let phi = make_chart(&ChartKind::Softplus, 2).unwrap();
        let inv = phi.inverted();
        assert_eq!(inv.domain(), phi.codomain());
        let psi = phi.apply(&[0.2, -3.0]).unwrap();
        let back = inv.apply(&psi).unwrap();
        assert!(rel_err(back[0], 0.2) < 1e-14 && rel_err(back[1], -3.0) < 1e-13);
        assert_eq!(inv.inverted().name(), phi.name());
    }

    #[test]
    fn triangular_inverse_is_exact() {
        let phi = make_chart(
            &ChartKind::TriangularPoly {
                seed: 3,
                epsilon: 0.2,
            },
            4,
        )
        .unwrap();
        let theta = [0.3, -1.2, 2.0, 0.7];
        let back = phi.inverse(&phi.forward(&theta));
        for (a, b) in back.iter().zip(&theta) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(!phi.is_elementwise());
        let j = phi.jacobian(&theta).unwrap();
        assert!(
            (j.determinant() - 1.0).abs() < 1e-14,
            "unit lower triangular"
        );
    }

    #[test]
    fn chart_kind_serde() {
        let k = ChartKind::compose(
            ChartKind::LayerScale {
                alpha: 2.0,
                split: 1,
            },
            ChartKind::ElementwiseExp,
        );
        let s = serde_json::to_string(&k).unwrap();
        let back: ChartKind = serde_json::from_str(&s).unwrap();
        assert_eq!(k, back);
        let unknown = r#"{"kind":"layer_scale","alpha":2.0,"split":1,"extra":3}"#;
        assert!(serde_json::from_str::<ChartKind>(unknown).is_err());
    }
}
