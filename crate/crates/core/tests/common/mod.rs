//! Fixtures shared by the integration tests: chart and loss suites, point
//! sampling, a position-dependent metric and the finite-difference sweep.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repgeo_core::calculus::fd::{
    fd_gradient, fd_hessian, fd_jacobian, FIRST_ORDER_STEP, SECOND_ORDER_STEP,
};
use repgeo_core::calculus::{self, DomainBox, GradientMap, Scalar, ScalarField, VectorMap};
use repgeo_core::charts::{
    make_chart, pushforward_function, ChartKind, Diffeomorphism, ForwardMap, InverseMap,
};
use repgeo_core::harness::{BuiltinLoss, LossSpec};
use repgeo_core::metrics::{damped, pushforward_metric_field, GgnMetric, MetricField};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A point well inside `domain`: `[-1.5, 1.5]` on free axes, `lower + [0.3, 3]`
/// on half-lines and the middle 80% of bounded axes.
pub fn sample_point<R: Rng>(rng: &mut R, domain: &DomainBox) -> Vec<f64> {
    domain
        .axes()
        .iter()
        .map(
            |axis| match (axis.lower.is_finite(), axis.upper.is_finite()) {
                (false, false) => rng.random_range(-1.5..1.5),
                (true, false) => axis.lower + rng.random_range(0.3..3.0),
                (false, true) => axis.upper - rng.random_range(0.3..3.0),
                (true, true) => {
                    let w = axis.upper - axis.lower;
                    axis.lower + w * rng.random_range(0.1..0.9)
                }
            },
        )
        .collect()
}

/// One instance of every built-in chart kind in dimension `dim`.
pub fn builtin_charts(dim: usize) -> Vec<ChartKind> {
    let affine = ChartKind::Affine {
        a: (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| match i.cmp(&j) {
                        std::cmp::Ordering::Equal => 1.5,
                        std::cmp::Ordering::Greater => 0.3,
                        std::cmp::Ordering::Less => -0.2,
                    })
                    .collect()
            })
            .collect(),
        b: (0..dim).map(|i| 0.1 * i as f64).collect(),
    };
    let triangular = ChartKind::TriangularPoly {
        seed: 11,
        epsilon: 0.1,
    };
    vec![
        ChartKind::Identity,
        affine.clone(),
        ChartKind::ElementwiseExp,
        ChartKind::ElementwiseLog,
        ChartKind::Softplus,
        ChartKind::LayerScale {
            alpha: 2.0,
            split: 1,
        },
        triangular.clone(),
        ChartKind::compose(triangular, affine),
    ]
}

pub fn chart(kind: &ChartKind, dim: usize) -> Diffeomorphism {
    make_chart(kind, dim).unwrap_or_else(|e| panic!("{kind:?}: {e}"))
}

/// Built-in charts whose domain contains `domain`.
pub fn compatible_charts(domain: &DomainBox) -> Vec<Diffeomorphism> {
    builtin_charts(domain.dim())
        .iter()
        .map(|k| chart(k, domain.dim()))
        .filter(|c| domain.is_subset_of(c.domain()))
        .collect()
}

fn loss(spec: LossSpec) -> BuiltinLoss {
    BuiltinLoss::from_spec(&spec, 0).unwrap()
}

/// The five analytic test losses, all with minima in the positive orthant.
pub fn analytic_losses() -> Vec<BuiltinLoss> {
    vec![
        loss(LossSpec::Quadratic {
            matrix: vec![vec![2.0, 0.5], vec![0.5, 1.0]],
            center: vec![1.2, 0.8],
        }),
        loss(LossSpec::Dinh),
        loss(LossSpec::LogQuadratic {
            center: vec![0.3, -0.2],
        }),
        loss(LossSpec::Rosenbrock { a: 1.0, b: 10.0 }),
        loss(LossSpec::Barrier),
    ]
}

/// A tanh network small enough for exhaustive sweeps (10 parameters).
pub fn small_mlp() -> BuiltinLoss {
    loss(LossSpec::SineMlp {
        hidden: 3,
        samples: 10,
        noise: 0.3,
        weight_decay: 0.0,
    })
}

/// `G(θ) = B + diag(s θᵢ²)` with a seeded SPD `B`.
#[derive(Clone, Debug)]
pub struct WarpedMetric {
    pub base: DMatrix<f64>,
    pub warp: f64,
}

impl WarpedMetric {
    pub fn random(seed: u64, dim: usize) -> Self {
        let mut r = rng(seed);
        let m = DMatrix::from_fn(dim, dim, |_, _| r.random_range(-1.0..1.0));
        WarpedMetric {
            base: &m * m.transpose() + DMatrix::identity(dim, dim) * 0.5,
            warp: r.random_range(0.1..0.6),
        }
    }
}

impl MetricField for WarpedMetric {
    fn dim(&self) -> usize {
        self.base.nrows()
    }
    fn name(&self) -> String {
        "warped".into()
    }
    fn eval_at<S: Scalar>(&self, theta: &[S]) -> DMatrix<S> {
        DMatrix::from_fn(self.dim(), self.dim(), |i, j| {
            let b = S::from(self.base[(i, j)]);
            if i == j {
                b + theta[i] * theta[i] * self.warp
            } else {
                b
            }
        })
    }
}

/// `max |ad − fd| / (1 + |fd|)` over all entries.
pub fn oracle_ratio(ad: &DMatrix<f64>, fd: &DMatrix<f64>) -> f64 {
    assert_eq!(ad.shape(), fd.shape());
    ad.iter()
        .zip(fd.iter())
        .map(|(a, f)| (a - f).abs() / (1.0 + f.abs()))
        .fold(0.0, f64::max)
}

/// `‖a − b‖ / ‖b‖`, with `‖b‖` floored at `floor`.
pub fn rel_gap(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    (a - b).norm() / b.norm().max(floor)
}

/// `θ ↦ vec G(θ)`, so that metric derivatives are an ordinary Jacobian.
struct MetricMap<'a, G>(&'a G);

impl<G: MetricField> VectorMap for MetricMap<'_, G> {
    fn in_dim(&self) -> usize {
        self.0.dim()
    }
    fn out_dim(&self) -> usize {
        self.0.dim() * self.0.dim()
    }
    fn domain(&self) -> DomainBox {
        self.0.domain()
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        self.0.eval_at(x).as_slice().to_vec()
    }
}

/// Worst oracle ratio of one target over the sampled points.
#[derive(Clone, Debug)]
pub struct OracleResult {
    pub target: String,
    pub points: usize,
    pub worst: f64,
}

pub const ORACLE_TOLERANCE: f64 = 1e-5;

struct Sweep {
    points: usize,
    seed: u64,
    results: Vec<OracleResult>,
}

impl Sweep {
    fn run(&mut self, target: String, domain: &DomainBox, mut check: impl FnMut(&[f64]) -> f64) {
        let mut r = rng(self.seed);
        self.seed += 1;
        let mut worst = 0.0f64;
        for _ in 0..self.points {
            worst = worst.max(check(&sample_point(&mut r, domain)));
        }
        self.results.push(OracleResult {
            target,
            points: self.points,
            worst,
        });
    }

    fn field<F: ScalarField>(
        &mut self,
        name: &str,
        f: &F,
        sample_domain: &DomainBox,
        to_input: impl Fn(&[f64]) -> Vec<f64>,
    ) {
        let domain = f.domain();
        let value = |x: &[f64]| f.eval(x);
        self.run(format!("gradient {name}"), sample_domain, |p| {
            let x = to_input(p);
            let ad = calculus::gradient(f, &x).unwrap();
            let fd = fd_gradient(value, &domain, &x, FIRST_ORDER_STEP).unwrap();
            oracle_ratio(
                &DMatrix::from_column_slice(ad.len(), 1, ad.as_slice()),
                &DMatrix::from_column_slice(fd.len(), 1, fd.as_slice()),
            )
        });
        self.run(format!("hessian {name}"), sample_domain, |p| {
            let x = to_input(p);
            let ad = calculus::hessian(f, &x).unwrap();
            let fd = fd_hessian(value, &domain, &x, SECOND_ORDER_STEP).unwrap();
            oracle_ratio(&ad, &fd)
        });
    }

    fn chart(&mut self, phi: &Diffeomorphism) {
        self.run(format!("jacobian {}", phi.name()), phi.domain(), |x| {
            let ad = calculus::jacobian(&ForwardMap(phi), x).unwrap();
            let fd = fd_jacobian(|t| phi.forward(t), phi.domain(), x, FIRST_ORDER_STEP).unwrap();
            oracle_ratio(&ad, &fd)
        });
        self.run(
            format!("inverse jacobian {}", phi.name()),
            phi.domain(),
            |x| {
                let psi = phi.apply(x).unwrap();
                let ad = calculus::jacobian(&InverseMap(phi), &psi).unwrap();
                let fd = fd_jacobian(|p| phi.inverse(p), phi.codomain(), &psi, FIRST_ORDER_STEP)
                    .unwrap();
                oracle_ratio(&ad, &fd)
            },
        );
    }

    fn metric<G: MetricField>(
        &mut self,
        name: &str,
        g: &G,
        sample_domain: &DomainBox,
        to_input: impl Fn(&[f64]) -> Vec<f64>,
    ) {
        let domain = g.domain();
        self.run(format!("metric jacobian {name}"), sample_domain, |p| {
            let x = to_input(p);
            let ad = calculus::jacobian(&MetricMap(g), &x).unwrap();
            let fd = fd_jacobian(
                |t| g.eval_at(t).as_slice().to_vec(),
                &domain,
                &x,
                FIRST_ORDER_STEP,
            )
            .unwrap();
            oracle_ratio(&ad, &fd)
        });
    }
}

/// Automatic derivatives against central differences for every built-in
/// loss, chart, transported loss and metric field.
pub fn fd_sweep(points: usize) -> Vec<OracleResult> {
    let mut sweep = Sweep {
        points,
        seed: 1000,
        results: Vec::new(),
    };
    let mut losses = analytic_losses();
    losses.push(small_mlp());
    for loss in &losses {
        sweep.field(loss.name(), loss, &loss.domain(), |p| p.to_vec());
    }
    for kind in builtin_charts(3) {
        sweep.chart(&chart(&kind, 3));
    }
    for seed in 0..10 {
        sweep.chart(&chart(&ChartKind::random(seed, 2), 2));
    }
    for loss in analytic_losses() {
        for phi in compatible_charts(&loss.domain()) {
            let transported = pushforward_function(&phi, &loss);
            let name = format!("{} through {}", loss.name(), phi.name());
            sweep.field(&name, &transported, &loss.domain(), |p| {
                phi.apply(p).unwrap()
            });
        }
    }
    let warped = WarpedMetric::random(5, 2);
    sweep.metric("warped", &warped, &DomainBox::unbounded(2), |p| p.to_vec());
    for phi in compatible_charts(&DomainBox::positive(2)) {
        let pushed = pushforward_metric_field(&phi, warped.clone());
        sweep.metric(
            &format!("warped through {}", phi.name()),
            &pushed,
            &DomainBox::positive(2),
            |p| phi.apply(p).unwrap(),
        );
    }
    let mlp = small_mlp();
    let problem = mlp.mlp().unwrap();
    let ggn = damped(GgnMetric(problem.spec.clone()), 0.1).unwrap();
    sweep.metric("damped ggn", &ggn, &mlp.domain(), |p| p.to_vec());
    sweep.results
}

/// Largest relative gap between the direct Hessian and the Jacobian of the gradient.
pub fn nesting_gap(points: usize) -> f64 {
    let mut r = rng(77);
    let mut worst = 0.0f64;
    let mut losses = analytic_losses();
    losses.push(small_mlp());
    for loss in &losses {
        for _ in 0..points {
            let x = sample_point(&mut r, &loss.domain());
            let direct = calculus::hessian(loss, &x).unwrap();
            let nested = calculus::jacobian(&GradientMap(loss), &x).unwrap();
            worst = worst.max(rel_gap(&nested, &direct, 1e-300));
        }
    }
    worst
}
