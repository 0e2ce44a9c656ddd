//! Experiment drivers and report emission.
//!
//! Every report pairs the coordinate-dependent ("naive") quantity with the
//! one built from the transformation rules, and ends each row with the seed
//! and config hash.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{DensitySpec, ExperimentConfig, ExperimentKind, MetricSpec, OutputFormat};
use super::losses::{locate_minimum, BuiltinLoss, LossSpec, MlpProblem};
use super::metric::{resolve_metric, AnyMetric};
use super::mlp::TanhMLP;
use super::svg::{line_plot, Series};
use super::train::{train, Optimizer};
use crate::calculus::{self, ScalarField};
use crate::charts::{
    make_chart, pushforward_bilinear, pushforward_function, ChartKind, Diffeomorphism,
};
use crate::curvature::{
    endomorphism_sharpness, riemannian_hessian, sharpness, SharpnessKind, SharpnessReport,
};
use crate::dynamics::{
    equivariance_gap, equivariant_reparam_flow, flow, naive_reparam_flow, newton_minimize,
    Trajectory,
};
use crate::error::{Error, Result};
use crate::measures::{
    find_mode, laplace_log_marginal, laplace_log_marginal_invariant, lebesgue_pushforward,
    riemannian_density, Density, Gaussian, ModeOptions,
};
use crate::metrics::{pushforward_metric_field, relative_mismatch, MetricField, OutputWeight};
use crate::report::{real, write_file, Table};

/// Iteration budget for locating minima before measuring curvature.
const LOCATE_ITERATIONS: usize = 500;
/// Relative mismatch below which the auto-transformation identity counts as holding.
pub const IDENTITY_TOLERANCE: f64 = 1e-8;
/// Damping of the damped-GGN row in the metric-transform report.
pub const TRANSFORM_DAMPING: f64 = 0.1;

/// A finished experiment, before it is written anywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub config_hash: String,
    /// Result rows, ending in `seed` and `config_hash` columns.
    pub table: Table,
    /// SVG line plot of trajectories or loss curves, where the experiment has one.
    pub plot: Option<String>,
}

impl ExperimentOutput {
    pub fn to_csv(&self) -> String {
        self.table.to_csv()
    }

    pub fn to_json(&self, config: &ExperimentConfig) -> String {
        #[derive(Serialize)]
        struct Document<'a> {
            experiment: &'a str,
            seed: u64,
            config_hash: &'a str,
            config: &'a ExperimentConfig,
            columns: &'a [String],
            rows: serde_json::Value,
        }
        let mut text = serde_json::to_string_pretty(&Document {
            experiment: self.kind.as_str(),
            seed: self.seed,
            config_hash: &self.config_hash,
            config,
            columns: &self.table.columns,
            rows: self.table.to_json_rows(),
        })
        .expect("report serializes");
        text.push('\n');
        text
    }

    /// Writes `<dir>/<experiment>.csv` or `.json`, plus `.svg` when `plot` is set.
    pub fn write(
        &self,
        config: &ExperimentConfig,
        dir: &Path,
        format: OutputFormat,
        plot: bool,
    ) -> Result<Vec<PathBuf>> {
        let stem = dir.join(self.kind.as_str());
        let mut written = Vec::new();
        let (path, body) = match format {
            OutputFormat::Csv => (stem.with_extension("csv"), self.to_csv()),
            OutputFormat::Json => (stem.with_extension("json"), self.to_json(config)),
        };
        write_file(&path, body.as_bytes())?;
        written.push(path);
        if plot {
            if let Some(svg) = &self.plot {
                let path = stem.with_extension("svg");
                write_file(&path, svg.as_bytes())?;
                written.push(path);
            }
        }
        Ok(written)
    }
}

/// Validates `config` and runs the experiment.
pub fn run_experiment(kind: ExperimentKind, config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate(kind)?;
    let (table, plot) = match kind {
        ExperimentKind::Sharpness => sharpness_experiment(config)?,
        ExperimentKind::Flow => flow_experiment(config)?,
        ExperimentKind::Density => density_experiment(config)?,
        ExperimentKind::Laplace => laplace_experiment(config)?,
        ExperimentKind::Newton => newton_experiment(config)?,
        ExperimentKind::MetricTransform => metric_transform_experiment(config)?,
    };
    let config_hash = config.hash(kind);
    let table = table.with_constant_columns(&[
        ("seed", config.seed.to_string()),
        ("config_hash", config_hash.clone()),
    ]);
    Ok(ExperimentOutput {
        kind,
        seed: config.seed,
        config_hash,
        table,
        plot,
    })
}

fn default_loss(kind: ExperimentKind) -> LossSpec {
    match kind {
        ExperimentKind::Sharpness => LossSpec::Dinh,
        ExperimentKind::Flow => LossSpec::unit_quadratic(2),
        ExperimentKind::Laplace | ExperimentKind::Density => LossSpec::unit_quadratic(1),
        ExperimentKind::Newton => LossSpec::LogQuadratic { center: vec![0.7] },
        ExperimentKind::MetricTransform => LossSpec::sine_mlp_default(),
    }
}

fn default_chart(kind: ExperimentKind, dim: usize, seed: u64) -> ChartKind {
    match kind {
        ExperimentKind::Sharpness => ChartKind::LayerScale {
            alpha: 2.0,
            split: (dim / 2).max(1),
        },
        ExperimentKind::Flow | ExperimentKind::Density => ChartKind::ElementwiseExp,
        ExperimentKind::Laplace => ChartKind::scalar_affine(dim, 2.0, 0.0),
        ExperimentKind::Newton => ChartKind::ElementwiseLog,
        ExperimentKind::MetricTransform => ChartKind::TriangularPoly { seed, epsilon: 0.1 },
    }
}

fn build_loss(kind: ExperimentKind, config: &ExperimentConfig) -> Result<BuiltinLoss> {
    let spec = config.loss.clone().unwrap_or_else(|| default_loss(kind));
    BuiltinLoss::from_spec(&spec, config.seed).map_err(|e| Error::config("loss", e.to_string()))
}

fn build_chart(
    kind: ExperimentKind,
    config: &ExperimentConfig,
    field_domain: &crate::calculus::DomainBox,
) -> Result<Diffeomorphism> {
    let dim = field_domain.dim();
    let chart_kind = config
        .chart
        .clone()
        .unwrap_or_else(|| default_chart(kind, dim, config.seed));
    let chart = make_chart(&chart_kind, dim).map_err(|e| Error::config("chart", e.to_string()))?;
    if !field_domain.is_subset_of(chart.domain()) {
        return Err(Error::config(
            "chart",
            format!(
                "the domain of `{}` does not cover the parameter domain",
                chart.name()
            ),
        ));
    }
    Ok(chart)
}

fn theta_metric(config: &ExperimentConfig, loss: &BuiltinLoss) -> Result<AnyMetric<TanhMLP>> {
    resolve_metric(&config.metric, loss.dim(), loss.mlp().map(|p| &p.spec))
}

fn point_or(config: &ExperimentConfig, dim: usize, fallback: Vec<f64>) -> Result<Vec<f64>> {
    match &config.point {
        Some(p) if p.len() != dim => Err(Error::config(
            "point",
            format!("expected {dim} coordinates, got {}", p.len()),
        )),
        Some(p) => Ok(p.clone()),
        None => Ok(fallback),
    }
}

fn indexed(prefix: &str, dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("{prefix}_{i}")).collect()
}

fn reals(v: &[f64]) -> Vec<String> {
    v.iter().map(|x| real(*x)).collect()
}

// ---------------------------------------------------------------- sharpness

fn sharpness_columns() -> Vec<String> {
    [
        "optimizer",
        "coords",
        "kind",
        "det",
        "trace",
        "eig_min",
        "eig_max",
        "loss",
        "grad_norm",
    ]
    .map(String::from)
    .to_vec()
}

fn sharpness_row(
    optimizer: &str,
    coords: &str,
    r: &SharpnessReport,
    loss: f64,
    grad_norm: f64,
) -> Vec<String> {
    vec![
        optimizer.into(),
        coords.into(),
        r.kind.as_str().into(),
        real(r.determinant),
        real(r.trace),
        real(r.eig_min()),
        real(r.eig_max()),
        real(loss),
        real(grad_norm),
    ]
}

/// Bilinear and endomorphism sharpness at `theta` and at `φ(theta)`.
fn curvature_rows<F: ScalarField, G: MetricField>(
    table: &mut Table,
    optimizer: &str,
    loss: &F,
    metric: &G,
    chart: &Diffeomorphism,
    theta: &[f64],
) -> Result<()> {
    let psi = chart.apply(theta)?;
    let transported = pushforward_function(chart, loss);
    let psi_metric = pushforward_metric_field(chart, metric);
    let theta_side = riemannian_hessian(loss, metric, theta)?;
    let psi_side = riemannian_hessian(&transported, &psi_metric, &psi)?;
    let sides = [
        (
            "theta",
            theta_side,
            metric.eval_spd(theta)?,
            calculus::value(loss, theta)?,
        ),
        (
            "psi",
            psi_side,
            psi_metric.eval_spd(&psi)?,
            calculus::value(&transported, &psi)?,
        ),
    ];
    for (coords, hessian, g, value) in sides {
        let bilinear = sharpness(&hessian.matrix, SharpnessKind::Bilinear)?;
        let endomorphism = endomorphism_sharpness(&g, &hessian.matrix)?;
        table.push(sharpness_row(
            optimizer,
            coords,
            &bilinear,
            value,
            hessian.grad_norm,
        ));
        table.push(sharpness_row(
            optimizer,
            coords,
            &endomorphism,
            value,
            hessian.grad_norm,
        ));
    }
    Ok(())
}

fn sharpness_experiment(config: &ExperimentConfig) -> Result<(Table, Option<String>)> {
    let kind = ExperimentKind::Sharpness;
    let loss = build_loss(kind, config)?;
    let chart = build_chart(kind, config, &loss.domain())?;
    let mut table = Table::new(sharpness_columns());
    if let Some(problem) = loss.mlp() {
        return trained_sharpness(config, problem, &chart, table);
    }
    let metric = theta_metric(config, &loss)?;
    let start = point_or(config, loss.dim(), loss.reference_point())?;
    let theta = locate_minimum(&loss, &start, LOCATE_ITERATIONS)?;
    curvature_rows(&mut table, "none", &loss, &metric, &chart, &theta)?;
    Ok((table, None))
}

/// Trains with plain and Fisher-preconditioned gradient descent, then measures
/// curvature at both minima. Unless a metric is configured, the endomorphism
/// uses the damped empirical Fisher.
fn trained_sharpness(
    config: &ExperimentConfig,
    problem: &MlpProblem,
    chart: &Diffeomorphism,
    mut table: Table,
) -> Result<(Table, Option<String>)> {
    let settings = &config.training;
    let spec = if config.metric == MetricSpec::Euclidean {
        MetricSpec::Damped {
            base: Box::new(MetricSpec::EmpiricalFisher),
            lambda: settings.damping,
        }
    } else {
        config.metric.clone()
    };
    let metric = resolve_metric(&spec, problem.spec.dim(), Some(&problem.spec))?;
    let start = point_or(config, problem.spec.dim(), problem.init.clone())?;
    let optimizers = [
        Optimizer::Gd { lr: settings.lr },
        Optimizer::FisherGd {
            lr: settings.lr,
            damping: settings.damping,
        },
    ];
    let mut curves = Vec::new();
    for optimizer in optimizers {
        let report = train(&problem.spec, &start, settings.epochs, optimizer)?;
        curvature_rows(
            &mut table,
            optimizer.name(),
            &problem.spec,
            &metric,
            chart,
            &report.theta,
        )?;
        curves.push(Series {
            name: optimizer.name().into(),
            points: report
                .loss_curve
                .iter()
                .enumerate()
                .map(|(epoch, l)| (epoch as f64, l.log10()))
                .collect(),
        });
    }
    let plot = line_plot("training loss", "epoch", "log10 loss", &curves);
    Ok((table, Some(plot)))
}

// --------------------------------------------------------------------- flow

fn end_loss<F: ScalarField>(loss: &F, point: &[f64]) -> String {
    calculus::value(loss, point).map_or_else(|_| "nan".into(), real)
}

fn first_coordinate(
    name: &str,
    trajectory: &Trajectory,
    back: impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Series {
    Series {
        name: name.into(),
        points: trajectory
            .times
            .iter()
            .zip(&trajectory.points)
            .map(|(t, p)| (*t, back(p).map_or(f64::NAN, |x| x[0])))
            .collect(),
    }
}

fn flow_experiment(config: &ExperimentConfig) -> Result<(Table, Option<String>)> {
    let kind = ExperimentKind::Flow;
    let loss = build_loss(kind, config)?;
    let chart = build_chart(kind, config, &loss.domain())?;
    let metric = theta_metric(config, &loss)?;
    let theta0 = point_or(config, loss.dim(), loss.start_point())?;
    let psi0 = chart
        .apply(&theta0)
        .map_err(|e| Error::config("point", e.to_string()))?;
    let transported = pushforward_function(&chart, &loss);
    let settings = &config.flow;
    let mut table = Table::new([
        "step",
        "steps",
        "gap_naive",
        "gap_equivariant",
        "loss_theta",
        "loss_naive",
        "loss_equivariant",
        "naive_exit_step",
    ]);
    let mut finest: Option<(f64, [Trajectory; 3])> = None;
    for &h in &settings.step_sizes {
        let steps = (settings.horizon / h).round().max(1.0) as usize;
        let theta_side = flow(&loss, &metric, &theta0, h, steps, settings.integrator)?;
        let equivariant =
            equivariant_reparam_flow(&loss, &metric, &chart, &psi0, h, steps, settings.integrator)?;
        let naive = naive_reparam_flow(&loss, &chart, &psi0, h, steps, settings.integrator)?;
        table.push(vec![
            real(h),
            steps.to_string(),
            real(equivariance_gap(&theta_side, &naive, &chart)?),
            real(equivariance_gap(&theta_side, &equivariant, &chart)?),
            end_loss(&loss, theta_side.last()),
            end_loss(&transported, naive.last()),
            end_loss(&transported, equivariant.last()),
            naive.exit_step.map_or_else(String::new, |s| s.to_string()),
        ]);
        if finest.as_ref().is_none_or(|(best, _)| h < *best) {
            finest = Some((h, [theta_side, equivariant, naive]));
        }
    }
    let plot = finest.map(|(h, [theta_side, equivariant, naive])| {
        let back = |p: &[f64]| chart.apply_inverse(p);
        line_plot(
            &format!("flow trajectories, h = {h}"),
            "t",
            "theta_1",
            &[
                first_coordinate("theta-side", &theta_side, |p| Ok(p.to_vec())),
                first_coordinate("equivariant", &equivariant, back),
                first_coordinate("naive", &naive, back),
            ],
        )
    });
    Ok((table, plot))
}

// ------------------------------------------------------------------ density

fn density_experiment(config: &ExperimentConfig) -> Result<(Table, Option<String>)> {
    let kind = ExperimentKind::Density;
    if config.metric.needs_model() {
        return Err(Error::config(
            "metric.kind",
            "the density experiment takes euclidean or constant metrics",
        ));
    }
    let DensitySpec::Gaussian { mean, std } = &config.density;
    let base = Gaussian::new(mean.clone(), std.clone())
        .map_err(|e| Error::config("density", e.to_string()))?;
    let dim = base.dim();
    let chart = build_chart(kind, config, &base.domain())?;
    let metric = resolve_metric::<TanhMLP>(&config.metric, dim, None)?;
    let start = point_or(config, dim, mean.iter().map(|m| m + 0.25).collect())?;
    let psi_start = chart
        .apply(&start)
        .map_err(|e| Error::config("point", e.to_string()))?;
    let q = Density::lebesgue(base);
    let q_psi = lebesgue_pushforward(&q, &chart)?;
    let opts = ModeOptions::default();

    let mut columns = vec!["reference".to_string()];
    columns.extend(indexed("mode_theta", dim));
    columns.extend(indexed("phi_mode", dim));
    columns.extend(indexed("mode_psi", dim));
    columns.push("gap".into());
    let mut table = Table::new(columns);
    let mut push = |reference: &str, theta_mode: Vec<f64>, psi_mode: Vec<f64>| -> Result<()> {
        let mapped = chart.apply(&theta_mode)?;
        let gap = mapped
            .iter()
            .zip(&psi_mode)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let mut row = vec![reference.to_string()];
        row.extend(reals(&theta_mode));
        row.extend(reals(&mapped));
        row.extend(reals(&psi_mode));
        row.push(real(gap));
        table.push(row);
        Ok(())
    };

    let theta_mode = find_mode(&q, &start, opts)?.point;
    let psi_mode = find_mode(&q_psi, &psi_start, opts)?.point;
    push("lebesgue", theta_mode, psi_mode)?;

    let qg = riemannian_density(&q, &metric)?;
    let qg_psi = riemannian_density(&q_psi, pushforward_metric_field(&chart, &metric))?;
    let theta_mode = find_mode(&qg, &start, opts)?.point;
    let psi_mode = find_mode(&qg_psi, &psi_start, opts)?.point;
    push("riemannian", theta_mode, psi_mode)?;
    Ok((table, None))
}

// ------------------------------------------------------------------ laplace

fn laplace_experiment(config: &ExperimentConfig) -> Result<(Table, Option<String>)> {
    let kind = ExperimentKind::Laplace;
    let loss = build_loss(kind, config)?;
    let chart = build_chart(kind, config, &loss.domain())?;
    let theta_map = match &config.point {
        Some(_) => point_or(config, loss.dim(), Vec::new())?,
        None => locate_minimum(&loss, &loss.reference_point(), LOCATE_ITERATIONS)?,
    };
    let psi_map = chart.apply(&theta_map)?;
    let theta_side = laplace_log_marginal(&loss, &theta_map)?;
    let naive = laplace_log_marginal(&pushforward_function(&chart, &loss), &psi_map)?;
    let invariant = laplace_log_marginal_invariant(&loss, &chart, &psi_map)?;
    let mut table = Table::new([
        "log_z_theta",
        "log_z_naive",
        "log_z_invariant",
        "naive_shift",
        "invariant_shift",
        "log_abs_det_jacobian",
        "neg_loss",
        "rest_theta",
        "rest_naive",
        "rest_invariant",
    ]);
    table.push(vec![
        real(theta_side.log_z),
        real(naive.log_z),
        real(invariant.log_z),
        real(naive.log_z - theta_side.log_z),
        real(invariant.log_z - theta_side.log_z),
        real(chart.log_abs_det_jacobian(&theta_map)?),
        real(theta_side.neg_loss_term),
        real(theta_side.remainder_term),
        real(naive.remainder_term),
        real(invariant.remainder_term),
    ]);
    Ok((table, None))
}

// ------------------------------------------------------------------- newton

fn newton_experiment(config: &ExperimentConfig) -> Result<(Table, Option<String>)> {
    let kind = ExperimentKind::Newton;
    let loss = build_loss(kind, config)?;
    let chart = build_chart(kind, config, &loss.domain())?;
    let dim = loss.dim();
    let theta0 = point_or(config, dim, loss.start_point())?;
    let psi0 = chart
        .apply(&theta0)
        .map_err(|e| Error::config("point", e.to_string()))?;
    let transported = pushforward_function(&chart, &loss);
    let max_steps = config.newton.max_steps;

    let mut columns: Vec<String> = ["coords", "outcome", "steps_taken"]
        .map(String::from)
        .to_vec();
    columns.extend(indexed("minimizer_theta", dim));
    columns.extend(["loss", "grad_norm"].map(String::from));
    let mut table = Table::new(columns);
    let mut trajectories = Vec::new();
    let runs: [(&str, Result<_>); 2] = [
        ("theta", newton_minimize(&loss, &theta0, max_steps)),
        ("psi", newton_minimize(&transported, &psi0, max_steps)),
    ];
    for (coords, run) in runs {
        let back = |p: &[f64]| {
            if coords == "psi" {
                chart.apply_inverse(p)
            } else {
                Ok(p.to_vec())
            }
        };
        let mut row = vec![coords.to_string()];
        match run {
            Ok(result) => {
                let theta = back(&result.minimizer)?;
                row.extend(["converged".into(), result.steps_taken.to_string()]);
                row.extend(reals(&theta));
                row.extend([end_loss(&loss, &theta), real(result.grad_norm)]);
                trajectories.push(first_coordinate(coords, &result.trajectory, back));
            }
            Err(err) => {
                let (outcome, steps, grad) = match err {
                    Error::NoConvergence {
                        iterations,
                        grad_norm,
                    } => ("no_convergence", iterations.to_string(), real(grad_norm)),
                    Error::Domain { .. } => ("left_domain", String::new(), String::new()),
                    Error::Numerics(_) => ("numerics", String::new(), String::new()),
                    other => return Err(other),
                };
                row.extend([outcome.to_string(), steps]);
                row.extend(std::iter::repeat_n(String::new(), dim));
                row.extend([String::new(), grad]);
            }
        }
        table.push(row);
    }
    let plot = Some(line_plot(
        "newton iterates",
        "step",
        "theta_1",
        &trajectories,
    ));
    Ok((table, plot))
}

// --------------------------------------------------------- metric-transform

fn metric_transform_experiment(config: &ExperimentConfig) -> Result<(Table, Option<String>)> {
    let kind = ExperimentKind::MetricTransform;
    let loss = build_loss(kind, config)?;
    let problem = loss
        .mlp()
        .ok_or_else(|| Error::config("loss.kind", "metric-transform needs a `sine_mlp` loss"))?;
    let dim = problem.spec.dim();
    let chart = build_chart(kind, config, &loss.domain())?;
    let theta = point_or(config, dim, problem.init.clone())?;
    let psi = chart.apply(&theta)?;
    let psi_spec = problem.spec.reparametrized(&chart);

    let mut specs = vec![
        ("ggn", MetricSpec::Ggn),
        ("empirical_fisher", MetricSpec::EmpiricalFisher),
        (
            "family_b",
            MetricSpec::FamilyB {
                weight: OutputWeight::Identity,
            },
        ),
        ("ggn_diag", MetricSpec::GgnDiag),
        (
            "ggn_damped",
            MetricSpec::Damped {
                base: Box::new(MetricSpec::Ggn),
                lambda: TRANSFORM_DAMPING,
            },
        ),
    ];
    if config.metric != MetricSpec::Euclidean {
        specs.push(("configured", config.metric.clone()));
    }
    let mut table = Table::new([
        "metric",
        "mismatch",
        "auto_norm",
        "rule_norm",
        "identity_holds",
        "elementwise_chart",
    ]);
    for (name, spec) in specs {
        let on_theta = resolve_metric(&spec, dim, Some(&problem.spec))?;
        let on_psi = resolve_metric(&spec, dim, Some(&psi_spec))?;
        let auto = on_psi.eval(&psi)?;
        let rule = pushforward_bilinear(&chart, &theta, &on_theta.eval(&theta)?)?;
        let mismatch = relative_mismatch(&auto, &rule);
        table.push(vec![
            name.into(),
            real(mismatch),
            real(auto.norm()),
            real(rule.norm()),
            (mismatch <= IDENTITY_TOLERANCE).to_string(),
            chart.is_elementwise().to_string(),
        ]);
    }
    Ok((table, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(out: &ExperimentOutput, name: &str) -> Vec<String> {
        let i = out
            .table
            .columns
            .iter()
            .position(|c| c == name)
            .expect(name);
        out.table.rows.iter().map(|r| r[i].clone()).collect()
    }

    fn num(cell: &str) -> f64 {
        cell.parse().unwrap()
    }

    fn config(json: &str) -> ExperimentConfig {
        ExperimentConfig::from_json_str(json).unwrap()
    }

    #[test]
    fn dinh_sharpness_rows() {
        let out = run_experiment(ExperimentKind::Sharpness, &config("{}")).unwrap();
        let traces: Vec<f64> = column(&out, "trace").iter().map(|c| num(c)).collect();
        let kinds = column(&out, "kind");
        let coords = column(&out, "coords");
        for ((t, k), c) in traces.iter().zip(&kinds).zip(&coords) {
            let expected = match (c.as_str(), k.as_str()) {
                ("psi", "bilinear") => 8.5,
                _ => 4.0,
            };
            assert!((t - expected).abs() < 1e-9, "{c} {k} {t}");
        }
        assert_eq!(out.table.columns.last().unwrap(), "config_hash");
    }

    #[test]
    fn identity_chart_flow_has_zero_gap() {
        let out = run_experiment(
            ExperimentKind::Flow,
            &config(r#"{"chart": {"kind": "identity"}}"#),
        )
        .unwrap();
        for cell in column(&out, "gap_equivariant")
            .iter()
            .chain(&column(&out, "gap_naive"))
        {
            assert_eq!(num(cell), 0.0);
        }
        assert!(out.plot.is_some());
    }

    #[test]
    fn laplace_naive_shift_is_log_two() {
        let out = run_experiment(ExperimentKind::Laplace, &config("{}")).unwrap();
        assert!((num(&column(&out, "naive_shift")[0]) - 2f64.ln()).abs() < 1e-9);
        assert!(num(&column(&out, "invariant_shift")[0]).abs() < 1e-12);
    }

    #[test]
    fn lognormal_mode_and_riemannian_equivariance() {
        let out = run_experiment(ExperimentKind::Density, &config("{}")).unwrap();
        let psi = column(&out, "mode_psi_1");
        assert!((num(&psi[0]) - (-1f64).exp()).abs() < 1e-6);
        let gaps = column(&out, "gap");
        assert!(num(&gaps[0]) > 0.5);
        assert!(num(&gaps[1]) <= 1e-6);
    }

    #[test]
    fn newton_in_log_coordinates_takes_one_step() {
        let out = run_experiment(ExperimentKind::Newton, &config("{}")).unwrap();
        assert_eq!(column(&out, "coords"), ["theta", "psi"]);
        assert_eq!(column(&out, "steps_taken")[1], "1");
        assert!((num(&column(&out, "minimizer_theta_1")[1]) - 0.7f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn metric_transform_flags() {
        let out = run_experiment(
            ExperimentKind::MetricTransform,
            &config(r#"{"loss": {"kind": "sine_mlp", "hidden": 3, "samples": 12}}"#),
        )
        .unwrap();
        assert_eq!(
            column(&out, "identity_holds"),
            ["true", "true", "true", "false", "false"]
        );
    }

    #[test]
    fn config_errors_are_reported_as_such() {
        let bad_chart =
            config(r#"{"chart": {"kind": "elementwise_log"}, "loss": {"kind": "dinh"}}"#);
        let e = run_experiment(ExperimentKind::Sharpness, &bad_chart).unwrap_err();
        assert!(
            matches!(e, Error::Config { ref path, .. } if path == "chart"),
            "{e}"
        );
        let bad_point = config(r#"{"point": [1, 2, 3]}"#);
        let e = run_experiment(ExperimentKind::Flow, &bad_point).unwrap_err();
        assert!(
            matches!(e, Error::Config { ref path, .. } if path == "point"),
            "{e}"
        );
    }

    #[test]
    fn reruns_are_byte_identical() {
        let c = config(r#"{"seed": 5}"#);
        let a = run_experiment(ExperimentKind::Flow, &c).unwrap();
        let b = run_experiment(ExperimentKind::Flow, &c).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.to_csv().ends_with('\n'));
        assert!(!a.to_csv().contains('\r'));
    }

    #[test]
    fn writes_requested_files() {
        let dir = tempfile::tempdir().unwrap();
        let c = config("{}");
        let out = run_experiment(ExperimentKind::Flow, &c).unwrap();
        let files = out.write(&c, dir.path(), OutputFormat::Json, true).unwrap();
        assert_eq!(files.len(), 2);
        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&files[0]).unwrap()).unwrap();
        assert_eq!(doc["experiment"], "flow");
        assert_eq!(doc["config_hash"], out.config_hash);
    }
}
