//! Experiment configuration files.
//!
//! Configs are JSON objects; unknown keys are rejected and every error names
//! the offending field path. All sections are optional and fall back to the
//! defaults of the chosen experiment.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::losses::LossSpec;
use crate::charts::ChartKind;
use crate::dynamics::Integrator;
use crate::error::{Error, Result};
use crate::metrics::OutputWeight;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Sharpness,
    Flow,
    Density,
    Laplace,
    Newton,
    MetricTransform,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Sharpness,
        ExperimentKind::Flow,
        ExperimentKind::Density,
        ExperimentKind::Laplace,
        ExperimentKind::Newton,
        ExperimentKind::MetricTransform,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Sharpness => "sharpness",
            ExperimentKind::Flow => "flow",
            ExperimentKind::Density => "density",
            ExperimentKind::Laplace => "laplace",
            ExperimentKind::Newton => "newton",
            ExperimentKind::MetricTransform => "metric-transform",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s || (s == "flow_equivariance" && *k == ExperimentKind::Flow))
            .ok_or_else(|| Error::config("experiment", format!("unknown experiment `{s}`")))
    }
}

/// Metric selection; network metrics need a `sine_mlp` loss.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    #[default]
    Euclidean,
    Constant {
        matrix: Vec<Vec<f64>>,
    },
    Ggn,
    /// Shorthand for the diagonal of the GGN.
    GgnDiag,
    EmpiricalFisher,
    FamilyB {
        weight: OutputWeight,
    },
    Diagonal {
        base: Box<MetricSpec>,
    },
    Damped {
        base: Box<MetricSpec>,
        lambda: f64,
    },
}

impl MetricSpec {
    pub fn needs_model(&self) -> bool {
        match self {
            MetricSpec::Euclidean | MetricSpec::Constant { .. } => false,
            MetricSpec::Ggn
            | MetricSpec::GgnDiag
            | MetricSpec::EmpiricalFisher
            | MetricSpec::FamilyB { .. } => true,
            MetricSpec::Diagonal { base } | MetricSpec::Damped { base, .. } => base.needs_model(),
        }
    }
}

/// Densities available to the density experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    /// Independent coordinates with the given means and standard deviations.
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
}

impl Default for DensitySpec {
    fn default() -> Self {
        DensitySpec::Gaussian {
            mean: vec![0.0],
            std: vec![1.0],
        }
    }
}

fn default_integrator() -> Integrator {
    Integrator::Rk4
}
fn default_step_sizes() -> Vec<f64> {
    vec![0.1, 0.05, 0.025, 0.0125]
}
fn default_horizon() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSettings {
    #[serde(default = "default_integrator")]
    pub integrator: Integrator,
    #[serde(default = "default_step_sizes")]
    pub step_sizes: Vec<f64>,
    /// Integration time; each step size runs `round(horizon / h)` steps.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
}

impl Default for FlowSettings {
    fn default() -> Self {
        FlowSettings {
            integrator: default_integrator(),
            step_sizes: default_step_sizes(),
            horizon: default_horizon(),
        }
    }
}

fn default_max_steps() -> usize {
    50
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonSettings {
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            max_steps: default_max_steps(),
        }
    }
}

fn default_epochs() -> usize {
    1000
}
fn default_lr() -> f64 {
    1e-2
}
fn default_damping() -> f64 {
    1e-3
}

/// Training of network losses. The hidden width and step size are not
/// prescribed by the experiment design; these are the artifact's defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSettings {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Damping added to the empirical Fisher when it preconditions training
    /// and when it serves as the metric of the sharpness comparison.
    #[serde(default = "default_damping")]
    pub damping: f64,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        TrainingSettings {
            epochs: default_epochs(),
            lr: default_lr(),
            damping: default_damping(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::config("format", format!("unknown format `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub plot: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub chart: Option<ChartKind>,
    #[serde(default)]
    pub metric: MetricSpec,
    #[serde(default)]
    pub loss: Option<LossSpec>,
    /// Start point, MAP estimate or evaluation point, depending on the experiment.
    #[serde(default)]
    pub point: Option<Vec<f64>>,
    #[serde(default)]
    pub density: DensitySpec,
    #[serde(default)]
    pub flow: FlowSettings,
    #[serde(default)]
    pub newton: NewtonSettings,
    #[serde(default)]
    pub training: TrainingSettings,
    #[serde(default)]
    pub output: OutputSettings,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(
                if path == "." { "<root>".into() } else { path },
                e.inner().to_string(),
            )
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Checks value ranges that serde cannot express.
    pub fn validate(&self, kind: ExperimentKind) -> Result<()> {
        if self.flow.step_sizes.is_empty() {
            return Err(Error::config(
                "flow.step_sizes",
                "at least one step size is required",
            ));
        }
        for (i, h) in self.flow.step_sizes.iter().enumerate() {
            if !(*h > 0.0 && h.is_finite()) {
                return Err(Error::config(
                    format!("flow.step_sizes[{i}]"),
                    "step sizes must be positive",
                ));
            }
        }
        if !(self.flow.horizon > 0.0 && self.flow.horizon.is_finite()) {
            return Err(Error::config("flow.horizon", "horizon must be positive"));
        }
        if !(self.training.lr >= 0.0 && self.training.lr.is_finite()) {
            return Err(Error::config(
                "training.lr",
                "learning rate must be non-negative",
            ));
        }
        if !(self.training.damping > 0.0 && self.training.damping.is_finite()) {
            return Err(Error::config(
                "training.damping",
                "damping must be positive",
            ));
        }
        check_metric(&self.metric, "metric")?;
        let network_loss = matches!(self.loss, Some(LossSpec::SineMlp { .. }))
            || (self.loss.is_none() && kind == ExperimentKind::MetricTransform);
        if self.metric.needs_model() && !network_loss {
            return Err(Error::config(
                "metric.kind",
                "network metrics require a `sine_mlp` loss",
            ));
        }
        if kind == ExperimentKind::MetricTransform && !network_loss {
            return Err(Error::config(
                "loss.kind",
                "metric-transform needs a `sine_mlp` loss",
            ));
        }
        if let Some(LossSpec::SineMlp {
            hidden,
            samples,
            noise,
            ..
        }) = &self.loss
        {
            if *hidden == 0 {
                return Err(Error::config(
                    "loss.hidden",
                    "hidden width must be positive",
                ));
            }
            if *samples == 0 {
                return Err(Error::config(
                    "loss.samples",
                    "at least one sample is required",
                ));
            }
            if noise.is_nan() || *noise < 0.0 {
                return Err(Error::config("loss.noise", "noise must be non-negative"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of experiment kind and config, hex-encoded.
    /// Output settings do not affect results and are left out.
    pub fn hash(&self, kind: ExperimentKind) -> String {
        #[derive(Serialize)]
        struct Canonical<'a> {
            experiment: &'a str,
            config: &'a ExperimentConfig,
        }
        let mut content = self.clone();
        content.output = OutputSettings::default();
        let json = serde_json::to_string(&Canonical {
            experiment: kind.as_str(),
            config: &content,
        })
        .expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn check_metric(spec: &MetricSpec, path: &str) -> Result<()> {
    match spec {
        MetricSpec::Damped { base, lambda } => {
            if !(*lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::config(
                    format!("{path}.lambda"),
                    "damping must be positive",
                ));
            }
            check_metric(base, &format!("{path}.base"))
        }
        MetricSpec::Diagonal { base } => check_metric(base, &format!("{path}.base")),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_a_valid_config() {
        let c = ExperimentConfig::from_json_str("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.flow.step_sizes.len(), 4);
        assert_eq!(c.training.epochs, 1000);
    }

    #[test]
    fn full_config_parses() {
        let c = ExperimentConfig::from_json_str(
            r#"{
                "seed": 3,
                "chart": {"kind": "layer_scale", "alpha": 2.0, "split": 1},
                "metric": {"kind": "damped", "lambda": 0.1, "base": {"kind": "ggn"}},
                "loss": {"kind": "sine_mlp", "hidden": 4},
                "flow": {"integrator": "euler", "step_sizes": [0.1]},
                "output": {"format": "json", "plot": true}
            }"#,
        )
        .unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.flow.integrator, Integrator::Euler);
        assert!(c.metric.needs_model());
        c.validate(ExperimentKind::Flow).unwrap();
    }

    #[test]
    fn errors_carry_field_paths() {
        let e = ExperimentConfig::from_json_str(r#"{"flow": {"integrator": "rk5"}}"#).unwrap_err();
        assert!(
            matches!(&e, Error::Config { path, .. } if path == "flow.integrator"),
            "{e}"
        );
        let e = ExperimentConfig::from_json_str(r#"{"bogus": 1}"#).unwrap_err();
        assert!(matches!(&e, Error::Config { .. }));
        assert_eq!(e.exit_code(), 2);
        let c = ExperimentConfig::from_json_str(r#"{"flow": {"step_sizes": [0.1, -1]}}"#).unwrap();
        let e = c.validate(ExperimentKind::Flow).unwrap_err();
        assert!(matches!(&e, Error::Config { path, .. } if path == "flow.step_sizes[1]"));
        let c = ExperimentConfig::from_json_str(
            r#"{"metric": {"kind": "ggn"}, "loss": {"kind": "dinh"}}"#,
        )
        .unwrap();
        assert!(matches!(
            c.validate(ExperimentKind::Sharpness),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn hash_depends_on_content_and_kind() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.seed = 1;
        assert_eq!(a.hash(ExperimentKind::Flow), a.hash(ExperimentKind::Flow));
        assert_ne!(a.hash(ExperimentKind::Flow), b.hash(ExperimentKind::Flow));
        assert_ne!(
            a.hash(ExperimentKind::Flow),
            a.hash(ExperimentKind::Laplace)
        );
        assert_eq!(a.hash(ExperimentKind::Flow).len(), 64);
        let mut c = a.clone();
        c.output.dir = Some("elsewhere".into());
        assert_eq!(a.hash(ExperimentKind::Flow), c.hash(ExperimentKind::Flow));
        assert_eq!(
            "metric-transform".parse::<ExperimentKind>().unwrap(),
            ExperimentKind::MetricTransform
        );
    }
}
