//! Toy models, datasets, configuration and experiment drivers.

pub mod config;
pub mod data;
pub mod experiments;
pub mod losses;
pub mod metric;
pub mod mlp;
pub mod rng;
pub mod svg;
pub mod train;

pub use config::{ExperimentConfig, ExperimentKind, MetricSpec, OutputFormat};
pub use data::{generate_sine_dataset, SineDataset};
pub use experiments::{run_experiment, ExperimentOutput};
pub use losses::{locate_minimum, BuiltinLoss, LossSpec};
pub use metric::{resolve_metric, AnyMetric};
pub use mlp::TanhMLP;
pub use train::{mse, train, train_mlp, Optimizer, TrainReport};
