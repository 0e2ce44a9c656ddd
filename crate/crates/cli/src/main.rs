//! `repgeo <experiment> --config <path> [--out <dir>] [--seed N] [--format csv|json] [--plot]`

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use repgeo_core::harness::{run_experiment, ExperimentConfig, ExperimentKind, OutputFormat};
use repgeo_core::{Error, Result};

/// Runs one reparametrization experiment and writes its report.
///
/// Without an output directory the report goes to standard output.
#[derive(Debug, Parser)]
#[command(name = "repgeo", version)]
struct Cli {
    /// sharpness | flow | density | laplace | newton | metric-transform
    #[arg(value_parser = parse_kind)]
    experiment: ExperimentKind,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Directory receiving `<experiment>.csv|json` (and `.svg`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// csv | json; overrides the config.
    #[arg(long, value_parser = parse_format)]
    format: Option<OutputFormat>,
    /// Also write an SVG plot where the experiment has one.
    #[arg(long)]
    plot: bool,
}

fn parse_kind(s: &str) -> std::result::Result<ExperimentKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_format(s: &str) -> std::result::Result<OutputFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn run(cli: Cli) -> Result<()> {
    let mut config = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(format) = cli.format {
        config.output.format = format;
    }
    if let Some(out) = cli.out {
        config.output.dir = Some(out);
    }
    config.output.plot |= cli.plot;

    let output = run_experiment(cli.experiment, &config)?;
    let settings = &config.output;
    match &settings.dir {
        Some(dir) => {
            for path in output.write(&config, dir, settings.format, settings.plot)? {
                eprintln!("wrote {}", path.display());
            }
        }
        None => {
            let body = match settings.format {
                OutputFormat::Csv => output.to_csv(),
                OutputFormat::Json => output.to_json(&config),
            };
            std::io::stdout()
                .write_all(body.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))?;
            if settings.plot {
                eprintln!("note: plots are only written together with --out");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
