//! Command-line front end: validate a TOML experiment description, then run it
//! and write the data products. Flag overrides are folded into the config value
//! tree before resolution, so the emitted manifest always records the exact
//! configuration that ran.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use metrofuse::config::{
    apply_override, config_from_value, load_config_text, parse_value, value_to_toml, Config,
    ConfigError,
};
use metrofuse::runner::{execute, RunnerError};

#[derive(Parser)]
#[command(version, about = "Photonic fusion and distribution experiment runner")]
struct Cli {
    /// Experiment description (TOML), or a manifest.json from an earlier run.
    #[arg(long)]
    config: PathBuf,

    /// Override the config's run mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,

    /// Override the config's random seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Directory for output files.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Dotted-path config override, e.g. --set source.pair_rate_hz=9000.
    /// Repeatable; numeric segments index arrays (--set circuit.0.delay_ps=2).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Override the config's output format.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,

    /// Check the config and report diagnostics without running anything.
    #[arg(long)]
    validate: bool,

    /// Also write the simulated time-tag streams (simulate and g2 runs).
    #[arg(long)]
    export_tags: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Predict,
    Simulate,
    Throughput,
    G2,
}

impl ModeArg {
    fn as_str(self) -> &'static str {
        match self {
            ModeArg::Predict => "predict",
            ModeArg::Simulate => "simulate",
            ModeArg::Throughput => "throughput",
            ModeArg::G2 => "g2",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl FormatArg {
    fn as_str(self) -> &'static str {
        match self {
            FormatArg::Csv => "csv",
            FormatArg::Json => "json",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(AppError::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(AppError::Runner(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

enum AppError {
    Config(ConfigError),
    Runner(RunnerError),
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Config(e)
    }
}

impl From<RunnerError> for AppError {
    fn from(e: RunnerError) -> Self {
        AppError::Runner(e)
    }
}

fn run(cli: &Cli) -> Result<ExitCode, AppError> {
    let text = load_config_text(&cli.config)?;
    let mut value = parse_value(&text)?;
    for assignment in &cli.set {
        apply_override(&mut value, assignment)?;
    }
    if let Some(mode) = cli.mode {
        apply_override(&mut value, &format!("mode={}", mode.as_str()))?;
    }
    if let Some(seed) = cli.seed {
        apply_override(&mut value, &format!("seed={seed}"))?;
    }
    if let Some(format) = cli.format {
        apply_override(&mut value, &format!("format={}", format.as_str()))?;
    }

    let canonical_toml = value_to_toml(&value)?;
    let config: Config = config_from_value(value)?;
    let config_dir = cli.config.parent().unwrap_or_else(|| Path::new("."));

    if cli.validate {
        return Ok(match config.resolve(config_dir) {
            Ok(_) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        });
    }

    let resolved = config.resolve(config_dir)?;
    let files = execute(&resolved, &canonical_toml, &cli.out, cli.export_tags)?;
    for file in files {
        println!("{}", file.display());
    }
    Ok(ExitCode::SUCCESS)
}
