//! Reproducible experiment runner: reads a JSON config, sweeps one
//! parameter, and writes a CSV or JSON table.

pub mod commands;
pub mod config;
pub mod error;
pub mod table;

use std::path::{Path, PathBuf};

pub use config::{Command, ExperimentConfig, Format};
pub use error::CliError;
pub use table::Table;

/// Everything taken from the command line.
#[derive(Debug, Clone, clap::Parser)]
#[command(name = "anharmonic-probe", version, about)]
pub struct Invocation {
    /// Experiment to run.
    #[arg(value_enum)]
    pub command: Command,
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output file; overrides the config. Defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config thread count.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Validate the config and print validity flags without running.
    #[arg(long)]
    pub check: bool,
    /// Treat violated perturbative conditions as errors.
    #[arg(long)]
    pub strict: bool,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
}

fn output_format(config: &ExperimentConfig, out: Option<&Path>) -> Format {
    config.output.format.unwrap_or_else(|| match out {
        Some(p) if p.extension().is_some_and(|e| e == "json") => Format::Json,
        _ => Format::Csv,
    })
}

/// Runs one invocation and returns the rendered output together with the
/// path it should go to (`None` for stdout).
pub fn render(inv: &Invocation) -> Result<(String, Option<PathBuf>), CliError> {
    let mut config = load_config(&inv.config)?;
    if let Some(seed) = inv.seed {
        config.seed = seed;
    }
    if let Some(threads) = inv.threads {
        config.threads = threads;
    }
    let out = inv
        .out
        .clone()
        .or_else(|| config.output.path.as_ref().map(PathBuf::from));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let table = pool.install(|| {
        if inv.check {
            commands::check(inv.command, &config, inv.strict)
        } else {
            commands::execute(inv.command, &config, inv.strict)
        }
    })?;
    let text = match output_format(&config, out.as_deref()) {
        Format::Csv => table.to_csv(),
        Format::Json => table.to_json(),
    };
    Ok((text, out))
}

pub fn run(inv: &Invocation) -> Result<(), CliError> {
    let (text, out) = render(inv)?;
    match out {
        Some(path) => std::fs::write(&path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
