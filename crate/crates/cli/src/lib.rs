//! Experiment runner for the `qfluct` command line tool: configuration,
//! independent oracles, experiments and CSV reporting.

pub mod config;
pub mod experiments;
pub mod oracle;
pub mod report;

pub use config::{ConfigError, Experiment, ExperimentConfig};
pub use report::{Check, ReportRow};

/// Failures that stop a run before any CSV is written.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("computation failed: {0}")]
    Core(#[from] qfluct_core::Error),
    #[error("cannot write report: {0}")]
    Io(#[from] std::io::Error),
}

/// Loads the config for `experiment` (defaults if `path` is `None`) and
/// applies the command line overrides.
pub fn load_config(
    experiment: Experiment,
    path: Option<&std::path::Path>,
    seed: Option<u64>,
    out: Option<std::path::PathBuf>,
) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::from_file(p, experiment)?,
        None => ExperimentConfig::defaults(experiment),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if out.is_some() {
        cfg.output = out;
    }
    Ok(cfg)
}

/// Runs and writes the report. Returns whether every row passed.
pub fn run_and_write(cfg: &ExperimentConfig) -> Result<bool, HarnessError> {
    let rows = experiments::run(cfg)?;
    report::write_csv(&rows, cfg.output.as_deref())?;
    Ok(report::all_pass(&rows))
}
