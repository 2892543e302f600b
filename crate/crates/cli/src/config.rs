//! Flat `key = value` experiment configuration.
//!
//! Recognized keys (all optional except where an experiment needs them):
//!
//! | key          | meaning                                               | default            |
//! |--------------|-------------------------------------------------------|--------------------|
//! | `experiment` | must match the subcommand if present                  | subcommand         |
//! | `d`          | system dimension, or a comma list cycled per instance | `2`                |
//! | `n`          | number of times, or a comma list                      | `3`                |
//! | `d_e`        | environment / Kraus ancilla dimension                 | `2`                |
//! | `ensemble`   | number of instances                                   | per experiment     |
//! | `seed`       | base seed; instance `i` uses `seed + i`               | `0`                |
//! | `tolerance`  | replaces every bounded-row tolerance                  | per quantity       |
//! | `reference`  | `maximally-mixed` or `random` reference states        | `maximally-mixed`  |
//! | `coupling`   | `coupled`, `product`, `collision`, `swap`, `closed`   | `coupled`          |
//! | `output`     | CSV path (the `--out` flag wins)                      | stdout             |
//!
//! Blank lines and lines starting with `#` are ignored.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use qfluct_core::ensembles::{DilationKind, ReferencePolicy};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("invalid value {value:?} for {key}: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("unknown experiment {0:?}")]
    UnknownExperiment(String),
    #[error("config is for experiment {config} but {requested} was requested")]
    ExperimentMismatch { config: Experiment, requested: Experiment },
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    ClosedFt,
    MarkovFt,
    NonmarkovFt,
    EpRateScan,
    MemoryAblation,
    Kolmogorov,
    OracleCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::ClosedFt,
        Experiment::MarkovFt,
        Experiment::NonmarkovFt,
        Experiment::EpRateScan,
        Experiment::MemoryAblation,
        Experiment::Kolmogorov,
        Experiment::OracleCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::ClosedFt => "closed-ft",
            Experiment::MarkovFt => "markov-ft",
            Experiment::NonmarkovFt => "nonmarkov-ft",
            Experiment::EpRateScan => "ep-rate-scan",
            Experiment::MemoryAblation => "memory-ablation",
            Experiment::Kolmogorov => "kolmogorov",
            Experiment::OracleCheck => "oracle-check",
        }
    }

    fn default_ensemble(self) -> usize {
        match self {
            Experiment::ClosedFt => 200,
            Experiment::MarkovFt | Experiment::OracleCheck => 100,
            Experiment::NonmarkovFt => 50,
            Experiment::EpRateScan => 1000,
            Experiment::MemoryAblation => 20,
            Experiment::Kolmogorov => 50,
        }
    }

    /// Smallest number of times the experiment can run with.
    fn min_steps(self) -> usize {
        match self {
            Experiment::NonmarkovFt | Experiment::EpRateScan | Experiment::MemoryAblation | Experiment::Kolmogorov => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| ConfigError::UnknownExperiment(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// System dimensions; instance `i` uses `dims[i % dims.len()]`.
    pub dims: Vec<usize>,
    /// Numbers of times; instance `i` uses `steps[(i / dims.len()) % steps.len()]`.
    pub steps: Vec<usize>,
    pub env_dim: usize,
    pub ensemble: usize,
    pub seed: u64,
    pub tolerance: Option<f64>,
    pub reference: ReferencePolicy,
    pub coupling: DilationKind,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        Self {
            experiment,
            dims: vec![2],
            steps: vec![3],
            env_dim: 2,
            ensemble: experiment.default_ensemble(),
            seed: 0,
            tolerance: None,
            reference: ReferencePolicy::MaximallyMixed,
            coupling: DilationKind::Coupled,
            output: None,
        }
    }

    /// Parses `text` on top of the defaults for `requested`.
    pub fn parse(text: &str, requested: Experiment) -> Result<Self, ConfigError> {
        let mut cfg = Self::defaults(requested);
        let mut seen: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(ConfigError::Syntax { line, text: raw.to_string() });
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax { line, text: raw.to_string() });
            }
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::DuplicateKey { line, key: key.to_string() });
            }
            seen.push(key.to_string());
            match key {
                "experiment" => {
                    let e: Experiment = value.parse()?;
                    if e != requested {
                        return Err(ConfigError::ExperimentMismatch { config: e, requested });
                    }
                }
                "d" => cfg.dims = parse_list(key, value)?,
                "n" => cfg.steps = parse_list(key, value)?,
                "d_e" => cfg.env_dim = parse_num(key, value)?,
                "ensemble" => cfg.ensemble = parse_num(key, value)?,
                "seed" => cfg.seed = parse_num(key, value)?,
                "tolerance" => cfg.tolerance = Some(parse_num(key, value)?),
                "reference" => {
                    cfg.reference = match value {
                        "maximally-mixed" => ReferencePolicy::MaximallyMixed,
                        "random" => ReferencePolicy::Random,
                        _ => return Err(invalid(key, value, "expected maximally-mixed or random")),
                    }
                }
                "coupling" => {
                    cfg.coupling = match value {
                        "coupled" => DilationKind::Coupled,
                        "product" => DilationKind::Product,
                        "collision" => DilationKind::Collision,
                        "swap" => DilationKind::SwapDominated,
                        "closed" => DilationKind::Closed,
                        _ => return Err(invalid(key, value, "expected coupled, product, collision, swap or closed")),
                    }
                }
                "output" => cfg.output = Some(PathBuf::from(value)),
                _ => return Err(ConfigError::UnknownKey { line, key: key.to_string() }),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path, requested: Experiment) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, requested)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        if self.dims.iter().any(|&d| d < 2) {
            return Err(invalid("d", &list(&self.dims), "dimensions must be at least 2"));
        }
        let min_n = self.experiment.min_steps();
        if self.steps.iter().any(|&n| n < min_n) {
            return Err(invalid("n", &list(&self.steps), &format!("{} needs n >= {min_n}", self.experiment)));
        }
        if self.env_dim < 1 {
            return Err(invalid("d_e", "0", "environment dimension must be at least 1"));
        }
        if self.ensemble < 1 {
            return Err(invalid("ensemble", "0", "ensemble must be at least 1"));
        }
        if let Some(t) = self.tolerance {
            if !(t.is_finite() && t > 0.0) {
                return Err(invalid("tolerance", &t.to_string(), "must be positive and finite"));
            }
        }
        if self.coupling == DilationKind::SwapDominated && self.dims.iter().any(|&d| d != self.env_dim) {
            return Err(invalid("coupling", "swap", "swap coupling needs d_e equal to d"));
        }
        Ok(())
    }

    /// `(d, n, seed)` of instance `i`.
    pub fn instance(&self, i: usize) -> (usize, usize, u64) {
        let d = self.dims[i % self.dims.len()];
        let n = self.steps[(i / self.dims.len()) % self.steps.len()];
        (d, n, self.seed.wrapping_add(i as u64))
    }
}

fn invalid(key: &str, value: &str, reason: &str) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| invalid(key, value, "not a valid number"))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>, ConfigError> {
    let items: Vec<usize> = value
        .split(',')
        .map(|s| parse_num(key, s.trim()))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(invalid(key, value, "empty list"));
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_and_comments() {
        let text = "# closed ensemble\nexperiment = closed-ft\nd = 2, 3\nn = 2,3,4\n\nensemble = 12\nseed = 5\n";
        let cfg = ExperimentConfig::parse(text, Experiment::ClosedFt).unwrap();
        assert_eq!(cfg.dims, vec![2, 3]);
        assert_eq!(cfg.steps, vec![2, 3, 4]);
        assert_eq!(cfg.instance(0), (2, 2, 5));
        assert_eq!(cfg.instance(3), (3, 3, 8));
        assert_eq!(cfg.instance(6), (2, 2, 11));
    }

    #[test]
    fn rejects_bad_input() {
        let bad = [
            "d = 1",
            "ensemble = 0",
            "d = two",
            "color = red",
            "n",
            "seed = 1\nseed = 2",
            "experiment = kolmogorov",
            "tolerance = -1",
            "coupling = swap\nd_e = 3",
        ];
        for text in bad {
            assert!(ExperimentConfig::parse(text, Experiment::ClosedFt).is_err(), "{text}");
        }
        assert!(ExperimentConfig::parse("n = 2", Experiment::NonmarkovFt).is_err());
    }
}
