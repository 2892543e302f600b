//! Report rows and CSV output.

use std::io::Write;
use std::path::Path;

pub const HEADER: [&str; 7] = ["experiment", "seed", "quantity", "value", "target", "tolerance", "pass"];

/// What a row asserts about its value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Check {
    /// `|value − target| ≤ tol`.
    Equal { target: f64, tol: f64 },
    /// `value ≤ bound + tol`.
    AtMost { bound: f64, tol: f64 },
    /// `value ≥ bound − tol`.
    AtLeast { bound: f64, tol: f64 },
    /// Reported only; always passes.
    Info,
}

impl Check {
    /// Violations and defects: `value ≤ tol`.
    pub fn small(tol: f64) -> Self {
        Check::AtMost { bound: 0.0, tol }
    }

    /// Replaces the tolerance, leaving informational rows alone.
    pub fn with_tolerance(self, tol: f64) -> Self {
        match self {
            Check::Equal { target, .. } => Check::Equal { target, tol },
            Check::AtMost { bound, .. } => Check::AtMost { bound, tol },
            Check::AtLeast { bound, .. } => Check::AtLeast { bound, tol },
            Check::Info => Check::Info,
        }
    }

    fn passes(self, value: f64) -> bool {
        if !value.is_finite() {
            return false;
        }
        match self {
            Check::Equal { target, tol } => (value - target).abs() <= tol,
            Check::AtMost { bound, tol } => value <= bound + tol,
            Check::AtLeast { bound, tol } => value >= bound - tol,
            Check::Info => true,
        }
    }

    fn target_text(self) -> String {
        match self {
            Check::Equal { target, .. } => format!("{target}"),
            Check::AtMost { bound, .. } => format!("<={bound}"),
            Check::AtLeast { bound, .. } => format!(">={bound}"),
            Check::Info => String::new(),
        }
    }

    fn tolerance_text(self) -> String {
        match self {
            Check::Equal { tol, .. } | Check::AtMost { tol, .. } | Check::AtLeast { tol, .. } => format!("{tol:e}"),
            Check::Info => String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub experiment: String,
    pub seed: u64,
    pub quantity: String,
    pub value: f64,
    pub check: Check,
    pub pass: bool,
}

impl ReportRow {
    pub fn new(experiment: &str, seed: u64, quantity: &str, value: f64, check: Check) -> Self {
        Self {
            experiment: experiment.to_string(),
            seed,
            quantity: quantity.to_string(),
            value,
            check,
            pass: check.passes(value),
        }
    }

    fn record(&self) -> [String; 7] {
        [
            self.experiment.clone(),
            self.seed.to_string(),
            self.quantity.clone(),
            format!("{:e}", self.value),
            self.check.target_text(),
            self.check.tolerance_text(),
            self.pass.to_string(),
        ]
    }
}

/// Largest value of `quantity` across `rows` (`-inf` if absent).
pub fn max_of(rows: &[ReportRow], quantity: &str) -> f64 {
    rows.iter()
        .filter(|r| r.quantity == quantity)
        .map(|r| r.value)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest value of `quantity` across `rows` (`inf` if absent).
pub fn min_of(rows: &[ReportRow], quantity: &str) -> f64 {
    rows.iter()
        .filter(|r| r.quantity == quantity)
        .map(|r| r.value)
        .fold(f64::INFINITY, f64::min)
}

pub fn all_pass(rows: &[ReportRow]) -> bool {
    rows.iter().all(|r| r.pass)
}

/// Serializes rows with the fixed header.
pub fn to_csv(rows: &[ReportRow]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

/// Writes the CSV to `path` in one piece (temporary file plus rename), or to
/// stdout when `path` is `None`.
pub fn write_csv(rows: &[ReportRow], path: Option<&Path>) -> std::io::Result<()> {
    let bytes = to_csv(rows).map_err(std::io::Error::other)?;
    match path {
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(&bytes)?;
            out.flush()
        }
        Some(p) => {
            let tmp = p.with_extension("csv.partial");
            std::fs::write(&tmp, &bytes)?;
            std::fs::rename(&tmp, p)
        }
    }
}
