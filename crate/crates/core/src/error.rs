use std::path::PathBuf;

use thiserror::Error;

use crate::config::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {}", format_violations(.0))]
    InvalidConfig(Vec<Violation>),

    #[error("{what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("gauge vector has a zero entry at index {index}")]
    ZeroGauge { index: usize },

    #[error("antenna pair ({m1}, {m2}) is not in the dual-link pair set")]
    MissingPair { m1: usize, m2: usize },

    #[error("underdetermined uplink system: {rows} observations for {unknowns} unknowns")]
    Underdetermined { rows: usize, unknowns: usize },

    #[error("measurement matrix is rank deficient (condition number {condition:.3e}){}", trial_suffix(.trial))]
    RankDeficient {
        condition: f64,
        trial: Option<usize>,
    },

    #[error("NMSE undefined: {0} has zero energy")]
    ZeroEnergy(&'static str),

    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", .path.display())]
    ConfigFile { path: PathBuf, message: String },

    #[error("malformed realization dump at line {line}: {message}")]
    RealizationFormat { line: usize, message: String },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

fn trial_suffix(trial: &Option<usize>) -> String {
    match trial {
        Some(t) => format!(" in trial {t}"),
        None => String::new(),
    }
}
