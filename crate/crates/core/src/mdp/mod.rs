//! Finite reach-avoid MDPs: representation, validation, exact policy
//! evaluation and seeded simulation.

mod eval;
mod model;
mod policy;
mod simulate;
mod validate;

use std::path::Path;

use thiserror::Error;

pub use eval::{safety_function, value_function};
pub use model::{CostEntry, Mdp, MdpFile, Skeleton, StateKind, TransitionEntry};
pub use policy::Policy;
pub use simulate::{simulate_episode, simulate_with, Step, Trajectory};
pub use validate::{validate_mdp, Invariant, ValidationReport, Violation};

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unknown id {id:?} in field {field}")]
    UnknownId { field: String, id: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("model failed validation: {0}")]
    Invalid(ValidationReport),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("numerical error: {0}")]
    Singular(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub fn kappa(mdp: &Mdp, x: usize, a: usize) -> Result<f64, MdpError> {
    mdp.kappa(x, a)
}

/// Parses an MDP document without validating it.
pub fn parse_mdp(text: &str) -> Result<Mdp, MdpError> {
    let file: MdpFile = serde_json::from_str(text).map_err(|e| MdpError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Mdp::from_file(&file)
}

/// Reads, parses and validates an MDP file.
pub fn load_mdp(path: impl AsRef<Path>) -> Result<Mdp, MdpError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| MdpError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mdp = parse_mdp(&text)?;
    let report = validate_mdp(&mdp);
    if !report.passed() {
        return Err(MdpError::Invalid(report));
    }
    for w in &report.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(mdp)
}

pub fn to_json(mdp: &Mdp) -> String {
    serde_json::to_string_pretty(&mdp.to_file()).expect("model serializes")
}
