use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("no utterances")]
    EmptyCorpus,

    #[error("out of range: {0}")]
    Domain(String),

    #[error("model file: {0}")]
    Format(String),

    #[error("unsupported model format version {found:?} (expected {expected:?})")]
    Version { found: String, expected: &'static str },

    #[error("model file truncated: {0}")]
    Truncated(String),

    #[error("exponent {exponent} exceeds the overflow bound; rescale lambda")]
    Overflow { exponent: f64 },

    #[error("feature {feature} is inactive under the model (all scaling coefficients are zero)")]
    FeatureInactive { feature: usize },

    #[error("scaling equation for feature {feature}: {msg}")]
    Solver { feature: usize, msg: String },

    #[error("feature set already carries a slack feature")]
    SlackPresent,

    #[error("log-likelihood decreased at iteration {iter}: {prev} -> {cur}")]
    NonMonotone { iter: usize, prev: f64, cur: f64 },

    #[error("engines disagree on {what}: max relative difference {max_rel:e}")]
    Mismatch { what: &'static str, max_rel: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}
