//! Crate-wide error type.

use thiserror::Error;

/// Errors reported by the library.
///
/// `ParticleCollapse` is the one recoverable runtime failure of the smoother:
/// every particle received zero likelihood at some step. Callers may retry
/// with more particles; [`crate::smc::run_mgs`] does so once automatically.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument or input data (empty series, non-finite value, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// All particle weights vanished at step `t` (1-based).
    #[error(
        "particle collapse at t={t}: all {n_particles} weights are zero \
         (max log-weight {max_log_weight}, {n_observed_so_far} observed steps so far)"
    )]
    ParticleCollapse {
        t: usize,
        n_particles: usize,
        max_log_weight: f64,
        n_observed_so_far: usize,
    },

    /// A file could not be read or written.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A CSV file did not match the expected schema.
    #[error("schema mismatch in {path}: missing column `{column}`")]
    SchemaMismatch { path: String, column: String },

    /// A CSV record could not be parsed.
    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    /// The configuration file was invalid.
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
