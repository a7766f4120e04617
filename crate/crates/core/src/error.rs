use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mesh parse error at line {line}: {message}")]
    MeshParse { line: usize, message: String },

    #[error("invalid mesh: {0}")]
    MeshStructure(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular matrix: pivot {pivot} below threshold")]
    SingularMatrix { pivot: usize },

    #[error("rhs for member {member} has length {found}, expected {expected}")]
    RhsDimension {
        member: usize,
        found: usize,
        expected: usize,
    },

    #[error(
        "timestep {dt:e} fell below dt_min {dt_min:e} at t = {t}; worst member {member} \
         has CFL value {value:e}"
    )]
    TimestepUnderflow {
        dt: f64,
        dt_min: f64,
        t: f64,
        member: usize,
        value: f64,
    },

    /// `line` 0 stands for a command-line override.
    #[error("solution diverged at t = {t} (step {step}): {what}")]
    Diverged { t: f64, step: usize, what: String },

    #[error("config error {}, key `{key}`: {message}", config_location(*.line))]
    Config {
        line: usize,
        key: String,
        message: String,
    },

    #[error("{}: line {line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn config_location(line: usize) -> String {
    if line == 0 {
        "on the command line".to_string()
    } else {
        format!("at line {line}")
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
