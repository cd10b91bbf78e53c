//! Configuration-driven runs, reference caching, benchmarks and tables for
//! the solheat solvers.

pub mod bench;
pub mod config;
pub mod csv;
pub mod presets;
pub mod reference;
pub mod runner;
pub mod tables;

use std::path::{Path, PathBuf};

pub use config::{load_config, parse_config, ConfigError, Problem, RunConfig};
pub use reference::ReferenceCache;
pub use runner::{run, run_with, RunOptions};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(#[from] solheat_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Data { path: PathBuf, message: String },
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 1 for configuration and input problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(solheat_core::Error::InvalidArgument(_)) => 1,
            CliError::Numerical(_) => 2,
            _ => 1,
        }
    }
}
