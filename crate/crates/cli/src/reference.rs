//! Fine-mesh explicit reference solutions, cached on disk by configuration hash.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use solheat_core::{MeshField, Scheme};

use crate::config::{
    to_text, OutputConfig, Problem, ReferenceSpec, RunConfig, TimeStep, DEFAULT_CFL_FRACTION,
    DEFAULT_REFERENCE_NS_1D, DEFAULT_REFERENCE_N_2D,
};
use crate::csv::{field_from_csv, field_to_csv};
use crate::runner::{run_with, RunOptions};
use crate::CliError;

/// Environment variable naming the reference cache directory.
pub const CACHE_ENV: &str = "SOLHEAT_CACHE_DIR";
/// Used when [`CACHE_ENV`] is unset.
pub const DEFAULT_CACHE_DIR: &str = ".solheat-cache";

/// Bumped whenever a change would alter cached reference fields.
const CACHE_VERSION: &str = "solheat-reference-v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceCache {
    pub dir: PathBuf,
}

/// Mesh sizes of the reference for `cfg`.
pub fn reference_dims(cfg: &RunConfig) -> (usize, usize) {
    match cfg.reference {
        Some(ReferenceSpec::Auto { ns, nr }) => (ns, nr),
        _ if cfg.problem.is_2d() => (DEFAULT_REFERENCE_N_2D, DEFAULT_REFERENCE_N_2D),
        _ => (DEFAULT_REFERENCE_NS_1D, 1),
    }
}

/// Explicit run with the physics of `cfg` on the reference mesh.
pub fn reference_config(cfg: &RunConfig) -> Result<RunConfig, CliError> {
    let problem = match cfg.problem {
        Problem::OneD => Problem::OneD,
        Problem::TwoD | Problem::TwoDUnsplit => Problem::TwoD,
        Problem::Coupled => {
            return Err(crate::config::ConfigError::InvalidValue {
                key: "problem".into(),
                reason: "no reference solver for the coupled problem".into(),
            }
            .into())
        }
    };
    let (ns, nr) = reference_dims(cfg);
    Ok(RunConfig {
        name: format!("reference-{problem}-{ns}x{nr}"),
        problem,
        scheme: Scheme::Explicit,
        ns,
        nr,
        dt: TimeStep::Cfl(DEFAULT_CFL_FRACTION),
        output: OutputConfig {
            dir: None,
            stride: 0,
            snapshots: Vec::new(),
        },
        reference: None,
        ..cfg.clone()
    })
}

/// Hex SHA-256 of the canonical reference configuration; solver tolerances
/// do not enter an explicit run and are left out.
pub fn cache_key(reference: &RunConfig) -> String {
    let canonical: String = to_text(reference)
        .lines()
        .filter(|l| !["name ", "newton.", "cg."].iter().any(|p| l.starts_with(p)))
        .map(|l| format!("{l}\n"))
        .collect();
    let digest = Sha256::digest(format!("{CACHE_VERSION}\n{canonical}").as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn read_field(path: &Path) -> Result<MeshField, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    field_from_csv(&text).map_err(|message| CliError::Data {
        path: path.to_path_buf(),
        message,
    })
}

impl ReferenceCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// Directory from [`CACHE_ENV`], else [`DEFAULT_CACHE_DIR`].
    pub fn from_env() -> Self {
        match std::env::var_os(CACHE_ENV) {
            Some(d) if !d.is_empty() => Self::new(d),
            _ => Self::new(DEFAULT_CACHE_DIR),
        }
    }

    pub fn path_for(&self, cfg: &RunConfig) -> Result<PathBuf, CliError> {
        let reference = reference_config(cfg)?;
        Ok(self.dir.join(format!("{}-{}.csv", reference.name, &cache_key(&reference)[..16])))
    }

    /// Reference field for `cfg`, computing and storing it on a cache miss.
    /// Returns the field, its cache path and whether it was already cached.
    pub fn load_or_compute(&self, cfg: &RunConfig, progress: bool) -> Result<(MeshField, PathBuf, bool), CliError> {
        let path = self.path_for(cfg)?;
        if path.exists() {
            return Ok((read_field(&path)?, path, true));
        }
        let reference = reference_config(cfg)?;
        let report = run_with(
            &reference,
            &RunOptions {
                cache: None,
                progress,
                no_output: true,
            },
        )?;
        let field = report.fields.into_iter().next().expect("one field").1;
        std::fs::create_dir_all(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        std::fs::write(&tmp, field_to_csv(&field)).map_err(|e| CliError::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))?;
        Ok((field, path, false))
    }
}
