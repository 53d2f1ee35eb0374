use std::path::PathBuf;

use ecflow_core::diffusion::DiffusionError;
use ecflow_core::oracle::DatasetError;
use thiserror::Error;

/// Exit-code table printed by `--help`.
pub const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage: bad flag, config key or value
  3  missing input file or directory
  4  input fails format validation (parse, shape, checksum, model header)
  5  degenerate step: no usable points (rerun with --skip-degenerate to carry poses forward)
  6  solver, kinematics or scene-generation failure
  7  training diverged or produced non-finite values
  8  cannot write output";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("format error in {}: {detail}", .path.display())]
    Format { path: PathBuf, detail: String },
    #[error("action-solver: scene {scene}, step {step}: no usable points")]
    Degenerate { scene: usize, step: usize },
    #[error("{module}: {context}: {detail}")]
    Module {
        module: &'static str,
        context: String,
        detail: String,
    },
    #[error("flow-diffusion: training failed: {0}")]
    Training(String),
    #[error("cannot write {}: {source}", .path.display())]
    Output { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::MissingInput(_) => 3,
            CliError::Format { .. } => 4,
            CliError::Degenerate { .. } => 5,
            CliError::Module { .. } => 6,
            CliError::Training(_) => 7,
            CliError::Output { .. } => 8,
        }
    }

    pub fn format(path: impl Into<PathBuf>, detail: impl ToString) -> Self {
        CliError::Format { path: path.into(), detail: detail.to_string() }
    }

    pub fn module(module: &'static str, context: impl ToString, detail: impl ToString) -> Self {
        CliError::Module { module, context: context.to_string(), detail: detail.to_string() }
    }

    pub fn from_dataset(dir: &std::path::Path, err: DatasetError) -> Self {
        match err {
            DatasetError::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::MissingInput(path)
            }
            DatasetError::Io { path, source } => CliError::format(path, source),
            other => CliError::format(dir, other),
        }
    }

    pub fn from_model(path: &std::path::Path, err: DiffusionError) -> Self {
        match err {
            DiffusionError::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::MissingInput(path)
            }
            DiffusionError::NonfiniteLoss | DiffusionError::DivergedLoss { .. } => CliError::Training(err.to_string()),
            other => CliError::format(path, other),
        }
    }
}

/// Fails with [`CliError::MissingInput`] unless `path` exists.
pub fn require(path: &std::path::Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingInput(path.to_path_buf()))
    }
}

pub fn write(path: &std::path::Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|source| CliError::Output { path: path.to_path_buf(), source })
}

pub fn create_dir(path: &std::path::Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Output { path: path.to_path_buf(), source })
}

pub fn read_text(path: &std::path::Path) -> Result<String, CliError> {
    require(path)?;
    std::fs::read_to_string(path).map_err(|e| CliError::format(path, e))
}

pub fn read_bytes(path: &std::path::Path) -> Result<Vec<u8>, CliError> {
    require(path)?;
    std::fs::read(path).map_err(|e| CliError::format(path, e))
}
