use gluing_core::Stage;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] gluing_core::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("acceptance: {failed} of {total} criteria failed")]
    AcceptFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit status, distinct per stage.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e.stage() {
                Stage::Params => 2,
                Stage::Kernel | Stage::Operator => 3,
                Stage::Delaunay => 4,
                Stage::Interactions => 5,
                Stage::Balance => 6,
                Stage::Reduce => 7,
                Stage::Assemble => 8,
            },
            CliError::AcceptFailed { .. } => 9,
            CliError::Config(_) => 10,
            CliError::Io { .. } => 11,
        }
    }

    pub fn code(&self) -> String {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Config(_) => "config.invalid".into(),
            CliError::Io { .. } => "io.failed".into(),
            CliError::AcceptFailed { .. } => "accept.failed".into(),
        }
    }

    /// Single line: `error[code]: message`.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error[{}]: {}", self.code(), msg)
    }
}
