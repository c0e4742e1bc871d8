use std::path::{Path, PathBuf};

use fao::ErrorClass;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] fao::Error),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_owned(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            CliError::Core(e) => e.class(),
            CliError::Io { .. } => ErrorClass::Io,
            CliError::Usage(_) => ErrorClass::Usage,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.class().exit_code()
    }

    /// `error class=<name> code=<n> message="<json-escaped text>"`
    pub fn diagnostic(&self) -> String {
        let class = self.class();
        let message = serde_json::to_string(&self.to_string()).expect("strings serialize");
        format!("error class={} code={} message={message}", class.name(), class.exit_code())
    }
}
