use std::path::{Path, PathBuf};

use thiserror::Error;

/// Error type shared across the pipeline.
///
/// Variants map onto the process exit codes used by the CLI:
/// configuration problems exit with 1, data problems with 2 and
/// numerical failures with 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),

    #[error("data: {0}")]
    Data(String),

    #[error("data: {path}:{line}: {msg}")]
    DataAt {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("numerical: {0}")]
    Numerical(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn data_at(path: impl AsRef<Path>, line: usize, msg: impl Into<String>) -> Self {
        Error::DataAt {
            path: path.as_ref().to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code for this error class: 1 config, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Data(_) | Error::DataAt { .. } | Error::Io { .. } => 2,
            Error::Numerical(_) => 3,
        }
    }

    /// Tag the error with the module it came from, keeping its class.
    pub fn in_module(self, module: &str) -> Error {
        let tag = format!("[{module}]");
        match self {
            Error::Config(m) => Error::Config(format!("{tag} {m}")),
            Error::Data(m) => Error::Data(format!("{tag} {m}")),
            Error::DataAt { path, line, msg } => Error::DataAt {
                path,
                line,
                msg: format!("{tag} {msg}"),
            },
            Error::Numerical(m) => Error::Numerical(format!("{tag} {m}")),
            e @ Error::Io { .. } => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_class() {
        assert_eq!(Error::config("x").exit_code(), 1);
        assert_eq!(Error::data("x").exit_code(), 2);
        assert_eq!(Error::data_at("f", 3, "x").exit_code(), 2);
        assert_eq!(Error::numerical("x").exit_code(), 3);
    }
}
