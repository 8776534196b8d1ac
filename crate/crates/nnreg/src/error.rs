use std::fmt;
use std::path::{Path, PathBuf};

/// Failure categories; each maps to a distinct process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    Config,
    Io,
    Format,
    Solver,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::Config => "config",
            Category::Io => "io",
            Category::Format => "format",
            Category::Solver => "solver",
        }
    }

    /// Exit code; 2 is left to the argument parser.
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Config => 3,
            Category::Io => 4,
            Category::Format => 5,
            Category::Solver => 6,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("{context}: {source}")]
    Solver {
        context: String,
        #[source]
        source: nnreg_core::Error,
    },
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn category(&self) -> Category {
        match self {
            CliError::Config(_) => Category::Config,
            CliError::Io { .. } => Category::Io,
            CliError::Format { .. } => Category::Format,
            CliError::Solver { .. } => Category::Solver,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, message: impl fmt::Display) -> Self {
        CliError::Format {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    /// One-line JSON document for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": {
                "category": self.category().name(),
                "exit_code": self.category().exit_code(),
                "message": self.to_string(),
            }
        })
        .to_string()
    }
}

/// Attaches context to core errors.
pub trait SolverContext<T> {
    fn solver_ctx(self, context: impl FnOnce() -> String) -> Result<T>;
}

impl<T> SolverContext<T> for nnreg_core::Result<T> {
    fn solver_ctx(self, context: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| CliError::Solver {
            context: context(),
            source,
        })
    }
}
