use std::fmt;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, CoreError>;

/// Errors across annotation loading, generation, serialization, and scoring.
#[derive(Debug)]
pub enum CoreError {
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// Malformed annotation, plan, template, or manifest input.
    Parse {
        path: String,
        line: Option<u64>,
        message: String,
    },
    /// The visibility filter left no eligible (image, class) pair.
    EmptyPool,
    /// A class is claimed by two categories in a hierarchy file.
    DuplicateClass {
        class: String,
        first_category: String,
        second_category: String,
    },
    UnknownCategory(String),
    /// A task spec violates its invariants or bounds.
    InvalidSpec(String),
    /// Rejection sampling exhausted its attempt budget.
    Infeasible {
        constraint: String,
        attempts: u32,
    },
    /// A template references a placeholder that cannot be resolved.
    Template {
        placeholder: String,
    },
    /// Manifest written by an incompatible format version.
    VersionMismatch {
        found: u32,
        supported: u32,
    },
    /// A parsed answer of one task kind was judged against another.
    KindMismatch {
        expected: String,
        got: String,
    },
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::Io { path, source } => {
                write!(f, "io error on {}: {source}", path.display())
            }
            CoreError::Parse {
                path,
                line,
                message,
            } => match line {
                Some(line) => write!(f, "parse error in {path} at line {line}: {message}"),
                None => write!(f, "parse error in {path}: {message}"),
            },
            CoreError::EmptyPool => {
                write!(f, "no eligible (image, class) pair survived the visibility filter")
            }
            CoreError::DuplicateClass {
                class,
                first_category,
                second_category,
            } => write!(
                f,
                "class '{class}' appears in both '{first_category}' and '{second_category}'"
            ),
            CoreError::UnknownCategory(name) => write!(f, "unknown category '{name}'"),
            CoreError::InvalidSpec(msg) => write!(f, "invalid task spec: {msg}"),
            CoreError::Infeasible {
                constraint,
                attempts,
            } => write!(
                f,
                "infeasible after {attempts} attempts; binding constraint: {constraint}"
            ),
            CoreError::Template { placeholder } => {
                write!(f, "unresolvable template placeholder '{{{placeholder}}}'")
            }
            CoreError::VersionMismatch { found, supported } => write!(
                f,
                "manifest format version {found} is not supported (expected {supported})"
            ),
            CoreError::KindMismatch { expected, got } => {
                write!(f, "answer kind mismatch: expected {expected}, got {got}")
            }
        }
    }
}

impl std::error::Error for CoreError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CoreError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl CoreError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, line: Option<u64>, message: impl Into<String>) -> Self {
        CoreError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
