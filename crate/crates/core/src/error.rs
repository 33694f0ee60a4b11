use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type for the lab.
///
/// Errors split into two families that map onto process exit codes:
/// contract violations (bad shapes, bad config, bad data — exit code 2) and
/// numerical failures (non-finite values, divergence — exit code 3).
#[derive(Error, Debug)]
pub enum Error {
    /// An operation was handed tensors whose shapes do not conform.
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A computation produced NaN or infinity.
    #[error("non-finite values detected in {context}")]
    NonFinite { context: String },

    /// A numerical procedure failed (divergence, invalid domain, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A caller violated an interface contract (wrong split, unknown id, ...).
    #[error("{0}")]
    Contract(String),

    /// Configuration could not be parsed or validated.
    #[error("config error: {0}")]
    Config(String),

    /// A data file exists but its contents are malformed.
    #[error("malformed data in {path}: {detail}")]
    DataFormat { path: String, detail: String },

    /// Filesystem failure, annotated with the path involved.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn io_path(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn data_format(path: &std::path::Path, detail: impl Into<String>) -> Self {
        Error::DataFormat {
            path: path.display().to_string(),
            detail: detail.into(),
        }
    }

    /// Process exit code for the CLI: 2 for contract errors, 3 for numerical
    /// failures (0 is success and never reaches this function).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. } | Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_split_contract_from_numerical() {
        assert_eq!(Error::contract("bad split").exit_code(), 2);
        assert_eq!(Error::shape("matmul", "2x3 vs 4x5").exit_code(), 2);
        assert_eq!(Error::non_finite("loss").exit_code(), 3);
        assert_eq!(Error::Numerical("diverged".into()).exit_code(), 3);
    }

    #[test]
    fn shape_error_names_op_and_shapes() {
        let msg = Error::shape("matmul", "lhs 2x3, rhs 4x5").to_string();
        assert!(msg.contains("matmul"));
        assert!(msg.contains("2x3"));
        assert!(msg.contains("4x5"));
    }
}
