//! Machine-readable failure payloads and process exit codes.
//!
//! Exit codes: 0 success, 1 internal error, 2 case/config error,
//! 3 empty seed set.

use feasbound::{BoundaryError, CaseError, OracleError, TraceError};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
    #[serde(skip)]
    pub exit_code: i32,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self { kind: "ConfigError", message: message.into(), exit_code: 2 }
    }

    pub fn case(err: impl std::fmt::Display) -> Self {
        Self { kind: "ParseError", message: err.to_string(), exit_code: 2 }
    }

    pub fn internal(err: impl std::fmt::Display) -> Self {
        Self { kind: "Internal", message: err.to_string(), exit_code: 1 }
    }

    pub fn io(err: std::io::Error) -> Self {
        Self { kind: "IoError", message: err.to_string(), exit_code: 1 }
    }

    pub fn seeds(err: BoundaryError) -> Self {
        match err {
            BoundaryError::EmptySeedSet { .. } => {
                Self { kind: "EmptySeedSet", message: err.to_string(), exit_code: 3 }
            }
            BoundaryError::Case(e) => Self::case(e),
            other => Self::internal(other),
        }
    }

    /// Print the error JSON to stdout and return the exit code.
    pub fn report(&self) -> i32 {
        let payload = serde_json::json!({ "error": self });
        println!("{}", serde_json::to_string_pretty(&payload).unwrap());
        self.exit_code
    }
}

impl From<CaseError> for Failure {
    fn from(err: CaseError) -> Self {
        Self::case(err)
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Self::io(err)
    }
}

impl From<TraceError> for Failure {
    fn from(err: TraceError) -> Self {
        Self::internal(err)
    }
}

impl From<OracleError> for Failure {
    fn from(err: OracleError) -> Self {
        Self::internal(err)
    }
}
