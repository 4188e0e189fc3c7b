use std::fmt;

use serde::Serialize;

/// How a failure is reported: exit code on the command line, status code
/// over HTTP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Validation,
    NotFound,
    Conflict,
    Flagged,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppError {
    pub kind: ErrorKind,
    /// Machine-readable identifier, e.g. `missing_model`.
    pub code: String,
    pub message: String,
}

impl AppError {
    pub fn new(kind: ErrorKind, code: &str, message: impl Into<String>) -> Self {
        Self {
            kind,
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn validation(code: &str, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Validation, code, message)
    }

    pub fn not_found(code: &str, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::NotFound, code, message)
    }

    pub fn conflict(code: &str, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Conflict, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Internal, "internal", message)
    }

    /// A step of the workflow that has not been run yet.
    pub fn missing(what: &str, step: &str) -> Self {
        Self::not_found(
            &format!("missing_{what}"),
            format!("no {} in the project; run `gdoe {step}` first", what.replace('_', " ")),
        )
    }

    /// 0 success, 1 validation, 2 flagged design, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Validation | ErrorKind::NotFound | ErrorKind::Conflict => 1,
            ErrorKind::Flagged => 2,
            ErrorKind::Internal => 3,
        }
    }

    pub fn status(&self) -> u16 {
        match self.kind {
            ErrorKind::Validation | ErrorKind::Flagged => 422,
            ErrorKind::NotFound => 404,
            ErrorKind::Conflict => 409,
            ErrorKind::Internal => 500,
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for AppError {}

impl From<gdoe_core::Error> for AppError {
    fn from(e: gdoe_core::Error) -> Self {
        use gdoe_core::Error as E;
        let code = match &e {
            E::Size { .. } => "design_too_large",
            E::Validation(_) => "invalid",
            E::UnknownFactor(_) => "unknown_factor",
            E::Syntax { .. } => "constraint_syntax",
            E::ConstraintType(_) => "constraint_type",
            E::Evaluation(_) => "constraint_evaluation",
            E::Shape { .. } => "shape_mismatch",
            E::NonFinite { .. } => "non_finite",
            E::Diverged { .. } => "training_diverged",
            E::Domain(_) => "out_of_domain",
            E::InsufficientReplicates(_) => "insufficient_replicates",
            E::Triangulation(_) => "triangulation",
            E::Degenerate(_) => "degenerate",
            E::Csv(_) => "csv",
            E::Io(_) | E::Json(_) => {
                return Self::internal(e.to_string());
            }
        };
        Self::validation(code, e.to_string())
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        Self::internal(e.to_string())
    }
}

impl From<serde_json::Error> for AppError {
    fn from(e: serde_json::Error) -> Self {
        Self::internal(e.to_string())
    }
}

impl From<csv::Error> for AppError {
    fn from(e: csv::Error) -> Self {
        Self::internal(e.to_string())
    }
}

pub type AppResult<T> = Result<T, AppError>;
