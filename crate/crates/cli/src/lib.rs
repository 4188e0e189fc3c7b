//! Project files, the `gdoe` command line and the local HTTP service.

pub mod cli;
pub mod error;
pub mod ops;
pub mod project;
pub mod service;

pub use error::{AppError, AppResult, ErrorKind};
pub use project::{Project, SCHEMA_VERSION};
