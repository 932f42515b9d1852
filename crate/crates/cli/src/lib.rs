//! The `texface` command-line tool: stage commands over files, the full
//! pipeline with a hashed artifact manifest, database building, and
//! evaluation sweeps.

pub mod app;
pub mod config;
pub mod error;
pub mod eval;
pub mod fixture;
pub mod stages;
pub mod tools;

pub use error::{CliError, CliResult};
