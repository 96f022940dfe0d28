//! File formats, run configuration, the training loop and the `sens-asr`
//! command-line tool built on `sens-asr-core`.

pub mod binio;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod manifest;
pub mod teacher;
pub mod training;

pub use error::{CliError, Result};
