//! Ingestion, file formats and the command-line pipeline for ARNN.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod report;
pub mod store;

pub use error::{AppError, Result};
