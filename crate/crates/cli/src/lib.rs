//! Command-line driver for the dtslpm engine: configuration, count CSV
//! ingestion, and the simulate / fit / summarize / diagnose pipeline.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod io;
