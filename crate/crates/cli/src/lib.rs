//! Experiment front end for the `qcat` recursions: spec files, multi-seed
//! runs, CSV traces and summaries, and SVG figures.

pub mod aggregate;
pub mod commands;
mod error;
pub mod orchestrate;
pub mod spec;
pub mod svg;

pub use error::CliError;
