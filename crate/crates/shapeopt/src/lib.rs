//! File formats, run configuration and the command-line driver on top of
//! `shapeopt-core`.

pub use shapeopt_core as core;

pub mod commands;
pub mod config;
pub mod export;
