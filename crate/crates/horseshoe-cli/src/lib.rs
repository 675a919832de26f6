//! Experiment runner for the horseshoe laboratory: run configuration,
//! content-addressed result cache, command implementations and the
//! acceptance suite.

pub mod cache;
pub mod commands;
pub mod config;
pub mod suite;

/// Part of every cache key, so results from other builds are never reused.
pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), "-", env!("CARGO_PKG_VERSION"), "/cache-1");
