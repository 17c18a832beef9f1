//! Command-line pipeline for the window-based flight anomaly detector.
//!
//! The library half hosts the TOML configuration model, the five command
//! implementations, and a small SVG renderer; the `uav-ids` binary is a
//! thin clap wrapper around them.

pub mod commands;
pub mod config;
pub mod svg;
