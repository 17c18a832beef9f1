//! Unsupervised intrusion detection for UAV flight telemetry.
//!
//! The pipeline turns raw flight logs into fixed-width feature matrices,
//! trains an autoencoder on benign flights only, and flags time windows
//! whose reconstruction loss exceeds a threshold calibrated on benign data:
//!
//! 1. [`telemetry`] — parse long-format logs and attack annotations.
//! 2. [`selection`] — keep hardware-generic, stable features.
//! 3. [`engineering`] — pool measurements into 500 ms windows and scale
//!    them to the unit interval.
//! 4. [`autoencoder`] — train a reconstruction model on benign windows.
//! 5. [`detector`] — calibrate a loss threshold and classify windows.

pub mod autoencoder;
pub mod detector;
pub mod engineering;
pub mod error;
pub mod linalg;
pub mod seeding;
pub mod selection;
pub mod synthetic;
pub mod telemetry;

pub use error::{Error, Result};
