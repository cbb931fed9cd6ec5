//! Driving-behavior indicator library.
//!
//! Computes objective lateral driving behavior indicators from vehicle
//! time-series traces (kinematic statistics, G-G acceleration envelopes,
//! curve-cutting gradients, transient trajectory classification), scores
//! MDSI questionnaire responses into driving-style factors, and correlates
//! factor scores against the indicators with partial Pearson correlations.

pub mod correlation;
pub mod curves;
pub mod envelope;
pub mod error;
pub mod format;
pub mod ingest;
pub mod kinematics;
pub mod mdsi;
pub mod pca;
pub mod stationary;
pub mod stats;
pub mod transient;

pub use error::{Error, Result};
