//! Public-space utilization profiling from PoI sensor count streams.
//!
//! The pipeline turns raw 5-minute people counts into generic daily
//! profiles, clusters sensors per day type with a multi-feature spectral
//! method, grades each cluster's activeness and contrasts active and
//! less-active PoIs on their static surroundings.

pub mod activeness;
pub mod config;
pub mod error;
pub mod ingest;
pub mod kmeans;
pub mod metrics;
pub mod pipeline;
pub mod plots;
pub mod profiling;
pub mod similarity;
pub mod spectral;
pub mod staticfeat;
pub mod synth;

pub use error::{Error, Result};
