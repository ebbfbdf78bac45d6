//! Frequency-domain segmentation of multivariate time series.
//!
//! Given a p-dimensional stationary series, this crate looks for a linear
//! change of coordinates under which the series splits into groups that are
//! uncorrelated with each other at every lag. The estimate proceeds in the
//! frequency domain:
//!
//! 1. smooth the periodogram into a spectral density matrix estimate
//!    ([`spectral`]),
//! 2. eigendecompose the frequency-averaged real part and rotate the series
//!    into those coordinates,
//! 3. test every coordinate pair for nonzero coherence, adjust the p-values
//!    for multiplicity, and read groups off the resulting graph
//!    ([`segmentation`]).
//!
//! [`metrics`] scores estimated structures against known ground truth,
//! [`simgen`] generates benchmark datasets and runs replication studies,
//! and [`forecasting`] exploits a recovered segmentation by forecasting
//! each group separately.

pub mod error;
pub mod forecasting;
pub mod metrics;
pub mod segmentation;
pub mod series;
pub mod simgen;
pub mod spectral;
pub mod stats;

mod linalg;

pub use error::{Error, Result};
pub use segmentation::{segment, SegmentConfig, SegmentationResult};
pub use series::{load_csv, write_csv, FrequencyBand, MultivariateSeries};
pub use spectral::{smooth_spectral, KernelFamily, KernelSpec};
