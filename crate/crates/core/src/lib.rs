//! Depth-based normalization and outlier detection for expression matrices.
//!
//! Samples are columns, features (genes or probes) are rows. The deepest
//! sample, found by repeatedly removing the farthest pair of sorted sample
//! curves, serves as the quantile-normalization reference; the same border
//! sequence drives a Tukey-style outlier rule whose factor is calibrated by
//! Monte Carlo.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod depth;
pub mod error;
pub mod io;
pub mod matrix;
pub mod normalize;
pub mod outlier;
pub mod pipeline;
pub mod plot;
pub mod simulate;
pub mod stats;

/// Seed used when none is given, so that runs are reproducible by default.
pub const DEFAULT_SEED: u64 = 20_190_101;

pub use depth::{extract_borders, BorderSequence, DepthResult, DistanceMatrix};
pub use error::{Error, Result};
pub use matrix::{ClassPartition, ExpressionMatrix};
pub use normalize::{NormalizeConfig, ReferenceCurve};
pub use outlier::{OutlierReport, TukeyCalibration};
pub use simulate::{SimulationConfig, StudyReport};
