//! Threshold selection for multivariate heavy-tailed data.
//!
//! Above a good radial threshold the radius and angle of a regularly varying
//! vector are close to independent. For each candidate level the library
//! tests that independence with a subsampled distance-covariance statistic,
//! averages the p-values into a path, segments the path with wild binary
//! segmentation and picks the level where the fit falls below a cutoff.

pub mod angular;
pub mod changepoint;
pub mod datagen;
pub mod dcov;
pub mod error;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod pvalpath;
pub mod rng;
pub mod sample;
pub mod stats;

pub use angular::{
    angular_ecdf, angular_kde, logistic_angular_density, AngularEstimate, Bandwidth,
    LogisticAngular,
};
pub use changepoint::{
    cusum_argmax, select_threshold, wbs_fit, Outcome, Rule, SegmentedFit, SelectionResult,
    Threshold, WbsParams,
};
pub use datagen::{GeneratorSpec, Model};
pub use dcov::{conditional_dcov, dcov_fast, dcov_naive, DCovInput, DCovValue};
pub use error::{Error, Result};
pub use geometry::{rank_transform, to_polar, NormSpec, PolarSample};
pub use io::ingest_csv;
pub use pipeline::{norm_sensitivity, run_pipeline, Grid, Input, RunConfig, RunOutput};
pub use pvalpath::{compute_path, quantile_grid, PValuePath, PathConfig, Sampling};
pub use sample::Sample;
