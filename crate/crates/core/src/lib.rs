//! Online estimation of the one-step conditional expectation of a stationary
//! real-valued time series, issued at recurrence stopping times.
//!
//! Predicting the conditional mean at *every* step of an unknown stationary
//! process is impossible in the pointwise sense, so this crate takes the
//! intermittent route: quantize the series with a refining family of nested
//! interval partitions, wait until the current quantized block of growing
//! length recurs, and predict only at those data-chosen stopping times. The
//! prediction is the running average of the samples that followed each
//! earlier stopping time. Under mild conditions the averages track the true
//! conditional expectation along the stopping sequence, and with finite
//! partitions the stopping times grow no faster than an explicit ceiling.
//!
//! The pieces:
//! - [`partitions`]: nested dyadic interval families and exact-alphabet
//!   quantizers; block equality is by cell identity.
//! - [`stopping`]: the forward recurrence scanner, the block-length (lag)
//!   schedule, and the backward scanner used as an exact cross-check.
//! - [`estimator`]: the push-driven running-average predictor.
//! - [`processes`]: i.i.d., finite Markov, and binary-odometer sources, each
//!   with an exact conditional-expectation oracle.
//! - [`analysis`]: past-weighted sequence distance, growth ceilings,
//!   two-sample statistics, and error-curve aggregation.
//! - [`config`], [`runner`], [`report`], [`cli`]: the reproducible
//!   multi-seed experiment harness.
//!
//! Numeric code is generic over [`Scalar`] (any `num-traits` float); the
//! harness and the CLI fix [`Real`] = `f64`.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod estimator;
pub mod partitions;
pub mod processes;
pub mod report;
pub mod runner;
pub mod scalar;
pub mod stopping;

pub use scalar::Scalar;

/// Scalar type used by the harness, the CLI, and the presets.
pub type Real = f64;

/// Partition family over the default scalar.
pub type RealPartitionFamily = partitions::PartitionFamily<Real>;
/// Process model over the default scalar.
pub type RealProcessModel = processes::ProcessModel<Real>;
/// Estimator over the default scalar.
pub type RealEstimator = estimator::Estimator<Real>;
/// Scanner over the default scalar.
pub type RealScanner = stopping::ScannerState<Real>;
