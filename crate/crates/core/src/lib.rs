//! Age-group and gender classification from ear images.
//!
//! Two routes are provided:
//!
//! * geometric: eight hand-placed landmarks → 16 distance/area features
//!   ([`geometry`]) → one of four classical classifiers ([`tabular`]);
//! * appearance: a deterministic 55-variant augmentation engine
//!   ([`augment`]) feeding a small convolutional network trained with
//!   two-stage fine-tuning ([`tinycnn`]).
//!
//! [`dataset`] handles subject records, age binning, and stratified
//! subject-independent splits; [`synthetic`] generates landmark sets and
//! ear-silhouette images for benchmarks.

pub mod augment;
pub mod dataset;
pub mod fsutil;
pub mod geometry;
pub mod numeric;
pub mod rng;
pub mod synthetic;
pub mod tabular;
pub mod tinycnn;
