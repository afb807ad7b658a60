//! Fully dispersed Haar-like filters.
//!
//! A fully dispersed filter is a pair of disjoint pixel sets (black and
//! white) chosen anywhere in a fixed-size window. Its feature value is the
//! difference between the mean intensity on the white set and the mean
//! intensity on the black set. This crate builds such filters from the
//! difference of (weighted) class mean images, refines them by iterative
//! sample reweighting, and composes three of them into a sliding-window
//! face detector.
//!
//! Module map:
//!
//! - [`imaging`]: load, normalize, resize, equalize and vectorize images.
//! - [`filter`]: masks, feature values, mask construction, threshold search.
//! - [`training`]: the reweighting loop (hard and soft updates).
//! - [`locality`]: region-restricted (local and semi-local) filters.
//! - [`detection`]: composite classification and multi-scale detection.
//! - [`evaluation`]: dataset splitting, confusion rates and ROC curves.
//! - [`model`]: JSON model persistence.
//! - [`synth`]: deterministic synthetic datasets.
//! - [`cli`]: the `dhaar` command-line surface.

pub mod cli;
pub mod detection;
pub mod error;
pub mod evaluation;
pub mod filter;
pub mod imaging;
pub mod locality;
pub mod model;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
pub use filter::{FilterMask, Label, RegionWeights, TrainedClassifier};
pub use imaging::{GrayImage, ImageVector};
pub use training::{SampleWeights, TrainingConfig, UpdateRule};
