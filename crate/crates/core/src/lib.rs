//! Recognition of image quality degradation from single grayscale frames.
//!
//! The pipeline runs in three steps:
//!
//! 1. [`filter::compute_fields`] derives six per-pixel quantities from a
//!    [`GrayImage`]: the intensities, the local mean subtracted field, the
//!    local contrast field, a Laplacian, MSCN coefficients and products of
//!    neighbouring MSCN coefficients.
//! 2. [`features::extract_features`] reduces them to 20 signed moments.
//! 3. [`svm::SvmModel`] standardizes the moments and classifies them with
//!    one-vs-one RBF support vector machines.
//!
//! [`dataset`] handles manifests, splits, feature caches and evaluation
//! reports; [`synth`] generates labelled degradation corpora from clean
//! base images.

pub mod dataset;
pub mod error;
pub mod features;
pub mod field;
pub mod filter;
pub mod image;
pub mod svm;
pub mod synth;

pub use error::{Error, Result};
pub use features::{extract_features, FeatureVector, Standardizer, FEATURE_COUNT, FEATURE_NAMES};
pub use field::Field;
pub use filter::{compute_fields, FilterConfig, FilterFieldSet};
pub use image::{load_image, GrayImage};

/// Loads an image and computes its feature vector.
pub fn image_features(path: impl AsRef<std::path::Path>, cfg: &FilterConfig) -> Result<FeatureVector> {
    let img = load_image(path)?;
    extract_features(&compute_fields(&img, cfg)?)
}
