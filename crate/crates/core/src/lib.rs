//! Texture descriptors and classifiers for grayscale identification images.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`dataset`] scans a subject-per-directory corpus and splits it per subject.
//! 2. [`image`] decodes PGM/PNG, equalizes and resizes.
//! 3. [`features`] computes LBP, LPQ, Log-Gabor and wavelet descriptors.
//! 4. [`fusion`] z-scores and concatenates descriptor pairs.
//! 5. [`classify`] (k-NN and SVM) and [`eval`] score the result.
//!
//! [`experiment`] ties them into configurable runs, and [`synth`] makes seeded
//! texture corpora for trying things out.
//!
//! ```
//! use veintex::features::{lbp_descriptor, lpq_descriptor};
//! use veintex::image::GrayImage;
//!
//! let img = GrayImage::constant(16, 16, 0.5).unwrap();
//! let lbp = lbp_descriptor(&img).unwrap();
//! assert_eq!(lbp.dim(), 256);
//! assert_eq!(lbp.values()[255], 1.0);
//! let lpq = lpq_descriptor(&img, 7).unwrap();
//! assert_eq!(lpq.values()[255], 1.0);
//! ```

pub mod classify;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod fusion;
pub mod image;
pub mod synth;

pub use error::{Error, Result};
