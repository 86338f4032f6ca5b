//! Recognition toolkit for small, class-imbalanced handwritten glyph
//! datasets: annotation model, texture descriptors with a linear SVM,
//! convolutional classifiers trained from scratch, and decision-level
//! fusion of their class posteriors.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod fusion;
pub mod image;
pub mod nn;
pub mod svm;

pub use error::{Error, Result};
pub use image::GrayImage;
