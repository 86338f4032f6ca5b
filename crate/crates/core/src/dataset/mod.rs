//! Glyph dataset model: annotation indices, manifests, splits, class
//! statistics, augmentation and the synthetic stand-in corpus.

pub mod augment;
pub mod index;
pub mod manifest;
pub mod split;
pub mod stats;
pub mod synth;

pub use augment::{augment, AugmentDraw, AugmentSpec};
pub use index::{format_index, parse_index, AnnotationIndex};
pub use manifest::{load_manifest, parse_manifest, DatasetManifest, Sample, Split};
pub use split::stratified_split;
pub use stats::{class_histogram, ClassHistogram, HistogramBin};
pub use synth::generate_synthetic;
