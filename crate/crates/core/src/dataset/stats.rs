use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::manifest::DatasetManifest;

pub const BIN_WIDTH: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBin {
    /// Inclusive sample-count range covered by the bin.
    pub lo: usize,
    pub hi: usize,
    pub class_count: usize,
}

/// Distribution of classes by their number of samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassHistogram {
    /// Non-empty bins in ascending order: `[1-5]`, `[6-10]`, ...
    pub bins: Vec<HistogramBin>,
    pub num_classes: usize,
    pub num_samples: usize,
    /// Fraction of classes with at most 20 samples (0 when there are none).
    pub fraction_at_most_20: f64,
    pub classes_below_5: usize,
}

pub fn class_sizes(m: &DatasetManifest) -> Vec<usize> {
    let mut sizes = vec![0usize; m.num_classes()];
    for s in m.samples.iter().filter(|s| s.is_labeled()) {
        if let Some(c) = m.class_index(&s.character) {
            sizes[c] += 1;
        }
    }
    sizes
}

pub fn class_histogram(m: &DatasetManifest) -> ClassHistogram {
    histogram_from_sizes(&class_sizes(m))
}

pub fn histogram_from_sizes(sizes: &[usize]) -> ClassHistogram {
    let mut bins: BTreeMap<usize, usize> = BTreeMap::new();
    for &n in sizes.iter().filter(|&&n| n > 0) {
        *bins.entry((n - 1) / BIN_WIDTH).or_default() += 1;
    }
    let num_classes = sizes.iter().filter(|&&n| n > 0).count();
    let at_most_20 = sizes.iter().filter(|&&n| n > 0 && n <= 20).count();
    ClassHistogram {
        bins: bins
            .into_iter()
            .map(|(b, class_count)| HistogramBin { lo: b * BIN_WIDTH + 1, hi: (b + 1) * BIN_WIDTH, class_count })
            .collect(),
        num_classes,
        num_samples: sizes.iter().sum(),
        fraction_at_most_20: if num_classes == 0 { 0.0 } else { at_most_20 as f64 / num_classes as f64 },
        classes_below_5: sizes.iter().filter(|&&n| n > 0 && n < 5).count(),
    }
}
