use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::{DatasetManifest, Split};
use crate::error::{Error, Result};

/// Seeded per-class train/test split.
///
/// Each class is shuffled independently (classes visited in class-index
/// order, one RNG stream) and `round(n * test_fraction)` of its samples go
/// to test, clamped so that a class with at least two samples lands on both
/// sides. Singleton classes stay in train.
pub fn stratified_split(m: &DatasetManifest, test_fraction: f64, seed: u64) -> Result<DatasetManifest> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::config(format!("test fraction {test_fraction} not in (0, 1)")));
    }
    if let Some(s) = m.samples.iter().find(|s| !s.is_labeled()) {
        return Err(Error::UnlabeledSamplePresent(s.id.clone()));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); m.num_classes()];
    for (i, s) in m.samples.iter().enumerate() {
        by_class[m.label_of(s)?].push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = m.clone();
    for members in &mut by_class {
        members.shuffle(&mut rng);
        let n = members.len();
        let n_test = if n >= 2 { ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1) } else { 0 };
        for (k, &i) in members.iter().enumerate() {
            out.samples[i].split = if k < n_test { Split::Test } else { Split::Train };
        }
    }
    Ok(out)
}
