use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::image::GrayImage;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// `confusion[truth][predicted]`
    pub confusion: Vec<Vec<usize>>,
    /// Zero for classes absent from the evaluated split.
    pub per_class_recall: Vec<f64>,
    pub n_evaluated: usize,
}

impl Metrics {
    pub fn from_predictions(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::LengthMismatch { expected: truth.len(), actual: predicted.len() });
        }
        if truth.is_empty() {
            return Err(Error::EmptySplit("no predictions".into()));
        }
        let mut confusion = vec![vec![0usize; classes]; classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= classes || p >= classes {
                return Err(Error::LengthMismatch { expected: classes, actual: t.max(p) + 1 });
            }
            confusion[t][p] += 1;
        }
        let n = truth.len();
        let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
        let per_class_recall = confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let total: usize = row.iter().sum();
                if total == 0 {
                    0.0
                } else {
                    row[c] as f64 / total as f64
                }
            })
            .collect();
        Ok(Self { accuracy: correct as f64 / n as f64, confusion, per_class_recall, n_evaluated: n })
    }

    pub fn num_classes(&self) -> usize {
        self.confusion.len()
    }

    /// Accuracy in percent, rounded to two decimals for display.
    pub fn percent(&self) -> String {
        format!("{:.2}", self.accuracy * 100.0)
    }
}

/// Runs `predict` over every sample of `split` in manifest order.
pub fn evaluate<F>(predict: F, data: &DatasetManifest, split: Split) -> Result<Metrics>
where
    F: Fn(&GrayImage) -> Result<usize>,
{
    let samples: Vec<_> = data.samples_in(split).collect();
    if samples.is_empty() {
        return Err(Error::EmptySplit(split.to_string()));
    }
    let mut truth = Vec::with_capacity(samples.len());
    let mut predicted = Vec::with_capacity(samples.len());
    for s in samples {
        truth.push(data.label_of(s)?);
        predicted.push(predict(&data.load_image(s)?)?);
    }
    Metrics::from_predictions(&truth, &predicted, data.num_classes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_correct() {
        let m = Metrics::from_predictions(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(m.accuracy, 1.0);
        for (i, row) in m.confusion.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, usize::from(i == j));
            }
        }
    }

    #[test]
    fn two_of_three() {
        let m = Metrics::from_predictions(&[0, 1, 1], &[0, 1, 0], 2).unwrap();
        assert_eq!(m.percent(), "66.67");
        assert_eq!(m.confusion, vec![vec![1, 0], vec![1, 1]]);
        assert_eq!(m.per_class_recall, vec![1.0, 0.5]);
    }

    #[test]
    fn recall_identity_holds() {
        let truth = [0, 0, 1, 2, 2, 2, 3];
        let pred = [0, 1, 1, 2, 0, 2, 1];
        let m = Metrics::from_predictions(&truth, &pred, 5).unwrap();
        let counts: Vec<usize> = m.confusion.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(counts, vec![2, 1, 3, 1, 0]);
        let weighted: f64 = m.per_class_recall.iter().zip(&counts).map(|(r, &c)| r * c as f64).sum::<f64>() / 7.0;
        assert!((weighted - m.accuracy).abs() < 1e-12);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(Metrics::from_predictions(&[], &[], 2), Err(Error::EmptySplit(_))));
    }
}
