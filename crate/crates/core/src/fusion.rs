//! Decision-level fusion of classifier posteriors.
//!
//! Three combiners are provided: the prior-weighted naive Bayes product,
//! hard (majority) voting over predicted labels, and soft voting as a
//! weighted mean of class-probability vectors. The named DCF presets fuse
//! subsets of `{lenet, alexnet, resnet34}` by soft voting.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FLOOR: f64 = 1e-7;
const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Non-negative vector summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ClassProbabilities(Vec<f64>);

impl ClassProbabilities {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::LengthMismatch { expected: 1, actual: 0 });
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::config("class probabilities must be finite and non-negative"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::config(format!("class probabilities sum to {sum}, not 1")));
        }
        Ok(Self(probs))
    }

    /// Scales non-negative scores to sum to one.
    pub fn normalize(scores: Vec<f64>) -> Result<Self> {
        let sum: f64 = scores.iter().sum();
        if scores.is_empty() || !(sum > 0.0) || !sum.is_finite() || scores.iter().any(|s| *s < 0.0) {
            return Err(Error::config("cannot normalize scores into a distribution"));
        }
        Ok(Self(scores.into_iter().map(|s| s / sum).collect()))
    }

    pub fn uniform(classes: usize) -> Self {
        assert!(classes > 0);
        Self(vec![1.0 / classes as f64; classes])
    }

    /// Softmax with max subtraction.
    pub fn from_logits(logits: &[f64]) -> Self {
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exp.iter().sum();
        Self(exp.into_iter().map(|e| e / sum).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// Top-`k` `(class, probability)` pairs, descending, ties by class index.
    pub fn top_k(&self, k: usize) -> Vec<(usize, f64)> {
        let mut pairs: Vec<(usize, f64)> = self.0.iter().copied().enumerate().collect();
        pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        pairs.truncate(k);
        pairs
    }
}

impl TryFrom<Vec<f64>> for ClassProbabilities {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ClassProbabilities> for Vec<f64> {
    fn from(p: ClassProbabilities) -> Self {
        p.0
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn check_lengths<'a>(members: impl IntoIterator<Item = &'a ClassProbabilities>, expected: usize) -> Result<()> {
    for m in members {
        if m.len() != expected {
            return Err(Error::LengthMismatch { expected, actual: m.len() });
        }
    }
    Ok(())
}

/// Naive Bayes combination: `prior(w) · Π_n max(member_n(w), floor)`,
/// accumulated in the log domain and renormalized.
pub fn nb_combine(prior: &ClassProbabilities, members: &[ClassProbabilities], floor: f64) -> Result<ClassProbabilities> {
    if members.is_empty() {
        return Err(Error::EmptyMembers);
    }
    if !(floor > 0.0) {
        return Err(Error::config("naive Bayes floor must be positive"));
    }
    let c = prior.len();
    check_lengths(members, c)?;
    let log_scores: Vec<f64> = (0..c)
        .map(|w| {
            let p = prior.0[w];
            if p <= 0.0 {
                return f64::NEG_INFINITY;
            }
            p.ln() + members.iter().map(|m| m.0[w].max(floor).ln()).sum::<f64>()
        })
        .collect();
    let max = log_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    ClassProbabilities::normalize(log_scores.iter().map(|s| (s - max).exp()).collect())
}

/// Majority vote; ties go to the lowest class index.
pub fn hard_vote(labels: &[usize], classes: usize) -> Result<usize> {
    if labels.is_empty() {
        return Err(Error::EmptyMembers);
    }
    let mut counts = vec![0usize; classes];
    for &l in labels {
        if l >= classes {
            return Err(Error::LengthMismatch { expected: classes, actual: l + 1 });
        }
        counts[l] += 1;
    }
    let mut best = 0;
    for (i, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Weighted arithmetic mean of member distributions, divided by the total
/// weight so unnormalized weights still yield a distribution.
pub fn soft_vote(members: &[ClassProbabilities], weights: Option<&[f64]>) -> Result<ClassProbabilities> {
    let first = members.first().ok_or(Error::EmptyMembers)?;
    let c = first.len();
    check_lengths(members, c)?;
    let uniform;
    let weights = match weights {
        Some(w) => {
            if w.len() != members.len() {
                return Err(Error::LengthMismatch { expected: members.len(), actual: w.len() });
            }
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::config("fusion weights must be finite and non-negative"));
            }
            w
        }
        None => {
            uniform = vec![1.0; members.len()];
            &uniform
        }
    };
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::AllZeroWeights);
    }
    let mut acc = vec![0.0; c];
    for (m, &w) in members.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for (a, p) in acc.iter_mut().zip(&m.0) {
            *a += w * p;
        }
    }
    Ok(ClassProbabilities(acc.into_iter().map(|a| a / total).collect()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMethod {
    NaiveBayes,
    HardVote,
    SoftVote,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub method: FusionMethod,
    /// Ordered member classifier ids.
    pub members: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Naive Bayes class prior; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<ClassProbabilities>,
    #[serde(default = "default_floor")]
    pub floor: f64,
}

fn default_floor() -> f64 {
    DEFAULT_FLOOR
}

pub const PRESET_NAMES: [&str; 4] = ["DCF-LA", "DCF-LR", "DCF-AR", "DCF-LAR"];

impl FusionConfig {
    pub fn soft_vote(members: &[&str]) -> Self {
        Self {
            method: FusionMethod::SoftVote,
            members: members.iter().map(|s| s.to_string()).collect(),
            weights: None,
            prior: None,
            floor: DEFAULT_FLOOR,
        }
    }

    /// Named ensembles: soft vote over subsets of LeNet (L), AlexNet (A)
    /// and ResNet-34 (R). Case-insensitive.
    pub fn preset(name: &str) -> Option<Self> {
        let members: &[&str] = match name.to_ascii_uppercase().as_str() {
            "DCF-LA" => &["lenet", "alexnet"],
            "DCF-LR" => &["lenet", "resnet34"],
            "DCF-AR" => &["alexnet", "resnet34"],
            "DCF-LAR" => &["lenet", "alexnet", "resnet34"],
            _ => return None,
        };
        Some(Self::soft_vote(members))
    }

    pub fn validate(&self) -> Result<()> {
        if self.members.is_empty() {
            return Err(Error::EmptyMembers);
        }
        if let Some(w) = &self.weights {
            if w.len() != self.members.len() {
                return Err(Error::LengthMismatch { expected: self.members.len(), actual: w.len() });
            }
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::config("fusion weights must be finite and non-negative"));
            }
            if !(w.iter().sum::<f64>() > 0.0) {
                return Err(Error::AllZeroWeights);
            }
        }
        if !(self.floor > 0.0) {
            return Err(Error::config("fusion floor must be positive"));
        }
        Ok(())
    }
}

/// Fuses the configured members' outputs; returns `(label, fused)`.
///
/// For hard voting the fused distribution is the normalized (weighted) vote
/// histogram.
pub fn ensemble_predict(
    cfg: &FusionConfig,
    member_outputs: &HashMap<String, ClassProbabilities>,
) -> Result<(usize, ClassProbabilities)> {
    cfg.validate()?;
    let members: Vec<ClassProbabilities> = cfg
        .members
        .iter()
        .map(|id| member_outputs.get(id).cloned().ok_or_else(|| Error::MissingMember(id.clone())))
        .collect::<Result<_>>()?;
    let c = members[0].len();
    check_lengths(&members, c)?;
    let fused = match cfg.method {
        FusionMethod::SoftVote => soft_vote(&members, cfg.weights.as_deref())?,
        FusionMethod::NaiveBayes => {
            let prior = cfg.prior.clone().unwrap_or_else(|| ClassProbabilities::uniform(c));
            nb_combine(&prior, &members, cfg.floor)?
        }
        FusionMethod::HardVote => {
            let weights = cfg.weights.clone().unwrap_or_else(|| vec![1.0; members.len()]);
            let mut votes = vec![0.0; c];
            for (m, w) in members.iter().zip(&weights) {
                votes[m.argmax()] += w;
            }
            let fused = ClassProbabilities::normalize(votes)?;
            let label = match &cfg.weights {
                None => hard_vote(&members.iter().map(|m| m.argmax()).collect::<Vec<_>>(), c)?,
                Some(_) => fused.argmax(),
            };
            return Ok((label, fused));
        }
    };
    Ok((fused.argmax(), fused))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[f64]) -> ClassProbabilities {
        ClassProbabilities::new(v.to_vec()).unwrap()
    }

    fn close(a: &ClassProbabilities, b: &[f64], tol: f64) -> bool {
        a.as_slice().iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn nb_single_member_uniform_prior_is_identity() {
        let m = p(&[0.5, 0.3, 0.2]);
        let out = nb_combine(&ClassProbabilities::uniform(3), &[m.clone()], DEFAULT_FLOOR).unwrap();
        assert!(close(&out, m.as_slice(), 1e-15));
    }

    #[test]
    fn nb_two_members_worked_example() {
        let out = nb_combine(
            &ClassProbabilities::uniform(3),
            &[p(&[0.5, 0.3, 0.2]), p(&[0.2, 0.5, 0.3])],
            DEFAULT_FLOOR,
        )
        .unwrap();
        // Products 0.10, 0.15, 0.06; normalizer 0.31.
        assert!(close(&out, &[0.10 / 0.31, 0.15 / 0.31, 0.06 / 0.31], 1e-12));
        assert!(close(&out, &[0.3226, 0.4839, 0.1935], 5e-5));
        assert_eq!(out.argmax(), 1);
    }

    #[test]
    fn nb_floor_prevents_veto() {
        let out = nb_combine(&ClassProbabilities::uniform(2), &[p(&[0.0, 1.0]), p(&[0.9, 0.1])], 1e-7).unwrap();
        assert!(out.as_slice()[0] > 0.0);
        // score_0 = 0.5·1e-7·0.9, score_1 = 0.5·1·0.1
        let expect0 = 0.9e-7 / (0.9e-7 + 0.1);
        assert!((out.as_slice()[0] - expect0).abs() < 1e-18);
    }

    #[test]
    fn hard_vote_rules() {
        assert_eq!(hard_vote(&[2, 2, 5], 6).unwrap(), 2);
        assert_eq!(hard_vote(&[1, 2], 3).unwrap(), 1);
        assert!(matches!(hard_vote(&[], 3), Err(Error::EmptyMembers)));
        assert!(hard_vote(&[3], 3).is_err());
    }

    #[test]
    fn soft_vote_examples() {
        let out = soft_vote(&[p(&[0.6, 0.4]), p(&[0.2, 0.8])], None).unwrap();
        assert!(close(&out, &[0.4, 0.6], 1e-15));
        let same = soft_vote(&[p(&[0.1, 0.9]), p(&[0.1, 0.9])], None).unwrap();
        assert!(close(&same, &[0.1, 0.9], 1e-15));
        let weighted = soft_vote(&[p(&[1.0, 0.0]), p(&[0.0, 1.0])], Some(&[3.0, 1.0])).unwrap();
        assert!(close(&weighted, &[0.75, 0.25], 1e-15));
        assert!(matches!(soft_vote(&[p(&[1.0, 0.0])], Some(&[0.0])), Err(Error::AllZeroWeights)));
        assert!(matches!(soft_vote(&[], None), Err(Error::EmptyMembers)));
        assert!(matches!(soft_vote(&[p(&[1.0]), p(&[0.5, 0.5])], None), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn presets() {
        assert_eq!(FusionConfig::preset("DCF-LA").unwrap().members, vec!["lenet", "alexnet"]);
        assert_eq!(FusionConfig::preset("DCF-LR").unwrap().members, vec!["lenet", "resnet34"]);
        assert_eq!(FusionConfig::preset("DCF-AR").unwrap().members, vec!["alexnet", "resnet34"]);
        assert_eq!(FusionConfig::preset("dcf-lar").unwrap().members, vec!["lenet", "alexnet", "resnet34"]);
        assert!(FusionConfig::preset("DCF-X").is_none());
        assert!(PRESET_NAMES.iter().all(|n| FusionConfig::preset(n).unwrap().method == FusionMethod::SoftVote));
    }

    #[test]
    fn ensemble_overturns_member_vote() {
        let cfg = FusionConfig::soft_vote(&["a", "b"]);
        let outputs = HashMap::from([("a".to_string(), p(&[0.6, 0.4])), ("b".to_string(), p(&[0.1, 0.9]))]);
        let (label, fused) = ensemble_predict(&cfg, &outputs).unwrap();
        assert_eq!(label, 1);
        assert!(close(&fused, &[0.35, 0.65], 1e-15));
    }

    #[test]
    fn ensemble_identical_members() {
        let cfg = FusionConfig::preset("DCF-LAR").unwrap();
        let d = p(&[0.2, 0.5, 0.3]);
        let outputs: HashMap<_, _> = cfg.members.iter().map(|m| (m.clone(), d.clone())).collect();
        assert_eq!(ensemble_predict(&cfg, &outputs).unwrap().0, 1);
    }

    #[test]
    fn ensemble_missing_member() {
        let cfg = FusionConfig::preset("DCF-AR").unwrap();
        let outputs = HashMap::from([("alexnet".to_string(), p(&[1.0, 0.0]))]);
        assert!(matches!(ensemble_predict(&cfg, &outputs), Err(Error::MissingMember(m)) if m == "resnet34"));
    }

    #[test]
    fn ensemble_hard_and_nb_methods() {
        let outputs = HashMap::from([
            ("a".to_string(), p(&[0.6, 0.4, 0.0])),
            ("b".to_string(), p(&[0.1, 0.9, 0.0])),
            ("c".to_string(), p(&[0.2, 0.7, 0.1])),
        ]);
        let mut cfg = FusionConfig::soft_vote(&["a", "b", "c"]);
        cfg.method = FusionMethod::HardVote;
        let (label, fused) = ensemble_predict(&cfg, &outputs).unwrap();
        assert_eq!(label, 1);
        assert!(close(&fused, &[1.0 / 3.0, 2.0 / 3.0, 0.0], 1e-15));
        cfg.method = FusionMethod::NaiveBayes;
        assert_eq!(ensemble_predict(&cfg, &outputs).unwrap().0, 1);
    }

    #[test]
    fn softmax_is_stable_for_extreme_logits() {
        let out = ClassProbabilities::from_logits(&[1e4, -1e4, 0.0]);
        assert!(ClassProbabilities::new(out.as_slice().to_vec()).is_ok());
        assert_eq!(out.argmax(), 0);
    }

    #[test]
    fn top_k_sorted() {
        let d = p(&[0.2, 0.5, 0.2, 0.1]);
        assert_eq!(d.top_k(3), vec![(1, 0.5), (0, 0.2), (2, 0.2)]);
        assert_eq!(d.top_k(10).len(), 4);
    }
}
