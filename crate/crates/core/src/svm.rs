//! One-vs-rest linear SVM trained with the Pegasos subgradient method.
//!
//! Each binary problem minimizes
//! `λ/2 ‖w‖² + 1/n Σ max(0, 1 − y_i (w·x_i + b))` with `λ = 1/(C·n)`.
//! The bias is folded into `w` as a constant input of 1, so it is
//! regularized too. Inputs are scaled so the largest training vector has
//! unit Euclidean norm; the scale is stored with the model.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::fusion::argmax;
use crate::nn::checkpoint::{self, Blob, Container};

pub const CHECKPOINT_KIND: &str = "svm";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c_reg: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { c_reg: 1.0, epochs: 50, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    /// Row `c` holds the weights of the class-`c`-vs-rest discriminant.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub num_classes: usize,
    pub dim: usize,
    /// Multiplier applied to inputs before the dot product.
    pub feature_scale: f64,
    pub config: SvmConfig,
    /// Mean (over classes) training objective after each epoch, for the
    /// iterate kept by the model.
    pub objective_history: Vec<f64>,
    #[serde(default)]
    pub descriptor_id: String,
}

/// Pegasos state with lazy scaling: `w = scale · v`.
struct Binary {
    v: Vec<f64>,
    scale: f64,
    norm2_v: f64,
}

impl Binary {
    fn new(dim: usize) -> Self {
        Self { v: vec![0.0; dim], scale: 1.0, norm2_v: 0.0 }
    }

    fn dot(&self, x: &[f64], x_scale: f64) -> f64 {
        // x is augmented with a trailing constant 1.
        let d = self.v.len() - 1;
        let inner: f64 = self.v[..d].iter().zip(x).map(|(a, b)| a * b).sum();
        self.scale * (inner * x_scale + self.v[d])
    }

    fn weights(&self) -> Vec<f64> {
        self.v.iter().map(|v| v * self.scale).collect()
    }

    fn norm2(&self) -> f64 {
        self.scale * self.scale * self.norm2_v
    }

    fn step(&mut self, x: &[f64], x_scale: f64, y: f64, eta: f64, lambda: f64) {
        let margin = y * self.dot(x, x_scale);
        let shrink = 1.0 - eta * lambda;
        if shrink <= 0.0 {
            self.v.iter_mut().for_each(|v| *v = 0.0);
            self.scale = 1.0;
            self.norm2_v = 0.0;
        } else {
            self.scale *= shrink;
        }
        if margin < 1.0 {
            let c = eta * y / self.scale;
            let d = self.v.len() - 1;
            let mut vx = 0.0;
            let mut xx = 0.0;
            for (v, &xi) in self.v[..d].iter_mut().zip(x) {
                let xs = xi * x_scale;
                vx += *v * xs;
                xx += xs * xs;
                *v += c * xs;
            }
            vx += self.v[d];
            xx += 1.0;
            self.v[d] += c;
            self.norm2_v += 2.0 * c * vx + c * c * xx;
        }
        // Project onto the ball of radius 1/√λ.
        let radius2 = 1.0 / lambda;
        let n2 = self.norm2();
        if n2 > radius2 {
            self.scale *= (radius2 / n2).sqrt();
        }
        if self.scale.abs() < 1e-100 {
            let w = self.weights();
            self.norm2_v = w.iter().map(|x| x * x).sum();
            self.v = w;
            self.scale = 1.0;
        }
    }
}

fn objective(w: &[f64], xs: &[&[f64]], x_scale: f64, ys: &[f64], lambda: f64) -> f64 {
    let d = w.len() - 1;
    let hinge: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let s: f64 = w[..d].iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() * x_scale + w[d];
            (1.0 - y * s).max(0.0)
        })
        .sum();
    0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>() + hinge / xs.len() as f64
}

pub fn train_svm(features: &[FeatureVector], labels: &[usize], cfg: &SvmConfig) -> Result<LinearSvmModel> {
    let slices: Vec<&[f64]> = features.iter().map(|f| f.values.as_slice()).collect();
    let mut model = train_svm_raw(&slices, labels, cfg)?;
    model.descriptor_id = features.first().map(|f| f.descriptor_id.clone()).unwrap_or_default();
    Ok(model)
}

pub fn train_svm_raw(xs: &[&[f64]], labels: &[usize], cfg: &SvmConfig) -> Result<LinearSvmModel> {
    if xs.len() != labels.len() {
        return Err(Error::LengthMismatch { expected: xs.len(), actual: labels.len() });
    }
    if !(cfg.c_reg > 0.0) {
        return Err(Error::config("SVM regularization constant must be positive"));
    }
    let dim = xs.first().map(|x| x.len()).ok_or(Error::SingleClass)?;
    if let Some(x) = xs.iter().find(|x| x.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, actual: x.len() });
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut present = vec![false; num_classes];
    labels.iter().for_each(|&l| present[l] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::SingleClass);
    }

    let n = xs.len();
    let max_norm = xs.iter().map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
    let x_scale = if max_norm > 0.0 { 1.0 / max_norm } else { 1.0 };
    let lambda = 1.0 / (cfg.c_reg * n as f64);
    let targets: Vec<Vec<f64>> =
        (0..num_classes).map(|c| labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect()).collect();

    let mut learners: Vec<Binary> = (0..num_classes).map(|_| Binary::new(dim + 1)).collect();
    let mut best: Vec<(f64, Vec<f64>)> = (0..num_classes)
        .map(|c| {
            let w0 = vec![0.0; dim + 1];
            (objective(&w0, xs, x_scale, &targets[c], lambda), w0)
        })
        .collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            for (c, learner) in learners.iter_mut().enumerate() {
                learner.step(xs[i], x_scale, targets[c][i], eta, lambda);
            }
        }
        for (c, learner) in learners.iter().enumerate() {
            let w = learner.weights();
            let obj = objective(&w, xs, x_scale, &targets[c], lambda);
            if obj < best[c].0 {
                best[c] = (obj, w);
            }
        }
        history.push(best.iter().map(|(o, _)| o).sum::<f64>() / num_classes as f64);
    }

    let mut weights = Vec::with_capacity(num_classes);
    let mut biases = Vec::with_capacity(num_classes);
    for (_, mut w) in best {
        biases.push(w.pop().expect("augmented weight"));
        if w.iter().chain(biases.last()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("SVM training"));
        }
        weights.push(w);
    }
    Ok(LinearSvmModel {
        weights,
        biases,
        num_classes,
        dim,
        feature_scale: x_scale,
        config: cfg.clone(),
        objective_history: history,
        descriptor_id: String::new(),
    })
}

impl LinearSvmModel {
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: x.len() });
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() * self.feature_scale + b)
            .collect())
    }

    /// Mean binary objective of the stored weights on the given data.
    pub fn objective(&self, xs: &[&[f64]], labels: &[usize]) -> f64 {
        let lambda = 1.0 / (self.config.c_reg * xs.len() as f64);
        (0..self.num_classes)
            .map(|c| {
                let mut w = self.weights[c].clone();
                w.push(self.biases[c]);
                let ys: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
                objective(&w, xs, self.feature_scale, &ys, lambda)
            })
            .sum::<f64>()
            / self.num_classes as f64
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = serde_json::json!({
            "num_classes": self.num_classes,
            "dim": self.dim,
            "feature_scale": self.feature_scale,
            "config": self.config,
            "objective_history": self.objective_history,
            "descriptor_id": self.descriptor_id,
        });
        let flat: Vec<f64> = self.weights.iter().flatten().copied().collect();
        let container = Container {
            kind: CHECKPOINT_KIND.into(),
            header,
            blobs: vec![
                Blob { name: "weights".into(), shape: vec![self.num_classes, self.dim], data: flat },
                Blob { name: "biases".into(), shape: vec![self.num_classes], data: self.biases.clone() },
            ],
        };
        checkpoint::write_container(path, &container)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c = checkpoint::read_container(path)?;
        if c.kind != CHECKPOINT_KIND {
            return Err(Error::VersionMismatch(format!("expected kind {CHECKPOINT_KIND:?}, found {:?}", c.kind)));
        }
        #[derive(Deserialize)]
        struct Header {
            num_classes: usize,
            dim: usize,
            feature_scale: f64,
            config: SvmConfig,
            objective_history: Vec<f64>,
            descriptor_id: String,
        }
        let h: Header = serde_json::from_value(c.header)?;
        let mut blobs = c.blobs.into_iter();
        let (w, b) = match (blobs.next(), blobs.next()) {
            (Some(w), Some(b)) if w.name == "weights" && b.name == "biases" => (w, b),
            _ => return Err(Error::VersionMismatch("svm checkpoint lacks weights/biases".into())),
        };
        if w.data.len() != h.num_classes * h.dim || b.data.len() != h.num_classes {
            return Err(Error::ChecksumMismatch);
        }
        Ok(Self {
            weights: w.data.chunks(h.dim.max(1)).map(|r| r.to_vec()).collect(),
            biases: b.data,
            num_classes: h.num_classes,
            dim: h.dim,
            feature_scale: h.feature_scale,
            config: h.config,
            objective_history: h.objective_history,
            descriptor_id: h.descriptor_id,
        })
    }
}

/// Returns `(label, scores)`; ties go to the lowest class index.
pub fn svm_predict(model: &LinearSvmModel, f: &FeatureVector) -> Result<(usize, Vec<f64>)> {
    let scores = model.scores(&f.values)?;
    Ok((argmax(&scores), scores))
}
