use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::arch::{build_model, ModelConfig};
use super::checkpoint::{self, Blob, Container};
use super::layers::{softmax_cross_entropy, Mode};
use super::network::Network;
use super::optim::{adam_step, AdamConfig, AdamState};
use super::tensor::Tensor;
use crate::dataset::{AugmentDraw, AugmentSpec, DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::fusion::ClassProbabilities;
use crate::image::GrayImage;

pub const CHECKPOINT_KIND: &str = "network";

const STREAM_SHUFFLE: u64 = 1;
const STREAM_DROPOUT: u64 = 2;
const STREAM_AUGMENT: u64 = 3;
const INFER_CHUNK: usize = 32;
const GRAD_CHUNK: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    #[serde(default)]
    pub augment: Option<AugmentSpec>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 64,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            augment: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::config("adam betas must be in [0, 1) and eps positive"));
        }
        if let Some(a) = &self.augment {
            a.validate()?;
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.adam_beta1, beta2: self.adam_beta2, eps: self.adam_eps }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training cross-entropy over the epoch.
    pub loss: f64,
    /// Fraction of training samples classified correctly in training mode.
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub train_config: TrainConfig,
    pub classes: Vec<String>,
    pub history: Vec<EpochStats>,
    pub network: Network,
}

/// Resizes to the model input and converts to ink intensity (`1 − pixel`),
/// so blank paper is zero.
pub fn image_to_input(img: &GrayImage, size: usize) -> Vec<f64> {
    let resized;
    let img = if img.width() == size && img.height() == size {
        img
    } else {
        resized = img.resize(size, size);
        &resized
    };
    img.pixels().iter().map(|p| 1.0 - p).collect()
}

fn stack(items: &[&[f64]], size: usize) -> Tensor {
    let data = items.iter().flat_map(|v| v.iter().copied()).collect();
    Tensor::from_vec(&[items.len(), 1, size, size], data).expect("inputs share one size")
}

/// Trains on the manifest's train split.
pub fn train_model(cfg_m: &ModelConfig, data: &DatasetManifest, cfg_t: &TrainConfig) -> Result<TrainedModel> {
    let train: Vec<_> = data.samples_in(Split::Train).collect();
    if train.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    if cfg_m.num_classes != data.num_classes() {
        return Err(Error::config(format!(
            "model has {} classes but the dataset has {}",
            cfg_m.num_classes,
            data.num_classes()
        )));
    }
    let labels = train.iter().map(|s| data.label_of(s)).collect::<Result<Vec<_>>>()?;
    let images = train.iter().map(|s| data.load_image(s)).collect::<Result<Vec<_>>>()?;
    train_images(cfg_m, &images, &labels, data.classes.clone(), cfg_t)
}

/// Trains on in-memory images. `labels[i]` indexes `classes`.
pub fn train_images(
    cfg_m: &ModelConfig,
    images: &[GrayImage],
    labels: &[usize],
    classes: Vec<String>,
    cfg_t: &TrainConfig,
) -> Result<TrainedModel> {
    cfg_t.validate()?;
    if images.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    if images.len() != labels.len() {
        return Err(Error::LengthMismatch { expected: images.len(), actual: labels.len() });
    }
    if classes.len() != cfg_m.num_classes {
        return Err(Error::LengthMismatch { expected: cfg_m.num_classes, actual: classes.len() });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= cfg_m.num_classes) {
        return Err(Error::LengthMismatch { expected: cfg_m.num_classes, actual: bad + 1 });
    }
    let mut network = build_model(cfg_m, cfg_t.seed)?;
    let size = cfg_m.input_size;
    let fixed: Vec<Vec<f64>> = images.par_iter().map(|img| image_to_input(img, size)).collect();

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg_t.seed);
    shuffle_rng.set_stream(STREAM_SHUFFLE);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg_t.seed);
    dropout_rng.set_stream(STREAM_DROPOUT);
    let mut augment_rng = ChaCha8Rng::seed_from_u64(cfg_t.seed);
    augment_rng.set_stream(STREAM_AUGMENT);

    let adam = cfg_t.adam();
    let mut state = AdamState::default();
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut history = Vec::with_capacity(cfg_t.epochs);
    for epoch in 0..cfg_t.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg_t.batch_size) {
            let x = match &cfg_t.augment {
                None => stack(&batch.iter().map(|&i| fixed[i].as_slice()).collect::<Vec<_>>(), size),
                Some(spec) => {
                    let draws: Vec<AugmentDraw> = batch.iter().map(|_| AugmentDraw::sample(spec, &mut augment_rng)).collect();
                    let inputs: Vec<Vec<f64>> = batch
                        .par_iter()
                        .zip(&draws)
                        .map(|(&i, d)| image_to_input(&d.apply(&images[i]), size))
                        .collect();
                    stack(&inputs.iter().map(Vec::as_slice).collect::<Vec<_>>(), size)
                }
            };
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let seeds: Vec<u64> = batch.iter().map(|_| dropout_rng.gen()).collect();
            let step = batch_step(&network, &x, &y, &seeds)?;
            loss_sum += step.loss_sum;
            correct += step.correct;
            adam_step(&mut network.params_mut(), &step.grads, &mut state, &adam)?;
        }
        let loss = loss_sum / images.len() as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        history.push(EpochStats { epoch: epoch + 1, loss, accuracy: correct as f64 / images.len() as f64 });
    }
    Ok(TrainedModel { config: cfg_m.clone(), train_config: cfg_t.clone(), classes, history, network })
}

struct BatchStep {
    loss_sum: f64,
    correct: usize,
    /// Gradient of the batch-mean loss.
    grads: Vec<Tensor>,
}

/// Forward/backward one sample at a time (in parallel, in chunks) and sum
/// the gradients in sample order, so results do not depend on the number of
/// threads. `seeds[i]` drives sample `i`'s dropout masks.
fn batch_step(network: &Network, x: &Tensor, labels: &[usize], seeds: &[u64]) -> Result<BatchStep> {
    let b = x.batch();
    let item = x.item_len();
    let mut item_shape = x.shape().to_vec();
    item_shape[0] = 1;
    let scale = 1.0 / b as f64;
    let mut acc = BatchStep { loss_sum: 0.0, correct: 0, grads: Vec::new() };
    let indices: Vec<usize> = (0..b).collect();
    for chunk in indices.chunks(GRAD_CHUNK) {
        let parts: Vec<(f64, bool, Vec<Tensor>)> = chunk
            .par_iter()
            .map(|&i| {
                let xi = Tensor::from_vec(&item_shape, x.data()[i * item..(i + 1) * item].to_vec())?;
                let mut rng = ChaCha8Rng::seed_from_u64(seeds[i]);
                let (logits, cache) = network.forward(&xi, Mode::Train(&mut rng))?;
                let (loss, mut dlogits) = softmax_cross_entropy(&logits, &labels[i..i + 1])?;
                dlogits.data_mut().iter_mut().for_each(|g| *g *= scale);
                let hit = crate::fusion::argmax(logits.data()) == labels[i];
                Ok((loss, hit, network.param_gradients(&cache, &dlogits)?))
            })
            .collect::<Result<_>>()?;
        for (loss, hit, grads) in parts {
            acc.loss_sum += loss;
            acc.correct += hit as usize;
            if acc.grads.is_empty() {
                acc.grads = grads;
            } else {
                acc.grads.iter_mut().zip(&grads).for_each(|(a, g)| a.add_assign(g));
            }
        }
    }
    Ok(acc)
}

impl TrainedModel {
    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn predict_proba(&self, img: &GrayImage) -> Result<ClassProbabilities> {
        Ok(self.predict_proba_batch(std::slice::from_ref(img))?.remove(0))
    }

    pub fn predict_proba_batch(&self, images: &[GrayImage]) -> Result<Vec<ClassProbabilities>> {
        let size = self.config.input_size;
        let chunks: Vec<Vec<ClassProbabilities>> = images
            .par_chunks(INFER_CHUNK)
            .map(|chunk| {
                let inputs: Vec<Vec<f64>> = chunk.iter().map(|img| image_to_input(img, size)).collect();
                let x = stack(&inputs.iter().map(Vec::as_slice).collect::<Vec<_>>(), size);
                let logits = self.network.infer(&x)?;
                Ok(logits.data().chunks(self.num_classes()).map(ClassProbabilities::from_logits).collect())
            })
            .collect::<Result<_>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }

    pub fn predict(&self, img: &GrayImage) -> Result<usize> {
        Ok(self.predict_proba(img)?.argmax())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::write_container(path, &self.to_container())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(checkpoint::read_container(path)?)
    }

    pub fn to_container(&self) -> Container {
        let header = serde_json::json!({
            "config": self.config,
            "train_config": self.train_config,
            "classes": self.classes,
            "history": self.history,
        });
        let blobs = self
            .network
            .named_params()
            .into_iter()
            .map(|(name, t)| Blob { name, shape: t.shape().to_vec(), data: t.data().to_vec() })
            .collect();
        Container { kind: CHECKPOINT_KIND.into(), header, blobs }
    }

    pub fn from_container(c: Container) -> Result<Self> {
        if c.kind != CHECKPOINT_KIND {
            return Err(Error::VersionMismatch(format!("expected kind {CHECKPOINT_KIND:?}, found {:?}", c.kind)));
        }
        #[derive(Deserialize)]
        struct Header {
            config: ModelConfig,
            train_config: TrainConfig,
            classes: Vec<String>,
            history: Vec<EpochStats>,
        }
        let h: Header = serde_json::from_value(c.header)?;
        let mut network = Network::new(&[1, h.config.input_size, h.config.input_size], h.config.layers()?)?;
        let names: Vec<(String, Vec<usize>)> =
            network.named_params().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
        if names.len() != c.blobs.len() {
            return Err(Error::VersionMismatch("parameter list does not match the architecture".into()));
        }
        for ((name, shape), blob) in names.iter().zip(&c.blobs) {
            if *name != blob.name || *shape != blob.shape {
                return Err(Error::VersionMismatch(format!("unexpected parameter {:?}", blob.name)));
            }
        }
        for (t, blob) in network.params_mut().into_iter().zip(c.blobs) {
            *t = Tensor::from_vec(&blob.shape, blob.data)?;
        }
        Ok(Self { config: h.config, train_config: h.train_config, classes: h.classes, history: h.history, network })
    }
}

pub fn predict_proba(model: &TrainedModel, img: &GrayImage) -> Result<ClassProbabilities> {
    model.predict_proba(img)
}

pub fn save_checkpoint(model: &TrainedModel, path: &Path) -> Result<()> {
    model.save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    TrainedModel::load(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Arch;
    use rand::Rng;

    fn toy(n: usize, size: usize) -> (Vec<GrayImage>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let images = (0..n)
            .map(|_| GrayImage::new(size, size, (0..size * size).map(|_| rng.gen()).collect()).unwrap())
            .collect();
        (images, (0..n).map(|i| i % 2).collect())
    }

    fn quick() -> TrainConfig {
        TrainConfig { epochs: 3, batch_size: 2, seed: 4, ..TrainConfig::default() }
    }

    #[test]
    fn training_is_deterministic() {
        let (imgs, labels) = toy(4, 16);
        let cfg = ModelConfig::new(Arch::Cnn7, 2).with_width(0.125).with_input_size(16);
        let classes = vec!["a".to_string(), "b".to_string()];
        let a = train_images(&cfg, &imgs, &labels, classes.clone(), &quick()).unwrap();
        let b = train_images(&cfg, &imgs, &labels, classes, &quick()).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.network, b.network);
        assert_eq!(a.history.len(), 3);
    }

    #[test]
    fn augmented_training_runs() {
        let (imgs, labels) = toy(4, 16);
        let cfg = ModelConfig::new(Arch::Lenet, 2).with_width(0.125).with_input_size(32);
        let t = TrainConfig { augment: Some(AugmentSpec::default()), ..quick() };
        let m = train_images(&cfg, &imgs, &labels, vec!["a".into(), "b".into()], &t).unwrap();
        let p = m.predict_proba(&imgs[0]).unwrap();
        assert_eq!(p, m.predict_proba(&imgs[0]).unwrap());
        assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let (imgs, labels) = toy(4, 16);
        let cfg = ModelConfig::new(Arch::Cnn9, 2).with_width(0.125).with_input_size(16);
        let m = train_images(&cfg, &imgs, &labels, vec!["a".into(), "b".into()], &quick()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.glyf");
        m.save(&path).unwrap();
        let back = TrainedModel::load(&path).unwrap();
        assert_eq!(back.network.named_params(), m.network.named_params());
        assert_eq!(back.history, m.history);
        for img in &imgs {
            assert_eq!(back.predict_proba(img).unwrap(), m.predict_proba(img).unwrap());
        }
    }

    #[test]
    fn empty_and_invalid_inputs() {
        let cfg = ModelConfig::new(Arch::Cnn7, 2).with_input_size(16);
        let classes = vec!["a".to_string(), "b".to_string()];
        assert!(matches!(train_images(&cfg, &[], &[], classes.clone(), &quick()), Err(Error::EmptyTrainSet)));
        let (imgs, labels) = toy(2, 16);
        let bad = TrainConfig { learning_rate: 0.0, ..quick() };
        assert!(matches!(train_images(&cfg, &imgs, &labels, classes.clone(), &bad), Err(Error::InvalidConfig(_))));
        let bad = TrainConfig { batch_size: 0, ..quick() };
        assert!(train_images(&cfg, &imgs, &labels, classes, &bad).is_err());
    }

    #[test]
    fn svm_checkpoint_is_not_a_network() {
        let c = Container { kind: "svm".into(), header: serde_json::json!({}), blobs: vec![] };
        assert!(matches!(TrainedModel::from_container(c), Err(Error::VersionMismatch(_))));
    }
}
