//! Experiment orchestration with content-addressed run directories.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::Metrics;
use crate::dataset::{load_manifest, DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::features::{DescriptorConfig, FeatureVector, GaborBankSpec, LbpParams};
use crate::fusion::{ensemble_predict, ClassProbabilities, FusionConfig};
use crate::image::GrayImage;
use crate::nn::{train_model, Arch, ModelConfig, TrainConfig, TrainedModel};
use crate::svm::{svm_predict, train_svm, LinearSvmModel, SvmConfig};

pub const METRICS_FILE: &str = "metrics.json";
pub const CONFIG_FILE: &str = "config.json";
pub const LOG_FILE: &str = "log.txt";
pub const MODEL_FILE: &str = "model.glyf";
pub const FUSION_FILE: &str = "fusion.json";

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    LbpSvm,
    LgbpSvm,
    Net(Arch),
    /// A `DCF-*` preset, or `fusion` for an explicit [`FusionConfig`].
    Fusion(String),
}

impl Method {
    pub fn is_fusion(&self) -> bool {
        matches!(self, Method::Fusion(_))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::LbpSvm => f.write_str("lbp+svm"),
            Method::LgbpSvm => f.write_str("lgbp+svm"),
            Method::Net(a) => write!(f, "{a}"),
            Method::Fusion(name) => f.write_str(name),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lbp+svm" => Ok(Method::LbpSvm),
            "lgbp+svm" => Ok(Method::LgbpSvm),
            "fusion" => Ok(Method::Fusion(s.into())),
            _ if FusionConfig::preset(s).is_some() => Ok(Method::Fusion(s.to_ascii_uppercase())),
            _ => s.parse::<Arch>().map(Method::Net).map_err(|_| Error::config(format!("unknown method {s:?}"))),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Sole-model epoch budgets used when a config does not set one.
pub fn default_epochs(arch: Arch) -> usize {
    match arch {
        Arch::Lenet => 4000,
        Arch::Alexnet => 2000,
        Arch::Resnet34 => 600,
        _ => 300,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptor: Option<DescriptorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svm: Option<SvmConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_size: Option<usize>,
    /// Its `seed` is replaced by the experiment seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion: Option<FusionConfig>,
    /// Member id to network checkpoint, for fusion methods.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub members: BTreeMap<String, PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub manifest: PathBuf,
    pub method: Method,
    #[serde(default)]
    pub params: MethodParams,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs_dir")]
    pub runs_dir: PathBuf,
}

fn default_runs_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub method: String,
    pub config_hash: String,
    pub run_dir: PathBuf,
    pub metrics: Metrics,
    /// True when an existing checkpoint in the run directory was evaluated
    /// instead of training a new model.
    pub reused_checkpoint: bool,
}

impl ExperimentConfig {
    pub fn new(manifest: impl Into<PathBuf>, method: Method, seed: u64) -> Self {
        Self { manifest: manifest.into(), method, params: MethodParams::default(), seed, runs_dir: default_runs_dir() }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        match &self.method {
            Method::LbpSvm | Method::LgbpSvm => {
                let d = self.descriptor();
                if matches!((&self.method, &d), (Method::LbpSvm, DescriptorConfig::Lgbp { .. }))
                    || matches!((&self.method, &d), (Method::LgbpSvm, DescriptorConfig::Lbp { .. }))
                {
                    return Err(Error::config(format!("descriptor kind does not match method {}", self.method)));
                }
                if p.svm.as_ref().is_some_and(|s| !(s.c_reg > 0.0) || s.epochs == 0) {
                    return Err(Error::config("svm needs c_reg > 0 and at least one epoch"));
                }
            }
            Method::Net(_) => {
                self.train_config().validate()?;
                if p.width_scale.is_some_and(|w| !(w > 0.0 && w.is_finite())) {
                    return Err(Error::config("width_scale must be positive"));
                }
            }
            Method::Fusion(_) => {
                let fusion = self.fusion_config()?;
                fusion.validate()?;
                if let Some(m) = fusion.members.iter().find(|m| !p.members.contains_key(*m)) {
                    return Err(Error::MissingMember(m.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn descriptor(&self) -> DescriptorConfig {
        if let Some(d) = &self.params.descriptor {
            return d.clone();
        }
        match self.method {
            Method::LgbpSvm => DescriptorConfig::Lgbp { lbp: LbpParams::default(), bank: GaborBankSpec::default() },
            _ => DescriptorConfig::Lbp { lbp: LbpParams::default() },
        }
    }

    pub fn svm_config(&self) -> SvmConfig {
        SvmConfig { seed: self.seed, ..self.params.svm.clone().unwrap_or_default() }
    }

    pub fn train_config(&self) -> TrainConfig {
        let base = self.params.train.clone().unwrap_or_else(|| TrainConfig {
            epochs: match self.method {
                Method::Net(a) => default_epochs(a),
                _ => TrainConfig::default().epochs,
            },
            ..TrainConfig::default()
        });
        TrainConfig { seed: self.seed, ..base }
    }

    pub fn model_config(&self, arch: Arch, num_classes: usize) -> ModelConfig {
        let mut cfg = ModelConfig::new(arch, num_classes);
        if let Some(w) = self.params.width_scale {
            cfg.width_scale = w;
        }
        if let Some(s) = self.params.input_size {
            cfg.input_size = s;
        }
        cfg
    }

    pub fn fusion_config(&self) -> Result<FusionConfig> {
        match &self.method {
            Method::Fusion(name) if name == "fusion" => {
                self.params.fusion.clone().ok_or_else(|| Error::config("method fusion needs params.fusion"))
            }
            Method::Fusion(name) => FusionConfig::preset(name).ok_or_else(|| Error::config(format!("unknown preset {name}"))),
            _ => Err(Error::config(format!("{} is not a fusion method", self.method))),
        }
    }

    /// First 16 hex digits of a SHA-256 over the method, parameters, seed,
    /// the manifest bytes, every referenced image and any member checkpoint.
    pub fn config_hash(&self, data: &DatasetManifest) -> Result<String> {
        let mut h = Sha256::new();
        let identity = serde_json::json!({
            "method": self.method,
            "params": self.params,
            "seed": self.seed,
        });
        h.update(identity.to_string().as_bytes());
        h.update(read(&self.manifest)?);
        for s in &data.samples {
            h.update(s.id.as_bytes());
            h.update(read(&data.image_path(s))?);
        }
        for (id, path) in &self.params.members {
            h.update(id.as_bytes());
            if let Ok(bytes) = fs::read(path) {
                h.update(bytes);
            }
        }
        Ok(hex::encode(h.finalize())[..16].to_string())
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn load_split(data: &DatasetManifest, split: Split) -> Result<(Vec<GrayImage>, Vec<usize>)> {
    let samples: Vec<_> = data.samples_in(split).collect();
    let labels = samples.iter().map(|s| data.label_of(s)).collect::<Result<Vec<_>>>()?;
    let images = samples.par_iter().map(|s| data.load_image(s)).collect::<Result<Vec<_>>>()?;
    Ok((images, labels))
}

/// Trains (or reloads) the configured method, evaluates it on the test
/// split and writes `config.json`, `metrics.json`, the model and a log under
/// `runs_dir/<config-hash>/`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let data = load_manifest(&cfg.manifest)?;
    let (test_images, test_labels) = load_split(&data, Split::Test)?;
    if test_images.is_empty() {
        return Err(Error::EmptySplit(Split::Test.to_string()));
    }
    let hash = cfg.config_hash(&data)?;
    let run_dir = cfg.runs_dir.join(&hash);
    fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    let mut log = String::new();
    log.push_str(&format!("method {}\nconfig {hash}\nclasses {}\n", cfg.method, data.num_classes()));

    let model_path = run_dir.join(MODEL_FILE);
    let mut reused = false;
    let predictions: Vec<usize> = match &cfg.method {
        Method::LbpSvm | Method::LgbpSvm => {
            let extractor = cfg.descriptor().extractor()?;
            let model = match LinearSvmModel::load(&model_path) {
                Ok(m) if model_path.exists() => {
                    reused = true;
                    m
                }
                _ => {
                    let (train_images, train_labels) = load_split(&data, Split::Train)?;
                    if train_images.is_empty() {
                        return Err(Error::EmptyTrainSet);
                    }
                    let feats = extract_all(&extractor, &train_images)?;
                    let model = train_svm(&feats, &train_labels, &cfg.svm_config())?;
                    for (e, obj) in model.objective_history.iter().enumerate() {
                        log.push_str(&format!("epoch {} objective {obj:.6}\n", e + 1));
                    }
                    model.save(&model_path)?;
                    model
                }
            };
            extract_all(&extractor, &test_images)?
                .iter()
                .map(|f| svm_predict(&model, f).map(|(label, _)| label))
                .collect::<Result<_>>()?
        }
        Method::Net(arch) => {
            let model = match TrainedModel::load(&model_path) {
                Ok(m) if model_path.exists() => {
                    reused = true;
                    m
                }
                _ => {
                    let m = train_model(&cfg.model_config(*arch, data.num_classes()), &data, &cfg.train_config())?;
                    for h in &m.history {
                        log.push_str(&format!("epoch {} loss {:.6} accuracy {:.4}\n", h.epoch, h.loss, h.accuracy));
                    }
                    m.save(&model_path)?;
                    m
                }
            };
            model.predict_proba_batch(&test_images)?.iter().map(|p| p.argmax()).collect()
        }
        Method::Fusion(_) => {
            let fusion = cfg.fusion_config()?;
            let mut outputs: Vec<(String, Vec<ClassProbabilities>)> = Vec::new();
            for member in &fusion.members {
                let path = cfg.params.members.get(member).ok_or_else(|| Error::MissingMember(member.clone()))?;
                if !path.exists() {
                    return Err(Error::MissingMember(member.clone()));
                }
                let model = TrainedModel::load(path)?;
                if model.classes != data.classes {
                    return Err(Error::config(format!("member {member} was trained on a different class list")));
                }
                log.push_str(&format!("member {member} {}\n", path.display()));
                outputs.push((member.clone(), model.predict_proba_batch(&test_images)?));
            }
            write(&run_dir.join(FUSION_FILE), serde_json::to_string_pretty(&fusion)?)?;
            (0..test_images.len())
                .map(|i| {
                    let per: HashMap<String, ClassProbabilities> =
                        outputs.iter().map(|(id, probs)| (id.clone(), probs[i].clone())).collect();
                    ensemble_predict(&fusion, &per).map(|(label, _)| label)
                })
                .collect::<Result<_>>()?
        }
    };

    let metrics = Metrics::from_predictions(&test_labels, &predictions, data.num_classes())?;
    log.push_str(&format!("test accuracy {} on {} samples\n", metrics.percent(), metrics.n_evaluated));
    write(&run_dir.join(CONFIG_FILE), serde_json::to_string_pretty(cfg)?)?;
    write(&run_dir.join(METRICS_FILE), serde_json::to_string_pretty(&metrics)?)?;
    write(&run_dir.join(LOG_FILE), &log)?;
    Ok(ExperimentResult { method: cfg.method.to_string(), config_hash: hash, run_dir, metrics, reused_checkpoint: reused })
}

fn extract_all(extractor: &crate::features::Extractor, images: &[GrayImage]) -> Result<Vec<FeatureVector>> {
    images.par_iter().map(|img| extractor.extract(img)).collect()
}
