//! Architecture catalog.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Conv2d, Dense, Layer, ResidualBlock};
use super::network::Network;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Cnn7,
    Cnn9,
    Cnn11,
    Lenet,
    Alexnet,
    Resnet34,
}

impl Arch {
    pub const ALL: [Arch; 6] = [Arch::Cnn7, Arch::Cnn9, Arch::Cnn11, Arch::Lenet, Arch::Alexnet, Arch::Resnet34];

    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Cnn7 => "cnn7",
            Arch::Cnn9 => "cnn9",
            Arch::Cnn11 => "cnn11",
            Arch::Lenet => "lenet",
            Arch::Alexnet => "alexnet",
            Arch::Resnet34 => "resnet34",
        }
    }

    pub fn default_input_size(self) -> usize {
        match self {
            Arch::Lenet => 112,
            _ => 64,
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown architecture {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub input_size: usize,
    pub num_classes: usize,
    pub width_scale: f64,
}

impl ModelConfig {
    pub fn new(arch: Arch, num_classes: usize) -> Self {
        Self { arch, input_size: arch.default_input_size(), num_classes, width_scale: 1.0 }
    }

    pub fn with_width(mut self, width_scale: f64) -> Self {
        self.width_scale = width_scale;
        self
    }

    pub fn with_input_size(mut self, input_size: usize) -> Self {
        self.input_size = input_size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config("num_classes must be at least 2"));
        }
        if !(self.width_scale.is_finite() && self.width_scale > 0.0) {
            return Err(Error::config("width_scale must be positive"));
        }
        if self.input_size == 0 {
            return Err(Error::config("input_size must be positive"));
        }
        Ok(())
    }

    fn width(&self, base: usize) -> usize {
        ((base as f64 * self.width_scale).round() as usize).max(1)
    }

    /// Layer list with zero parameters.
    pub fn layers(&self) -> Result<Vec<Layer>> {
        self.validate()?;
        let s = self.input_size;
        let c = self.num_classes;
        let mut layers = Vec::new();
        match self.arch {
            Arch::Cnn7 | Arch::Cnn9 | Arch::Cnn11 => {
                let stages = match self.arch {
                    Arch::Cnn7 => 2,
                    Arch::Cnn9 => 3,
                    _ => 4,
                };
                let mut ch = 1;
                let mut hw = s;
                for base in [32, 64, 128, 256].into_iter().take(stages) {
                    let out = self.width(base);
                    layers.push(Layer::Conv2d(Conv2d::new(ch, out, 3, 1, 1)));
                    layers.push(Layer::Relu);
                    layers.push(Layer::MaxPool2d { size: 2 });
                    ch = out;
                    hw /= 2;
                }
                layers.push(Layer::Flatten);
                layers.push(Layer::Dense(Dense::new(ch * hw * hw, c)));
            }
            Arch::Lenet => {
                let (c1, c2, c3) = (self.width(16), self.width(32), self.width(64));
                let hw = ((s.saturating_sub(4) / 2).saturating_sub(4) / 2).saturating_sub(4);
                let hidden = self.width(128);
                layers.extend([
                    Layer::Conv2d(Conv2d::new(1, c1, 5, 1, 0)),
                    Layer::Relu,
                    Layer::MeanPool2d { size: 2 },
                    Layer::Conv2d(Conv2d::new(c1, c2, 5, 1, 0)),
                    Layer::Relu,
                    Layer::MeanPool2d { size: 2 },
                    Layer::Conv2d(Conv2d::new(c2, c3, 5, 1, 0)),
                    Layer::Relu,
                    Layer::Flatten,
                    Layer::Dense(Dense::new(c3 * hw * hw, hidden)),
                    Layer::Relu,
                    Layer::Dropout { rate: 0.2 },
                    Layer::Dense(Dense::new(hidden, c)),
                ]);
            }
            Arch::Alexnet => {
                let mut ch = 1;
                let mut hw = s;
                for (stage, base) in [64, 128, 256].into_iter().enumerate() {
                    let out = self.width(base);
                    let (k, p) = if stage == 0 { (5, 2) } else { (3, 1) };
                    layers.push(Layer::Conv2d(Conv2d::new(ch, out, k, 1, p)));
                    layers.push(Layer::Relu);
                    layers.push(Layer::Conv2d(Conv2d::new(out, out, 3, 1, 1)));
                    layers.push(Layer::Relu);
                    layers.push(Layer::MaxPool2d { size: 2 });
                    ch = out;
                    hw /= 2;
                }
                let (d1, d2) = (self.width(512), self.width(256));
                layers.extend([
                    Layer::Flatten,
                    Layer::Dense(Dense::new(ch * hw * hw, d1)),
                    Layer::Relu,
                    Layer::Dropout { rate: 0.2 },
                    Layer::Dense(Dense::new(d1, d2)),
                    Layer::Relu,
                    Layer::Dropout { rate: 0.2 },
                    Layer::Dense(Dense::new(d2, c)),
                ]);
            }
            Arch::Resnet34 => {
                if s < 32 {
                    return Err(self.too_small());
                }
                let stem = self.width(64);
                layers.push(Layer::Conv2d(Conv2d::new(1, stem, 7, 2, 3)));
                layers.push(Layer::Relu);
                layers.push(Layer::MaxPool2d { size: 2 });
                let mut hw = ((s + 6).saturating_sub(7) / 2 + 1) / 2;
                let mut ch = stem;
                for (stage, (blocks, base)) in [(3, 64), (4, 128), (6, 256), (3, 512)].into_iter().enumerate() {
                    let out = self.width(base);
                    for b in 0..blocks {
                        let stride = if stage > 0 && b == 0 { 2 } else { 1 };
                        layers.push(Layer::ResidualBlock(ResidualBlock::new(ch, out, stride)));
                        if stride == 2 {
                            hw = (hw + 1) / 2;
                        }
                        ch = out;
                    }
                }
                if hw == 0 {
                    return Err(self.too_small());
                }
                layers.push(Layer::MeanPool2d { size: hw });
                layers.push(Layer::Flatten);
                layers.push(Layer::Dense(Dense::new(ch, c)));
            }
        }
        Ok(layers)
    }

    fn too_small(&self) -> Error {
        Error::config(format!("input size {} is too small for {}", self.input_size, self.arch))
    }
}

/// Builds the network and draws its initial parameters.
///
/// Weights are Kaiming-uniform over the fan-in (bound `√(6/fan_in)`), except
/// the classifier layer, which uses a tenth of the linear-gain bound
/// `√(3/fan_in)` so the initial posteriors are near uniform, and
/// the second convolution of every residual block, which starts at zero so
/// each block begins as its shortcut. Biases start at zero.
pub fn build_model(cfg: &ModelConfig, seed: u64) -> Result<Network> {
    let layers = cfg.layers()?;
    let mut net = Network::new(&[1, cfg.input_size, cfg.input_size], layers).map_err(|_| cfg.too_small())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last_dense = net.layers().iter().rposition(|l| matches!(l, Layer::Dense(_)));
    let mut fill = |t: &mut Tensor, fan_in: usize, gain: f64| {
        let bound = gain.sqrt() / (fan_in as f64).sqrt();
        t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
    };
    for (i, layer) in net.layers_mut().iter_mut().enumerate() {
        match layer {
            Layer::Conv2d(conv) => {
                let fan = conv.fan_in();
                fill(&mut conv.weight, fan, 6.0);
            }
            Layer::Dense(d) => {
                let gain = if Some(i) == last_dense { 0.03 } else { 6.0 };
                fill(&mut d.weight, d.inputs, gain);
            }
            Layer::ResidualBlock(b) => {
                let fan = b.conv1.fan_in();
                fill(&mut b.conv1.weight, fan, 6.0);
                if let Some(sc) = &mut b.shortcut {
                    let fan = sc.fan_in();
                    fill(&mut sc.weight, fan, 6.0);
                }
            }
            _ => {}
        }
    }
    Ok(net)
}
