use serde::{Deserialize, Serialize};

use super::layers::{Layer, LayerCache, Mode};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// A sequential stack of layers over `[channels, height, width]` inputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    /// Bumped on every parameter update so caches from older forwards are
    /// rejected by `backward`.
    #[serde(skip)]
    version: u64,
}

/// Equal architecture and parameters; the cache version is ignored.
impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape && self.layers == other.layers
    }
}

/// Activations recorded by [`Network::forward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    version: u64,
    layers: Vec<LayerCache>,
}

#[derive(Clone, Debug)]
pub struct Gradients {
    pub input: Tensor,
    /// One tensor per parameter, in [`Network::named_params`] order.
    pub params: Vec<Tensor>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub conv: usize,
    pub maxpool: usize,
    pub meanpool: usize,
    pub dense: usize,
    pub dropout: usize,
    pub residual_blocks: usize,
    pub downsampling_blocks: usize,
    /// Convolutions and dense layers on the main path (1×1 shortcuts excluded).
    pub weighted_layers: usize,
}

impl Network {
    pub fn new(input_shape: &[usize], layers: Vec<Layer>) -> Result<Self> {
        if input_shape.len() != 3 || input_shape.contains(&0) {
            return Err(Error::config(format!("input shape must be [c, h, w], got {input_shape:?}")));
        }
        let mut shape = input_shape.to_vec();
        for (i, layer) in layers.iter().enumerate() {
            layer.validate()?;
            shape = layer.output_shape(&shape).ok_or_else(|| {
                Error::config(format!("layer {i} ({}) cannot accept input of shape {shape:?}", layer.name()))
            })?;
        }
        if shape.len() != 1 {
            return Err(Error::config(format!("network must end in a vector, got shape {shape:?}")));
        }
        Ok(Self { input_shape: input_shape.to_vec(), layers, version: 0 })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_len(&self) -> usize {
        let mut shape = self.input_shape.clone();
        for layer in &self.layers {
            shape = layer.output_shape(&shape).expect("validated at construction");
        }
        shape[0]
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        self.version += 1;
        &mut self.layers
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.params().into_iter().map(move |(n, t)| (format!("{i}.{}.{n}", l.name()), t)))
            .collect()
    }

    /// Mutable parameters in [`Network::named_params`] order. Invalidates
    /// outstanding forward caches.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.version += 1;
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn census(&self) -> Census {
        let mut c = Census::default();
        for layer in &self.layers {
            match layer {
                Layer::Conv2d(_) => {
                    c.conv += 1;
                    c.weighted_layers += 1;
                }
                Layer::MaxPool2d { .. } => c.maxpool += 1,
                Layer::MeanPool2d { .. } => c.meanpool += 1,
                Layer::Dense(_) => {
                    c.dense += 1;
                    c.weighted_layers += 1;
                }
                Layer::Dropout { .. } => c.dropout += 1,
                Layer::ResidualBlock(b) => {
                    c.residual_blocks += 1;
                    c.downsampling_blocks += b.is_downsampling() as usize;
                    c.weighted_layers += 2;
                }
                Layer::Relu | Layer::Flatten => {}
            }
        }
        c
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() != 4 || x.shape()[1..] != self.input_shape[..] {
            let mut expected = vec![x.batch()];
            expected.extend_from_slice(&self.input_shape);
            return Err(Error::ShapeMismatch { expected, actual: x.shape().to_vec() });
        }
        Ok(())
    }

    /// Logits for a `[batch, c, h, w]` input, plus the cache for `backward`.
    pub fn forward(&self, x: &Tensor, mut mode: Mode<'_>) -> Result<(Tensor, ForwardCache)> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut act = x.clone();
        for layer in &self.layers {
            let (next, cache) = layer.forward(act, &mut mode)?;
            caches.push(cache);
            act = next;
        }
        if !act.is_finite() {
            return Err(Error::NonFinite("network output"));
        }
        Ok((act, ForwardCache { version: self.version, layers: caches }))
    }

    /// Inference-mode logits without keeping a cache.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut mode = Mode::Eval;
        let mut act = x.clone();
        for layer in &self.layers {
            act = layer.forward(act, &mut mode)?.0;
        }
        Ok(act)
    }

    pub fn backward(&self, cache: &ForwardCache, dlogits: &Tensor) -> Result<Gradients> {
        self.backward_inner(cache, dlogits, true)
    }

    /// Parameter gradients only; `Gradients::input` is left as zeros.
    pub fn param_gradients(&self, cache: &ForwardCache, dlogits: &Tensor) -> Result<Vec<Tensor>> {
        Ok(self.backward_inner(cache, dlogits, false)?.params)
    }

    fn backward_inner(&self, cache: &ForwardCache, dlogits: &Tensor, need_input: bool) -> Result<Gradients> {
        if cache.version != self.version || cache.layers.len() != self.layers.len() {
            return Err(Error::StaleCache);
        }
        let mut per_layer = Vec::with_capacity(self.layers.len());
        let mut grad = dlogits.clone();
        for (i, (layer, c)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            let (dx, dparams) = layer.backward_inner(c, &grad, need_input || i > 0)?;
            per_layer.push(dparams);
            grad = dx;
        }
        per_layer.reverse();
        Ok(Gradients { input: grad, params: per_layer.into_iter().flatten().collect() })
    }
}
