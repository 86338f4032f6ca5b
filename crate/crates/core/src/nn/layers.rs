//! Layer implementations with exact reverse-mode gradients.
//!
//! Activations are `[batch, channels, height, width]` (or `[batch, features]`
//! after flattening). Convolutions run per sample (im2col + GEMM) in
//! parallel; per-sample weight gradients are then summed in sample order so
//! results do not depend on the thread count.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Forward-pass mode. Training mode owns the RNG that draws dropout masks.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl Mode<'_> {
    pub fn is_training(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

fn conv_out(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    (size + 2 * padding).checked_sub(kernel).map(|v| v / stride + 1)
}

fn expect_rank4(x: &Tensor, channels: usize) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [b, c, h, w] if c == channels => Ok((b, h, w)),
        _ => Err(Error::ShapeMismatch { expected: vec![0, channels, 0, 0], actual: x.shape().to_vec() }),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `[out, in, k, k]`
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Conv2d {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        assert!(kernel >= 1 && stride >= 1);
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: Tensor::zeros(&[out_channels, in_channels, kernel, kernel]),
            bias: Tensor::zeros(&[out_channels]),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let oh = conv_out(h, self.kernel, self.stride, self.padding)?;
        let ow = conv_out(w, self.kernel, self.stride, self.padding)?;
        (oh > 0 && ow > 0).then_some((oh, ow))
    }

    fn im2col(&self, x: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
        let k = self.kernel;
        let p = oh * ow;
        let mut cols = vec![0.0; self.fan_in() * p];
        for ci in 0..self.in_channels {
            let plane = &x[ci * h * w..][..h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((ci * k + ky) * k + kx) * p..][..p];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * w..][..w];
                        let dst = &mut row[oy * ow..][..ow];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if ix >= 0 && ix < w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
        let k = self.kernel;
        let p = oh * ow;
        let mut x = vec![0.0; self.in_channels * h * w];
        for ci in 0..self.in_channels {
            let plane = &mut x[ci * h * w..][..h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((ci * k + ky) * k + kx) * p..][..p];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if ix >= 0 && ix < w as isize {
                                plane[iy as usize * w + ix as usize] += row[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
        x
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, h, w) = expect_rank4(x, self.in_channels)?;
        let (oh, ow) = self
            .output_hw(h, w)
            .ok_or_else(|| Error::ShapeMismatch { expected: vec![self.kernel, self.kernel], actual: vec![h, w] })?;
        let p = oh * ow;
        let out_item = self.out_channels * p;
        let mut out = vec![0.0; b * out_item];
        let in_item = x.item_len();
        out.par_chunks_mut(out_item).zip(x.data().par_chunks(in_item)).for_each(|(y, xs)| {
            let cols = self.im2col(xs, h, w, oh, ow);
            gemm(self.out_channels, self.fan_in(), p, self.weight.data(), false, &cols, false, y, false);
            for (c, row) in y.chunks_mut(p).enumerate() {
                let bias = self.bias.data()[c];
                row.iter_mut().for_each(|v| *v += bias);
            }
        });
        Tensor::from_vec(&[b, self.out_channels, oh, ow], out)
    }

    /// Returns `(dx, [dweight, dbias])`.
    pub fn backward(&self, x: &Tensor, dy: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        self.backward_inner(x, dy, true)
    }

    /// With `need_dx == false` the returned input gradient is all zeros.
    fn backward_inner(&self, x: &Tensor, dy: &Tensor, need_dx: bool) -> Result<(Tensor, Vec<Tensor>)> {
        let (b, h, w) = expect_rank4(x, self.in_channels)?;
        let (oh, ow) = self
            .output_hw(h, w)
            .ok_or_else(|| Error::ShapeMismatch { expected: vec![self.kernel, self.kernel], actual: vec![h, w] })?;
        if dy.shape() != [b, self.out_channels, oh, ow] {
            return Err(Error::ShapeMismatch { expected: vec![b, self.out_channels, oh, ow], actual: dy.shape().to_vec() });
        }
        let p = oh * ow;
        let k = self.fan_in();
        let in_item = x.item_len();
        let per_sample: Vec<(Vec<f64>, Vec<f64>)> = x
            .data()
            .par_chunks(in_item)
            .zip(dy.data().par_chunks(self.out_channels * p))
            .map(|(xs, dys)| {
                let cols = self.im2col(xs, h, w, oh, ow);
                let mut dw = vec![0.0; self.out_channels * k];
                gemm(self.out_channels, p, k, dys, false, &cols, true, &mut dw, false);
                if !need_dx {
                    return (vec![0.0; in_item], dw);
                }
                let mut dcols = vec![0.0; k * p];
                gemm(k, self.out_channels, p, self.weight.data(), true, dys, false, &mut dcols, false);
                (self.col2im(&dcols, h, w, oh, ow), dw)
            })
            .collect();

        let mut dx = Vec::with_capacity(b * in_item);
        let mut dw = Tensor::zeros(self.weight.shape());
        for (dxs, dws) in &per_sample {
            dx.extend_from_slice(dxs);
            dw.data_mut().iter_mut().zip(dws).for_each(|(a, v)| *a += v);
        }
        let mut db = Tensor::zeros(&[self.out_channels]);
        for dys in dy.data().chunks(self.out_channels * p) {
            for (c, row) in dys.chunks(p).enumerate() {
                db.data_mut()[c] += row.iter().sum::<f64>();
            }
        }
        Ok((Tensor::from_vec(x.shape(), dx)?, vec![dw, db]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub units: usize,
    /// `[units, inputs]`
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new(inputs: usize, units: usize) -> Self {
        Self { inputs, units, weight: Tensor::zeros(&[units, inputs]), bias: Tensor::zeros(&[units]) }
    }

    fn check(&self, x: &Tensor) -> Result<usize> {
        match *x.shape() {
            [b, i] if i == self.inputs => Ok(b),
            _ => Err(Error::ShapeMismatch { expected: vec![0, self.inputs], actual: x.shape().to_vec() }),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let b = self.check(x)?;
        let mut y = vec![0.0; b * self.units];
        gemm(b, self.inputs, self.units, x.data(), false, self.weight.data(), true, &mut y, false);
        for row in y.chunks_mut(self.units) {
            row.iter_mut().zip(self.bias.data()).for_each(|(v, bias)| *v += bias);
        }
        Tensor::from_vec(&[b, self.units], y)
    }

    pub fn backward(&self, x: &Tensor, dy: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let b = self.check(x)?;
        if dy.shape() != [b, self.units] {
            return Err(Error::ShapeMismatch { expected: vec![b, self.units], actual: dy.shape().to_vec() });
        }
        let mut dw = Tensor::zeros(&[self.units, self.inputs]);
        gemm(self.units, b, self.inputs, dy.data(), true, x.data(), false, dw.data_mut(), false);
        let mut db = Tensor::zeros(&[self.units]);
        for row in dy.data().chunks(self.units) {
            db.data_mut().iter_mut().zip(row).for_each(|(a, v)| *a += v);
        }
        let mut dx = Tensor::zeros(&[b, self.inputs]);
        gemm(b, self.units, self.inputs, dy.data(), false, self.weight.data(), false, dx.data_mut(), false);
        Ok((dx, vec![dw, db]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Max,
    Mean,
}

/// Non-overlapping `size × size` pooling; trailing rows/columns that do not
/// fill a window are dropped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pool2d {
    pub kind: PoolKind,
    pub size: usize,
}

impl Pool2d {
    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (oh, ow) = (h / self.size, w / self.size);
        (oh > 0 && ow > 0).then_some((oh, ow))
    }

    /// Returns the output and, for max pooling, the flat input index chosen
    /// for every output element (first maximum wins).
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
        let [b, c, h, w] = *x.shape() else {
            return Err(Error::ShapeMismatch { expected: vec![0, 0, 0, 0], actual: x.shape().to_vec() });
        };
        let (oh, ow) = self
            .output_hw(h, w)
            .ok_or_else(|| Error::ShapeMismatch { expected: vec![self.size, self.size], actual: vec![h, w] })?;
        let s = self.size;
        let mut out = Vec::with_capacity(b * c * oh * ow);
        let mut arg = Vec::with_capacity(if self.kind == PoolKind::Max { b * c * oh * ow } else { 0 });
        let data = x.data();
        for plane in 0..b * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    match self.kind {
                        PoolKind::Max => {
                            let mut best = base + oy * s * w + ox * s;
                            for dy in 0..s {
                                for dx in 0..s {
                                    let i = base + (oy * s + dy) * w + ox * s + dx;
                                    if data[i] > data[best] {
                                        best = i;
                                    }
                                }
                            }
                            out.push(data[best]);
                            arg.push(best);
                        }
                        PoolKind::Mean => {
                            let mut acc = 0.0;
                            for dy in 0..s {
                                let row = base + (oy * s + dy) * w + ox * s;
                                acc += data[row..row + s].iter().sum::<f64>();
                            }
                            out.push(acc / (s * s) as f64);
                        }
                    }
                }
            }
        }
        Ok((Tensor::from_vec(&[b, c, oh, ow], out)?, arg))
    }

    pub fn backward(&self, input_shape: &[usize], argmax: &[usize], dy: &Tensor) -> Result<Tensor> {
        let [b, c, h, w] = *input_shape else {
            return Err(Error::ShapeMismatch { expected: vec![0, 0, 0, 0], actual: input_shape.to_vec() });
        };
        let (oh, ow) = (h / self.size, w / self.size);
        if dy.shape() != [b, c, oh, ow] {
            return Err(Error::ShapeMismatch { expected: vec![b, c, oh, ow], actual: dy.shape().to_vec() });
        }
        let mut dx = Tensor::zeros(input_shape);
        let s = self.size;
        match self.kind {
            PoolKind::Max => {
                for (&i, &g) in argmax.iter().zip(dy.data()) {
                    dx.data_mut()[i] += g;
                }
            }
            PoolKind::Mean => {
                let scale = 1.0 / (s * s) as f64;
                let out = dx.data_mut();
                for plane in 0..b * c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let g = dy.data()[(plane * oh + oy) * ow + ox] * scale;
                            for ddy in 0..s {
                                let row = plane * h * w + (oy * s + ddy) * w + ox * s;
                                out[row..row + s].iter_mut().for_each(|v| *v += g);
                            }
                        }
                    }
                }
            }
        }
        Ok(dx)
    }
}

/// Basic two-convolution residual block:
/// `relu(conv2(relu(conv1(x))) + shortcut(x))`, where the shortcut is the
/// identity or, for downsampling blocks, a strided 1×1 convolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualBlock {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub shortcut: Option<Conv2d>,
}

impl ResidualBlock {
    pub fn new(in_channels: usize, out_channels: usize, stride: usize) -> Self {
        let shortcut =
            (stride != 1 || in_channels != out_channels).then(|| Conv2d::new(in_channels, out_channels, 1, stride, 0));
        Self {
            conv1: Conv2d::new(in_channels, out_channels, 3, stride, 1),
            conv2: Conv2d::new(out_channels, out_channels, 3, 1, 1),
            shortcut,
        }
    }

    pub fn is_downsampling(&self) -> bool {
        self.shortcut.is_some()
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (h1, w1) = self.conv1.output_hw(h, w)?;
        self.conv2.output_hw(h1, w1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Conv2d(Conv2d),
    MaxPool2d { size: usize },
    MeanPool2d { size: usize },
    Relu,
    Dropout { rate: f64 },
    Flatten,
    Dense(Dense),
    ResidualBlock(ResidualBlock),
}

/// What a layer keeps from its forward pass for the backward pass.
#[derive(Clone, Debug)]
pub enum LayerCache {
    Input(Tensor),
    Pool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Mask(Vec<bool>),
    /// Inverted-dropout multipliers; `None` when the layer was an identity.
    Dropout(Option<Vec<f64>>),
    Shape(Vec<usize>),
    Residual(Box<ResidualCache>),
}

#[derive(Clone, Debug)]
pub struct ResidualCache {
    input: Tensor,
    hidden: Tensor,
    hidden_mask: Vec<bool>,
    sum_positive: Vec<bool>,
}

fn relu_in_place(x: &mut Tensor) -> Vec<bool> {
    let mut mask = Vec::with_capacity(x.len());
    for v in x.data_mut() {
        let keep = *v > 0.0;
        if !keep {
            *v = 0.0;
        }
        mask.push(keep);
    }
    mask
}

fn relu_backward(mask: &[bool], dy: &Tensor) -> Tensor {
    let dx = dy.data().iter().zip(mask).map(|(&g, &m)| if m { g } else { 0.0 }).collect();
    Tensor::from_vec(dy.shape(), dx).expect("same shape")
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::MaxPool2d { .. } => "maxpool2d",
            Layer::MeanPool2d { .. } => "meanpool2d",
            Layer::Relu => "relu",
            Layer::Dropout { .. } => "dropout",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
            Layer::ResidualBlock(_) => "residual_block",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Layer::Conv2d(c) if c.kernel == 0 || c.stride == 0 || c.in_channels == 0 || c.out_channels == 0 => {
                Err(Error::config("conv2d needs positive kernel, stride and channels"))
            }
            Layer::MaxPool2d { size: 0 } | Layer::MeanPool2d { size: 0 } => Err(Error::config("pool size must be positive")),
            Layer::Dropout { rate } if !(0.0..1.0).contains(rate) => Err(Error::config("dropout rate must be in [0, 1)")),
            Layer::Dense(d) if d.inputs == 0 || d.units == 0 => Err(Error::config("dense layer needs positive sizes")),
            _ => Ok(()),
        }
    }

    /// Output shape (excluding batch) for an input shape (excluding batch).
    pub fn output_shape(&self, input: &[usize]) -> Option<Vec<usize>> {
        match (self, input) {
            (Layer::Conv2d(c), &[ch, h, w]) if ch == c.in_channels => {
                c.output_hw(h, w).map(|(oh, ow)| vec![c.out_channels, oh, ow])
            }
            (Layer::MaxPool2d { size } | Layer::MeanPool2d { size }, &[ch, h, w]) => {
                (h / size > 0 && w / size > 0).then(|| vec![ch, h / size, w / size])
            }
            (Layer::Relu | Layer::Dropout { .. }, s) => Some(s.to_vec()),
            (Layer::Flatten, s) => Some(vec![s.iter().product()]),
            (Layer::Dense(d), &[n]) if n == d.inputs => Some(vec![d.units]),
            (Layer::ResidualBlock(r), &[ch, h, w]) if ch == r.conv1.in_channels => {
                r.output_hw(h, w).map(|(oh, ow)| vec![r.conv2.out_channels, oh, ow])
            }
            _ => None,
        }
    }

    pub fn params(&self) -> Vec<(&'static str, &Tensor)> {
        match self {
            Layer::Conv2d(c) => vec![("weight", &c.weight), ("bias", &c.bias)],
            Layer::Dense(d) => vec![("weight", &d.weight), ("bias", &d.bias)],
            Layer::ResidualBlock(r) => {
                let mut v = vec![
                    ("conv1.weight", &r.conv1.weight),
                    ("conv1.bias", &r.conv1.bias),
                    ("conv2.weight", &r.conv2.weight),
                    ("conv2.bias", &r.conv2.bias),
                ];
                if let Some(s) = &r.shortcut {
                    v.push(("shortcut.weight", &s.weight));
                    v.push(("shortcut.bias", &s.bias));
                }
                v
            }
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::ResidualBlock(r) => {
                let mut v = vec![&mut r.conv1.weight, &mut r.conv1.bias, &mut r.conv2.weight, &mut r.conv2.bias];
                if let Some(s) = &mut r.shortcut {
                    v.push(&mut s.weight);
                    v.push(&mut s.bias);
                }
                v
            }
            _ => Vec::new(),
        }
    }

    /// Consumes the input, which layers that need it keep in the cache.
    pub fn forward(&self, mut x: Tensor, mode: &mut Mode<'_>) -> Result<(Tensor, LayerCache)> {
        match self {
            Layer::Conv2d(c) => Ok((c.forward(&x)?, LayerCache::Input(x))),
            Layer::Dense(d) => Ok((d.forward(&x)?, LayerCache::Input(x))),
            Layer::MaxPool2d { size } | Layer::MeanPool2d { size } => {
                let kind = if matches!(self, Layer::MaxPool2d { .. }) { PoolKind::Max } else { PoolKind::Mean };
                let (y, argmax) = Pool2d { kind, size: *size }.forward(&x)?;
                Ok((y, LayerCache::Pool { input_shape: x.shape().to_vec(), argmax }))
            }
            Layer::Relu => {
                let mask = relu_in_place(&mut x);
                Ok((x, LayerCache::Mask(mask)))
            }
            Layer::Dropout { rate } => match mode {
                Mode::Train(rng) if *rate > 0.0 => {
                    let keep = 1.0 - rate;
                    let mask: Vec<f64> =
                        (0..x.len()).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
                    x.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                    Ok((x, LayerCache::Dropout(Some(mask))))
                }
                _ => Ok((x, LayerCache::Dropout(None))),
            },
            Layer::Flatten => {
                let shape = x.shape().to_vec();
                let (b, n) = (x.batch(), x.item_len());
                Ok((x.reshape(&[b, n])?, LayerCache::Shape(shape)))
            }
            Layer::ResidualBlock(r) => {
                let mut hidden = r.conv1.forward(&x)?;
                let hidden_mask = relu_in_place(&mut hidden);
                let mut sum = r.conv2.forward(&hidden)?;
                match &r.shortcut {
                    Some(s) => sum.add_assign(&s.forward(&x)?),
                    None => {
                        if sum.shape() != x.shape() {
                            return Err(Error::ShapeMismatch { expected: sum.shape().to_vec(), actual: x.shape().to_vec() });
                        }
                        sum.add_assign(&x)
                    }
                }
                let sum_positive = relu_in_place(&mut sum);
                let cache = ResidualCache { input: x, hidden, hidden_mask, sum_positive };
                Ok((sum, LayerCache::Residual(Box::new(cache))))
            }
        }
    }

    /// Returns the input gradient and the parameter gradients in
    /// [`Layer::params`] order.
    pub fn backward(&self, cache: &LayerCache, dy: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        self.backward_inner(cache, dy, true)
    }

    /// Like [`Layer::backward`]; a first convolution may skip its input
    /// gradient when `need_dx` is false.
    pub(crate) fn backward_inner(&self, cache: &LayerCache, dy: &Tensor, need_dx: bool) -> Result<(Tensor, Vec<Tensor>)> {
        let stale = || Error::StaleCache;
        match (self, cache) {
            (Layer::Conv2d(c), LayerCache::Input(x)) => c.backward_inner(x, dy, need_dx),
            (Layer::Dense(d), LayerCache::Input(x)) => d.backward(x, dy),
            (Layer::MaxPool2d { size }, LayerCache::Pool { input_shape, argmax }) => {
                Ok((Pool2d { kind: PoolKind::Max, size: *size }.backward(input_shape, argmax, dy)?, vec![]))
            }
            (Layer::MeanPool2d { size }, LayerCache::Pool { input_shape, argmax }) => {
                Ok((Pool2d { kind: PoolKind::Mean, size: *size }.backward(input_shape, argmax, dy)?, vec![]))
            }
            (Layer::Relu, LayerCache::Mask(mask)) => {
                if mask.len() != dy.len() {
                    return Err(stale());
                }
                Ok((relu_backward(mask, dy), vec![]))
            }
            (Layer::Dropout { .. }, LayerCache::Dropout(mask)) => match mask {
                Some(m) => {
                    if m.len() != dy.len() {
                        return Err(stale());
                    }
                    let dx = dy.data().iter().zip(m).map(|(g, k)| g * k).collect();
                    Ok((Tensor::from_vec(dy.shape(), dx)?, vec![]))
                }
                None => Ok((dy.clone(), vec![])),
            },
            (Layer::Flatten, LayerCache::Shape(shape)) => Ok((dy.clone().reshape(shape)?, vec![])),
            (Layer::ResidualBlock(r), LayerCache::Residual(c)) => {
                let dsum = relu_backward(&c.sum_positive, dy);
                let (dhidden, g2) = r.conv2.backward(&c.hidden, &dsum)?;
                let (mut dx, g1) = r.conv1.backward(&c.input, &relu_backward(&c.hidden_mask, &dhidden))?;
                let mut grads = g1;
                grads.extend(g2);
                match &r.shortcut {
                    Some(s) => {
                        let (dxs, gs) = s.backward(&c.input, &dsum)?;
                        dx.add_assign(&dxs);
                        grads.extend(gs);
                    }
                    None => dx.add_assign(&dsum),
                }
                Ok((dx, grads))
            }
            _ => Err(stale()),
        }
    }
}

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let [b, c] = *logits.shape() else {
        return Err(Error::ShapeMismatch { expected: vec![0, 0], actual: logits.shape().to_vec() });
    };
    if labels.len() != b {
        return Err(Error::LengthMismatch { expected: b, actual: labels.len() });
    }
    let mut grad = vec![0.0; b * c];
    let mut loss = 0.0;
    for (i, (row, &label)) in logits.data().chunks(c).zip(labels).enumerate() {
        if label >= c {
            return Err(Error::LengthMismatch { expected: c, actual: label + 1 });
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_sum = sum.ln() + max;
        loss += log_sum - row[label];
        let g = &mut grad[i * c..][..c];
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = (v - log_sum).exp() / b as f64;
        }
        g[label] -= 1.0 / b as f64;
    }
    Ok((loss / b as f64, Tensor::from_vec(&[b, c], grad)?))
}
