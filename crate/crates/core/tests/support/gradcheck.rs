//! Central finite-difference checks of layer backward passes.
//!
//! Every layer is probed through the scalar `L = Σ r ⊙ layer(x)` with a
//! fixed random `r`, so the analytic input gradient is `backward(r)`.
//! All layers here are piecewise linear in any single coordinate, so a
//! probe whose second difference is not ~0 straddled a kink (a ReLU or
//! max-pool switch) and is skipped rather than compared.

use glyphforge_core::nn::layers::{Conv2d, Dense, ResidualBlock};
use glyphforge_core::nn::{softmax_cross_entropy, Layer, Mode, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-3;
pub const MAX_REL_ERR: f64 = 1e-4;
/// Gradient magnitudes below this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Conv2d,
    MaxPool,
    MeanPool,
    Relu,
    Dropout,
    Dense,
    Residual,
    SoftmaxCrossEntropy,
}

impl Kind {
    pub const ALL: [Kind; 8] = [
        Kind::Conv2d,
        Kind::MaxPool,
        Kind::MeanPool,
        Kind::Relu,
        Kind::Dropout,
        Kind::Dense,
        Kind::Residual,
        Kind::SoftmaxCrossEntropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Conv2d => "conv2d",
            Kind::MaxPool => "maxpool",
            Kind::MeanPool => "meanpool",
            Kind::Relu => "relu",
            Kind::Dropout => "dropout",
            Kind::Dense => "dense",
            Kind::Residual => "residual",
            Kind::SoftmaxCrossEntropy => "softmax_ce",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub max_rel: f64,
    pub checked: usize,
    pub skipped: usize,
    pub shape: Vec<usize>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.max_rel < MAX_REL_ERR && self.checked > 0 && self.skipped * 4 <= self.checked
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, uniform(rng, n, -scale, scale)).unwrap()
}

fn randomize_conv(c: &mut Conv2d, rng: &mut ChaCha8Rng, scale: f64) {
    c.weight = tensor(rng, c.weight.shape(), scale);
    c.bias = tensor(rng, c.bias.shape(), scale);
}

/// A random layer of `kind` with a random input shape; `None` for softmax-CE.
pub fn random_case(kind: Kind, rng: &mut ChaCha8Rng) -> (Option<Layer>, Tensor) {
    let b = rng.gen_range(1..=2);
    match kind {
        Kind::Conv2d => {
            let k = rng.gen_range(1..=4);
            let mut c = Conv2d::new(rng.gen_range(1..=3), rng.gen_range(1..=3), k, rng.gen_range(1..=2), rng.gen_range(0..k));
            randomize_conv(&mut c, rng, 1.0);
            let shape = [b, c.in_channels, rng.gen_range(k..=k + 5), rng.gen_range(k..=k + 5)];
            let x = tensor(rng, &shape, 1.0);
            (Some(Layer::Conv2d(c)), x)
        }
        Kind::MaxPool | Kind::MeanPool => {
            let size = rng.gen_range(1..=3);
            let shape = [b, rng.gen_range(1..=3), rng.gen_range(size..=3 * size + 1), rng.gen_range(size..=3 * size + 1)];
            let n: usize = shape.iter().product();
            let x = if kind == Kind::MaxPool {
                // Distinct values spaced 0.01 apart: no window has a near-tie.
                let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - 0.5).collect();
                v.shuffle(rng);
                Tensor::from_vec(&shape, v).unwrap()
            } else {
                tensor(rng, &shape, 1.0)
            };
            let layer = if kind == Kind::MaxPool { Layer::MaxPool2d { size } } else { Layer::MeanPool2d { size } };
            (Some(layer), x)
        }
        Kind::Relu => {
            let shape = if rng.gen() { vec![b, rng.gen_range(1..=12)] } else { vec![b, 2, rng.gen_range(1..=4), 3] };
            let n: usize = shape.iter().product();
            // Off the kink: |x| >= 0.01.
            let v = (0..n).map(|_| rng.gen_range(0.01..1.0) * if rng.gen() { 1.0 } else { -1.0 }).collect();
            (Some(Layer::Relu), Tensor::from_vec(&shape, v).unwrap())
        }
        Kind::Dropout => {
            let rate = rng.gen_range(0.1..0.7);
            let shape = [b, rng.gen_range(1..=16)];
            let x = tensor(rng, &shape, 1.0);
            (Some(Layer::Dropout { rate }), x)
        }
        Kind::Dense => {
            let mut d = Dense::new(rng.gen_range(1..=8), rng.gen_range(1..=6));
            d.weight = tensor(rng, d.weight.shape(), 1.0);
            d.bias = tensor(rng, d.bias.shape(), 1.0);
            let x = tensor(rng, &[b, d.inputs], 1.0);
            (Some(Layer::Dense(d)), x)
        }
        Kind::Residual => {
            let (cin, stride) = (rng.gen_range(1..=3), rng.gen_range(1..=2));
            let cout = if rng.gen() { cin } else { rng.gen_range(1..=3) };
            let mut r = ResidualBlock::new(cin, cout, stride);
            randomize_conv(&mut r.conv1, rng, 0.5);
            randomize_conv(&mut r.conv2, rng, 0.5);
            if let Some(s) = &mut r.shortcut {
                randomize_conv(s, rng, 0.5);
            }
            let shape = [b, cin, rng.gen_range(3..=6), rng.gen_range(3..=6)];
            let x = tensor(rng, &shape, 1.0);
            (Some(Layer::ResidualBlock(r)), x)
        }
        Kind::SoftmaxCrossEntropy => {
            let c = rng.gen_range(2..=8);
            let shape = [rng.gen_range(1..=4), c];
            (None, tensor(rng, &shape, 3.0))
        }
    }
}

fn projected(layer: &Layer, x: Tensor, r: &[f64], dropout_seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
    let (y, _) = layer.forward(x, &mut Mode::Train(&mut rng)).unwrap();
    y.data().iter().zip(r).map(|(a, b)| a * b).sum()
}

/// Compares one probed coordinate; `None` when the probe crossed a kink.
fn probe(l0: f64, lp: f64, lm: f64, analytic: f64) -> Option<f64> {
    let second = (lp - 2.0 * l0 + lm).abs();
    if second > 1e-9 * (1.0 + l0.abs()) {
        return None;
    }
    Some(rel_err(analytic, (lp - lm) / (2.0 * EPS)))
}

fn tally(report: &mut Report, outcome: Option<f64>) {
    match outcome {
        Some(e) => {
            report.checked += 1;
            report.max_rel = report.max_rel.max(e);
        }
        None => report.skipped += 1,
    }
}

/// Checks input and parameter gradients of `layer` at `x`. Dropout runs in
/// training mode with the same seed for every evaluation, so its mask is fixed.
pub fn check_layer(mut layer: Layer, x: Tensor, seed: u64) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut mode_rng = ChaCha8Rng::seed_from_u64(seed);
    let (y, cache) = layer.forward(x.clone(), &mut Mode::Train(&mut mode_rng)).unwrap();
    let r = uniform(&mut rng, y.len(), -1.0, 1.0);
    let dy = Tensor::from_vec(y.shape(), r.clone()).unwrap();
    let (dx, dparams) = layer.backward(&cache, &dy).unwrap();
    assert_eq!(dx.shape(), x.shape());

    let l0 = projected(&layer, x.clone(), &r, seed);
    let mut report = Report { shape: x.shape().to_vec(), ..Report::default() };
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[i] += EPS;
        let mut xm = x.clone();
        xm.data_mut()[i] -= EPS;
        let (lp, lm) = (projected(&layer, xp, &r, seed), projected(&layer, xm, &r, seed));
        tally(&mut report, probe(l0, lp, lm, dx.data()[i]));
    }

    let n_params = layer.params_mut().len();
    assert_eq!(dparams.len(), n_params);
    for (j, g) in dparams.iter().enumerate() {
        for k in 0..g.len() {
            let orig = layer.params_mut()[j].data()[k];
            layer.params_mut()[j].data_mut()[k] = orig + EPS;
            let lp = projected(&layer, x.clone(), &r, seed);
            layer.params_mut()[j].data_mut()[k] = orig - EPS;
            let lm = projected(&layer, x.clone(), &r, seed);
            layer.params_mut()[j].data_mut()[k] = orig;
            tally(&mut report, probe(l0, lp, lm, g.data()[k]));
        }
    }
    report
}

/// Checks the logit gradient of mean softmax cross-entropy.
pub fn check_softmax_ce(logits: Tensor, rng: &mut ChaCha8Rng) -> Report {
    let [b, c] = *logits.shape() else { panic!("logits must be rank 2") };
    let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..c)).collect();
    let (_, grad) = softmax_cross_entropy(&logits, &labels).unwrap();
    let loss = |t: &Tensor| softmax_cross_entropy(t, &labels).unwrap().0;
    let mut report = Report { shape: logits.shape().to_vec(), ..Report::default() };
    for i in 0..logits.len() {
        let mut p = logits.clone();
        p.data_mut()[i] += EPS;
        let mut m = logits.clone();
        m.data_mut()[i] -= EPS;
        let numeric = (loss(&p) - loss(&m)) / (2.0 * EPS);
        tally(&mut report, Some(rel_err(grad.data()[i], numeric)));
    }
    report
}

/// One random case of `kind` drawn from `seed`.
pub fn check_kind(kind: Kind, seed: u64) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match random_case(kind, &mut rng) {
        (Some(layer), x) => check_layer(layer, x, seed),
        (None, logits) => check_softmax_ce(logits, &mut rng),
    }
}
