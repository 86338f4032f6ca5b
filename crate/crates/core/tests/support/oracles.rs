//! Naive reference implementations used as test oracles.

use glyphforge_core::GrayImage;
use rand::Rng;

/// Direct product of floored member posteriors with the prior, normalized.
pub fn nb_oracle(prior: &[f64], members: &[Vec<f64>], floor: f64) -> Vec<f64> {
    let mut out: Vec<f64> = prior.to_vec();
    for m in members {
        for (o, p) in out.iter_mut().zip(m) {
            *o *= p.max(floor);
        }
    }
    let z: f64 = out.iter().sum();
    out.iter().map(|v| v / z).collect()
}

/// Weighted mean of member posteriors.
pub fn soft_vote_oracle(members: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    (0..members[0].len()).map(|c| members.iter().zip(weights).map(|(m, w)| w * m[c]).sum::<f64>() / total).collect()
}

/// A probability vector bounded away from zero.
pub fn random_distribution<R: Rng>(rng: &mut R, classes: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.01..1.0)).collect();
    let z: f64 = raw.iter().sum();
    raw.iter().map(|v| v / z).collect()
}

pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(f64::MIN_POSITIVE)).fold(0.0, f64::max)
}

/// 8-neighbor, radius-1 LBP by explicit integer offsets. Bit `p` walks the
/// ring counter-clockwise starting east (rows grow downward).
pub fn lbp8_oracle(img: &GrayImage, x: usize, y: usize) -> u32 {
    const RING: [(i64, i64); 8] = [(1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1)];
    let c = img.get(x, y);
    let mut code = 0;
    for (bit, (dx, dy)) in RING.iter().enumerate() {
        let v = img.get((x as i64 + dx) as usize, (y as i64 + dy) as usize);
        if v >= c {
            code |= 1 << bit;
        }
    }
    code
}

/// Number of 0/1 changes walking the `p`-bit code circularly, bit by bit.
pub fn circular_transitions(code: u32, p: usize) -> usize {
    (0..p).filter(|&i| (code >> i) & 1 != (code >> ((i + 1) % p)) & 1).count()
}

/// Random image quantized to 1/255 steps, so ties between pixels occur.
pub fn random_image<R: Rng>(rng: &mut R, w: usize, h: usize) -> GrayImage {
    let px = (0..w * h).map(|_| rng.gen_range(0..=255u32) as f64 / 255.0).collect();
    GrayImage::new(w, h, px).unwrap()
}

/// Two unit disks centred at (0, 0) and (5, 5), `per_class` points each.
pub fn two_blobs<R: Rng>(rng: &mut R, per_class: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (label, (cx, cy)) in [(0usize, (0.0, 0.0)), (1, (5.0, 5.0))] {
        for _ in 0..per_class {
            let r = rng.gen::<f64>().sqrt();
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            xs.push(vec![cx + r * a.cos(), cy + r * a.sin()]);
            ys.push(label);
        }
    }
    (xs, ys)
}
