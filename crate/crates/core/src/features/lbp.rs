//! Local binary patterns on a circular neighborhood.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// How off-grid neighbor positions are read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// Round each neighbor position to the nearest pixel. Codes only ever
    /// compare raw pixel values, so they are exactly invariant under
    /// monotone intensity transforms.
    #[default]
    Nearest,
    /// Bilinear interpolation at the exact circle position.
    Bilinear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbpParams {
    pub neighbors: usize,
    pub radius: f64,
    /// `(cells_x, cells_y)`.
    pub grid: (usize, usize),
    pub uniform: bool,
    #[serde(default)]
    pub sampling: Sampling,
}

impl Default for LbpParams {
    fn default() -> Self {
        Self { neighbors: 8, radius: 1.0, grid: (4, 4), uniform: true, sampling: Sampling::Nearest }
    }
}

impl LbpParams {
    pub fn new(neighbors: usize, radius: f64) -> Self {
        Self { neighbors, radius, ..Self::default() }
    }

    pub fn with_grid(mut self, cells_x: usize, cells_y: usize) -> Self {
        self.grid = (cells_x, cells_y);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.neighbors < 4 || self.neighbors > 24 {
            return Err(Error::config(format!("LBP neighbors {} outside [4, 24]", self.neighbors)));
        }
        if !self.uniform && self.neighbors > 16 {
            return Err(Error::config("raw (non-uniform) LBP histograms need at most 16 neighbors"));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::config("LBP radius must be positive"));
        }
        if self.grid.0 == 0 || self.grid.1 == 0 {
            return Err(Error::config("LBP grid dimensions must be at least 1"));
        }
        Ok(())
    }

    pub fn bins_per_cell(&self) -> usize {
        if self.uniform {
            UniformMapping::new(self.neighbors).bin_count()
        } else {
            1 << self.neighbors
        }
    }

    pub fn dimension(&self) -> usize {
        self.grid.0 * self.grid.1 * self.bins_per_cell()
    }

    /// Distance to the border a pixel needs for its code to be defined.
    pub fn margin(&self) -> usize {
        self.radius.ceil() as usize
    }
}

/// Precomputed neighbor offsets for one `(P, R, sampling)`.
#[derive(Clone, Debug)]
pub struct NeighborRing {
    offsets: Vec<(f64, f64)>,
    sampling: Sampling,
    margin: usize,
}

impl NeighborRing {
    /// Neighbor `p` sits at angle `2πp/P`, counter-clockwise from the +x
    /// axis (image rows grow downward, so +y on the circle is -row).
    pub fn new(neighbors: usize, radius: f64, sampling: Sampling) -> Self {
        let snap = |v: f64| if (v - v.round()).abs() < 1e-9 { v.round() } else { v };
        let offsets = (0..neighbors)
            .map(|p| {
                let a = 2.0 * PI * p as f64 / neighbors as f64;
                let (dx, dy) = (radius * a.cos(), -radius * a.sin());
                match sampling {
                    Sampling::Nearest => (dx.round(), dy.round()),
                    Sampling::Bilinear => (snap(dx), snap(dy)),
                }
            })
            .collect();
        Self { offsets, sampling, margin: radius.ceil() as usize }
    }

    /// Code at an in-bounds pixel; bit `p` is set when neighbor `p` >= center.
    #[inline]
    fn code_unchecked(&self, img: &GrayImage, x: usize, y: usize) -> u32 {
        let center = img.get(x, y);
        let mut code = 0u32;
        for (p, &(dx, dy)) in self.offsets.iter().enumerate() {
            let v = match self.sampling {
                Sampling::Nearest => img.get((x as f64 + dx) as usize, (y as f64 + dy) as usize),
                Sampling::Bilinear => img.sample_bilinear(x as f64 + dx, y as f64 + dy),
            };
            if v >= center {
                code |= 1 << p;
            }
        }
        code
    }

    pub fn code_at(&self, img: &GrayImage, x: usize, y: usize) -> Result<u32> {
        let m = self.margin;
        if x < m || y < m || x + m >= img.width() || y + m >= img.height() {
            return Err(Error::OutOfBounds { x, y, margin: m, width: img.width(), height: img.height() });
        }
        Ok(self.code_unchecked(img, x, y))
    }
}

/// LBP code of pixel `(x, y)` with `neighbors` samples on a circle of `radius`.
pub fn lbp_code_at(
    img: &GrayImage,
    x: usize,
    y: usize,
    neighbors: usize,
    radius: f64,
    sampling: Sampling,
) -> Result<u32> {
    if !(1..=32).contains(&neighbors) {
        return Err(Error::config(format!("unsupported neighbor count {neighbors}")));
    }
    NeighborRing::new(neighbors, radius, sampling).code_at(img, x, y)
}

/// The u2 uniform mapping: codes with at most two circular 0/1 transitions
/// get their own bin, all other codes share the last bin.
///
/// Uniform codes are numbered in closed form: `0` for all-zeros, then
/// `1 + (k - 1) * P + s` for a single run of `k` ones starting at bit `s`,
/// then `P(P-1) + 1` for all-ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UniformMapping {
    neighbors: usize,
}

impl UniformMapping {
    pub fn new(neighbors: usize) -> Self {
        assert!((2..=24).contains(&neighbors), "uniform mapping supports 2..=24 neighbors");
        Self { neighbors }
    }

    fn mask(&self) -> u32 {
        (1u32 << self.neighbors) - 1
    }

    pub fn transitions(&self, code: u32) -> u32 {
        let p = self.neighbors as u32;
        let rotated = ((code << 1) | (code >> (p - 1))) & self.mask();
        (code ^ rotated).count_ones()
    }

    pub fn is_uniform(&self, code: u32) -> bool {
        self.transitions(code) <= 2
    }

    pub fn uniform_count(&self) -> usize {
        self.neighbors * (self.neighbors - 1) + 2
    }

    pub fn bin_count(&self) -> usize {
        self.uniform_count() + 1
    }

    pub fn bin(&self, code: u32) -> usize {
        let p = self.neighbors;
        let code = code & self.mask();
        if !self.is_uniform(code) {
            return self.uniform_count();
        }
        if code == 0 {
            return 0;
        }
        if code == self.mask() {
            return p * (p - 1) + 1;
        }
        let ones = code.count_ones() as usize;
        let start = (0..p).find(|&i| code >> i & 1 == 1 && code >> ((i + p - 1) % p) & 1 == 0).expect("one run");
        1 + (ones - 1) * p + start
    }
}

pub fn uniform_table(neighbors: usize) -> UniformMapping {
    UniformMapping::new(neighbors)
}

/// Concatenated per-cell L1-normalized code histograms.
///
/// Cells tile the whole image; only pixels at least `ceil(R)` from the border
/// contribute. Every cell must contain at least one such pixel.
pub fn lbp_histogram(img: &GrayImage, params: &LbpParams) -> Result<Vec<f64>> {
    params.validate()?;
    let (w, h) = (img.width(), img.height());
    let (gx, gy) = params.grid;
    let m = params.margin();
    let ring = NeighborRing::new(params.neighbors, params.radius, params.sampling);
    let mapping = params.uniform.then(|| UniformMapping::new(params.neighbors));
    let bins = params.bins_per_cell();

    let cell_range = |i: usize, cells: usize, len: usize| {
        let lo = (i * len / cells).max(m);
        let hi = ((i + 1) * len / cells).min(len.saturating_sub(m));
        lo..hi.max(lo)
    };

    let mut out = vec![0.0; params.dimension()];
    for cy in 0..gy {
        let ys = cell_range(cy, gy, h);
        for cx in 0..gx {
            let xs = cell_range(cx, gx, w);
            let n = ys.len() * xs.len();
            if n == 0 {
                return Err(Error::ImageTooSmall(format!(
                    "{w}x{h} image leaves cell ({cx}, {cy}) of a {gx}x{gy} grid without pixels {m} px from the border"
                )));
            }
            let hist = &mut out[(cy * gx + cx) * bins..][..bins];
            for y in ys.clone() {
                for x in xs.clone() {
                    let code = ring.code_unchecked(img, x, y);
                    let bin = mapping.map_or(code as usize, |mp| mp.bin(code));
                    hist[bin] += 1.0;
                }
            }
            let inv = 1.0 / n as f64;
            hist.iter_mut().for_each(|v| *v *= inv);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::new(w, h, (0..w * h).map(|_| rng.gen()).collect()).unwrap()
    }

    #[test]
    fn constant_image_gives_all_ones() {
        let img = GrayImage::filled(9, 9, 0.4);
        assert_eq!(lbp_code_at(&img, 4, 4, 8, 1.0, Sampling::Nearest).unwrap(), 255);
        assert_eq!(lbp_code_at(&img, 4, 4, 8, 1.0, Sampling::Bilinear).unwrap(), 255);
        assert_eq!(lbp_code_at(&img, 4, 4, 16, 2.0, Sampling::Nearest).unwrap(), 0xFFFF);
    }

    #[test]
    fn bright_center_gives_zero() {
        let mut px = vec![0.0; 9];
        px[4] = 1.0;
        let img = GrayImage::new(3, 3, px).unwrap();
        assert_eq!(lbp_code_at(&img, 1, 1, 8, 1.0, Sampling::Nearest).unwrap(), 0);
        assert_eq!(lbp_code_at(&img, 1, 1, 8, 1.0, Sampling::Bilinear).unwrap(), 0);
    }

    #[test]
    fn border_pixels_rejected() {
        let img = GrayImage::filled(9, 9, 0.5);
        assert!(matches!(lbp_code_at(&img, 0, 4, 8, 1.0, Sampling::Nearest), Err(Error::OutOfBounds { .. })));
        assert!(matches!(lbp_code_at(&img, 7, 7, 16, 2.0, Sampling::Nearest), Err(Error::OutOfBounds { .. })));
        assert!(lbp_code_at(&img, 6, 6, 16, 2.0, Sampling::Nearest).is_ok());
    }

    #[test]
    fn uniform_table_p8_brute_force() {
        let mapping = uniform_table(8);
        let mut uniform = 0;
        for code in 0u32..256 {
            let bits: Vec<u32> = (0..8).map(|i| code >> i & 1).collect();
            let transitions = (0..8).filter(|&i| bits[i] != bits[(i + 1) % 8]).count();
            if transitions <= 2 {
                uniform += 1;
                assert!(mapping.bin(code) < 58);
            } else {
                assert_eq!(mapping.bin(code), 58);
            }
        }
        assert_eq!(uniform, 58);
        assert_eq!(mapping.bin_count(), 59);
        assert_eq!(mapping.bin(0), 0);
        assert_eq!(mapping.bin(0b0101_0101), 58);
    }

    #[test]
    fn uniform_bins_are_distinct() {
        for p in [4usize, 8, 12, 16] {
            let mapping = uniform_table(p);
            let mut seen = vec![false; mapping.uniform_count()];
            for code in 0u32..(1 << p) {
                if mapping.is_uniform(code) {
                    let b = mapping.bin(code);
                    assert!(!seen[b], "P={p}: bin {b} reused");
                    seen[b] = true;
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn rotation_preserves_uniformity() {
        let mapping = uniform_table(8);
        for code in 0u32..256 {
            let rot = ((code << 3) | (code >> 5)) & 0xFF;
            assert_eq!(mapping.is_uniform(code), mapping.is_uniform(rot));
        }
    }

    #[test]
    fn constant_histogram_mass_in_all_ones_bin() {
        let img = GrayImage::filled(64, 64, 0.7);
        let params = LbpParams::new(8, 1.0).with_grid(1, 1);
        let h = lbp_histogram(&img, &params).unwrap();
        assert_eq!(h.len(), 59);
        assert_eq!(h[uniform_table(8).bin(255)], 1.0);
        assert_eq!(h.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn histogram_dimension() {
        assert_eq!(LbpParams::new(8, 1.0).with_grid(4, 4).dimension(), 944);
        assert_eq!(LbpParams::new(16, 2.0).with_grid(1, 1).dimension(), 243);
        let img = random_image(64, 64, 1);
        assert_eq!(lbp_histogram(&img, &LbpParams::new(24, 3.0)).unwrap().len(), 16 * 555);
    }

    #[test]
    fn tiny_image_rejected() {
        let img = GrayImage::filled(6, 6, 0.5);
        let params = LbpParams::new(8, 1.0).with_grid(6, 6);
        assert!(matches!(lbp_histogram(&img, &params), Err(Error::ImageTooSmall(_))));
        assert!(lbp_histogram(&img, &LbpParams::new(8, 1.0).with_grid(2, 2)).is_ok());
    }

    proptest! {
        #[test]
        fn cell_histograms_sum_to_one(seed in any::<u64>(), w in 12usize..40, h in 12usize..40,
                                      gx in 1usize..4, gy in 1usize..4, which in 0usize..3) {
            let (p, r) = [(8, 1.0), (16, 2.0), (24, 3.0)][which];
            let img = random_image(w, h, seed);
            let params = LbpParams::new(p, r).with_grid(gx, gy);
            let hist = lbp_histogram(&img, &params).unwrap();
            prop_assert_eq!(hist.len(), params.dimension());
            for cell in hist.chunks(params.bins_per_cell()) {
                prop_assert!(cell.iter().all(|&v| v >= 0.0));
                prop_assert!((cell.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn codes_fit_in_p_bits(seed in any::<u64>(), which in 0usize..3, bilinear in any::<bool>()) {
            let (p, r) = [(8, 1.0), (16, 2.0), (24, 3.0)][which];
            let sampling = if bilinear { Sampling::Bilinear } else { Sampling::Nearest };
            let img = random_image(9, 9, seed);
            let code = lbp_code_at(&img, 4, 4, p, r, sampling).unwrap();
            prop_assert!(u64::from(code) < 1u64 << p);
        }
    }
}
