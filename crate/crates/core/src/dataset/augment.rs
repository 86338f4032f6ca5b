//! Random photometric and geometric perturbation of glyph crops.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Intensity used for pixels warped in from outside the source image.
pub const BACKGROUND: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub horizontal_flip: f64,
    /// Maximum absolute rotation in degrees.
    pub rotation_max: f64,
    /// Maximum absolute shift as a fraction of width/height.
    pub translation_max: f64,
    pub scale_range: [f64; 2],
    pub brightness_range: [f64; 2],
    pub contrast_range: [f64; 2],
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            horizontal_flip: 0.5,
            rotation_max: 15.0,
            translation_max: 0.1,
            scale_range: [0.9, 1.1],
            brightness_range: [0.8, 1.2],
            contrast_range: [0.8, 1.2],
            seed: 0,
        }
    }
}

impl AugmentSpec {
    pub fn identity() -> Self {
        Self {
            horizontal_flip: 0.0,
            rotation_max: 0.0,
            translation_max: 0.0,
            scale_range: [1.0, 1.0],
            brightness_range: [1.0, 1.0],
            contrast_range: [1.0, 1.0],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |name: &str, [lo, hi]: [f64; 2]| {
            if lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi {
                Ok(())
            } else {
                Err(Error::config(format!("{name} range [{lo}, {hi}] must be positive and ordered")))
            }
        };
        if !(0.0..=1.0).contains(&self.horizontal_flip) {
            return Err(Error::config("horizontal_flip must be a probability"));
        }
        if !(self.rotation_max >= 0.0 && self.rotation_max.is_finite()) {
            return Err(Error::config("rotation_max must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.translation_max) {
            return Err(Error::config("translation_max must be in [0, 1)"));
        }
        ordered("scale", self.scale_range)?;
        ordered("brightness", self.brightness_range)?;
        ordered("contrast", self.contrast_range)
    }
}

/// Concrete parameters of one augmentation draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentDraw {
    pub flip: bool,
    pub rotation_deg: f64,
    pub shift_x: f64,
    pub shift_y: f64,
    pub scale: f64,
    pub brightness: f64,
    pub contrast: f64,
}

impl AugmentDraw {
    pub fn identity() -> Self {
        Self { flip: false, rotation_deg: 0.0, shift_x: 0.0, shift_y: 0.0, scale: 1.0, brightness: 1.0, contrast: 1.0 }
    }

    pub fn sample<R: Rng + ?Sized>(spec: &AugmentSpec, rng: &mut R) -> Self {
        let flip = spec.horizontal_flip > 0.0 && rng.gen::<f64>() < spec.horizontal_flip;
        let symmetric = |rng: &mut R, max: f64| if max > 0.0 { rng.gen_range(-max..=max) } else { 0.0 };
        let within = |rng: &mut R, [lo, hi]: [f64; 2]| if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        Self {
            flip,
            rotation_deg: symmetric(rng, spec.rotation_max),
            shift_x: symmetric(rng, spec.translation_max),
            shift_y: symmetric(rng, spec.translation_max),
            scale: within(rng, spec.scale_range),
            brightness: within(rng, spec.brightness_range),
            contrast: within(rng, spec.contrast_range),
        }
    }

    fn is_geometric_identity(&self) -> bool {
        self.rotation_deg == 0.0 && self.shift_x == 0.0 && self.shift_y == 0.0 && self.scale == 1.0
    }

    /// Applies flip, then rotate/scale/translate about the image center with
    /// bilinear sampling, then contrast about the mean and brightness.
    pub fn apply(&self, img: &GrayImage) -> GrayImage {
        let (w, h) = (img.width(), img.height());
        let mut out = if self.flip { GrayImage::from_fn(w, h, |x, y| img.get(w - 1 - x, y)) } else { img.clone() };

        if !self.is_geometric_identity() {
            let src = out;
            let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
            let (sin, cos) = self.rotation_deg.to_radians().sin_cos();
            let (tx, ty) = (self.shift_x * w as f64, self.shift_y * h as f64);
            out = GrayImage::from_fn(w, h, |x, y| {
                // Inverse map: destination -> source.
                let dx = x as f64 - cx - tx;
                let dy = y as f64 - cy - ty;
                let sx = (cos * dx + sin * dy) / self.scale + cx;
                let sy = (-sin * dx + cos * dy) / self.scale + cy;
                sample_or_background(&src, sx, sy)
            });
        }

        if self.contrast != 1.0 {
            let mean = out.mean();
            out = out.map(|v| (v - mean) * self.contrast + mean);
        }
        if self.brightness != 1.0 {
            out = out.map(|v| v * self.brightness);
        }
        out
    }
}

fn sample_or_background(img: &GrayImage, x: f64, y: f64) -> f64 {
    let (w, h) = (img.width() as f64, img.height() as f64);
    if x <= -1.0 || y <= -1.0 || x >= w || y >= h {
        return BACKGROUND;
    }
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let at = |xi: f64, yi: f64| {
        if xi < 0.0 || yi < 0.0 || xi >= w || yi >= h {
            BACKGROUND
        } else {
            img.get(xi as usize, yi as usize)
        }
    };
    let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1.0, y0) * fx;
    let bottom = at(x0, y0 + 1.0) * (1.0 - fx) + at(x0 + 1.0, y0 + 1.0) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Draws one set of parameters from `spec` using `rng` and applies them.
pub fn augment<R: Rng + ?Sized>(img: &GrayImage, spec: &AugmentSpec, rng: &mut R) -> GrayImage {
    AugmentDraw::sample(spec, rng).apply(img)
}
