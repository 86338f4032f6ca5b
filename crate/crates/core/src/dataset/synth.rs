//! Procedural stand-in corpus: random stroke glyphs on white ground.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::augment::{AugmentDraw, AugmentSpec};
use super::index::AnnotationIndex;
use super::manifest::{DatasetManifest, Sample, Split};
use crate::error::{Error, Result};
use crate::image::GrayImage;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const IMAGE_DIR: &str = "images";

/// First code point used for synthetic class labels (CJK unified ideographs).
const LABEL_BASE: u32 = 0x4E00;

#[derive(Clone, Debug, PartialEq)]
pub struct Stroke {
    /// Vertices in pixel coordinates.
    pub points: Vec<(f64, f64)>,
    pub width: f64,
}

/// A class prototype: 3 to 7 polyline strokes.
#[derive(Clone, Debug, PartialEq)]
pub struct Glyph {
    pub strokes: Vec<Stroke>,
}

impl Glyph {
    pub fn random<R: Rng + ?Sized>(size: usize, rng: &mut R) -> Self {
        let s = size as f64;
        let (lo, hi) = (0.18 * s, 0.82 * s);
        let n_strokes = rng.gen_range(3..=7);
        let strokes = (0..n_strokes)
            .map(|_| {
                let n_points = rng.gen_range(2..=4);
                let points = (0..n_points).map(|_| (rng.gen_range(lo..hi), rng.gen_range(lo..hi))).collect();
                Stroke { points, width: rng.gen_range(2.0..=4.0) }
            })
            .collect();
        Self { strokes }
    }

    /// Moves every vertex by an independent uniform offset in `[-amount, amount]`.
    pub fn jitter<R: Rng + ?Sized>(&self, amount: f64, rng: &mut R) -> Self {
        let strokes = self
            .strokes
            .iter()
            .map(|st| Stroke {
                points: st
                    .points
                    .iter()
                    .map(|&(x, y)| (x + rng.gen_range(-amount..=amount), y + rng.gen_range(-amount..=amount)))
                    .collect(),
                width: st.width,
            })
            .collect();
        Self { strokes }
    }

    /// Anti-aliased rendering: ink coverage falls off linearly over one
    /// pixel at the stroke boundary.
    pub fn render(&self, size: usize) -> GrayImage {
        GrayImage::from_fn(size, size, |x, y| {
            let p = (x as f64, y as f64);
            let mut coverage: f64 = 0.0;
            for st in &self.strokes {
                let half = st.width / 2.0;
                for seg in st.points.windows(2) {
                    let d = point_segment_distance(p, seg[0], seg[1]);
                    coverage = coverage.max((half + 0.5 - d).clamp(0.0, 1.0));
                }
            }
            1.0 - coverage
        })
    }
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len2).clamp(0.0, 1.0) };
    let (cx, cy) = (a.0 + t * vx, a.1 + t * vy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// Per-sample perturbation used when synthesizing variants of a prototype.
pub fn variant_spec() -> AugmentSpec {
    AugmentSpec {
        horizontal_flip: 0.0,
        rotation_max: 8.0,
        translation_max: 0.06,
        scale_range: [0.92, 1.08],
        brightness_range: [0.9, 1.0],
        contrast_range: [0.85, 1.15],
        seed: 0,
    }
}

pub fn class_label(class: usize) -> String {
    char::from_u32(LABEL_BASE + class as u32).expect("valid code point").to_string()
}

fn l1(a: &GrayImage, b: &GrayImage) -> f64 {
    a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y).abs()).sum()
}

/// Renders `classes` distinct prototypes and `per_class` perturbed variants
/// of each into `out_dir`, writing PNGs under `images/` and a manifest.
pub fn generate_synthetic(
    classes: usize,
    per_class: usize,
    size: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    if classes < 2 || per_class < 1 {
        return Err(Error::config("synthetic datasets need at least 2 classes and 1 sample per class"));
    }
    if size < 8 {
        return Err(Error::config("synthetic glyph size must be at least 8 px"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut prototypes: Vec<Glyph> = Vec::with_capacity(classes);
    let mut rendered: Vec<GrayImage> = Vec::with_capacity(classes);
    while prototypes.len() < classes {
        let g = Glyph::random(size, &mut rng);
        let img = g.render(size);
        if rendered.iter().all(|other| l1(other, &img) > 0.0) {
            prototypes.push(g);
            rendered.push(img);
        }
    }

    let image_dir = out_dir.join(IMAGE_DIR);
    std::fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;

    let spec = variant_spec();
    let jitter = size as f64 * 0.03;
    let mut samples = Vec::with_capacity(classes * per_class);
    for (c, proto) in prototypes.iter().enumerate() {
        for j in 0..per_class {
            let img = AugmentDraw::sample(&spec, &mut rng).apply(&proto.jitter(jitter, &mut rng).render(size));
            let rel = format!("{IMAGE_DIR}/c{c:03}_{j:03}.png");
            img.save_png(&out_dir.join(&rel))?;
            samples.push(Sample {
                id: format!("c{c:03}_{j:03}"),
                image_path: rel,
                index: AnnotationIndex::new(c as u32 + 1, 1, j as u32 + 1, (j % 5) as u32)?,
                character: class_label(c),
                split: Split::Unassigned,
            });
        }
    }
    let manifest = DatasetManifest::new(out_dir, samples)?;
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
