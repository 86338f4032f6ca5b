use super::gabor::Kernel2d;
use super::lbp::{lbp_histogram, LbpParams};
use crate::error::Result;
use crate::image::GrayImage;

/// Mirror index without edge repetition (`d c b | a b c d | c b a`).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let i = i.rem_euclid(period);
    if i >= n as isize {
        (period - i) as usize
    } else {
        i as usize
    }
}

/// Same-size 2-D convolution with reflect padding.
pub fn convolve_reflect(img: &GrayImage, kernel: &Kernel2d) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let half = kernel.half() as isize;
    let px = img.pixels();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for ky in -half..=half {
                let row = reflect(y as isize - ky, h) * w;
                for kx in -half..=half {
                    acc += kernel.at(kx, ky) * px[row + reflect(x as isize - kx, w)];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Absolute filter response, min-max rescaled to `[0, 1]` (all zeros when flat).
pub fn magnitude_map(img: &GrayImage, kernel: &Kernel2d) -> GrayImage {
    let response: Vec<f64> = convolve_reflect(img, kernel).into_iter().map(f64::abs).collect();
    let (lo, hi) = response.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let scaled = response
        .into_iter()
        .map(|v| if span > 0.0 { ((v - lo) / span).clamp(0.0, 1.0) } else { 0.0 })
        .collect();
    GrayImage::new(img.width(), img.height(), scaled).expect("rescaled map is in range")
}

/// LBP histograms of every Gabor magnitude map, concatenated in bank order.
pub fn lgbp_descriptor(img: &GrayImage, bank: &[Kernel2d], lbp: &LbpParams) -> Result<Vec<f64>> {
    lbp.validate()?;
    let mut out = Vec::with_capacity(bank.len() * lbp.dimension());
    for kernel in bank {
        out.extend(lbp_histogram(&magnitude_map(img, kernel), lbp)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::gabor::{gabor_bank, gabor_kernel, GaborParams, GaborShared};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::new(w, h, (0..w * h).map(|_| rng.gen()).collect()).unwrap()
    }

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
        assert_eq!(reflect(-5, 1), 0);
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut values = vec![0.0; 9];
        values[4] = 1.0;
        let k = Kernel2d { size: 3, values };
        let img = random_image(5, 4, 2);
        assert_eq!(convolve_reflect(&img, &k), img.pixels());
    }

    #[test]
    fn convolution_flips_kernel() {
        // Kernel with a single tap at offset (+1, 0) shifts the image right.
        let mut values = vec![0.0; 9];
        values[5] = 1.0;
        let k = Kernel2d { size: 3, values };
        let img = GrayImage::from_rows(&[&[0.1, 0.2, 0.3]]).unwrap();
        assert_eq!(convolve_reflect(&img, &k), vec![0.2, 0.1, 0.2]);
    }

    #[test]
    fn matches_stepwise_composition() {
        let img = random_image(24, 24, 11);
        let lbp = LbpParams::new(8, 1.0).with_grid(2, 2);
        let bank = gabor_bank(&[4.0, 6.0], &[0.0, 1.0], &GaborShared::default()).unwrap();
        let got = lgbp_descriptor(&img, &bank, &lbp).unwrap();

        let mut expected = Vec::new();
        for k in &bank {
            let raw = convolve_reflect(&img, k);
            let mags: Vec<f64> = raw.iter().map(|v| v.abs()).collect();
            let lo = mags.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = mags.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let norm: Vec<f64> = mags.iter().map(|v| (v - lo) / (hi - lo)).collect();
            let map = GrayImage::new(24, 24, norm).unwrap();
            expected.extend(lbp_histogram(&map, &lbp).unwrap());
        }
        assert_eq!(got, expected);
    }

    #[test]
    fn dimension_is_bank_times_lbp() {
        let img = random_image(20, 20, 3);
        for (p, r, g) in [(8usize, 1.0, 1usize), (16, 2.0, 2), (8, 2.0, 3)] {
            let lbp = LbpParams::new(p, r).with_grid(g, g);
            let bank: Vec<_> =
                [3usize, 5].iter().map(|&s| gabor_kernel(&GaborParams { kernel_size: s, ..GaborParams::with_defaults(4.0, 0.2) }).unwrap()).collect();
            assert_eq!(lgbp_descriptor(&img, &bank, &lbp).unwrap().len(), bank.len() * lbp.dimension());
        }
    }

    #[test]
    fn flat_response_maps_to_zero() {
        let img = GrayImage::filled(8, 8, 0.5);
        let k = Kernel2d { size: 3, values: vec![1.0; 9] };
        assert!(magnitude_map(&img, &k).pixels().iter().all(|&v| v == 0.0));
    }
}
