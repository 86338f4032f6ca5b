//! Real-valued Gabor kernels and filter banks.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bandwidth of roughly one octave.
pub const DEFAULT_SIGMA_RATIO: f64 = 0.56;
pub const DEFAULT_ASPECT: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaborParams {
    pub wavelength: f64,
    pub orientation: f64,
    pub phase: f64,
    pub sigma: f64,
    pub aspect: f64,
    pub kernel_size: usize,
}

impl GaborParams {
    /// Conventional parameters for a wavelength/orientation pair.
    pub fn with_defaults(wavelength: f64, orientation: f64) -> Self {
        let sigma = DEFAULT_SIGMA_RATIO * wavelength;
        Self {
            wavelength,
            orientation,
            phase: 0.0,
            sigma,
            aspect: DEFAULT_ASPECT,
            kernel_size: odd_size_for(sigma),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0) {
            return Err(Error::config("Gabor wavelength must be positive"));
        }
        if !(self.sigma > 0.0) || !(self.aspect > 0.0) {
            return Err(Error::config("Gabor sigma and aspect must be positive"));
        }
        if self.kernel_size < 3 || self.kernel_size % 2 == 0 {
            return Err(Error::config("Gabor kernel size must be odd and at least 3"));
        }
        Ok(())
    }

    /// Kernel value at integer offset `(x, y)` from the center.
    pub fn value_at(&self, x: f64, y: f64) -> f64 {
        let (sin, cos) = self.orientation.sin_cos();
        let xr = x * cos + y * sin;
        let yr = -x * sin + y * cos;
        let envelope = (-(xr * xr + self.aspect * self.aspect * yr * yr) / (2.0 * self.sigma * self.sigma)).exp();
        envelope * (2.0 * PI * xr / self.wavelength + self.phase).cos()
    }
}

/// Smallest odd integer `>= 6σ + 1`.
pub fn odd_size_for(sigma: f64) -> usize {
    let n = (6.0 * sigma + 1.0).ceil() as usize;
    if n % 2 == 0 {
        n + 1
    } else {
        n
    }
}

/// Square kernel stored row-major, centered at `(size / 2, size / 2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel2d {
    pub size: usize,
    pub values: Vec<f64>,
}

impl Kernel2d {
    pub fn half(&self) -> usize {
        self.size / 2
    }

    /// Value at signed offset from the center.
    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let h = self.half() as isize;
        self.values[((dy + h) as usize) * self.size + (dx + h) as usize]
    }
}

pub fn gabor_kernel(params: &GaborParams) -> Result<Kernel2d> {
    params.validate()?;
    let size = params.kernel_size;
    let h = (size / 2) as isize;
    let mut values = Vec::with_capacity(size * size);
    for y in -h..=h {
        for x in -h..=h {
            values.push(params.value_at(x as f64, y as f64));
        }
    }
    Ok(Kernel2d { size, values })
}

/// Parameters shared by every kernel in a bank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaborShared {
    pub sigma_ratio: f64,
    pub aspect: f64,
    pub phase: f64,
}

impl Default for GaborShared {
    fn default() -> Self {
        Self { sigma_ratio: DEFAULT_SIGMA_RATIO, aspect: DEFAULT_ASPECT, phase: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaborBankSpec {
    pub wavelengths: Vec<f64>,
    pub orientations: Vec<f64>,
    #[serde(default)]
    pub shared: GaborShared,
}

impl Default for GaborBankSpec {
    /// 8 wavelengths over `[4, 8]` by 4 orientations over `[0, π/2]`: 32 kernels.
    fn default() -> Self {
        Self { wavelengths: linspace(4.0, 8.0, 8), orientations: linspace(0.0, PI / 2.0, 4), shared: GaborShared::default() }
    }
}

impl GaborBankSpec {
    pub fn len(&self) -> usize {
        self.wavelengths.len() * self.orientations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Kernel parameters, wavelength-major.
    pub fn params(&self) -> Vec<GaborParams> {
        let mut out = Vec::with_capacity(self.len());
        for &wavelength in &self.wavelengths {
            for &orientation in &self.orientations {
                let sigma = self.shared.sigma_ratio * wavelength;
                out.push(GaborParams {
                    wavelength,
                    orientation,
                    phase: self.shared.phase,
                    sigma,
                    aspect: self.shared.aspect,
                    kernel_size: odd_size_for(sigma),
                });
            }
        }
        out
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Cartesian product of wavelengths and orientations, wavelength-major.
pub fn gabor_bank(wavelengths: &[f64], orientations: &[f64], shared: &GaborShared) -> Result<Vec<Kernel2d>> {
    if wavelengths.is_empty() || orientations.is_empty() {
        return Err(Error::config("Gabor bank needs at least one wavelength and one orientation"));
    }
    let spec = GaborBankSpec { wavelengths: wavelengths.to_vec(), orientations: orientations.to_vec(), shared: shared.clone() };
    spec.params().iter().map(gabor_kernel).collect()
}

pub fn default_bank() -> Vec<Kernel2d> {
    let spec = GaborBankSpec::default();
    gabor_bank(&spec.wavelengths, &spec.orientations, &spec.shared).expect("default bank is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(orientation: f64, phase: f64) -> GaborParams {
        GaborParams { wavelength: 4.0, orientation, phase, sigma: 2.0, aspect: 1.0, kernel_size: 7 }
    }

    #[test]
    fn center_is_one() {
        let k = gabor_kernel(&params(0.3, 0.0)).unwrap();
        assert_eq!(k.at(0, 0), 1.0);
    }

    #[test]
    fn spot_values_match_scalar_formula() {
        let k = gabor_kernel(&params(0.0, 0.0)).unwrap();
        // θ = 0: x' = x, y' = y; γ = 1, σ = 2, λ = 4.
        let direct = |x: f64, y: f64| (-(x * x + y * y) / 8.0).exp() * (std::f64::consts::FRAC_PI_2 * x).cos();
        for &(x, y) in &[(1isize, 0isize), (2, 0), (0, 3), (-3, 2), (2, -1), (3, 3)] {
            let expect = direct(x as f64, y as f64);
            assert!((k.at(x, y) - expect).abs() < 1e-15, "({x},{y})");
        }
        // Frozen from the formula: exp(-1/8)·cos(π/2) ≈ 0 and exp(-4/8)·cos(π) = -e^{-1/2}.
        assert!(k.at(1, 0).abs() < 1e-15);
        assert!((k.at(2, 0) + (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn even_kernel_is_point_symmetric() {
        let k = gabor_kernel(&GaborParams::with_defaults(5.5, 0.7)).unwrap();
        let h = k.half() as isize;
        for y in -h..=h {
            for x in -h..=h {
                assert!((k.at(x, y) - k.at(-x, -y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn half_turn_leaves_kernel_unchanged() {
        let a = gabor_kernel(&params(0.4, 0.0)).unwrap();
        let b = gabor_kernel(&params(0.4 + PI, 0.0)).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn default_bank_has_32_kernels() {
        let spec = GaborBankSpec::default();
        assert_eq!(spec.len(), 32);
        assert_eq!(default_bank().len(), 32);
        assert_eq!(spec.wavelengths.first(), Some(&4.0));
        assert_eq!(spec.wavelengths.last(), Some(&8.0));
        assert_eq!(spec.orientations.last(), Some(&(PI / 2.0)));
        let p = spec.params();
        assert_eq!((p[1].wavelength, p[1].orientation), (4.0, spec.orientations[1]));
        assert_eq!(p[4].wavelength, spec.wavelengths[1]);
        assert_eq!(default_bank(), default_bank());
    }

    #[test]
    fn single_kernel_bank() {
        assert_eq!(gabor_bank(&[4.0], &[0.0], &GaborShared::default()).unwrap().len(), 1);
        assert!(gabor_bank(&[], &[0.0], &GaborShared::default()).is_err());
    }

    #[test]
    fn default_kernel_size() {
        assert_eq!(GaborParams::with_defaults(8.0, 0.0).kernel_size, 29);
        assert_eq!(GaborParams::with_defaults(4.0, 0.0).kernel_size, 15);
        assert!(gabor_kernel(&GaborParams { kernel_size: 4, ..params(0.0, 0.0) }).is_err());
    }
}
