//! Handcrafted texture descriptors: uniform LBP histograms, Gabor banks,
//! and their composition (LGBP).

pub mod gabor;
pub mod lbp;
pub mod lgbp;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use gabor::{default_bank, gabor_bank, gabor_kernel, GaborBankSpec, GaborParams, GaborShared, Kernel2d};
pub use lbp::{lbp_code_at, lbp_histogram, uniform_table, LbpParams, Sampling, UniformMapping};
pub use lgbp::{lgbp_descriptor, magnitude_map};

use crate::error::{Error, Result};
use crate::image::GrayImage;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub descriptor_id: String,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A complete descriptor configuration, as stored in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DescriptorConfig {
    Lbp { lbp: LbpParams },
    Lgbp { lbp: LbpParams, bank: GaborBankSpec },
}

impl DescriptorConfig {
    pub fn dimension(&self) -> usize {
        match self {
            DescriptorConfig::Lbp { lbp } => lbp.dimension(),
            DescriptorConfig::Lgbp { lbp, bank } => bank.len() * lbp.dimension(),
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical (key-sorted) JSON.
    pub fn descriptor_id(&self) -> String {
        let canonical = serde_json::to_value(self).expect("descriptor config serializes").to_string();
        hex::encode(Sha256::digest(canonical.as_bytes()))[..16].to_string()
    }

    /// Binds the config to its prepared kernels for repeated extraction.
    pub fn extractor(&self) -> Result<Extractor> {
        let bank = match self {
            DescriptorConfig::Lbp { lbp } => {
                lbp.validate()?;
                Vec::new()
            }
            DescriptorConfig::Lgbp { lbp, bank } => {
                lbp.validate()?;
                if bank.is_empty() {
                    return Err(Error::config("LGBP bank is empty"));
                }
                gabor_bank(&bank.wavelengths, &bank.orientations, &bank.shared)?
            }
        };
        Ok(Extractor { config: self.clone(), id: self.descriptor_id(), kernels: bank })
    }
}

pub struct Extractor {
    config: DescriptorConfig,
    id: String,
    kernels: Vec<Kernel2d>,
}

impl Extractor {
    pub fn config(&self) -> &DescriptorConfig {
        &self.config
    }

    pub fn extract(&self, img: &GrayImage) -> Result<FeatureVector> {
        let values = match &self.config {
            DescriptorConfig::Lbp { lbp } => lbp_histogram(img, lbp)?,
            DescriptorConfig::Lgbp { lbp, .. } => lgbp_descriptor(img, &self.kernels, lbp)?,
        };
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Ok(FeatureVector { values, descriptor_id: self.id.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_lgbp_dimension() {
        let cfg = DescriptorConfig::Lgbp { lbp: LbpParams::new(8, 1.0).with_grid(4, 4), bank: GaborBankSpec::default() };
        assert_eq!(cfg.dimension(), 30_208);
    }

    #[test]
    fn descriptor_id_tracks_config() {
        let a = DescriptorConfig::Lbp { lbp: LbpParams::new(8, 1.0) };
        let b = DescriptorConfig::Lbp { lbp: LbpParams::new(16, 2.0) };
        assert_eq!(a.descriptor_id(), a.clone().descriptor_id());
        assert_ne!(a.descriptor_id(), b.descriptor_id());
        assert_eq!(a.descriptor_id().len(), 16);
    }

    #[test]
    fn extractor_output_matches_dimension() {
        let cfg = DescriptorConfig::Lbp { lbp: LbpParams::new(16, 2.0).with_grid(2, 2) };
        let img = GrayImage::filled(32, 32, 0.3);
        let f = cfg.extractor().unwrap().extract(&img).unwrap();
        assert_eq!(f.len(), cfg.dimension());
        assert_eq!(f.descriptor_id, cfg.descriptor_id());
    }
}
