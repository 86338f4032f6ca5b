use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use glyphforge_core::nn::{Arch, TrainedModel};
use serde::Serialize;

use crate::error::{ServiceError, ServiceResult};

pub const CHECKPOINT_EXT: &str = "glyf";

/// Checkpoints found as `<dir>/<arch>.glyf`, loaded on first use and kept
/// (one per architecture).
pub struct ModelRegistry {
    dir: Option<PathBuf>,
    loaded: Mutex<HashMap<Arch, Arc<TrainedModel>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelInfo {
    pub id: String,
    pub path: String,
    pub loaded: bool,
}

impl ModelRegistry {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self { dir, loaded: Mutex::new(HashMap::new()) }
    }

    fn path_for(dir: &Path, arch: Arch) -> PathBuf {
        dir.join(format!("{arch}.{CHECKPOINT_EXT}"))
    }

    pub fn list(&self) -> Vec<ModelInfo> {
        let Some(dir) = &self.dir else { return Vec::new() };
        let loaded = self.loaded.lock().expect("registry lock");
        Arch::ALL
            .into_iter()
            .map(|a| (a, Self::path_for(dir, a)))
            .filter(|(_, p)| p.is_file())
            .map(|(a, p)| ModelInfo { id: a.to_string(), path: p.display().to_string(), loaded: loaded.contains_key(&a) })
            .collect()
    }

    pub fn get(&self, id: &str) -> ServiceResult<Arc<TrainedModel>> {
        let arch: Arch = id.parse().map_err(|_| ServiceError::UnknownModel(id.into()))?;
        let mut loaded = self.loaded.lock().expect("registry lock");
        if let Some(m) = loaded.get(&arch) {
            return Ok(m.clone());
        }
        let dir = self.dir.as_ref().ok_or_else(|| ServiceError::UnknownModel(id.into()))?;
        let path = Self::path_for(dir, arch);
        if !path.is_file() {
            return Err(ServiceError::UnknownModel(id.into()));
        }
        let model = Arc::new(TrainedModel::load(&path).map_err(|e| ServiceError::Internal(e.to_string()))?);
        loaded.insert(arch, model.clone());
        Ok(model)
    }
}
