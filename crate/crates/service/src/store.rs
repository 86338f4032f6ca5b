//! Manifest store with optimistic concurrency, atomic saves and an
//! append-only audit log.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use glyphforge_core::dataset::{load_manifest, parse_index, DatasetManifest, Sample};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ServiceError, ServiceResult};

/// Called after the temporary manifest is written and before it replaces
/// the live file. An error aborts the save as a crash would.
pub type CrashHook = Box<dyn Fn(&Path) -> io::Result<()> + Send + Sync>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationUpdate {
    pub character: String,
    pub index: String,
    #[serde(default)]
    pub editor: String,
    /// Version token from the last read of the sample.
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub timestamp_ms: u128,
    pub sample_id: String,
    pub editor: String,
    pub before: AnnotationFields,
    pub after: AnnotationFields,
    /// Revision of the sample after this write (1 for the first edit).
    pub revision: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFields {
    pub character: String,
    pub index: String,
}

impl From<&Sample> for AnnotationFields {
    fn from(s: &Sample) -> Self {
        Self { character: s.character.clone(), index: s.index.to_string() }
    }
}

struct State {
    manifest: DatasetManifest,
    revisions: HashMap<String, u64>,
}

pub struct Store {
    manifest_path: PathBuf,
    audit_path: PathBuf,
    state: RwLock<State>,
    writer: Mutex<()>,
    crash_hook: Mutex<Option<CrashHook>>,
}

pub fn audit_path_for(manifest_path: &Path) -> PathBuf {
    let mut name = manifest_path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".audit.jsonl");
    manifest_path.with_file_name(name)
}

fn temp_path_for(manifest_path: &Path) -> PathBuf {
    let mut name = manifest_path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    manifest_path.with_file_name(name)
}

/// Opaque token that changes whenever the sample's annotation is written.
pub fn version_token(sample: &Sample, revision: u64) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(sample).expect("sample serializes"));
    h.update(revision.to_le_bytes());
    hex::encode(h.finalize())[..16].to_string()
}

fn internal(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Internal(e.to_string())
}

impl Store {
    /// Loads the manifest and replays the audit log to recover per-sample
    /// revisions.
    pub fn open(manifest_path: &Path) -> Result<Self, glyphforge_core::Error> {
        let manifest = load_manifest(manifest_path)?;
        let audit_path = audit_path_for(manifest_path);
        let mut revisions = HashMap::new();
        if let Ok(text) = fs::read_to_string(&audit_path) {
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                if let Ok(entry) = serde_json::from_str::<AuditEntry>(line) {
                    *revisions.entry(entry.sample_id).or_insert(0) += 1;
                }
            }
        }
        Ok(Self {
            manifest_path: manifest_path.to_path_buf(),
            audit_path,
            state: RwLock::new(State { manifest, revisions }),
            writer: Mutex::new(()),
            crash_hook: Mutex::new(None),
        })
    }

    pub fn manifest_path(&self) -> &Path {
        &self.manifest_path
    }

    pub fn audit_path(&self) -> &Path {
        &self.audit_path
    }

    pub fn set_crash_hook(&self, hook: Option<CrashHook>) {
        *self.crash_hook.lock().expect("hook lock") = hook;
    }

    /// Runs `f` against the current manifest.
    pub fn read<T>(&self, f: impl FnOnce(&DatasetManifest) -> T) -> T {
        f(&self.state.read().expect("state lock").manifest)
    }

    /// The sample and its current version token.
    pub fn get(&self, id: &str) -> ServiceResult<(Sample, String)> {
        let state = self.state.read().expect("state lock");
        let sample = state.manifest.sample(id).ok_or_else(|| ServiceError::UnknownSample(id.into()))?;
        let rev = state.revisions.get(id).copied().unwrap_or(0);
        Ok((sample.clone(), version_token(sample, rev)))
    }

    pub fn version_of(&self, sample: &Sample) -> String {
        let state = self.state.read().expect("state lock");
        version_token(sample, state.revisions.get(&sample.id).copied().unwrap_or(0))
    }

    /// Applies an annotation. Writes are serialized; a stale `version`
    /// fails with `ConflictingWrite` and leaves everything untouched.
    pub fn annotate(&self, id: &str, update: &AnnotationUpdate) -> ServiceResult<(Sample, String)> {
        let _writer = self.writer.lock().expect("writer lock");
        let (current, token) = self.get(id)?;
        let index = parse_index(&update.index).map_err(ServiceError::from)?;
        if update.version != token {
            return Err(ServiceError::ConflictingWrite { id: id.into(), given: update.version.clone() });
        }

        let mut next = self.state.read().expect("state lock").manifest.clone();
        let slot = next.samples.iter_mut().find(|s| s.id == id).expect("sample exists");
        slot.character = update.character.clone();
        slot.index = index;
        let updated = slot.clone();
        next.reintern_classes();

        let text = next.to_jsonl(&self.manifest_path).map_err(internal)?;
        let tmp = temp_path_for(&self.manifest_path);
        fs::write(&tmp, text).map_err(internal)?;
        if let Some(hook) = self.crash_hook.lock().expect("hook lock").as_ref() {
            hook(&tmp).map_err(internal)?;
        }
        fs::rename(&tmp, &self.manifest_path).map_err(internal)?;

        let mut state = self.state.write().expect("state lock");
        let revision = state.revisions.get(id).copied().unwrap_or(0) + 1;
        let entry = AuditEntry {
            timestamp_ms: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0),
            sample_id: id.into(),
            editor: update.editor.clone(),
            before: (&current).into(),
            after: (&updated).into(),
            revision,
        };
        let mut line = serde_json::to_string(&entry).map_err(internal)?;
        line.push('\n');
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.audit_path)
            .and_then(|mut f| f.write_all(line.as_bytes()))
            .map_err(internal)?;
        state.manifest = next;
        state.revisions.insert(id.into(), revision);
        let token = version_token(&updated, revision);
        Ok((updated, token))
    }
}
