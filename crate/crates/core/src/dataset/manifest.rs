//! JSON-lines sample catalog.
//!
//! Line 1 is a header `{"schema":1,"root":...}`; every following non-empty
//! line is one [`Sample`]. `root` is resolved relative to the manifest file
//! when it is not absolute, and every `image_path` is relative to `root`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::index::AnnotationIndex;
use crate::error::{Error, Result};
use crate::image::GrayImage;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    #[default]
    Unassigned,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            other => Err(Error::config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub image_path: String,
    pub index: AnnotationIndex,
    /// Traditional character label; empty means unlabeled.
    #[serde(default)]
    pub character: String,
    #[serde(default)]
    pub split: Split,
}

impl Sample {
    pub fn is_labeled(&self) -> bool {
        !self.character.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: u32,
    root: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub samples: Vec<Sample>,
    /// Distinct labels in order of first appearance; position is the class index.
    pub classes: Vec<String>,
}

impl DatasetManifest {
    /// Builds a manifest, checking id uniqueness and path hygiene and
    /// interning labels. Image files are not touched.
    pub fn new(root: impl Into<PathBuf>, samples: Vec<Sample>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
            if !is_root_relative(&s.image_path) {
                return Err(Error::ManifestParse {
                    line: 0,
                    message: format!("image path {:?} of sample {:?} escapes the dataset root", s.image_path, s.id),
                });
            }
        }
        let mut m = Self { root: root.into(), samples, classes: Vec::new() };
        m.reintern_classes();
        Ok(m)
    }

    /// Recomputes `classes` from the samples (first-appearance order).
    pub fn reintern_classes(&mut self) {
        let mut seen = HashSet::new();
        self.classes = self
            .samples
            .iter()
            .filter(|s| s.is_labeled())
            .filter(|s| seen.insert(s.character.clone()))
            .map(|s| s.character.clone())
            .collect();
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, character: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == character)
    }

    pub fn sample(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    pub fn image_path(&self, sample: &Sample) -> PathBuf {
        self.root.join(&sample.image_path)
    }

    pub fn load_image(&self, sample: &Sample) -> Result<GrayImage> {
        GrayImage::load_png(&self.image_path(sample))
    }

    pub fn samples_in(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    /// Class index of a labeled sample.
    pub fn label_of(&self, sample: &Sample) -> Result<usize> {
        self.class_index(&sample.character).ok_or_else(|| Error::UnlabeledSamplePresent(sample.id.clone()))
    }

    pub fn check_images(&self) -> Result<()> {
        for s in &self.samples {
            let path = self.image_path(s);
            if !path.is_file() {
                return Err(Error::MissingImage { id: s.id.clone(), path });
            }
        }
        Ok(())
    }

    /// Serializes to JSON lines. `manifest_path` is where the file will live
    /// and decides how `root` is written.
    pub fn to_jsonl(&self, manifest_path: &Path) -> Result<String> {
        let header = Header { schema: SCHEMA_VERSION, root: root_for_header(&self.root, manifest_path) };
        let mut out = serde_json::to_string(&header)?;
        out.push('\n');
        for s in &self.samples {
            writeln!(out, "{}", serde_json::to_string(s)?).expect("write to String");
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_jsonl(path)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Parses manifest text without touching the filesystem.
pub fn parse_manifest(text: &str, manifest_path: &Path) -> Result<DatasetManifest> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header_line) = lines.next().ok_or(Error::ManifestParse { line: 1, message: "empty manifest".into() })?;
    let header: Header = serde_json::from_str(header_line)
        .map_err(|e| Error::ManifestParse { line: 1, message: format!("bad header: {e}") })?;
    if header.schema != SCHEMA_VERSION {
        return Err(Error::ManifestParse { line: 1, message: format!("unsupported schema {}", header.schema) });
    }
    let root = {
        let r = PathBuf::from(&header.root);
        if r.is_absolute() {
            r
        } else {
            manifest_dir(manifest_path).join(r)
        }
    };
    let mut samples = Vec::new();
    for (i, line) in lines {
        let sample: Sample =
            serde_json::from_str(line).map_err(|e| Error::ManifestParse { line: i + 1, message: e.to_string() })?;
        samples.push(sample);
    }
    DatasetManifest::new(root, samples)
}

/// Reads and fully validates a manifest, including image existence.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m = parse_manifest(&text, path)?;
    m.check_images()?;
    Ok(m)
}

fn manifest_dir(manifest_path: &Path) -> PathBuf {
    match manifest_path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn root_for_header(root: &Path, manifest_path: &Path) -> String {
    let dir = manifest_dir(manifest_path);
    if root == dir {
        return ".".into();
    }
    match root.strip_prefix(&dir) {
        Ok(rel) => rel.to_string_lossy().into_owned(),
        Err(_) => root.to_string_lossy().into_owned(),
    }
}

fn is_root_relative(p: &str) -> bool {
    let path = Path::new(p);
    !p.is_empty() && path.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}
