//! Binary model container shared by networks and SVMs.
//!
//! Layout (little-endian):
//!
//! ```text
//! "GLYF" | u16 version | u32 header_len | header JSON | f64 blobs... | u32 CRC32
//! ```
//!
//! The header carries `kind`, the payload-specific `header` object and the
//! `(name, shape)` list of the blobs that follow, in order. The CRC covers
//! every preceding byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GLYF";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Blob {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub kind: String,
    pub header: serde_json::Value,
    pub blobs: Vec<Blob>,
}

#[derive(Serialize, Deserialize)]
struct BlobMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    kind: String,
    header: serde_json::Value,
    tensors: Vec<BlobMeta>,
}

pub fn encode(c: &Container) -> Result<Vec<u8>> {
    for b in &c.blobs {
        if b.shape.iter().product::<usize>() != b.data.len() {
            return Err(Error::ShapeMismatch { expected: b.shape.clone(), actual: vec![b.data.len()] });
        }
    }
    let envelope = Envelope {
        kind: c.kind.clone(),
        header: c.header.clone(),
        tensors: c.blobs.iter().map(|b| BlobMeta { name: b.name.clone(), shape: b.shape.clone() }).collect(),
    };
    let json = serde_json::to_vec(&envelope)?;
    let payload: usize = c.blobs.iter().map(|b| b.data.len() * 8).sum();
    let mut out = Vec::with_capacity(14 + json.len() + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for b in &c.blobs {
        for v in &b.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Container> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::VersionMismatch("bad magic bytes".into()));
    }
    if bytes.len() < 14 {
        return Err(Error::ChecksumMismatch);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::ChecksumMismatch);
    }
    let version = u16::from_le_bytes([body[4], body[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch(format!("format version {version}, expected {FORMAT_VERSION}")));
    }
    let header_len = u32::from_le_bytes(body[6..10].try_into().expect("4 bytes")) as usize;
    let json = body.get(10..10 + header_len).ok_or(Error::ChecksumMismatch)?;
    let envelope: Envelope = serde_json::from_slice(json)?;
    let mut cursor = &body[10 + header_len..];
    let mut blobs = Vec::with_capacity(envelope.tensors.len());
    for meta in envelope.tensors {
        let n: usize = meta.shape.iter().product();
        if cursor.len() < n * 8 {
            return Err(Error::ChecksumMismatch);
        }
        let (raw, rest) = cursor.split_at(n * 8);
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        blobs.push(Blob { name: meta.name, shape: meta.shape, data });
        cursor = rest;
    }
    if !cursor.is_empty() {
        return Err(Error::ChecksumMismatch);
    }
    Ok(Container { kind: envelope.kind, header: envelope.header, blobs })
}

pub fn write_container(path: &Path, c: &Container) -> Result<()> {
    let bytes = encode(c)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_container(path: &Path) -> Result<Container> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
