//! The four-part `P_I_S_x` sample identifier.
//!
//! `P` is the page of the monogram table, `I` the position of the character
//! on that page, `S` the typeface variant and `x` the serial of the
//! handwritten imitation (`0` marks an original crop).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AnnotationIndex {
    pub page: u32,
    pub position: u32,
    pub typeface_sample: u32,
    pub handwritten_serial: u32,
}

impl AnnotationIndex {
    pub fn new(page: u32, position: u32, typeface_sample: u32, handwritten_serial: u32) -> Result<Self> {
        let ix = Self { page, position, typeface_sample, handwritten_serial };
        if page == 0 || position == 0 || typeface_sample == 0 {
            return Err(Error::MalformedIndex {
                input: ix.to_string(),
                reason: "page, position and typeface sample start at 1".into(),
            });
        }
        Ok(ix)
    }

    pub fn is_original(&self) -> bool {
        self.handwritten_serial == 0
    }
}

/// Parses `"P_I_S_x"`. Only plain ASCII decimal digits are accepted.
pub fn parse_index(s: &str) -> Result<AnnotationIndex> {
    let malformed = |reason: &str| Error::MalformedIndex { input: s.to_string(), reason: reason.to_string() };
    let parts: Vec<&str> = s.split('_').collect();
    if parts.len() != 4 {
        return Err(malformed("expected exactly 4 underscore-separated fields"));
    }
    let mut fields = [0u32; 4];
    for (slot, part) in fields.iter_mut().zip(&parts) {
        if part.is_empty() || !part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed("fields must be decimal integers"));
        }
        if part.len() > 1 && part.starts_with('0') {
            return Err(malformed("leading zeros are not canonical"));
        }
        *slot = part.parse().map_err(|_| malformed("field out of range"))?;
    }
    AnnotationIndex::new(fields[0], fields[1], fields[2], fields[3]).map_err(|_| malformed("page, position and typeface sample start at 1"))
}

pub fn format_index(ix: &AnnotationIndex) -> String {
    ix.to_string()
}

impl fmt::Display for AnnotationIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}_{}_{}", self.page, self.position, self.typeface_sample, self.handwritten_serial)
    }
}

impl FromStr for AnnotationIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_index(s)
    }
}

impl Serialize for AnnotationIndex {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AnnotationIndex {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_index(&s).map_err(serde::de::Error::custom)
    }
}
