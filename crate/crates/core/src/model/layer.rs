use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Hierarchical layer label. The root layer is `/` and every layer
/// includes the chunks of all of its sub-layers.
///
/// Layer names are case-sensitive.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LayerPath {
    segments: Vec<String>,
}

impl LayerPath {
    pub fn root() -> Self {
        LayerPath::default()
    }

    /// Parses a layer path. Empty input and `/` both yield the root;
    /// duplicate and trailing slashes are collapsed.
    pub fn parse(text: &str) -> Result<Self> {
        let mut segments = Vec::new();
        for seg in text.split('/') {
            if seg.is_empty() {
                continue;
            }
            if seg.chars().any(char::is_control) {
                return Err(Error::MalformedPath(text.to_owned()));
            }
            segments.push(seg.to_owned());
        }
        Ok(LayerPath { segments })
    }

    pub fn from_segments<I, S>(segments: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let segments: Vec<String> = segments.into_iter().map(Into::into).collect();
        for seg in &segments {
            if seg.is_empty() || seg.contains('/') || seg.chars().any(char::is_control) {
                return Err(Error::MalformedPath(seg.clone()));
            }
        }
        Ok(LayerPath { segments })
    }

    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    pub fn is_root(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.segments.len()
    }

    /// True if `self` equals `other` or is one of its ancestors.
    pub fn is_ancestor_or_self(&self, other: &LayerPath) -> bool {
        other.segments.starts_with(&self.segments)
    }

    pub fn child(&self, segment: &str) -> Result<Self> {
        let mut segments = self.segments.clone();
        segments.push(segment.to_owned());
        LayerPath::from_segments(segments)
    }
}

impl fmt::Display for LayerPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.segments.is_empty() {
            return f.write_str("/");
        }
        for seg in &self.segments {
            write!(f, "/{seg}")?;
        }
        Ok(())
    }
}

impl FromStr for LayerPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LayerPath::parse(s)
    }
}

impl Serialize for LayerPath {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LayerPath {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        LayerPath::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// `layer_is_ancestor_or_self` as a free function.
pub fn layer_is_ancestor_or_self(a: &LayerPath, b: &LayerPath) -> bool {
    a.is_ancestor_or_self(b)
}
