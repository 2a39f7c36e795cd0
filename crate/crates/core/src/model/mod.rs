//! Domain types shared by every part of the store.

mod bbox;
mod date;
mod id;
mod layer;
mod value;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use bbox::BoundingBox;
pub use date::{DateValue, TimeOfDay, Zone};
pub use id::ChunkId;
pub use layer::{layer_is_ancestor_or_self, LayerPath};
pub use value::{parse_number, TypedValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Format {
    Xml,
    GeoJson,
}

impl Format {
    pub fn content_type(self) -> &'static str {
        match self {
            Format::Xml => "application/xml",
            Format::GeoJson => "application/geo+json",
        }
    }

    pub fn parse(s: &str) -> Option<Format> {
        match s {
            "XML" => Some(Format::Xml),
            "GEOJSON" => Some(Format::GeoJson),
            _ => None,
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Xml => "XML",
            Format::GeoJson => "GEOJSON",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CollectionKind {
    FeatureCollection,
    Standalone,
}

/// Document context of an XML chunk, kept verbatim from the source file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct XmlParents {
    /// Everything before the root start tag (XML declaration, comments,
    /// doctype), trailing whitespace trimmed.
    pub declaration: Option<String>,
    /// The root start tag including attributes and namespace declarations.
    pub root_start: String,
    /// The root end tag, followed by any trailing comments or processing
    /// instructions of the file.
    pub root_end: String,
}

/// Enclosing-document context needed to merge chunks back into a valid file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "UPPERCASE")]
pub enum Parents {
    Xml(XmlParents),
    #[serde(rename = "GEOJSON")]
    GeoJson { kind: CollectionKind },
}

impl Parents {
    pub fn format(&self) -> Format {
        match self {
            Parents::Xml(_) => Format::Xml,
            Parents::GeoJson { .. } => Format::GeoJson,
        }
    }
}

/// Metadata of one chunk. Only `tags` and `properties` change after import.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkMetadata {
    pub layer: LayerPath,
    pub tags: BTreeSet<String>,
    pub properties: BTreeMap<String, String>,
    pub crs: Option<String>,
    /// Milliseconds since the Unix epoch.
    pub import_timestamp: i64,
    pub format: Format,
}

impl ChunkMetadata {
    pub fn new(layer: LayerPath, format: Format, import_timestamp: i64) -> Self {
        ChunkMetadata {
            layer,
            tags: BTreeSet::new(),
            properties: BTreeMap::new(),
            crs: None,
            import_timestamp,
            format,
        }
    }
}

/// Change to the mutable part of a chunk's metadata. There is no way to
/// express a change of layer, content or indexed attributes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataDelta {
    #[serde(default)]
    pub set_properties: BTreeMap<String, String>,
    #[serde(default)]
    pub remove_properties: BTreeSet<String>,
    #[serde(default)]
    pub add_tags: BTreeSet<String>,
    #[serde(default)]
    pub remove_tags: BTreeSet<String>,
}

impl MetadataDelta {
    pub fn is_empty(&self) -> bool {
        self.set_properties.is_empty()
            && self.remove_properties.is_empty()
            && self.add_tags.is_empty()
            && self.remove_tags.is_empty()
    }

    /// Applies removals first, then additions. Returns whether anything
    /// changed.
    pub fn apply(&self, meta: &mut ChunkMetadata) -> bool {
        let mut changed = false;
        for key in &self.remove_properties {
            changed |= meta.properties.remove(key).is_some();
        }
        for tag in &self.remove_tags {
            changed |= meta.tags.remove(tag);
        }
        for (k, v) in &self.set_properties {
            if meta.properties.get(k) != Some(v) {
                meta.properties.insert(k.clone(), v.clone());
                changed = true;
            }
        }
        for tag in &self.add_tags {
            changed |= meta.tags.insert(tag.clone());
        }
        changed
    }

    /// True if applying the delta to `meta` would change it.
    pub fn would_change(&self, meta: &ChunkMetadata) -> bool {
        self.apply(&mut meta.clone())
    }
}

/// Key-value pair extracted from chunk content during indexing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedAttribute {
    pub key: String,
    pub value: TypedValue,
}

/// Searchable projection of one chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexDocument {
    pub chunk_id: ChunkId,
    pub bbox: Option<BoundingBox>,
    pub attributes: Vec<IndexedAttribute>,
    /// Lowercased full-text tokens of the content.
    pub tokens: BTreeSet<String>,
    pub metadata: ChunkMetadata,
    /// Position of the chunk within its source file.
    pub sequence: u64,
}
