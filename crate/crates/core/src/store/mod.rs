//! Chunk persistence behind the [`ChunkStore`] interface, with an
//! in-memory and a filesystem backend.

mod fs;
mod memory;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{ChunkId, ChunkMetadata, LayerPath, MetadataDelta, Parents};

pub use self::fs::{FsOptions, FsStore};
pub use self::memory::MemoryStore;

/// A chunk as kept by a store. Content and parents never change after
/// `put`; only the tags and properties in `metadata` do.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredEntry {
    pub id: ChunkId,
    pub content: Vec<u8>,
    pub parents: Arc<Parents>,
    pub metadata: ChunkMetadata,
    /// Position of the chunk within its source file.
    pub sequence: u64,
}

/// Metadata of a stored chunk without its content.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryHead {
    pub id: ChunkId,
    pub parents: Arc<Parents>,
    pub metadata: ChunkMetadata,
    pub sequence: u64,
}

pub trait ChunkStore: Send + Sync {
    /// Fails with `DuplicateId` if `entry.id` is already stored.
    fn put(&self, entry: StoredEntry) -> Result<()>;
    /// Fails with `NotFound` for unknown or deleted ids.
    fn get(&self, id: &ChunkId) -> Result<StoredEntry>;
    /// Like [`ChunkStore::get`] without reading the content.
    fn head(&self, id: &ChunkId) -> Result<EntryHead>;
    /// Unknown ids are ignored. Returns the number of entries removed.
    fn delete(&self, ids: &[ChunkId]) -> Result<usize>;
    /// Applies `delta` atomically and returns the new metadata.
    fn update_metadata(&self, id: &ChunkId, delta: &MetadataDelta) -> Result<ChunkMetadata>;
    /// Every stored id exactly once, in no particular order.
    fn scan(&self) -> Result<Vec<ChunkId>>;
    fn contains(&self, id: &ChunkId) -> bool;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// True if any entry lives in `layer` or one of its sub-layers.
    fn has_layer(&self, layer: &LayerPath) -> bool;
}

/// Value of the `store.backend` setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreBackend {
    Memory,
    Filesystem,
}

impl FromStr for StoreBackend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "memory" => Ok(StoreBackend::Memory),
            "filesystem" => Ok(StoreBackend::Filesystem),
            other => Err(Error::UnsupportedFormat(format!(
                "unknown store backend `{other}`, expected `memory` or `filesystem`"
            ))),
        }
    }
}

impl fmt::Display for StoreBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StoreBackend::Memory => "memory",
            StoreBackend::Filesystem => "filesystem",
        })
    }
}

/// Number of entries per layer, for cheap layer-existence checks.
#[derive(Debug, Default)]
struct LayerCounts(HashMap<LayerPath, usize>);

impl LayerCounts {
    fn add(&mut self, layer: &LayerPath) {
        *self.0.entry(layer.clone()).or_default() += 1;
    }

    fn remove(&mut self, layer: &LayerPath) {
        if let Some(n) = self.0.get_mut(layer) {
            *n -= 1;
            if *n == 0 {
                self.0.remove(layer);
            }
        }
    }

    fn has(&self, layer: &LayerPath) -> bool {
        self.0.keys().any(|l| layer.is_ancestor_or_self(l))
    }
}
