use std::collections::HashMap;

use parking_lot::RwLock;

use super::{ChunkStore, EntryHead, LayerCounts, StoredEntry};
use crate::error::{Error, Result};
use crate::model::{ChunkId, ChunkMetadata, LayerPath, MetadataDelta};

#[derive(Default)]
struct Inner {
    entries: HashMap<ChunkId, StoredEntry>,
    layers: LayerCounts,
}

/// Volatile store; parents are shared between entries through their `Arc`.
#[derive(Default)]
pub struct MemoryStore {
    inner: RwLock<Inner>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl ChunkStore for MemoryStore {
    fn put(&self, entry: StoredEntry) -> Result<()> {
        let mut inner = self.inner.write();
        if inner.entries.contains_key(&entry.id) {
            return Err(Error::DuplicateId(entry.id.to_string()));
        }
        inner.layers.add(&entry.metadata.layer);
        inner.entries.insert(entry.id.clone(), entry);
        Ok(())
    }

    fn get(&self, id: &ChunkId) -> Result<StoredEntry> {
        self.inner
            .read()
            .entries
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(id.to_string()))
    }

    fn head(&self, id: &ChunkId) -> Result<EntryHead> {
        let inner = self.inner.read();
        let e = inner
            .entries
            .get(id)
            .ok_or_else(|| Error::NotFound(id.to_string()))?;
        Ok(EntryHead {
            id: e.id.clone(),
            parents: e.parents.clone(),
            metadata: e.metadata.clone(),
            sequence: e.sequence,
        })
    }

    fn delete(&self, ids: &[ChunkId]) -> Result<usize> {
        let mut inner = self.inner.write();
        let mut n = 0;
        for id in ids {
            if let Some(e) = inner.entries.remove(id) {
                inner.layers.remove(&e.metadata.layer);
                n += 1;
            }
        }
        Ok(n)
    }

    fn update_metadata(&self, id: &ChunkId, delta: &MetadataDelta) -> Result<ChunkMetadata> {
        let mut inner = self.inner.write();
        let e = inner
            .entries
            .get_mut(id)
            .ok_or_else(|| Error::NotFound(id.to_string()))?;
        delta.apply(&mut e.metadata);
        Ok(e.metadata.clone())
    }

    fn scan(&self) -> Result<Vec<ChunkId>> {
        Ok(self.inner.read().entries.keys().cloned().collect())
    }

    fn contains(&self, id: &ChunkId) -> bool {
        self.inner.read().entries.contains_key(id)
    }

    fn len(&self) -> usize {
        self.inner.read().entries.len()
    }

    fn has_layer(&self, layer: &LayerPath) -> bool {
        self.inner.read().layers.has(layer)
    }
}
