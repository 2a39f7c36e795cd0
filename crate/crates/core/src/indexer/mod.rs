//! Attribute extraction and the embedded search index.
//!
//! Chunks are turned into [`IndexDocument`]s by the extractors registered in
//! an [`ExtractorRegistry`]. [`EmbeddedIndex`] keeps an inverted index over
//! content and metadata terms, typed per-key value indexes for comparisons,
//! an import-time index and packed R-trees for boxes. Bounding boxes are
//! compared in raw coordinates; the CRS is kept as metadata only.

mod extract;
mod json_events;
mod keys;
mod log;
mod spatial;
mod state;

use std::path::Path;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};

use crate::error::Result;
use crate::model::{ChunkId, ChunkMetadata, IndexDocument, LayerPath, MetadataDelta};
use crate::query::Query;

pub use extract::{
    extract_attributes, extract_bbox, extract_tokens, Extraction, Extractor, ExtractorRegistry,
    GeoJsonBoundingBox, GeoJsonProperties, GeoJsonText, XmlBoundingBox, XmlGenericAttributes,
    XmlText,
};
pub use spatial::PackedRTree;

use log::{Record, SegmentLog};
use state::State;

/// Operations the rest of the system needs from a search index.
pub trait SearchIndex: Send + Sync {
    /// Adds a batch atomically. Fails with `DuplicateId` without adding
    /// anything if an id is already present or repeated in the batch.
    fn add(&self, docs: Vec<IndexDocument>) -> Result<usize>;
    /// Ids of matching documents within `layer` and its sub-layers, ordered
    /// by import time and position in the source file.
    fn query(&self, query: &Query, layer: &LayerPath) -> Vec<ChunkId>;
    /// Fails with `UnknownId` without changing anything if an id is unknown.
    fn update_metadata(&self, ids: &[ChunkId], delta: &MetadataDelta) -> Result<usize>;
    /// Unknown ids are ignored. Returns the number of documents removed.
    fn delete(&self, ids: &[ChunkId]) -> Result<usize>;
    fn contains(&self, id: &ChunkId) -> bool;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Builds the searchable projection of a chunk.
pub fn build_document(
    registry: &ExtractorRegistry,
    chunk_id: ChunkId,
    content: &[u8],
    metadata: ChunkMetadata,
    sequence: u64,
) -> IndexDocument {
    let e = registry.extract(metadata.format, content);
    IndexDocument {
        chunk_id,
        bbox: e.bbox,
        attributes: e.attributes,
        tokens: e.tokens,
        metadata,
        sequence,
    }
}

#[derive(Debug, Clone)]
pub struct IndexOptions {
    /// Flush every write to stable storage before acknowledging it.
    pub sync: bool,
    /// Rewrite the log once this many documents have been deleted or
    /// updated since the last rewrite, unless the index is larger.
    pub compact_after: usize,
}

impl Default for IndexOptions {
    fn default() -> Self {
        IndexOptions {
            sync: false,
            compact_after: 10_000,
        }
    }
}

struct Writer {
    log: Option<SegmentLog>,
    /// Deleted or updated documents since the log was last rewritten.
    garbage: usize,
}

/// Embedded inverted and spatial index, optionally persisted to a
/// directory. Writes are serialized; readers see whole batches only.
pub struct EmbeddedIndex {
    state: RwLock<State>,
    writer: Mutex<Writer>,
    options: IndexOptions,
}

impl EmbeddedIndex {
    pub fn in_memory() -> Self {
        EmbeddedIndex {
            state: RwLock::new(State::default()),
            writer: Mutex::new(Writer {
                log: None,
                garbage: 0,
            }),
            options: IndexOptions::default(),
        }
    }

    /// Opens the index persisted in `dir`, creating it if necessary.
    pub fn open(dir: &Path, options: IndexOptions) -> Result<Self> {
        let (log, records) = SegmentLog::open(dir, options.sync)?;
        let mut state = State::default();
        let mut garbage = 0;
        for rec in records {
            match rec {
                Record::Add { docs } => {
                    // Replay is lenient: a document already present wins.
                    let docs: Vec<_> = docs.into_iter().filter(|d| !state.contains(&d.chunk_id)).collect();
                    state.add(docs);
                }
                Record::Update { ids, delta } => {
                    let known: Vec<_> = ids.into_iter().filter(|id| state.contains(id)).collect();
                    garbage += state.update_metadata(&known, &delta);
                }
                Record::Delete { ids } => garbage += state.delete(&ids),
            }
        }
        if state.dead_slots() > state.len() {
            state.rebuild();
        }
        Ok(EmbeddedIndex {
            state: RwLock::new(state),
            writer: Mutex::new(Writer {
                log: Some(log),
                garbage,
            }),
            options,
        })
    }

    pub fn get(&self, id: &ChunkId) -> Option<Arc<IndexDocument>> {
        self.state.read().get(id)
    }

    /// Like [`SearchIndex::query`], returning the documents.
    pub fn query_documents(&self, query: &Query, layer: &LayerPath) -> Vec<Arc<IndexDocument>> {
        self.state.read().query(query, layer)
    }

    /// True if any document lives in `layer` or below.
    pub fn has_layer(&self, layer: &LayerPath) -> bool {
        self.state.read().has_layer(layer)
    }

    pub fn ids(&self) -> Vec<ChunkId> {
        self.state
            .read()
            .documents()
            .map(|d| d.chunk_id.clone())
            .collect()
    }

    /// Rewrites the persisted log as a snapshot of the live documents and
    /// packs the in-memory structures.
    pub fn compact(&self) -> Result<()> {
        let mut w = self.writer.lock();
        self.compact_locked(&mut w)
    }

    fn compact_locked(&self, w: &mut Writer) -> Result<()> {
        if let Some(log) = w.log.as_mut() {
            let state = self.state.read();
            log.rewrite(state.documents().map(|d| &**d))?;
        }
        self.state.write().rebuild();
        w.garbage = 0;
        Ok(())
    }

    fn note_garbage(&self, w: &mut Writer, n: usize) -> Result<()> {
        w.garbage += n;
        if w.garbage > self.options.compact_after.max(self.len()) {
            self.compact_locked(w)?;
        }
        Ok(())
    }
}

impl SearchIndex for EmbeddedIndex {
    fn add(&self, docs: Vec<IndexDocument>) -> Result<usize> {
        if docs.is_empty() {
            return Ok(0);
        }
        let mut w = self.writer.lock();
        self.state.read().check_new(&docs)?;
        let docs = match w.log.as_mut() {
            Some(log) => {
                let rec = Record::Add { docs };
                log.append(&rec)?;
                let Record::Add { docs } = rec else { unreachable!() };
                docs
            }
            None => docs,
        };
        Ok(self.state.write().add(docs))
    }

    fn query(&self, query: &Query, layer: &LayerPath) -> Vec<ChunkId> {
        self.query_documents(query, layer)
            .iter()
            .map(|d| d.chunk_id.clone())
            .collect()
    }

    fn update_metadata(&self, ids: &[ChunkId], delta: &MetadataDelta) -> Result<usize> {
        let mut w = self.writer.lock();
        self.state.read().check_known(ids)?;
        if ids.is_empty() {
            return Ok(0);
        }
        if let Some(log) = w.log.as_mut() {
            log.append(&Record::Update {
                ids: ids.to_vec(),
                delta: delta.clone(),
            })?;
        }
        let n = self.state.write().update_metadata(ids, delta);
        self.note_garbage(&mut w, n)?;
        Ok(n)
    }

    fn delete(&self, ids: &[ChunkId]) -> Result<usize> {
        let mut w = self.writer.lock();
        let known: Vec<ChunkId> = {
            let state = self.state.read();
            let mut seen = std::collections::HashSet::new();
            ids.iter()
                .filter(|id| state.contains(id) && seen.insert(*id))
                .cloned()
                .collect()
        };
        if known.is_empty() {
            return Ok(0);
        }
        if let Some(log) = w.log.as_mut() {
            log.append(&Record::Delete { ids: known.clone() })?;
        }
        let n = self.state.write().delete(&known);
        self.note_garbage(&mut w, n)?;
        Ok(n)
    }

    fn contains(&self, id: &ChunkId) -> bool {
        self.state.read().contains(id)
    }

    fn len(&self) -> usize {
        self.state.read().len()
    }
}
