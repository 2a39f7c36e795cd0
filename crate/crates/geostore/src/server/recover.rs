//! Startup reconciliation between store and index.

use std::collections::HashSet;

use geostore_core::indexer::{EmbeddedIndex, ExtractorRegistry, SearchIndex};
use geostore_core::model::ChunkId;
use geostore_core::store::ChunkStore;

use super::journal::Journal;
use super::worker::index_chunks;

const REINDEX_BATCH: usize = 1024;

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Reconciliation {
    /// Unfinished imports whose chunks were removed.
    pub imports_rolled_back: usize,
    pub chunks_rolled_back: usize,
    /// Index entries without a stored chunk.
    pub index_entries_dropped: usize,
    /// Stored chunks that were missing from the index.
    pub chunks_reindexed: usize,
}

/// Removes the chunks of unfinished imports, drops index entries without
/// chunks and indexes chunks without index entries.
pub fn reconcile(
    store: &dyn ChunkStore,
    index: &EmbeddedIndex,
    extractors: &ExtractorRegistry,
    journal: Option<&Journal>,
) -> geostore_core::Result<Reconciliation> {
    let mut r = Reconciliation::default();
    if let Some(journal) = journal {
        for (path, ids) in journal.leftovers()? {
            index.delete(&ids)?;
            r.chunks_rolled_back += store.delete(&ids)?;
            r.imports_rolled_back += 1;
            std::fs::remove_file(path)?;
        }
    }

    let stored: HashSet<ChunkId> = store.scan()?.into_iter().collect();
    let orphans: Vec<ChunkId> = index
        .ids()
        .into_iter()
        .filter(|id| !stored.contains(id))
        .collect();
    r.index_entries_dropped = index.delete(&orphans)?;

    let missing: Vec<ChunkId> = stored.into_iter().filter(|id| !index.contains(id)).collect();
    for batch in missing.chunks(REINDEX_BATCH) {
        r.chunks_reindexed += index_chunks(store, index, extractors, batch)?;
    }
    Ok(r)
}
