//! Splitting an upload into stored chunks.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::sync::mpsc::SyncSender;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use geostore_core::model::{ChunkId, ChunkMetadata};
use geostore_core::splitter::Splitter;
use geostore_core::store::{ChunkStore, StoredEntry};
use tokio::sync::oneshot;
use tracing::info;

use super::journal::Journal;
use super::tasks::{now_millis, Task, TaskError, TaskState};
use super::worker::Job;

static LAST_IMPORT: AtomicI64 = AtomicI64::new(0);

/// Current time in milliseconds, but strictly after any earlier import of
/// this process, so that exports never interleave two imports.
fn import_timestamp() -> i64 {
    let now = now_millis() as i64;
    let prev = LAST_IMPORT
        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |last| Some(now.max(last + 1)))
        .expect("closure always returns Some");
    now.max(prev + 1)
}

#[derive(Debug, Clone, Default)]
pub struct ImportParams {
    pub tags: BTreeSet<String>,
    pub properties: BTreeMap<String, String>,
    /// CRS recorded for chunks whose content names none.
    pub fallback_crs: Option<String>,
}

pub struct Importer<'a> {
    pub store: &'a dyn ChunkStore,
    pub jobs: &'a SyncSender<Job>,
    pub journal: Option<&'a Journal>,
    pub batch_size: usize,
}

/// Signals the HTTP handler once splitting is underway: after the first
/// stored chunk, at the end of the input, or at the first error.
type Started = Option<oneshot::Sender<Result<(), geostore_core::Error>>>;

fn signal(started: &mut Started, result: Result<(), geostore_core::Error>) {
    if let Some(tx) = started.take() {
        let _ = tx.send(result);
    }
}

impl Importer<'_> {
    pub fn run(&self, task: Arc<Task>, input: impl Read, params: &ImportParams, mut started: Started) {
        task.advance(TaskState::Splitting);
        match self.split(&task, input, params, &mut started) {
            Ok(()) => {
                task.advance(TaskState::Indexing);
                info!(task = %task.id, chunks = task.status().chunks_written, "import split");
                let _ = self.jobs.send(Job::SplitDone { task });
                signal(&mut started, Ok(()));
            }
            Err(e) => {
                info!(task = %task.id, "import failed: {e}");
                let error = TaskError::from(&e);
                signal(&mut started, Err(e));
                let _ = self.jobs.send(Job::Rollback { task, error });
            }
        }
    }

    fn split(
        &self,
        task: &Arc<Task>,
        input: impl Read,
        params: &ImportParams,
        started: &mut Started,
    ) -> geostore_core::Result<()> {
        let mut splitter = Splitter::new(input)?;
        let format = splitter.format();
        task.set_format(&format.to_string());
        let mut journal = match self.journal {
            Some(j) => Some(j.begin(&task.id)?),
            None => None,
        };
        let import_timestamp = import_timestamp();
        let mut batch = Vec::with_capacity(self.batch_size);
        let flush = |batch: &mut Vec<ChunkId>| {
            if !batch.is_empty() {
                let ids = std::mem::replace(batch, Vec::with_capacity(self.batch_size));
                let _ = self.jobs.send(Job::Index {
                    task: Arc::clone(task),
                    ids,
                });
            }
        };
        while let Some(chunk) = splitter.next() {
            let chunk = chunk?;
            if task.state() == TaskState::Failed {
                break;
            }
            let id = ChunkId::generate();
            if let Some(j) = journal.as_mut() {
                j.append(&id)?;
            }
            let size = chunk.content.len();
            let mut metadata = ChunkMetadata::new(task.layer.clone(), format, import_timestamp);
            metadata.tags = params.tags.clone();
            metadata.properties = params.properties.clone();
            metadata.crs = chunk.crs_hint.clone().or_else(|| params.fallback_crs.clone());
            self.store.put(StoredEntry {
                id: id.clone(),
                content: chunk.content,
                parents: chunk.parents,
                metadata,
                sequence: chunk.sequence,
            })?;
            task.record_written(id.clone(), size);
            task.record_buffered(splitter.peak_buffered());
            batch.push(id);
            if batch.len() >= self.batch_size {
                flush(&mut batch);
            }
            signal(started, Ok(()));
        }
        task.record_buffered(splitter.peak_buffered());
        flush(&mut batch);
        Ok(())
    }
}
