//! The single indexer thread. Jobs of one import arrive in order, so by
//! the time its `SplitDone` is handled every chunk of that import has been
//! indexed, and a `Rollback` sees every batch sent before it.

use std::sync::mpsc::Receiver;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use geostore_core::indexer::{build_document, EmbeddedIndex, ExtractorRegistry, SearchIndex};
use geostore_core::model::ChunkId;
use geostore_core::store::ChunkStore;
use tracing::{error, warn};

use super::journal::Journal;
use super::tasks::{Task, TaskError, TaskState};

pub enum Job {
    Index { task: Arc<Task>, ids: Vec<ChunkId> },
    SplitDone { task: Arc<Task> },
    Rollback { task: Arc<Task>, error: TaskError },
}

pub struct Worker {
    pub store: Arc<dyn ChunkStore>,
    pub index: Arc<EmbeddedIndex>,
    pub extractors: Arc<ExtractorRegistry>,
    pub journal: Option<Arc<Journal>>,
    pub throttle: Duration,
}

/// Reads chunks back from the store and adds them to the index.
pub fn index_chunks(
    store: &dyn ChunkStore,
    index: &EmbeddedIndex,
    extractors: &ExtractorRegistry,
    ids: &[ChunkId],
) -> geostore_core::Result<usize> {
    let mut docs = Vec::with_capacity(ids.len());
    for id in ids {
        if index.contains(id) {
            continue;
        }
        match store.get(id) {
            Ok(e) => docs.push(build_document(extractors, e.id, &e.content, e.metadata, e.sequence)),
            // deleted in the meantime
            Err(geostore_core::Error::NotFound(_)) => {}
            Err(e) => return Err(e),
        }
    }
    index.add(docs)
}

impl Worker {
    pub fn spawn(self, jobs: Receiver<Job>) -> thread::JoinHandle<()> {
        thread::Builder::new()
            .name("indexer".into())
            .spawn(move || {
                for job in jobs {
                    self.handle(job);
                }
            })
            .expect("spawn indexer thread")
    }

    fn finish_journal(&self, task: &Task) {
        if let Some(j) = &self.journal {
            if let Err(e) = j.finish(&task.id) {
                warn!(task = %task.id, "cannot remove import journal: {e}");
            }
        }
    }

    fn handle(&self, job: Job) {
        match job {
            Job::Index { task, ids } => {
                if task.state() == TaskState::Failed {
                    return;
                }
                match index_chunks(&*self.store, &self.index, &self.extractors, &ids) {
                    Ok(_) => task.record_indexed(ids.len()),
                    Err(e) => {
                        error!(task = %task.id, "indexing failed: {e}");
                        task.fail(TaskError::from(&e));
                    }
                }
                if !self.throttle.is_zero() {
                    thread::sleep(self.throttle);
                }
            }
            Job::SplitDone { task } => {
                if task.advance(TaskState::Finished) {
                    self.finish_journal(&task);
                    task.release_written();
                } else {
                    // indexing failed earlier: undo the import
                    self.rollback(&task);
                }
            }
            Job::Rollback { task, error } => {
                self.rollback(&task);
                task.fail(error);
            }
        }
    }

    fn rollback(&self, task: &Task) {
        let ids = task.written_ids();
        if let Err(e) = self.index.delete(&ids) {
            error!(task = %task.id, "rollback could not clean the index: {e}");
            return;
        }
        if let Err(e) = self.store.delete(&ids) {
            error!(task = %task.id, "rollback could not clean the store: {e}");
            return;
        }
        self.finish_journal(task);
        task.release_written();
    }
}
