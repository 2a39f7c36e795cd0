//! Import task registry.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use geostore_core::model::{ChunkId, LayerPath};
use parking_lot::Mutex;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TaskState {
    Accepted,
    Splitting,
    Indexing,
    Finished,
    Failed,
}

impl TaskState {
    pub fn is_terminal(self) -> bool {
        matches!(self, TaskState::Finished | TaskState::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskError {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<u64>,
}

impl From<&geostore_core::Error> for TaskError {
    fn from(e: &geostore_core::Error) -> Self {
        TaskError {
            code: e.code().into(),
            message: e.to_string(),
            offset: e.offset(),
        }
    }
}

/// Snapshot of a task as reported by the API.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskStatus {
    pub id: String,
    pub state: TaskState,
    pub layer: String,
    pub chunks_written: usize,
    pub chunks_indexed: usize,
    pub error: Option<TaskError>,
    /// Milliseconds since the Unix epoch.
    pub started_at: u64,
    pub ended_at: Option<u64>,
    pub format: Option<String>,
    /// Largest number of input bytes the splitter held at once.
    pub peak_buffered_bytes: usize,
    pub largest_chunk_bytes: usize,
}

struct Mutable {
    state: TaskState,
    error: Option<TaskError>,
    ended_at: Option<u64>,
    format: Option<String>,
    /// Ids written so far, needed to roll the import back.
    written: Vec<ChunkId>,
}

pub struct Task {
    pub id: String,
    pub layer: LayerPath,
    started_at: u64,
    chunks_written: AtomicUsize,
    chunks_indexed: AtomicUsize,
    peak_buffered: AtomicUsize,
    largest_chunk: AtomicUsize,
    inner: Mutex<Mutable>,
}

pub fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl Task {
    fn new(id: String, layer: LayerPath) -> Self {
        Task {
            id,
            layer,
            started_at: now_millis(),
            chunks_written: AtomicUsize::new(0),
            chunks_indexed: AtomicUsize::new(0),
            peak_buffered: AtomicUsize::new(0),
            largest_chunk: AtomicUsize::new(0),
            inner: Mutex::new(Mutable {
                state: TaskState::Accepted,
                error: None,
                ended_at: None,
                format: None,
                written: Vec::new(),
            }),
        }
    }

    pub fn state(&self) -> TaskState {
        self.inner.lock().state
    }

    /// Moves forward along the lifecycle. Returns false (and changes
    /// nothing) for backward moves or moves out of a terminal state.
    pub fn advance(&self, to: TaskState) -> bool {
        let mut m = self.inner.lock();
        if m.state.is_terminal() || to <= m.state {
            return false;
        }
        m.state = to;
        if to.is_terminal() {
            m.ended_at = Some(now_millis());
        }
        true
    }

    pub fn fail(&self, error: TaskError) -> bool {
        let mut m = self.inner.lock();
        if m.state.is_terminal() {
            return false;
        }
        m.state = TaskState::Failed;
        m.error = Some(error);
        m.ended_at = Some(now_millis());
        true
    }

    pub fn set_format(&self, format: &str) {
        self.inner.lock().format = Some(format.to_owned());
    }

    pub fn record_written(&self, id: ChunkId, size: usize) {
        self.inner.lock().written.push(id);
        self.largest_chunk.fetch_max(size, Ordering::Relaxed);
        self.chunks_written.fetch_add(1, Ordering::Release);
    }

    pub fn record_indexed(&self, n: usize) {
        self.chunks_indexed.fetch_add(n, Ordering::Release);
    }

    pub fn record_buffered(&self, bytes: usize) {
        self.peak_buffered.fetch_max(bytes, Ordering::Relaxed);
    }

    pub fn written_ids(&self) -> Vec<ChunkId> {
        self.inner.lock().written.clone()
    }

    /// Forgets the written ids once they are no longer needed.
    pub fn release_written(&self) {
        self.inner.lock().written = Vec::new();
    }

    pub fn status(&self) -> TaskStatus {
        let m = self.inner.lock();
        // read indexed before written so that indexed <= written holds
        let chunks_indexed = self.chunks_indexed.load(Ordering::Acquire);
        let chunks_written = self.chunks_written.load(Ordering::Acquire);
        TaskStatus {
            id: self.id.clone(),
            state: m.state,
            layer: self.layer.to_string(),
            chunks_written,
            chunks_indexed: chunks_indexed.min(chunks_written),
            error: m.error.clone(),
            started_at: self.started_at,
            ended_at: m.ended_at,
            format: m.format.clone(),
            peak_buffered_bytes: self.peak_buffered.load(Ordering::Relaxed),
            largest_chunk_bytes: self.largest_chunk.load(Ordering::Relaxed),
        }
    }

    fn ended_before(&self, cutoff: u64) -> bool {
        self.inner.lock().ended_at.is_some_and(|t| t < cutoff)
    }
}

pub struct TaskRegistry {
    tasks: Mutex<HashMap<String, Arc<Task>>>,
    retention: Duration,
    counter: AtomicU64,
}

impl TaskRegistry {
    pub fn new(retention: Duration) -> Self {
        TaskRegistry {
            tasks: Mutex::new(HashMap::new()),
            retention,
            counter: AtomicU64::new(0),
        }
    }

    pub fn create(&self, layer: LayerPath) -> Arc<Task> {
        self.evict_expired();
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let id = format!("{}-{n}", ChunkId::generate());
        let task = Arc::new(Task::new(id.clone(), layer));
        self.tasks.lock().insert(id, Arc::clone(&task));
        task
    }

    pub fn get(&self, id: &str) -> Option<Arc<Task>> {
        self.evict_expired();
        self.tasks.lock().get(id).cloned()
    }

    pub fn active(&self) -> usize {
        self.tasks
            .lock()
            .values()
            .filter(|t| !t.state().is_terminal())
            .count()
    }

    fn evict_expired(&self) {
        let cutoff = now_millis().saturating_sub(self.retention.as_millis() as u64);
        self.tasks.lock().retain(|_, t| !t.ended_before(cutoff));
    }
}
