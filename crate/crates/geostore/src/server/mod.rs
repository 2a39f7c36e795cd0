//! HTTP service: imports, searches, deletions, metadata updates and task
//! status.
//!
//! | Method | Path | |
//! |---|---|---|
//! | `GET` | `/` | service information |
//! | `POST` | `/store/{layer}` | import the body; 202 with a task id |
//! | `GET` | `/store/{layer}?search=` | merged export of matching chunks |
//! | `DELETE` | `/store/{layer}?search=[&all=true]` | delete matching chunks |
//! | `PUT` | `/store/{layer}?search=&properties=k:v,…&tags=a,…` | set properties, add tags |
//! | `DELETE` | `/store/{layer}?search=&properties=k,…&tags=a,…` | remove properties or tags |
//! | `GET` | `/tasks/{id}` | import task status |

mod error;
mod import;
mod journal;
mod recover;
mod routes;
pub mod tasks;
mod worker;

use std::io;
use std::sync::mpsc::{sync_channel, SyncSender};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use geostore_core::indexer::{EmbeddedIndex, ExtractorRegistry, IndexOptions};
use geostore_core::store::{ChunkStore, FsOptions, FsStore, MemoryStore, StoreBackend};
use parking_lot::Mutex;
use tokio::net::TcpListener;
use tokio::sync::Semaphore;
use tracing::{info, warn};

use crate::config::Config;

pub use error::ApiError;
pub use recover::Reconciliation;
pub use routes::router;

use journal::Journal;
use tasks::TaskRegistry;
use worker::{Job, Worker};

/// Shared state of a running server.
pub struct Service {
    config: Config,
    store: Arc<dyn ChunkStore>,
    index: Arc<EmbeddedIndex>,
    tasks: TaskRegistry,
    jobs: Mutex<Option<SyncSender<Job>>>,
    worker: Mutex<Option<JoinHandle<()>>>,
    journal: Option<Arc<Journal>>,
    imports: Arc<Semaphore>,
    requests: Arc<Semaphore>,
    /// Serializes deletions and metadata updates against each other.
    mutations: Mutex<()>,
    reconciliation: Reconciliation,
}

fn open_index(config: &Config) -> geostore_core::Result<EmbeddedIndex> {
    let dir = config.index_path();
    let mut options = IndexOptions {
        sync: config.store.sync,
        ..IndexOptions::default()
    };
    if let Some(n) = config.index.compact_after {
        options.compact_after = n;
    }
    match EmbeddedIndex::open(&dir, options.clone()) {
        Err(geostore_core::Error::Corrupt(msg)) => {
            // the store is the source of truth: start over and reindex
            warn!("index is damaged ({msg}), rebuilding it from the store");
            std::fs::remove_dir_all(&dir)?;
            EmbeddedIndex::open(&dir, options)
        }
        other => other,
    }
}

impl Service {
    /// Opens store and index, rolls back unfinished imports, reconciles the
    /// index with the store and starts the indexer.
    pub fn open(config: Config) -> geostore_core::Result<Arc<Service>> {
        let backend = config
            .backend()
            .map_err(|e| geostore_core::Error::UnsupportedFormat(e.0))?;
        let (store, index, journal): (Arc<dyn ChunkStore>, _, _) = match backend {
            StoreBackend::Memory => (Arc::new(MemoryStore::new()), EmbeddedIndex::in_memory(), None),
            StoreBackend::Filesystem => {
                let store = FsStore::open(&config.store.path, FsOptions { sync: config.store.sync })?;
                let journal = Journal::open(&config.store.path.join("imports"))?;
                (Arc::new(store), open_index(&config)?, Some(Arc::new(journal)))
            }
        };
        let index = Arc::new(index);
        let extractors = Arc::new(ExtractorRegistry::default());
        let reconciliation = recover::reconcile(&*store, &index, &extractors, journal.as_deref())?;
        info!(?reconciliation, "store and index reconciled");

        let (tx, rx) = sync_channel(config.indexer.queue_bound);
        let worker = Worker {
            store: Arc::clone(&store),
            index: Arc::clone(&index),
            extractors,
            journal: journal.clone(),
            throttle: Duration::from_millis(config.indexer.throttle_ms),
        }
        .spawn(rx);

        Ok(Arc::new(Service {
            tasks: TaskRegistry::new(Duration::from_secs(config.server.task_retention_secs)),
            imports: Arc::new(Semaphore::new(config.server.max_concurrent_imports)),
            requests: Arc::new(Semaphore::new(config.server.max_concurrent_requests)),
            config,
            store,
            index,
            jobs: Mutex::new(Some(tx)),
            worker: Mutex::new(Some(worker)),
            journal,
            mutations: Mutex::new(()),
            reconciliation,
        }))
    }

    pub fn store(&self) -> &Arc<dyn ChunkStore> {
        &self.store
    }

    pub fn index(&self) -> &Arc<EmbeddedIndex> {
        &self.index
    }

    pub fn reconciliation(&self) -> &Reconciliation {
        &self.reconciliation
    }

    fn jobs(&self) -> Option<SyncSender<Job>> {
        self.jobs.lock().clone()
    }

    /// Lets the indexer drain its queue and stops it.
    pub fn shutdown(&self) {
        self.jobs.lock().take();
        if let Some(handle) = self.worker.lock().take() {
            let _ = handle.join();
        }
    }
}

/// Serves until ctrl-c or SIGTERM.
pub async fn serve(service: Arc<Service>, listener: TcpListener) -> io::Result<()> {
    serve_until(service, listener, shutdown_signal()).await
}

/// Serves until `stop` resolves, then lets the indexer finish.
pub async fn serve_until(
    service: Arc<Service>,
    listener: TcpListener,
    stop: impl std::future::Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    let app = router(Arc::clone(&service));
    axum::serve(listener, app).with_graceful_shutdown(stop).await?;
    tokio::task::spawn_blocking(move || service.shutdown())
        .await
        .map_err(io::Error::other)?;
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
    info!("shutting down");
}
