//! Server configuration: a TOML file plus `GEOSTORE_*` environment
//! overrides.
//!
//! ```toml
//! [server]
//! host = "127.0.0.1"
//! port = 63020
//! max_concurrent_imports = 8
//! max_concurrent_requests = 64
//! task_retention_secs = 3600
//!
//! [store]
//! backend = "filesystem"   # or "memory"
//! path = "geostore-data"
//! sync = false
//!
//! [index]
//! # defaults to <store.path>/index
//! path = "geostore-data/index"
//! compact_after = 10000
//!
//! [indexer]
//! batch_size = 512
//! queue_bound = 64
//! throttle_ms = 0
//! ```

use std::path::{Path, PathBuf};

use geostore_core::store::StoreBackend;
use serde::Deserialize;

pub const DEFAULT_PORT: u16 = 63020;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub server: ServerSection,
    pub store: StoreSection,
    pub index: IndexSection,
    pub indexer: IndexerSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    pub host: String,
    pub port: u16,
    /// Imports running at once; more are refused with 503.
    pub max_concurrent_imports: usize,
    /// Searches, deletes and metadata updates running at once.
    pub max_concurrent_requests: usize,
    /// How long finished tasks stay queryable.
    pub task_retention_secs: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreSection {
    pub backend: String,
    pub path: PathBuf,
    pub sync: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexSection {
    pub path: Option<PathBuf>,
    pub compact_after: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexerSection {
    /// Chunks per index batch.
    pub batch_size: usize,
    /// Pending batches before imports wait for the indexer.
    pub queue_bound: usize,
    /// Pause after every indexed batch. Only useful for testing.
    pub throttle_ms: u64,
}

impl Default for ServerSection {
    fn default() -> Self {
        ServerSection {
            host: "127.0.0.1".into(),
            port: DEFAULT_PORT,
            max_concurrent_imports: 8,
            max_concurrent_requests: 64,
            task_retention_secs: 3600,
        }
    }
}

impl Default for StoreSection {
    fn default() -> Self {
        StoreSection {
            backend: "filesystem".into(),
            path: PathBuf::from("geostore-data"),
            sync: false,
        }
    }
}

impl Default for IndexerSection {
    fn default() -> Self {
        IndexerSection {
            batch_size: 512,
            queue_bound: 64,
            throttle_ms: 0,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn parse_env<T: std::str::FromStr>(name: &str, raw: &str) -> Result<T, ConfigError> {
    raw.parse()
        .map_err(|_| ConfigError(format!("{name}: cannot parse `{raw}`")))
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(format!("invalid configuration: {e}")))
    }

    /// Reads `path` if given, then applies environment overrides and
    /// validates the result.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ConfigError(format!("{}: {e}", p.display())))?;
                Config::from_toml(&text)?
            }
            None => Config::default(),
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        config.validate()?;
        Ok(config)
    }

    /// Applies `GEOSTORE_<SECTION>_<KEY>` overrides, e.g.
    /// `GEOSTORE_SERVER_PORT` or `GEOSTORE_STORE_BACKEND`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        macro_rules! over {
            ($name:literal, $field:expr) => {
                if let Some(raw) = var($name) {
                    $field = parse_env($name, &raw)?;
                }
            };
        }
        over!("GEOSTORE_SERVER_HOST", self.server.host);
        over!("GEOSTORE_SERVER_PORT", self.server.port);
        over!("GEOSTORE_SERVER_MAX_CONCURRENT_IMPORTS", self.server.max_concurrent_imports);
        over!("GEOSTORE_SERVER_MAX_CONCURRENT_REQUESTS", self.server.max_concurrent_requests);
        over!("GEOSTORE_SERVER_TASK_RETENTION_SECS", self.server.task_retention_secs);
        over!("GEOSTORE_STORE_BACKEND", self.store.backend);
        over!("GEOSTORE_STORE_PATH", self.store.path);
        over!("GEOSTORE_STORE_SYNC", self.store.sync);
        if let Some(raw) = var("GEOSTORE_INDEX_PATH") {
            self.index.path = Some(PathBuf::from(raw));
        }
        if let Some(raw) = var("GEOSTORE_INDEX_COMPACT_AFTER") {
            self.index.compact_after = Some(parse_env("GEOSTORE_INDEX_COMPACT_AFTER", &raw)?);
        }
        over!("GEOSTORE_INDEXER_BATCH_SIZE", self.indexer.batch_size);
        over!("GEOSTORE_INDEXER_QUEUE_BOUND", self.indexer.queue_bound);
        over!("GEOSTORE_INDEXER_THROTTLE_MS", self.indexer.throttle_ms);
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.backend()?;
        if self.indexer.batch_size == 0 || self.indexer.queue_bound == 0 {
            return Err(ConfigError("indexer.batch_size and indexer.queue_bound must be positive".into()));
        }
        if self.server.max_concurrent_imports == 0 || self.server.max_concurrent_requests == 0 {
            return Err(ConfigError("server concurrency limits must be positive".into()));
        }
        Ok(())
    }

    pub fn backend(&self) -> Result<StoreBackend, ConfigError> {
        self.store
            .backend
            .parse()
            .map_err(|e: geostore_core::Error| ConfigError(format!("store.backend: {e}")))
    }

    /// Directory of the persisted index. Only used with the filesystem
    /// backend; the memory backend keeps the index in memory as well.
    pub fn index_path(&self) -> PathBuf {
        self.index
            .path
            .clone()
            .unwrap_or_else(|| self.store.path.join("index"))
    }
}
