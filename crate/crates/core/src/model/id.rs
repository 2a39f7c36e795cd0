use std::fmt;
use std::sync::OnceLock;
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::Mutex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Opaque chunk identifier.
///
/// Generated ids are 28 lowercase hex digits: 12 for the wall-clock
/// millisecond, 8 for a per-millisecond counter and 8 for a random
/// per-process node value. Lexicographic order therefore follows
/// generation order within one process.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChunkId(String);

struct Clock {
    last_ms: u64,
    counter: u32,
}

static CLOCK: Mutex<Clock> = Mutex::new(Clock {
    last_ms: 0,
    counter: 0,
});
static NODE: OnceLock<u32> = OnceLock::new();

impl ChunkId {
    pub fn generate() -> Self {
        let node = *NODE.get_or_init(rand::random::<u32>);
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        let (ms, counter) = {
            let mut clock = CLOCK.lock();
            if now > clock.last_ms {
                clock.last_ms = now;
                clock.counter = 0;
            } else if clock.counter == u32::MAX {
                clock.last_ms += 1;
                clock.counter = 0;
            } else {
                clock.counter += 1;
            }
            (clock.last_ms, clock.counter)
        };
        ChunkId(format!("{ms:012x}{counter:08x}{node:08x}"))
    }

    /// Accepts 1 to 128 characters from `[A-Za-z0-9_-]`; ids appear in
    /// file names and URLs.
    pub fn parse(s: &str) -> Result<Self> {
        let ok = !s.is_empty()
            && s.len() <= 128
            && s
                .bytes()
                .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-');
        if ok {
            Ok(ChunkId(s.to_owned()))
        } else {
            Err(Error::Corrupt(format!("invalid chunk id `{s}`")))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ChunkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for ChunkId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for ChunkId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        ChunkId::parse(&s).map_err(serde::de::Error::custom)
    }
}
