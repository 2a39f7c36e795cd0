//! Append-only persistence for the index: `segments/<n>.seg` files listed by
//! a `manifest`. Every file starts with a magic header; every record is
//! framed by its length and CRC-32 so a torn tail can be detected and cut.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChunkId, IndexDocument, MetadataDelta};

const SEGMENT_MAGIC: &[u8; 8] = b"GSIXSEG\x01";
const MANIFEST_MAGIC: &[u8; 8] = b"GSIXMAN\x01";
/// A new segment is started once the current one exceeds this size.
const SEGMENT_LIMIT: u64 = 64 << 20;
/// Documents per record when writing a snapshot.
const SNAPSHOT_BATCH: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub(crate) enum Record {
    Add { docs: Vec<IndexDocument> },
    Update { ids: Vec<ChunkId>, delta: MetadataDelta },
    Delete { ids: Vec<ChunkId> },
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    segments: Vec<u64>,
}

pub(crate) struct SegmentLog {
    dir: PathBuf,
    segments: Vec<u64>,
    current: File,
    current_len: u64,
    sync: bool,
}

fn segment_path(dir: &Path, n: u64) -> PathBuf {
    dir.join("segments").join(format!("{n}.seg"))
}

fn frame(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + 8);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

/// Reads one framed payload. `Ok(None)` at a clean end of input or at a
/// torn or damaged frame.
fn read_frame(r: &mut impl Read) -> io::Result<Option<Vec<u8>>> {
    let mut head = [0u8; 8];
    let mut got = 0;
    while got < head.len() {
        match r.read(&mut head[got..])? {
            0 => return Ok(None),
            n => got += n,
        }
    }
    let len = u32::from_le_bytes(head[..4].try_into().unwrap()) as usize;
    let crc = u32::from_le_bytes(head[4..].try_into().unwrap());
    let mut payload = Vec::new();
    if r.take(len as u64).read_to_end(&mut payload)? < len {
        return Ok(None);
    }
    if crc32fast::hash(&payload) != crc {
        return Ok(None);
    }
    Ok(Some(payload))
}

fn write_atomically(path: &Path, bytes: &[u8], sync: bool) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        if sync {
            f.sync_all()?;
        }
    }
    fs::rename(&tmp, path)?;
    if sync {
        if let Some(parent) = path.parent() {
            File::open(parent)?.sync_all()?;
        }
    }
    Ok(())
}

fn new_segment(dir: &Path, n: u64) -> io::Result<File> {
    let mut f = OpenOptions::new()
        .create(true)
        .truncate(true)
        .write(true)
        .open(segment_path(dir, n))?;
    f.write_all(SEGMENT_MAGIC)?;
    Ok(f)
}

impl SegmentLog {
    /// Opens or creates the log in `dir` and returns the records to replay.
    /// A damaged tail of the newest segment is truncated; damage anywhere
    /// else is reported as corruption.
    pub fn open(dir: &Path, sync: bool) -> Result<(SegmentLog, Vec<Record>)> {
        fs::create_dir_all(dir.join("segments"))?;
        let manifest_path = dir.join("manifest");
        let segments = match fs::read(&manifest_path) {
            Ok(bytes) => {
                let body = bytes
                    .strip_prefix(MANIFEST_MAGIC)
                    .ok_or_else(|| Error::Corrupt("index manifest has a bad header".into()))?;
                let payload = read_frame(&mut &body[..])?
                    .ok_or_else(|| Error::Corrupt("index manifest is damaged".into()))?;
                let m: Manifest = serde_json::from_slice(&payload)
                    .map_err(|e| Error::Corrupt(format!("index manifest: {e}")))?;
                m.segments
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };

        // Segments not listed in the manifest are leftovers of an
        // interrupted compaction or rotation.
        for entry in fs::read_dir(dir.join("segments"))? {
            let path = entry?.path();
            let listed = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.parse::<u64>().ok())
                .is_some_and(|n| segments.contains(&n) && path.extension().is_some_and(|e| e == "seg"));
            if !listed {
                fs::remove_file(&path)?;
            }
        }

        let mut records = Vec::new();
        let mut current_len = 0;
        for (i, &n) in segments.iter().enumerate() {
            let last = i + 1 == segments.len();
            let path = segment_path(dir, n);
            let mut r = BufReader::new(File::open(&path)?);
            let mut magic = [0u8; 8];
            r.read_exact(&mut magic)
                .ok()
                .filter(|_| &magic == SEGMENT_MAGIC)
                .ok_or_else(|| Error::Corrupt(format!("index segment {n} has a bad header")))?;
            let mut valid = SEGMENT_MAGIC.len() as u64;
            while let Some(payload) = read_frame(&mut r)? {
                let rec: Record = serde_json::from_slice(&payload)
                    .map_err(|e| Error::Corrupt(format!("index segment {n}: {e}")))?;
                records.push(rec);
                valid += 8 + payload.len() as u64;
            }
            let actual = fs::metadata(&path)?.len();
            if valid < actual {
                if !last {
                    return Err(Error::Corrupt(format!("index segment {n} is damaged")));
                }
                OpenOptions::new().write(true).open(&path)?.set_len(valid)?;
            }
            if last {
                current_len = valid;
            }
        }

        let log = match segments.last() {
            Some(&n) => SegmentLog {
                current: OpenOptions::new().append(true).open(segment_path(dir, n))?,
                dir: dir.to_owned(),
                segments,
                current_len,
                sync,
            },
            None => {
                let current = new_segment(dir, 0)?;
                SegmentLog {
                    current,
                    dir: dir.to_owned(),
                    segments: vec![0],
                    current_len: SEGMENT_MAGIC.len() as u64,
                    sync,
                }
            }
        };
        log.write_manifest()?;
        Ok((log, records))
    }

    fn write_manifest(&self) -> Result<()> {
        let payload = serde_json::to_vec(&Manifest {
            segments: self.segments.clone(),
        })
        .expect("manifest serializes");
        let mut bytes = MANIFEST_MAGIC.to_vec();
        bytes.extend_from_slice(&frame(&payload));
        write_atomically(&self.dir.join("manifest"), &bytes, self.sync)?;
        Ok(())
    }

    pub fn append(&mut self, record: &Record) -> Result<()> {
        if self.current_len > SEGMENT_LIMIT {
            let n = self.segments.last().map_or(0, |n| n + 1);
            self.current = new_segment(&self.dir, n)?;
            self.current_len = SEGMENT_MAGIC.len() as u64;
            self.segments.push(n);
            self.write_manifest()?;
        }
        let payload = serde_json::to_vec(record).expect("records serialize");
        let bytes = frame(&payload);
        self.current.write_all(&bytes)?;
        if self.sync {
            self.current.sync_data()?;
        }
        self.current_len += bytes.len() as u64;
        Ok(())
    }

    /// Replaces the whole log with a snapshot holding `docs`.
    pub fn rewrite<'a>(&mut self, docs: impl Iterator<Item = &'a IndexDocument>) -> Result<()> {
        let n = self.segments.last().map_or(0, |n| n + 1);
        let mut f = new_segment(&self.dir, n)?;
        let mut len = SEGMENT_MAGIC.len() as u64;
        let mut batch = Vec::with_capacity(SNAPSHOT_BATCH);
        let mut docs = docs.peekable();
        while docs.peek().is_some() {
            batch.clear();
            batch.extend(docs.by_ref().take(SNAPSHOT_BATCH).cloned());
            let payload =
                serde_json::to_vec(&Record::Add { docs: std::mem::take(&mut batch) })
                    .expect("records serialize");
            let bytes = frame(&payload);
            f.write_all(&bytes)?;
            len += bytes.len() as u64;
        }
        f.sync_all()?;
        let old = std::mem::replace(&mut self.segments, vec![n]);
        self.write_manifest()?;
        self.current = OpenOptions::new().append(true).open(segment_path(&self.dir, n))?;
        self.current_len = len;
        for o in old {
            let _ = fs::remove_file(segment_path(&self.dir, o));
        }
        Ok(())
    }
}
