//! Filesystem backend.
//!
//! Layout below the data directory:
//!
//! ```text
//! store/<layer segments as directories>/<id>.chunk   verbatim content
//! store/<layer segments as directories>/<id>.meta    sidecar record
//! parents/<sha256>.json                              shared parents
//! ```
//!
//! Layer segments are kept as-is when they consist of letters, digits, `_`
//! and `-`; every other byte is written as `%XX`. The sidecar is UTF-8
//! text: a header line `v1`, then one `<field> <json value>` line per field
//! (`id`, `layer`, `format`, `import_timestamp`, `crs`, `tags`,
//! `properties`, `sequence`, `parents`). Files are written to a temporary
//! name and renamed into place; the sidecar is written last and removed
//! first, so an entry exists exactly when its sidecar does.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::hash::{BuildHasher, RandomState};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::de::DeserializeOwned;
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use super::{ChunkStore, EntryHead, LayerCounts, StoredEntry};
use crate::error::{Error, Result};
use crate::model::{ChunkId, ChunkMetadata, Format, LayerPath, MetadataDelta, Parents};

const STRIPES: usize = 64;
const SIDECAR_VERSION: &str = "v1";

#[derive(Debug, Clone, Default)]
pub struct FsOptions {
    /// fsync files and directories before acknowledging writes.
    pub sync: bool,
}

#[derive(Default)]
struct Catalog {
    layers_by_id: HashMap<ChunkId, LayerPath>,
    counts: LayerCounts,
}

pub struct FsStore {
    store_dir: PathBuf,
    parents_dir: PathBuf,
    options: FsOptions,
    catalog: RwLock<Catalog>,
    stripes: Vec<Mutex<()>>,
    hasher: RandomState,
    parents_cache: RwLock<HashMap<String, Arc<Parents>>>,
}

fn encode_segment(seg: &str) -> String {
    let mut out = String::with_capacity(seg.len());
    for c in seg.chars() {
        if c.is_alphanumeric() || c == '_' || c == '-' {
            out.push(c);
        } else {
            let mut buf = [0u8; 4];
            for b in c.encode_utf8(&mut buf).bytes() {
                out.push_str(&format!("%{b:02X}"));
            }
        }
    }
    out
}

fn corrupt(path: &Path, what: impl std::fmt::Display) -> Error {
    Error::Corrupt(format!("{}: {what}", path.display()))
}

fn not_found_as(e: io::Error, id: &ChunkId) -> Error {
    if e.kind() == io::ErrorKind::NotFound {
        Error::NotFound(id.to_string())
    } else {
        Error::Io(e)
    }
}

struct Sidecar {
    id: ChunkId,
    metadata: ChunkMetadata,
    sequence: u64,
    parents: String,
}

fn json<T: serde::Serialize + ?Sized>(v: &T) -> String {
    serde_json::to_string(v).expect("sidecar fields serialize")
}

fn render_sidecar(s: &Sidecar) -> String {
    let m = &s.metadata;
    format!(
        "{SIDECAR_VERSION}\nid {}\nlayer {}\nformat {}\nimport_timestamp {}\ncrs {}\ntags {}\nproperties {}\nsequence {}\nparents {}\n",
        json(s.id.as_str()),
        json(&m.layer),
        json(&m.format),
        m.import_timestamp,
        json(&m.crs),
        json(&m.tags),
        json(&m.properties),
        s.sequence,
        json(&s.parents),
    )
}

fn parse_sidecar(path: &Path, text: &str) -> Result<Sidecar> {
    let mut lines = text.lines();
    if lines.next() != Some(SIDECAR_VERSION) {
        return Err(corrupt(path, "unsupported sidecar version"));
    }
    let mut fields: HashMap<&str, &str> = HashMap::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once(' ')
            .ok_or_else(|| corrupt(path, format!("bad line `{line}`")))?;
        fields.insert(k, v);
    }
    fn field<T: DeserializeOwned>(
        path: &Path,
        fields: &HashMap<&str, &str>,
        name: &str,
    ) -> Result<T> {
        let raw = fields
            .get(name)
            .ok_or_else(|| corrupt(path, format!("missing field `{name}`")))?;
        serde_json::from_str(raw).map_err(|e| corrupt(path, format!("field `{name}`: {e}")))
    }
    let id: String = field(path, &fields, "id")?;
    let layer: LayerPath = field(path, &fields, "layer")?;
    let format: Format = field(path, &fields, "format")?;
    let mut metadata = ChunkMetadata::new(layer, format, field(path, &fields, "import_timestamp")?);
    metadata.crs = field(path, &fields, "crs")?;
    metadata.tags = field::<BTreeSet<String>>(path, &fields, "tags")?;
    metadata.properties = field::<BTreeMap<String, String>>(path, &fields, "properties")?;
    Ok(Sidecar {
        id: ChunkId::parse(&id)?,
        metadata,
        sequence: field(path, &fields, "sequence")?,
        parents: field(path, &fields, "parents")?,
    })
}

impl FsStore {
    /// Opens the store below `data_dir`, creating it if needed. Leftovers of
    /// interrupted writes are removed.
    pub fn open(data_dir: &Path, options: FsOptions) -> Result<Self> {
        let store_dir = data_dir.join("store");
        let parents_dir = data_dir.join("parents");
        fs::create_dir_all(&store_dir)?;
        fs::create_dir_all(&parents_dir)?;

        let mut catalog = Catalog::default();
        let mut chunks = Vec::new();
        for entry in WalkDir::new(&store_dir).min_depth(1) {
            let entry = entry.map_err(io::Error::from)?;
            if !entry.file_type().is_file() {
                continue;
            }
            let path = entry.path();
            let name = entry.file_name().to_string_lossy();
            if name.ends_with(".tmp") {
                fs::remove_file(path)?;
            } else if name.ends_with(".chunk") {
                chunks.push(path.to_owned());
            } else if name.ends_with(".meta") {
                let sidecar = parse_sidecar(path, &fs::read_to_string(path)?)?;
                if !path.with_extension("chunk").exists() {
                    fs::remove_file(path)?;
                    continue;
                }
                catalog.counts.add(&sidecar.metadata.layer);
                catalog
                    .layers_by_id
                    .insert(sidecar.id, sidecar.metadata.layer);
            }
        }
        for chunk in chunks {
            if !chunk.with_extension("meta").exists() {
                fs::remove_file(chunk)?;
            }
        }
        for entry in fs::read_dir(&parents_dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "tmp") {
                fs::remove_file(path)?;
            }
        }

        Ok(FsStore {
            store_dir,
            parents_dir,
            options,
            catalog: RwLock::new(catalog),
            stripes: (0..STRIPES).map(|_| Mutex::new(())).collect(),
            hasher: RandomState::new(),
            parents_cache: RwLock::new(HashMap::new()),
        })
    }

    fn stripe(&self, id: &ChunkId) -> &Mutex<()> {
        &self.stripes[self.hasher.hash_one(id) as usize % STRIPES]
    }

    fn layer_dir(&self, layer: &LayerPath) -> PathBuf {
        let mut dir = self.store_dir.clone();
        for seg in layer.segments() {
            dir.push(encode_segment(seg));
        }
        dir
    }

    fn paths(&self, id: &ChunkId, layer: &LayerPath) -> (PathBuf, PathBuf) {
        let dir = self.layer_dir(layer);
        (
            dir.join(format!("{id}.chunk")),
            dir.join(format!("{id}.meta")),
        )
    }

    fn layer_of(&self, id: &ChunkId) -> Result<LayerPath> {
        self.catalog
            .read()
            .layers_by_id
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(id.to_string()))
    }

    fn write_file(&self, path: &Path, tmp: &Path, bytes: &[u8]) -> io::Result<()> {
        {
            let mut f = File::create(tmp)?;
            f.write_all(bytes)?;
            if self.options.sync {
                f.sync_all()?;
            }
        }
        fs::rename(tmp, path)?;
        if self.options.sync {
            if let Some(dir) = path.parent() {
                File::open(dir)?.sync_all()?;
            }
        }
        Ok(())
    }

    fn store_parents(&self, parents: &Arc<Parents>) -> Result<String> {
        let json = serde_json::to_vec(&**parents).expect("parents serialize");
        let hash: String = Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        if self.parents_cache.read().contains_key(&hash) {
            return Ok(hash);
        }
        let path = self.parents_dir.join(format!("{hash}.json"));
        if !path.exists() {
            let tmp = self
                .parents_dir
                .join(format!("{hash}.{:08x}.tmp", rand::random::<u32>()));
            self.write_file(&path, &tmp, &json)?;
        }
        self.parents_cache
            .write()
            .insert(hash.clone(), Arc::clone(parents));
        Ok(hash)
    }

    fn load_parents(&self, hash: &str) -> Result<Arc<Parents>> {
        if let Some(p) = self.parents_cache.read().get(hash) {
            return Ok(Arc::clone(p));
        }
        let path = self.parents_dir.join(format!("{hash}.json"));
        let parents: Parents = serde_json::from_slice(&fs::read(&path)?)
            .map_err(|e| corrupt(&path, e))?;
        let parents = Arc::new(parents);
        self.parents_cache
            .write()
            .insert(hash.to_owned(), Arc::clone(&parents));
        Ok(parents)
    }

    fn read_sidecar(&self, id: &ChunkId) -> Result<(Sidecar, PathBuf)> {
        let (chunk, meta) = self.paths(id, &self.layer_of(id)?);
        let text = fs::read_to_string(&meta).map_err(|e| not_found_as(e, id))?;
        Ok((parse_sidecar(&meta, &text)?, chunk))
    }
}

impl ChunkStore for FsStore {
    fn put(&self, entry: StoredEntry) -> Result<()> {
        let _guard = self.stripe(&entry.id).lock();
        if self.catalog.read().layers_by_id.contains_key(&entry.id) {
            return Err(Error::DuplicateId(entry.id.to_string()));
        }
        let layer = &entry.metadata.layer;
        fs::create_dir_all(self.layer_dir(layer))?;
        let parents = self.store_parents(&entry.parents)?;
        let (chunk, meta) = self.paths(&entry.id, layer);
        self.write_file(&chunk, &chunk.with_extension("chunk.tmp"), &entry.content)?;
        let sidecar = render_sidecar(&Sidecar {
            id: entry.id.clone(),
            metadata: entry.metadata.clone(),
            sequence: entry.sequence,
            parents,
        });
        if let Err(e) = self.write_file(&meta, &meta.with_extension("meta.tmp"), sidecar.as_bytes()) {
            let _ = fs::remove_file(&chunk);
            return Err(e.into());
        }
        let mut catalog = self.catalog.write();
        catalog.counts.add(layer);
        catalog.layers_by_id.insert(entry.id, layer.clone());
        Ok(())
    }

    fn get(&self, id: &ChunkId) -> Result<StoredEntry> {
        let (sidecar, chunk) = self.read_sidecar(id)?;
        let content = fs::read(&chunk).map_err(|e| not_found_as(e, id))?;
        Ok(StoredEntry {
            id: sidecar.id,
            content,
            parents: self.load_parents(&sidecar.parents)?,
            metadata: sidecar.metadata,
            sequence: sidecar.sequence,
        })
    }

    fn head(&self, id: &ChunkId) -> Result<EntryHead> {
        let (sidecar, _) = self.read_sidecar(id)?;
        Ok(EntryHead {
            parents: self.load_parents(&sidecar.parents)?,
            id: sidecar.id,
            metadata: sidecar.metadata,
            sequence: sidecar.sequence,
        })
    }

    fn delete(&self, ids: &[ChunkId]) -> Result<usize> {
        let mut n = 0;
        for id in ids {
            let _guard = self.stripe(id).lock();
            let Ok(layer) = self.layer_of(id) else {
                continue;
            };
            let (chunk, meta) = self.paths(id, &layer);
            match fs::remove_file(&meta) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(e) => return Err(e.into()),
            }
            {
                let mut catalog = self.catalog.write();
                catalog.layers_by_id.remove(id);
                catalog.counts.remove(&layer);
            }
            match fs::remove_file(&chunk) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(e) => return Err(e.into()),
            }
            n += 1;
        }
        Ok(n)
    }

    fn update_metadata(&self, id: &ChunkId, delta: &MetadataDelta) -> Result<ChunkMetadata> {
        let _guard = self.stripe(id).lock();
        let (mut sidecar, chunk) = self.read_sidecar(id)?;
        if delta.apply(&mut sidecar.metadata) {
            let meta = chunk.with_extension("meta");
            self.write_file(
                &meta,
                &meta.with_extension("meta.tmp"),
                render_sidecar(&sidecar).as_bytes(),
            )?;
        }
        Ok(sidecar.metadata)
    }

    fn scan(&self) -> Result<Vec<ChunkId>> {
        Ok(self.catalog.read().layers_by_id.keys().cloned().collect())
    }

    fn contains(&self, id: &ChunkId) -> bool {
        self.catalog.read().layers_by_id.contains_key(id)
    }

    fn len(&self) -> usize {
        self.catalog.read().layers_by_id.len()
    }

    fn has_layer(&self, layer: &LayerPath) -> bool {
        self.catalog.read().counts.has(layer)
    }
}
