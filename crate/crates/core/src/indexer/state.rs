//! In-memory index structures. All mutation happens through [`State`]
//! methods called with exclusive access, so readers never observe a partly
//! applied batch.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use roaring::RoaringBitmap;

use crate::error::{Error, Result};
use crate::model::{ChunkId, ChunkMetadata, IndexDocument, LayerPath, MetadataDelta, TypedValue};
use crate::query::{LogicalOp, Query, Term};
use crate::text::tokenize_into;

use super::keys::KeyIndex;
use super::spatial::PackedRTree;

/// Spatial trees are merged once there are more than this many.
const MAX_TREES: usize = 8;

#[derive(Default)]
pub(crate) struct State {
    docs: Vec<Option<Arc<IndexDocument>>>,
    slots: HashMap<ChunkId, u32>,
    live: RoaringBitmap,
    content_terms: HashMap<String, RoaringBitmap>,
    meta_terms: HashMap<String, RoaringBitmap>,
    attributes: HashMap<String, KeyIndex>,
    properties: HashMap<String, KeyIndex>,
    layers: HashMap<LayerPath, RoaringBitmap>,
    timestamps: BTreeMap<i64, RoaringBitmap>,
    trees: Vec<PackedRTree>,
}

/// Terms under which a text query finds a chunk through its metadata: whole
/// lowercased tags and tokens of property values.
fn metadata_terms(meta: &ChunkMetadata) -> BTreeSet<String> {
    let mut terms: BTreeSet<String> = meta.tags.iter().map(|t| t.to_lowercase()).collect();
    for v in meta.properties.values() {
        tokenize_into(v, |t| {
            if !terms.contains(t) {
                terms.insert(t.to_owned());
            }
        });
    }
    terms
}

fn posting_add(map: &mut HashMap<String, RoaringBitmap>, term: &str, slot: u32) {
    match map.get_mut(term) {
        Some(b) => {
            b.insert(slot);
        }
        None => {
            map.insert(term.to_owned(), RoaringBitmap::from_iter([slot]));
        }
    }
}

fn posting_remove(map: &mut HashMap<String, RoaringBitmap>, term: &str, slot: u32) {
    if let Some(b) = map.get_mut(term) {
        b.remove(slot);
        if b.is_empty() {
            map.remove(term);
        }
    }
}

fn key_insert(map: &mut HashMap<String, KeyIndex>, key: &str, value: &TypedValue, slot: u32) {
    match map.get_mut(key) {
        Some(k) => k.insert(value, slot),
        None => {
            let mut k = KeyIndex::default();
            k.insert(value, slot);
            map.insert(key.to_owned(), k);
        }
    }
}

fn key_remove(map: &mut HashMap<String, KeyIndex>, key: &str, value: &TypedValue, slot: u32) {
    if let Some(k) = map.get_mut(key) {
        k.remove(value, slot);
        if k.is_empty() {
            map.remove(key);
        }
    }
}

impl State {
    pub fn len(&self) -> usize {
        self.live.len() as usize
    }

    pub fn contains(&self, id: &ChunkId) -> bool {
        self.slots.contains_key(id)
    }

    pub fn get(&self, id: &ChunkId) -> Option<Arc<IndexDocument>> {
        let slot = *self.slots.get(id)?;
        self.docs[slot as usize].clone()
    }

    pub fn documents(&self) -> impl Iterator<Item = &Arc<IndexDocument>> {
        self.live.iter().filter_map(|s| self.docs[s as usize].as_ref())
    }

    /// Share of slots occupied by deleted documents.
    pub fn dead_slots(&self) -> usize {
        self.docs.len() - self.len()
    }

    pub fn check_new(&self, docs: &[IndexDocument]) -> Result<()> {
        let mut seen = HashSet::new();
        for d in docs {
            if self.slots.contains_key(&d.chunk_id) || !seen.insert(&d.chunk_id) {
                return Err(Error::DuplicateId(d.chunk_id.to_string()));
            }
        }
        if self.docs.len() + docs.len() > u32::MAX as usize {
            return Err(Error::Corrupt("index slot space exhausted".into()));
        }
        Ok(())
    }

    pub fn check_known(&self, ids: &[ChunkId]) -> Result<()> {
        match ids.iter().find(|id| !self.slots.contains_key(*id)) {
            Some(id) => Err(Error::UnknownId(id.to_string())),
            None => Ok(()),
        }
    }

    /// Callers validate with [`State::check_new`] first.
    pub fn add(&mut self, docs: Vec<IndexDocument>) -> usize {
        let n = docs.len();
        let mut boxes = Vec::new();
        for doc in docs {
            let slot = self.docs.len() as u32;
            for t in &doc.tokens {
                posting_add(&mut self.content_terms, t, slot);
            }
            self.index_metadata(&doc.metadata, slot);
            for a in &doc.attributes {
                key_insert(&mut self.attributes, &a.key, &a.value.normalized(), slot);
            }
            self.layers
                .entry(doc.metadata.layer.clone())
                .or_default()
                .insert(slot);
            self.timestamps
                .entry(doc.metadata.import_timestamp)
                .or_default()
                .insert(slot);
            if let Some(b) = doc.bbox {
                boxes.push((b, slot));
            }
            self.slots.insert(doc.chunk_id.clone(), slot);
            self.live.insert(slot);
            self.docs.push(Some(Arc::new(doc)));
        }
        if !boxes.is_empty() {
            self.trees.push(PackedRTree::build(boxes));
            if self.trees.len() > MAX_TREES {
                self.merge_trees();
            }
        }
        n
    }

    fn merge_trees(&mut self) {
        let entries: Vec<_> = self
            .trees
            .drain(..)
            .flat_map(|t| t.entries().to_vec())
            .filter(|(_, slot)| self.live.contains(*slot))
            .collect();
        self.trees = vec![PackedRTree::build(entries)];
    }

    fn index_metadata(&mut self, meta: &ChunkMetadata, slot: u32) {
        for t in metadata_terms(meta) {
            posting_add(&mut self.meta_terms, &t, slot);
        }
        for (k, v) in &meta.properties {
            key_insert(&mut self.properties, k, &TypedValue::interpret(v), slot);
        }
    }

    fn unindex_metadata(&mut self, meta: &ChunkMetadata, slot: u32) {
        for t in metadata_terms(meta) {
            posting_remove(&mut self.meta_terms, &t, slot);
        }
        for (k, v) in &meta.properties {
            key_remove(&mut self.properties, k, &TypedValue::interpret(v), slot);
        }
    }

    /// Callers validate with [`State::check_known`] first.
    pub fn update_metadata(&mut self, ids: &[ChunkId], delta: &MetadataDelta) -> usize {
        let unique: BTreeSet<&ChunkId> = ids.iter().collect();
        for id in &unique {
            let slot = self.slots[*id];
            let old = self.docs[slot as usize].clone().expect("live slot");
            let mut meta = old.metadata.clone();
            if !delta.apply(&mut meta) {
                continue;
            }
            self.unindex_metadata(&old.metadata, slot);
            self.index_metadata(&meta, slot);
            let mut doc = (*old).clone();
            doc.metadata = meta;
            self.docs[slot as usize] = Some(Arc::new(doc));
        }
        unique.len()
    }

    pub fn delete(&mut self, ids: &[ChunkId]) -> usize {
        let mut removed = 0;
        for id in ids {
            let Some(slot) = self.slots.remove(id) else {
                continue;
            };
            let doc = self.docs[slot as usize].take().expect("live slot");
            for t in &doc.tokens {
                posting_remove(&mut self.content_terms, t, slot);
            }
            self.unindex_metadata(&doc.metadata, slot);
            for a in &doc.attributes {
                key_remove(&mut self.attributes, &a.key, &a.value.normalized(), slot);
            }
            if let Some(b) = self.layers.get_mut(&doc.metadata.layer) {
                b.remove(slot);
                if b.is_empty() {
                    self.layers.remove(&doc.metadata.layer);
                }
            }
            let ts = doc.metadata.import_timestamp;
            if let Some(b) = self.timestamps.get_mut(&ts) {
                b.remove(slot);
                if b.is_empty() {
                    self.timestamps.remove(&ts);
                }
            }
            self.live.remove(slot);
            removed += 1;
        }
        removed
    }

    /// Rebuilds all structures with densely packed slots.
    pub fn rebuild(&mut self) {
        let docs: Vec<IndexDocument> = self.documents().map(|d| (**d).clone()).collect();
        *self = State::default();
        self.add(docs);
    }

    fn eval(&self, query: &Query) -> RoaringBitmap {
        match query {
            Query::MatchAll => self.live.clone(),
            Query::Term(Term::Text(t)) => {
                let t = t.to_lowercase();
                let mut out = self.content_terms.get(&t).cloned().unwrap_or_default();
                if let Some(b) = self.meta_terms.get(&t) {
                    out |= b;
                }
                out
            }
            Query::Term(Term::BBox(q)) => {
                let mut out = RoaringBitmap::new();
                for tree in &self.trees {
                    tree.search(q, |slot| {
                        out.insert(slot);
                    });
                }
                out & &self.live
            }
            Query::Term(Term::Date(d)) => {
                let mut out = RoaringBitmap::new();
                for (_, b) in self.timestamps.range(d.lower_bound()..d.upper_bound()) {
                    out |= b;
                }
                out
            }
            Query::Logical { op, children } => match op {
                LogicalOp::And => {
                    let mut out = self.live.clone();
                    for c in children {
                        if out.is_empty() {
                            break;
                        }
                        out &= self.eval(c);
                    }
                    out
                }
                LogicalOp::Or => self.union_of(children),
                LogicalOp::Not => &self.live - self.union_of(children),
            },
            Query::Comparison { op, key, value } => {
                let mut out = RoaringBitmap::new();
                if let Some(k) = self.attributes.get(key) {
                    out |= k.matching(*op, value);
                }
                if let Some(k) = self.properties.get(key) {
                    out |= k.matching(*op, value);
                }
                out
            }
        }
    }

    fn union_of(&self, queries: &[Query]) -> RoaringBitmap {
        let mut out = RoaringBitmap::new();
        for q in queries {
            out |= self.eval(q);
        }
        out
    }

    fn in_layer(&self, layer: &LayerPath) -> RoaringBitmap {
        if layer.is_root() {
            return self.live.clone();
        }
        let mut out = RoaringBitmap::new();
        for (l, b) in &self.layers {
            if layer.is_ancestor_or_self(l) {
                out |= b;
            }
        }
        out
    }

    pub fn has_layer(&self, layer: &LayerPath) -> bool {
        !self.in_layer(layer).is_empty()
    }

    /// Matching documents ordered by import time, then position in the
    /// source file, then id.
    pub fn query(&self, query: &Query, layer: &LayerPath) -> Vec<Arc<IndexDocument>> {
        let hits = self.eval(query) & self.in_layer(layer);
        let mut docs: Vec<Arc<IndexDocument>> = hits
            .iter()
            .filter_map(|s| self.docs[s as usize].clone())
            .collect();
        docs.sort_by(|a, b| {
            (a.metadata.import_timestamp, a.sequence, &a.chunk_id).cmp(&(
                b.metadata.import_timestamp,
                b.sequence,
                &b.chunk_id,
            ))
        });
        docs
    }
}
