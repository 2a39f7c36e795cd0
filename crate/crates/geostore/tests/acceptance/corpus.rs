//! Random chunk corpora and grammar-generated queries, checked against the
//! reference evaluator.

use std::collections::BTreeMap;

use geostore_core::indexer::{build_document, ExtractorRegistry, SearchIndex};
use geostore_core::model::{ChunkId, ChunkMetadata, Format, IndexDocument, LayerPath};
use geostore_core::query::{evaluate_oracle, parse_query, Query};
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::Rng;

pub const WORDS: &[&str] = &[
    "berlin", "köln", "Schildergasse", "hohe", "park", "river", "tower", "mill", "red", "green",
    "blue", "historic", "Straße",
];
pub const TAGS: &[&str] = &["red", "green", "blue", "historic", "Lod2"];
pub const LAYERS: &[&str] = &["/", "/a", "/a/b", "/a/b/c", "/b", "/b/c"];
const KEYS: &[&str] = &[
    "height", "name", "built", "kind", "deleted", "owner", "floors", "missing", "nested.level",
];

// 2017-01-01 .. 2019-12-31 in milliseconds
const T0: i64 = 1_483_228_800_000;
const T1: i64 = 1_577_750_400_000;

fn date(rng: &mut StdRng) -> String {
    let y = rng.random_range(2016..=2019);
    match rng.random_range(0..4) {
        0 => format!("{y}"),
        1 => format!("{y}-{:02}", rng.random_range(1..=12)),
        2 => format!("{y}-{:02}-{:02}", rng.random_range(1..=12), rng.random_range(1..=28)),
        _ => format!(
            "{y}-{:02}-{:02}T{:02}:{:02}:00Z",
            rng.random_range(1..=12),
            rng.random_range(1..=28),
            rng.random_range(0..24),
            rng.random_range(0..60)
        ),
    }
}

fn number(rng: &mut StdRng) -> String {
    match rng.random_range(0..3) {
        0 => format!("{}", rng.random_range(0..60)),
        1 => format!("{:.1}", rng.random_range(0.0..60.0)),
        _ => format!("-{}", rng.random_range(0..5)),
    }
}

fn word(rng: &mut StdRng) -> String {
    (*WORDS.choose(rng).unwrap()).to_owned()
}

fn value(rng: &mut StdRng) -> String {
    match rng.random_range(0..3) {
        0 => number(rng),
        1 => date(rng),
        _ => word(rng),
    }
}

/// Content of one GeoJSON feature with random geometry and properties.
fn feature(rng: &mut StdRng, i: usize) -> String {
    let x = rng.random_range(0.0..100.0f64);
    let y = rng.random_range(0.0..100.0f64);
    let geometry = if rng.random_bool(0.5) {
        format!(r#"{{"type":"Point","coordinates":[{x:.3},{y:.3}]}}"#)
    } else {
        let (w, h) = (rng.random_range(0.1..15.0f64), rng.random_range(0.1..15.0f64));
        format!(
            r#"{{"type":"Polygon","coordinates":[[[{x:.3},{y:.3}],[{:.3},{y:.3}],[{:.3},{:.3}],[{x:.3},{y:.3}]]]}}"#,
            x + w,
            x + w,
            y + h
        )
    };
    let mut props = vec![format!(r#""id":{i}"#)];
    if rng.random_bool(0.7) {
        props.push(format!(r#""height":{}"#, number(rng)));
    }
    if rng.random_bool(0.2) {
        // numeric text is interpreted at comparison time
        props.push(format!(r#""floors":"{}""#, rng.random_range(1..12)));
    }
    if rng.random_bool(0.7) {
        props.push(format!(r#""name":"{} {}""#, word(rng), word(rng)));
    }
    if rng.random_bool(0.5) {
        props.push(format!(r#""built":"{}""#, date(rng)));
    }
    if rng.random_bool(0.5) {
        props.push(format!(r#""kind":"{}""#, word(rng)));
    }
    if rng.random_bool(0.3) {
        props.push(format!(r#""nested":{{"level":{}}}"#, rng.random_range(0..4)));
    }
    format!(
        r#"{{"type":"Feature","properties":{{{}}},"geometry":{geometry}}}"#,
        props.join(",")
    )
}

/// `n` documents built by the real extractors, spread over several
/// simulated imports.
pub fn documents(rng: &mut StdRng, n: usize) -> Vec<IndexDocument> {
    let registry = ExtractorRegistry::default();
    let mut docs = Vec::with_capacity(n);
    let mut ts = rng.random_range(T0..T1);
    let mut seq = 0;
    for i in 0..n {
        if rng.random_bool(0.05) {
            ts = rng.random_range(T0..T1);
            seq = 0;
        }
        let layer = LayerPath::parse(LAYERS.choose(rng).unwrap()).unwrap();
        let mut meta = ChunkMetadata::new(layer, Format::GeoJson, ts);
        for t in TAGS {
            if rng.random_bool(0.2) {
                meta.tags.insert((*t).to_owned());
            }
        }
        let mut props = BTreeMap::new();
        if rng.random_bool(0.3) {
            props.insert("deleted".to_owned(), date(rng));
        }
        if rng.random_bool(0.3) {
            props.insert("owner".to_owned(), word(rng));
        }
        if rng.random_bool(0.2) {
            props.insert("floors".to_owned(), number(rng));
        }
        meta.properties = props;
        let content = feature(rng, i);
        let id = ChunkId::parse(&format!("c{i:06}")).unwrap();
        docs.push(build_document(&registry, id, content.as_bytes(), meta, seq));
        seq += 1;
    }
    docs
}

fn quoted(rng: &mut StdRng, token: String) -> String {
    if rng.random_bool(0.1) {
        format!("\"{token}\"")
    } else {
        token
    }
}

fn expr(rng: &mut StdRng, depth: u32) -> String {
    let pick = if depth == 0 { rng.random_range(0..4) } else { rng.random_range(0..7) };
    match pick {
        0 => {
            let mut w = word(rng);
            if rng.random_bool(0.2) {
                w = w.to_uppercase();
            }
            quoted(rng, w)
        }
        1 => {
            let x = rng.random_range(-10.0..100.0f64);
            let y = rng.random_range(-10.0..100.0f64);
            let (w, h) = (rng.random_range(0.0..40.0f64), rng.random_range(0.0..40.0f64));
            format!("{x:.2},{y:.2},{:.2},{:.2}", x + w, y + h)
        }
        2 => date(rng),
        3 => {
            let op = ["EQ", "GT", "GTE", "LT", "LTE"].choose(rng).unwrap();
            let key = KEYS.choose(rng).unwrap();
            let v = value(rng);
            let v = quoted(rng, v);
            format!("{op}({key} {v})")
        }
        _ => {
            let op = ["AND", "OR", "NOT"].choose(rng).unwrap();
            let n = rng.random_range(1..=3);
            let children: Vec<String> = (0..n).map(|_| expr(rng, depth - 1)).collect();
            format!("{op}({})", children.join(" "))
        }
    }
}

/// A random query text following the grammar.
pub fn query_text(rng: &mut StdRng) -> String {
    let n = rng.random_range(0..=2);
    (0..n).map(|_| expr(rng, 3)).collect::<Vec<_>>().join(" ")
}

/// Expected answer: oracle filter, ordered by import time and position.
pub fn expected(docs: &[IndexDocument], query: &Query, layer: &LayerPath) -> Vec<ChunkId> {
    let mut hits: Vec<&IndexDocument> = docs
        .iter()
        .filter(|d| layer.is_ancestor_or_self(&d.metadata.layer) && evaluate_oracle(query, d))
        .collect();
    hits.sort_by(|a, b| {
        (a.metadata.import_timestamp, a.sequence, &a.chunk_id)
            .cmp(&(b.metadata.import_timestamp, b.sequence, &b.chunk_id))
    });
    hits.into_iter().map(|d| d.chunk_id.clone()).collect()
}

/// Runs `n` random queries against `index` and returns the first
/// disagreement with the oracle, plus the total number of hits seen.
pub fn compare(
    rng: &mut StdRng,
    index: &dyn SearchIndex,
    docs: &[IndexDocument],
    n: usize,
) -> Result<usize, String> {
    let mut hits = 0;
    for _ in 0..n {
        let text = query_text(rng);
        let query = parse_query(&text).map_err(|e| format!("generated query `{text}` does not parse: {e}"))?;
        let layer = LayerPath::parse(LAYERS.choose(rng).unwrap()).unwrap();
        let want = expected(docs, &query, &layer);
        let got = index.query(&query, &layer);
        if got != want {
            return Err(format!(
                "query `{text}` in {layer}: index returned {} ids, oracle {}",
                got.len(),
                want.len()
            ));
        }
        hits += got.len();
    }
    Ok(hits)
}

/// A GeoJSON file of `n` random features numbered from `first`.
pub fn feature_collection(rng: &mut StdRng, first: usize, n: usize) -> Vec<u8> {
    let features: Vec<String> = (first..first + n).map(|i| feature(rng, i)).collect();
    format!(
        "{{\"type\":\"FeatureCollection\",\"features\":[\n{}\n]}}\n",
        features.join(",\n")
    )
    .into_bytes()
}

/// Random import metadata in the form the API takes: tags and
/// `key:value` properties.
pub fn import_metadata(rng: &mut StdRng) -> (Vec<String>, Vec<String>) {
    let n = rng.random_range(0..3);
    let tags = TAGS.choose_multiple(rng, n).map(|t| t.to_string()).collect();
    let mut props = Vec::new();
    if rng.random_bool(0.5) {
        props.push(format!("deleted:{}", date(rng)));
    }
    if rng.random_bool(0.5) {
        props.push(format!("owner:{}", word(rng)));
    }
    (tags, props)
}
