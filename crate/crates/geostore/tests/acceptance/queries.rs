//! Query semantics: oracle equivalence, the sample queries, fuzzing.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use geostore_core::indexer::{build_document, EmbeddedIndex, ExtractorRegistry, IndexOptions, SearchIndex};
use geostore_core::model::{
    BoundingBox, ChunkId, ChunkMetadata, DateValue, Format, IndexDocument, LayerPath, TypedValue,
};
use geostore_core::query::{evaluate_oracle, parse_query, CompareOp, Query, Term};
use geostore_core::splitter::Splitter;
use geostore_core::Error;
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

use crate::common;
use crate::corpus;
use crate::support::check;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

pub fn criterion_2() -> Result<String, String> {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(2);
    let docs = corpus::documents(&mut rng, 1_200);
    let dir = tempfile::tempdir().map_err(err)?;
    {
        let index = EmbeddedIndex::open(dir.path(), IndexOptions::default()).map_err(err)?;
        let mut rest = docs.as_slice();
        while !rest.is_empty() {
            let n = rng.random_range(1..=200).min(rest.len());
            index.add(rest[..n].to_vec()).map_err(err)?;
            rest = &rest[n..];
        }
    }
    // answers come from the reopened, persisted index
    let index = EmbeddedIndex::open(dir.path(), IndexOptions::default()).map_err(err)?;
    check(index.len() == docs.len(), || format!("reopened index has {} documents", index.len()))?;
    let queries = 600;
    let hits = corpus::compare(&mut rng, &index, &docs, queries)?;
    let elapsed = started.elapsed();
    check(elapsed < Duration::from_secs(120), || format!("took {elapsed:.1?}, limit 120 s"))?;
    Ok(format!(
        "{} chunks x {queries} queries identical to the oracle ({hits} hits) in {elapsed:.1?}",
        docs.len()
    ))
}

fn bbox(a: f64, b: f64, c: f64, d: f64) -> Query {
    Query::Term(Term::BBox(BoundingBox::new(a, b, c, d).unwrap()))
}

fn date(s: &str) -> TypedValue {
    TypedValue::Date(DateValue::parse(s).unwrap())
}

fn doc(id: &str, city: &str, properties: &[(&str, &str)], tags: &[&str]) -> IndexDocument {
    let mut meta = ChunkMetadata::new(LayerPath::root(), Format::GeoJson, 1_536_000_000_000);
    meta.properties = properties.iter().map(|(k, v)| ((*k).into(), (*v).into())).collect();
    meta.tags = tags.iter().map(|t| (*t).into()).collect();
    let content = format!(r#"{{"type":"Feature","properties":{{"city":"{city}"}},"geometry":null}}"#);
    build_document(
        &ExtractorRegistry::default(),
        ChunkId::parse(id).unwrap(),
        content.as_bytes(),
        meta,
        0,
    )
}

pub fn criterion_3() -> Result<String, String> {
    let cases = [
        (
            "AND(13.378,52.515,13.380,52.517 Berlin)",
            Query::and(vec![bbox(13.378, 52.515, 13.380, 52.517), Query::text("Berlin")]),
        ),
        (
            "AND(13.378,52.515,13.380,52.517 EQ(name Berlin) GTE(importedDate 2018-02-13))",
            Query::and(vec![
                bbox(13.378, 52.515, 13.380, 52.517),
                Query::compare(CompareOp::Eq, "name", TypedValue::Text("Berlin".into())),
                Query::compare(CompareOp::Gte, "importedDate", date("2018-02-13")),
            ]),
        ),
        (
            "AND(NOT(LTE(deleted 2018-09-13)) Köln)",
            Query::and(vec![
                Query::not(vec![Query::compare(CompareOp::Lte, "deleted", date("2018-09-13"))]),
                Query::text("Köln"),
            ]),
        ),
        (
            "LT(deleted 2018)",
            Query::compare(CompareOp::Lt, "deleted", TypedValue::Date(DateValue::year(2018))),
        ),
    ];
    for (text, want) in &cases {
        let got = parse_query(text).map_err(|e| format!("`{text}`: {e}"))?;
        check(&got == want, || format!("`{text}` parsed to {got:?}"))?;
    }

    let docs = vec![
        doc("plain", "Köln", &[], &[]),
        doc("marked", "Köln", &[("deleted", "2018-09-13")], &[]),
        doc("old", "Köln", &[("deleted", "2017-12-31")], &[]),
        doc("new", "Köln", &[("deleted", "2018-01-01")], &[]),
        doc("tagged", "Bonn", &[], &["Berlin"]),
    ];
    let index = EmbeddedIndex::in_memory();
    index.add(docs.clone()).map_err(err)?;
    let outcomes: [(&str, &str, bool); 9] = [
        ("NOT(LTE(deleted 2018-09-13))", "plain", true),
        ("NOT(LTE(deleted 2018-09-13))", "marked", false),
        ("AND(NOT(LTE(deleted 2018-09-13)) Köln)", "plain", true),
        ("AND(NOT(LTE(deleted 2018-09-13)) Köln)", "marked", false),
        ("LT(deleted 2018)", "old", true),
        ("LT(deleted 2018)", "new", false),
        ("LT(deleted 2018)", "plain", false),
        ("Berlin", "tagged", true),
        ("Berlin", "plain", false),
    ];
    for (text, id, want) in outcomes {
        let q = parse_query(text).map_err(err)?;
        let d = docs.iter().find(|d| d.chunk_id.as_str() == id).unwrap();
        check(evaluate_oracle(&q, d) == want, || format!("oracle: `{text}` on {id} should be {want}"))?;
        let hit = index.query(&q, &LayerPath::root()).contains(&d.chunk_id);
        check(hit == want, || format!("index: `{text}` on {id} should be {want}"))?;
    }
    Ok(format!("{} sample queries parse exactly, {} outcomes exact in oracle and index", cases.len(), outcomes.len()))
}

const ALPHABET: &[char] = &[
    '(', ')', '(', ')', ' ', ' ', '"', '\\', ',', '.', '-', ':', 'T', 'Z', '0', '1', '2', '9', 'e',
    'a', 'ö', '\u{0}', '\n', 'A', 'N', 'D', 'O', 'R', 'E', 'Q', 'G', 'L',
];
const HEADS: &[&str] = &["AND(", "OR(", "NOT(", "EQ(", "GT(", "GTE(", "LT(", "LTE(", "\"", "2018-", "1,2,3,"];

fn fuzz_query(rng: &mut StdRng) -> String {
    let mut s: Vec<char> = if rng.random_bool(0.5) {
        corpus::query_text(rng).chars().collect()
    } else {
        Vec::new()
    };
    for _ in 0..rng.random_range(1..12) {
        let pos = rng.random_range(0..=s.len());
        match rng.random_range(0..4) {
            0 if !s.is_empty() && pos < s.len() => {
                s.remove(pos);
            }
            1 => s.splice(pos..pos, HEADS.choose(rng).unwrap().chars()).for_each(drop),
            _ => s.insert(pos, *ALPHABET.choose(rng).unwrap()),
        }
    }
    s.into_iter().collect()
}

fn fuzz_bytes(rng: &mut StdRng, seed: &[u8]) -> Vec<u8> {
    let mut v = seed.to_vec();
    for _ in 0..rng.random_range(1..9) {
        if v.is_empty() {
            v.push(b'<');
        }
        let pos = rng.random_range(0..v.len());
        match rng.random_range(0..6) {
            0 => v[pos] = rng.random(),
            1 => v[pos] = *b"<>/\"'{}[],:&;!?= \n".choose(rng).unwrap(),
            2 => {
                v.remove(pos);
            }
            3 => v.insert(pos, *b"<>{}[]\"".choose(rng).unwrap()),
            4 => v.truncate(pos),
            _ => {
                let end = (pos + rng.random_range(1..40)).min(v.len());
                let piece = v[pos..end].to_vec();
                let at = rng.random_range(0..=v.len());
                v.splice(at..at, piece);
            }
        }
    }
    v
}

/// Ok(true) if the input split, Ok(false) for a typed error.
fn split_outcome(input: &[u8]) -> Result<bool, String> {
    let result = catch_unwind(AssertUnwindSafe(|| {
        Splitter::new(input).and_then(|s| s.collect::<Result<Vec<_>, _>>())
    }))
    .map_err(|_| format!("splitter panicked on {:?}", String::from_utf8_lossy(input)))?;
    match result {
        Ok(chunks) => {
            check(chunks.iter().all(|c| !c.content.is_empty()), || "empty chunk".into())?;
            Ok(true)
        }
        Err(e @ (Error::XmlMalformed { .. } | Error::JsonMalformed { .. })) => {
            let offset = e.offset().unwrap_or(u64::MAX);
            check(offset <= input.len() as u64, || format!("offset {offset} beyond input ({e})"))?;
            Ok(false)
        }
        Err(Error::UnsupportedFormat(_) | Error::UnsupportedEncoding(_)) => Ok(false),
        Err(e) => Err(format!(
            "untyped splitter error {e:?} on {:?}",
            String::from_utf8_lossy(input)
        )),
    }
}

pub fn criterion_9() -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(9);
    let (mut asts, mut errors) = (0, 0);
    for _ in 0..1_000_000 {
        let q = fuzz_query(&mut rng);
        let r = catch_unwind(|| parse_query(&q)).map_err(|_| format!("parser panicked on {q:?}"))?;
        match r {
            Ok(_) => asts += 1,
            Err(Error::Parse { offset, .. }) if offset <= q.len() => errors += 1,
            Err(e) => return Err(format!("{q:?} gave {e:?}, not PARSE_ERROR")),
        }
    }

    let seeds: Vec<Vec<u8>> = vec![
        common::citygml(0, 3, "Hohe Straße", "Köln"),
        common::geojson(0, 3),
        br#"{"type":"Feature","properties":{"a":"x\"y","b":[1,2,{"c":null}]},"geometry":{"type":"Point","coordinates":[1,2]}}"#.to_vec(),
        br#"<?xml version="1.0"?><!-- c --><r xmlns:a="u"><a:m id="1"><![CDATA[x<y]]>&amp;</a:m><?pi x?><m/></r>"#.to_vec(),
        br#"{"type":"GeometryCollection","geometries":[]}"#.to_vec(),
    ];
    let (mut split_ok, mut split_err) = (0, 0);
    for i in 0..10_000 {
        let input = fuzz_bytes(&mut rng, &seeds[i % seeds.len()]);
        if split_outcome(&input)? {
            split_ok += 1;
        } else {
            split_err += 1;
        }
    }
    Ok(format!(
        "1000000 fuzzed queries: {asts} ASTs, {errors} PARSE_ERRORs; 10000 fuzzed files: {split_ok} split, {split_err} typed errors"
    ))
}
