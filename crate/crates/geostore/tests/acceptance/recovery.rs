//! Crash in the middle of an import, restart, reconciliation.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use geostore_core::indexer::{build_document, EmbeddedIndex, ExtractorRegistry, IndexOptions};
use geostore_core::model::ChunkId;
use geostore_core::store::{ChunkStore, FsOptions, FsStore};
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use reqwest::blocking::Client;
use serde_json::Value;

use crate::common;
use crate::corpus;
use crate::memory::FeatureStream;
use crate::support::{check, post_streaming, ServerProcess};

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn get(http: &Client, url: &str) -> Result<Value, String> {
    http.get(url).send().and_then(|r| r.json()).map_err(err)
}

fn wait(http: &Client, base: &str, task: &Value) -> Result<Value, String> {
    let url = format!("{base}{}", task["status"].as_str().unwrap_or(""));
    let deadline = Instant::now() + Duration::from_secs(120);
    loop {
        let s = get(http, &url)?;
        if s["state"] == "FINISHED" || s["state"] == "FAILED" {
            return Ok(s);
        }
        check(Instant::now() < deadline, || format!("task did not finish: {s}"))?;
        std::thread::sleep(Duration::from_millis(20));
    }
}

pub fn criterion_8() -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(8);
    let dir = tempfile::tempdir().map_err(err)?;
    let data = dir.path().join("data");
    let http = Client::builder().timeout(None).build().map_err(err)?;

    let server = ServerProcess::start(&data, &[])?;
    let mut survivors = 0;
    for k in 0..8 {
        let layer = corpus::LAYERS.choose(&mut rng).unwrap().trim_start_matches('/');
        let (tags, props) = corpus::import_metadata(&mut rng);
        let mut req = http.post(format!("{}/store/{layer}", server.url)).body(corpus::feature_collection(
            &mut rng,
            k * 1_000,
            150,
        ));
        if !tags.is_empty() {
            req = req.query(&[("tags", tags.join(","))]);
        }
        if !props.is_empty() {
            req = req.query(&[("properties", props.join(","))]);
        }
        let task: Value = req.send().and_then(|r| r.json()).map_err(err)?;
        let status = wait(&http, &server.url, &task)?;
        check(status["state"] == "FINISHED", || format!("import {k}: {status}"))?;
        survivors += status["chunksWritten"].as_u64().unwrap_or(0) as usize;
    }

    // a large import, killed once a good part of it is stored
    let upload = post_streaming(
        &server.url,
        "/store/b/crash",
        FeatureStream::new(200_000).paced(Duration::from_millis(5)),
    )?;
    check(upload.status == 202, || format!("import answered {}", upload.status))?;
    let status_url = format!("{}{}", server.url, upload.location);
    let deadline = Instant::now() + Duration::from_secs(120);
    let in_flight = loop {
        let s = get(&http, &status_url)?;
        check(!s["state"].as_str().is_some_and(|st| st == "FINISHED" || st == "FAILED"), || {
            format!("import ended before the crash: {s}")
        })?;
        if s["state"] == "SPLITTING" && s["chunksWritten"].as_u64().unwrap_or(0) >= 2_000 {
            break s;
        }
        check(Instant::now() < deadline, || "large import made no progress".into())?;
        std::thread::sleep(Duration::from_millis(10));
    };
    server.kill();
    upload.join();

    let server = ServerProcess::start(&data, &[])?;
    let info = get(&http, &format!("{}/", server.url))?;
    let r = &info["reconciliation"];
    check(r["importsRolledBack"].as_u64() == Some(1), || format!("reconciliation after crash: {r}"))?;
    check(r["chunksRolledBack"].as_u64().unwrap_or(0) > 0, || format!("nothing rolled back: {r}"))?;
    check(info["chunks"].as_u64() == Some(survivors as u64), || format!("service info after restart: {info}"))?;
    check(info["indexed"].as_u64() == Some(survivors as u64), || format!("service info after restart: {info}"))?;
    let doc = http
        .get(format!("{}/store", server.url))
        .send()
        .and_then(|r| r.bytes())
        .map_err(err)?;
    let visible = common::geojson_ids(&doc).len();
    check(visible == survivors, || format!("{visible} chunks visible, {survivors} expected"))?;
    server.kill();

    // store and index on disk, without the server
    let store = FsStore::open(&data, FsOptions { sync: false }).map_err(err)?;
    let index = EmbeddedIndex::open(&data.join("index"), IndexOptions::default()).map_err(err)?;
    let stored: BTreeSet<ChunkId> = store.scan().map_err(err)?.into_iter().collect();
    let indexed: BTreeSet<ChunkId> = index.ids().into_iter().collect();
    check(stored.len() == survivors, || format!("{} chunks on disk, {survivors} expected", stored.len()))?;
    check(stored == indexed, || {
        format!(
            "{} chunks without index entry, {} index entries without chunk",
            stored.difference(&indexed).count(),
            indexed.difference(&stored).count()
        )
    })?;
    let registry = ExtractorRegistry::default();
    let docs = stored
        .iter()
        .map(|id| {
            store
                .get(id)
                .map(|e| build_document(&registry, e.id, &e.content, e.metadata, e.sequence))
                .map_err(err)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let hits = corpus::compare(&mut rng, &index, &docs, 500)?;
    Ok(format!(
        "killed at {} chunks, rolled back {}; {survivors} survivors consistent, 500 queries exact ({hits} hits)",
        in_flight["chunksWritten"],
        r["chunksRolledBack"]
    ))
}
