//! Bounded splitter buffer on a large streamed GeoJSON import.

use std::io::{self, Read};
use std::time::{Duration, Instant};

use geostore_core::splitter::Splitter;
use reqwest::blocking::{Body, Client};
use serde_json::Value;

use crate::support::{check, ServerProcess};

const MIB: usize = 1 << 20;

/// Streams a feature collection of `n` features, about 1 KB each, with an
/// occasional 256 KiB feature, without holding it in memory.
pub struct FeatureStream {
    n: usize,
    next: usize,
    buf: Vec<u8>,
    pos: usize,
    closed: bool,
    pace: Option<std::time::Duration>,
    pub bytes: u64,
}

impl FeatureStream {
    pub fn new(n: usize) -> Self {
        FeatureStream {
            n,
            next: 0,
            buf: b"{\"type\":\"FeatureCollection\",\"name\":\"stream\",\"features\":[\n".to_vec(),
            pos: 0,
            closed: false,
            pace: None,
            bytes: 0,
        }
    }

    /// Sleeps for `pause` after every 100 features.
    pub fn paced(mut self, pause: std::time::Duration) -> Self {
        self.pace = Some(pause);
        self
    }

    fn refill(&mut self) {
        self.buf.clear();
        self.pos = 0;
        if self.next == self.n {
            if !self.closed {
                self.buf.extend_from_slice(b"\n]}\n");
                self.closed = true;
            }
            return;
        }
        let i = self.next;
        self.next += 1;
        if let Some(pause) = self.pace.filter(|_| i % 100 == 99) {
            std::thread::sleep(pause);
        }
        if i > 0 {
            self.buf.extend_from_slice(b",\n");
        }
        let pad = if i % 100_000 == 7 { 256 * 1024 } else { 850 + i % 200 };
        let f = format!(
            r#"{{"type":"Feature","properties":{{"n":{i},"note":"{}"}},"geometry":{{"type":"Point","coordinates":[{}.125,{}.5]}}}}"#,
            "x".repeat(pad),
            (i % 360) as i64 - 180,
            i % 90
        );
        self.buf.extend_from_slice(f.as_bytes());
    }
}

impl Read for FeatureStream {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        if self.pos == self.buf.len() {
            self.refill();
            if self.buf.is_empty() {
                return Ok(0);
            }
        }
        let n = out.len().min(self.buf.len() - self.pos);
        out[..n].copy_from_slice(&self.buf[self.pos..self.pos + n]);
        self.pos += n;
        self.bytes += n as u64;
        Ok(n)
    }
}

fn features() -> usize {
    std::env::var("ACCEPTANCE_STREAM_FEATURES")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(1_000_000)
}

pub fn criterion_7() -> Result<String, String> {
    let n = features();

    // splitter alone on the full stream
    let started = Instant::now();
    let mut stream = FeatureStream::new(n);
    let mut splitter = Splitter::new(&mut stream).map_err(|e| e.to_string())?;
    let (mut chunks, mut largest) = (0usize, 0usize);
    for chunk in &mut splitter {
        let chunk = chunk.map_err(|e| e.to_string())?;
        chunks += 1;
        largest = largest.max(chunk.content.len());
    }
    let peak = splitter.peak_buffered();
    drop(splitter);
    let total = stream.bytes;
    check(chunks == n, || format!("splitter produced {chunks} chunks for {n} features"))?;
    check(peak <= largest + MIB, || format!("splitter buffered {peak} bytes, largest chunk {largest}"))?;
    let split_time = started.elapsed();

    // the same stream through the server
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let server = ServerProcess::start(&dir.path().join("data"), &[])?;
    let http = Client::builder().timeout(None).build().map_err(|e| e.to_string())?;
    let resp = http
        .post(format!("{}/store/stream", server.url))
        .body(Body::new(FeatureStream::new(n)))
        .send()
        .map_err(|e| e.to_string())?;
    check(resp.status() == 202, || format!("import answered {}", resp.status()))?;
    let head: Value = resp.json().map_err(|e| e.to_string())?;
    let status_url = format!("{}{}", server.url, head["status"].as_str().unwrap_or(""));
    let deadline = Instant::now() + Duration::from_secs(3_600);
    let status = loop {
        let s: Value = http.get(&status_url).send().and_then(|r| r.json()).map_err(|e| e.to_string())?;
        if s["state"] == "FINISHED" || s["state"] == "FAILED" {
            break s;
        }
        check(Instant::now() < deadline, || "server import did not finish".into())?;
        std::thread::sleep(Duration::from_millis(250));
    };
    check(status["state"] == "FINISHED", || format!("server import: {status}"))?;
    let written = status["chunksWritten"].as_u64().unwrap_or(0) as usize;
    let server_peak = status["peakBufferedBytes"].as_u64().unwrap_or(u64::MAX) as usize;
    let server_largest = status["largestChunkBytes"].as_u64().unwrap_or(0) as usize;
    check(written == n, || format!("server stored {written} of {n} features"))?;
    check(server_peak <= server_largest + MIB, || {
        format!("server splitter buffered {server_peak} bytes, largest chunk {server_largest}")
    })?;
    Ok(format!(
        "{n} features, {} MiB: splitter peak {} KiB (largest chunk {} KiB) in {split_time:.1?}; server peak {} KiB",
        total / MIB as u64,
        peak / 1024,
        largest / 1024,
        server_peak / 1024
    ))
}
