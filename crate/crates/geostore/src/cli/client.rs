use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::Duration;

use flate2::read::GzEncoder;
use flate2::Compression;
use geostore_core::model::LayerPath;
use parking_lot::Mutex;
use reqwest::blocking::{Body, RequestBuilder, Response};
use reqwest::header::CONTENT_ENCODING;
use serde::Deserialize;
use url::Url;

use super::Failure;

const POLL_INTERVAL: Duration = Duration::from_millis(100);

pub struct Client {
    http: reqwest::blocking::Client,
    base: Url,
    dry_run: bool,
}

pub struct ImportRequest {
    pub layer: LayerPath,
    pub tags: Option<String>,
    pub properties: Option<String>,
    pub fallback_crs: Option<String>,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: ErrorDetail,
}

#[derive(Deserialize)]
struct ErrorDetail {
    code: String,
    /// Carries the offset already when there is one.
    message: String,
}

impl ErrorDetail {
    fn describe(&self) -> String {
        format!("{}: {}", self.code, self.message)
    }
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Accepted {
    task_id: String,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct TaskStatus {
    state: String,
    chunks_written: u64,
    error: Option<ErrorDetail>,
}

fn io_failure(e: io::Error) -> Failure {
    Failure::Usage(e.to_string())
}

impl Client {
    pub fn new(base: Url, dry_run: bool) -> Result<Client, Failure> {
        if base.cannot_be_a_base() {
            return Err(Failure::Usage(format!("not a server address: {base}")));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(None)
            .build()
            .map_err(|e| Failure::Connection(e.to_string()))?;
        Ok(Client { http, base, dry_run })
    }

    fn url(&self, segments: &[&str], params: &[(&str, &str)]) -> Url {
        let mut url = self.base.clone();
        url.path_segments_mut()
            .expect("checked in Client::new")
            .pop_if_empty()
            .extend(segments);
        if !params.is_empty() {
            url.query_pairs_mut().extend_pairs(params);
        }
        url
    }

    fn store_url(&self, layer: &LayerPath, params: &[(&str, &str)]) -> Url {
        let mut segments = vec!["store"];
        segments.extend(layer.segments().iter().map(String::as_str));
        self.url(&segments, params)
    }

    fn send(&self, request: RequestBuilder) -> Result<Response, Failure> {
        let response = request
            .send()
            .map_err(|e| Failure::Connection(format!("cannot reach {}: {e}", self.base)))?;
        let status = response.status();
        if status.is_success() {
            return Ok(response);
        }
        let text = response.text().unwrap_or_default();
        let message = match serde_json::from_str::<ErrorBody>(&text) {
            Ok(body) => body.error.describe(),
            Err(_) => format!("server answered {status}: {}", text.trim()),
        };
        Err(Failure::Server(message))
    }

    fn json<T: for<'de> Deserialize<'de>>(&self, response: Response) -> Result<T, Failure> {
        serde_json::from_reader(response)
            .map_err(|e| Failure::Server(format!("unexpected answer from server: {e}")))
    }

    /// Uploads `files` with up to `parallel` at a time and prints one count
    /// per file in argument order.
    pub fn import(
        &self,
        files: &[PathBuf],
        request: &ImportRequest,
        parallel: usize,
        out: &mut dyn Write,
        err: &mut dyn Write,
    ) -> Result<(), Failure> {
        let mut params = Vec::new();
        if let Some(t) = &request.tags {
            params.push(("tags", t.as_str()));
        }
        if let Some(p) = &request.properties {
            params.push(("properties", p.as_str()));
        }
        if let Some(c) = &request.fallback_crs {
            params.push(("fallbackCRS", c.as_str()));
        }
        let url = self.store_url(&request.layer, &params);

        if self.dry_run {
            for f in files {
                writeln!(out, "POST {url}").map_err(io_failure)?;
                writeln!(out, "Content-Encoding: gzip").map_err(io_failure)?;
                writeln!(out, "< {}", f.display()).map_err(io_failure)?;
                let poll = self.url(&["tasks", "{taskId}"], &[]);
                writeln!(out, "GET {poll} until FINISHED or FAILED").map_err(io_failure)?;
            }
            return Ok(());
        }

        let results: Vec<Mutex<Option<Result<u64, Failure>>>> =
            files.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        thread::scope(|s| {
            for _ in 0..parallel.min(files.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(path) = files.get(i) else { break };
                    *results[i].lock() = Some(self.import_one(path, &url));
                });
            }
        });

        let mut worst: Option<Failure> = None;
        let mut failed = 0;
        for (path, result) in files.iter().zip(results) {
            match result.into_inner().expect("every file is attempted") {
                Ok(n) => writeln!(out, "{}: {n} chunks", path.display()).map_err(io_failure)?,
                Err(f) => {
                    failed += 1;
                    let _ = writeln!(err, "{}: {}", path.display(), f.message());
                    if worst.as_ref().is_none_or(|w| f.exit_code() > w.exit_code()) {
                        worst = Some(f);
                    }
                }
            }
        }
        match worst {
            None => Ok(()),
            Some(f) => {
                let message = format!("{failed} of {} imports failed", files.len());
                Err(match f {
                    Failure::Usage(_) => Failure::Usage(message),
                    Failure::Server(_) => Failure::Server(message),
                    Failure::Connection(_) => Failure::Connection(message),
                })
            }
        }
    }

    fn import_one(&self, path: &Path, url: &Url) -> Result<u64, Failure> {
        let file = File::open(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        let body = GzEncoder::new(BufReader::new(file), Compression::fast());
        let response = self.send(
            self.http
                .post(url.clone())
                .header(CONTENT_ENCODING, "gzip")
                .body(Body::new(body)),
        )?;
        let accepted: Accepted = self.json(response)?;
        let status_url = self.url(&["tasks", &accepted.task_id], &[]);
        loop {
            let status: TaskStatus = self.json(self.send(self.http.get(status_url.clone()))?)?;
            match status.state.as_str() {
                "FINISHED" => return Ok(status.chunks_written),
                "FAILED" => {
                    let reason = status
                        .error
                        .map(|e| e.describe())
                        .unwrap_or_else(|| "import failed".into());
                    return Err(Failure::Server(reason));
                }
                _ => thread::sleep(POLL_INTERVAL),
            }
        }
    }

    /// Streams the merged document to `output`, or to `out` without one.
    pub fn search(
        &self,
        layer: &LayerPath,
        query: &str,
        output: Option<&Path>,
        out: &mut dyn Write,
    ) -> Result<(), Failure> {
        let url = self.store_url(layer, &[("search", query)]);
        if self.dry_run {
            return writeln!(out, "GET {url}").map_err(io_failure);
        }
        let mut response = self.send(self.http.get(url))?;
        let copy = |response: &mut Response, sink: &mut dyn Write| -> Result<(), Failure> {
            let mut buf = vec![0; 64 * 1024];
            loop {
                let n = response
                    .read(&mut buf)
                    .map_err(|e| Failure::Server(format!("export ended abnormally: {e}")))?;
                if n == 0 {
                    break;
                }
                sink.write_all(&buf[..n]).map_err(io_failure)?;
            }
            sink.flush().map_err(io_failure)
        };
        match output {
            Some(path) => {
                let file = File::create(path)
                    .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
                copy(&mut response, &mut io::BufWriter::new(file))
            }
            None => copy(&mut response, out),
        }
    }

    /// Returns the number of deleted chunks, or `None` on a dry run.
    pub fn delete(
        &self,
        layer: &LayerPath,
        query: &str,
        all: bool,
        out: &mut dyn Write,
    ) -> Result<Option<u64>, Failure> {
        let mut params = vec![("search", query)];
        if all {
            params.push(("all", "true"));
        }
        let url = self.store_url(layer, &params);
        if self.dry_run {
            writeln!(out, "DELETE {url}").map_err(io_failure)?;
            return Ok(None);
        }
        let body: serde_json::Value = self.json(self.send(self.http.delete(url))?)?;
        Ok(body["deleted"].as_u64())
    }

    /// Sends a metadata change; `method` is `PUT` to set or add and
    /// `DELETE` to remove. Returns the number of affected chunks.
    pub fn metadata(
        &self,
        method: &str,
        layer: &LayerPath,
        query: &str,
        key: &str,
        value: &str,
        out: &mut dyn Write,
    ) -> Result<Option<u64>, Failure> {
        let url = self.store_url(layer, &[("search", query), (key, value)]);
        if self.dry_run {
            writeln!(out, "{method} {url}").map_err(io_failure)?;
            return Ok(None);
        }
        let request = match method {
            "PUT" => self.http.put(url),
            _ => self.http.delete(url),
        };
        let body: serde_json::Value = self.json(self.send(request)?)?;
        Ok(body["affected"].as_u64())
    }
}
