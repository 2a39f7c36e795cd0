use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures::{StreamExt, TryStreamExt};
use geostore_core::indexer::SearchIndex;
use geostore_core::merger::{merge_parents, MergeWriter};
use geostore_core::model::{ChunkId, Format, LayerPath, MetadataDelta, Parents};
use geostore_core::query::{parse_query, Query as SearchQuery};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::{mpsc, oneshot, OwnedSemaphorePermit};
use tokio_util::io::{StreamReader, SyncIoBridge};

use super::error::ApiError;
use super::import::{ImportParams, Importer};
use super::Service;

type Svc = State<Arc<Service>>;

pub fn router(service: Arc<Service>) -> Router {
    let store = || {
        get(search)
            .post(import)
            .delete(delete)
            .put(update_metadata)
    };
    Router::new()
        .route("/", get(info))
        .route("/store", store())
        .route("/store/", store())
        .route("/store/{*layer}", store())
        .route("/tasks/{id}", get(task_status))
        .with_state(service)
}

#[derive(Debug, Default, Deserialize)]
struct Params {
    search: Option<String>,
    all: Option<String>,
    tags: Option<String>,
    properties: Option<String>,
    #[serde(rename = "fallbackCRS")]
    fallback_crs: Option<String>,
}

impl Params {
    fn all(&self) -> bool {
        matches!(self.all.as_deref(), Some("true" | "1" | "yes"))
    }

    fn search(&self) -> &str {
        self.search.as_deref().unwrap_or("")
    }
}

fn layer_of(path: Option<Path<String>>) -> Result<LayerPath, ApiError> {
    let raw = path.map(|Path(p)| p).unwrap_or_default();
    Ok(LayerPath::parse(&raw)?)
}

fn permit(svc: &Service, imports: bool) -> Result<OwnedSemaphorePermit, ApiError> {
    let sem = if imports { &svc.imports } else { &svc.requests };
    Arc::clone(sem)
        .try_acquire_owned()
        .map_err(|_| ApiError::overloaded())
}

fn list(raw: Option<&str>) -> impl Iterator<Item = &str> {
    raw.unwrap_or("").split(',').filter(|s| !s.is_empty())
}

/// `key:value,key:value`; the value may itself contain `:`.
fn property_pairs(raw: Option<&str>) -> Result<BTreeMap<String, String>, ApiError> {
    let mut out = BTreeMap::new();
    for item in list(raw) {
        match item.split_once(':') {
            Some((k, v)) if !k.is_empty() => {
                out.insert(k.to_owned(), v.to_owned());
            }
            _ => {
                return Err(ApiError::bad_request(
                    "MALFORMED_PROPERTY",
                    format!("property `{item}` must have the form key:value"),
                ))
            }
        }
    }
    Ok(out)
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

async fn info(State(svc): Svc) -> Json<serde_json::Value> {
    Json(json!({
        "name": "geostore",
        "version": env!("CARGO_PKG_VERSION"),
        "storeBackend": svc.config.store.backend,
        "chunks": svc.store.len(),
        "indexed": svc.index.len(),
        "activeTasks": svc.tasks.active(),
        "reconciliation": svc.reconciliation,
    }))
}

async fn task_status(State(svc): Svc, Path(id): Path<String>) -> Result<Response, ApiError> {
    match svc.tasks.get(&id) {
        Some(t) => Ok(Json(t.status()).into_response()),
        None => Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "NOT_FOUND",
            format!("no task {id}"),
        )),
    }
}

async fn import(
    State(svc): Svc,
    layer: Option<Path<String>>,
    Query(p): Query<Params>,
    headers: HeaderMap,
    body: Body,
) -> Result<Response, ApiError> {
    let layer = layer_of(layer)?;
    let gzip = match headers.get(header::CONTENT_ENCODING).map(|v| v.to_str()) {
        None => false,
        Some(Ok(v)) if v.eq_ignore_ascii_case("identity") => false,
        Some(Ok(v)) if v.eq_ignore_ascii_case("gzip") => true,
        Some(v) => {
            return Err(ApiError::new(
                StatusCode::UNSUPPORTED_MEDIA_TYPE,
                "UNSUPPORTED_ENCODING",
                format!("unsupported content encoding {v:?}"),
            ))
        }
    };
    let params = ImportParams {
        tags: list(p.tags.as_deref()).map(str::to_owned).collect(),
        properties: property_pairs(p.properties.as_deref())?,
        fallback_crs: p.fallback_crs.clone(),
    };
    let jobs = svc
        .jobs()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "SHUTTING_DOWN", "server is shutting down"))?;
    let permit = permit(&svc, true)?;
    let task = svc.tasks.create(layer);
    let task_id = task.id.clone();

    let stream = body.into_data_stream().map_err(io::Error::other);
    let reader = SyncIoBridge::new(StreamReader::new(stream));
    let (started_tx, started_rx) = oneshot::channel();
    let (consumed_tx, consumed_rx) = oneshot::channel::<()>();
    let service = Arc::clone(&svc);
    tokio::task::spawn_blocking(move || {
        let _permit = permit;
        let _consumed = consumed_tx;
        let importer = Importer {
            store: &*service.store,
            jobs: &jobs,
            journal: service.journal.as_deref(),
            batch_size: service.config.indexer.batch_size,
        };
        if gzip {
            let input = flate2::read::MultiGzDecoder::new(reader);
            importer.run(task, input, &params, Some(started_tx));
        } else {
            importer.run(task, reader, &params, Some(started_tx));
        }
    });

    match started_rx.await {
        Ok(Err(e)) => {
            let mut err = ApiError::from(e);
            err.message = format!("{} (task {task_id})", err.message);
            Err(err)
        }
        _ => {
            // Status and task id go out now. The body stays open until the
            // upload has been read, so clients keep sending instead of
            // treating the request as answered.
            let location = format!("/tasks/{task_id}");
            let head = Bytes::from(json!({ "taskId": task_id, "status": location }).to_string());
            let tail = futures::stream::once(async move {
                let _ = consumed_rx.await;
            })
            .filter_map(|()| futures::future::ready(None));
            let body = futures::stream::once(futures::future::ready(Ok::<_, io::Error>(head))).chain(tail);
            let mut resp = (
                StatusCode::ACCEPTED,
                [(header::CONTENT_TYPE, "application/json")],
                Body::from_stream(body),
            )
                .into_response();
            if let Ok(v) = HeaderValue::from_str(&location) {
                resp.headers_mut().insert(header::LOCATION, v);
            }
            Ok(resp)
        }
    }
}

/// Chunks to export with the parents of their merged document.
struct Export {
    entries: Vec<(ChunkId, Arc<Parents>)>,
    merged: Option<Parents>,
}

fn plan_export(svc: &Service, query: &SearchQuery, layer: &LayerPath) -> Result<Export, ApiError> {
    let docs = svc.index.query_documents(query, layer);
    if docs.is_empty() && !layer.is_root() && !svc.store.has_layer(layer) {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "NOT_FOUND",
            format!("layer {layer} does not exist"),
        ));
    }
    let mut entries = Vec::with_capacity(docs.len());
    let mut distinct: Vec<Arc<Parents>> = Vec::new();
    for doc in docs {
        let head = match svc.store.head(&doc.chunk_id) {
            Ok(h) => h,
            // deleted after the index was read
            Err(geostore_core::Error::NotFound(_)) => continue,
            Err(e) => return Err(e.into()),
        };
        if !distinct.iter().any(|p| Arc::ptr_eq(p, &head.parents) || **p == *head.parents) {
            distinct.push(Arc::clone(&head.parents));
        }
        entries.push((head.id, head.parents));
    }
    let merged = if distinct.is_empty() {
        None
    } else {
        Some(merge_parents(distinct.iter().map(|p| &**p))?)
    };
    Ok(Export { entries, merged })
}

/// Sends the response body in blocks through a channel.
struct ChannelWriter {
    tx: mpsc::Sender<io::Result<Bytes>>,
    buf: Vec<u8>,
}

const BLOCK: usize = 64 * 1024;

impl ChannelWriter {
    fn send(&mut self, item: io::Result<Bytes>) -> io::Result<()> {
        self.tx
            .blocking_send(item)
            .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "client went away"))
    }

    /// Ends the body with an error so the connection is torn down instead
    /// of looking like a complete document.
    fn abort(mut self, error: io::Error) {
        let _ = self.send(Err(error));
    }
}

impl Write for ChannelWriter {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        self.buf.extend_from_slice(data);
        if self.buf.len() >= BLOCK {
            self.flush()?;
        }
        Ok(data.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        if !self.buf.is_empty() {
            let block = Bytes::from(std::mem::replace(&mut self.buf, Vec::with_capacity(BLOCK)));
            self.send(Ok(block))?;
        }
        Ok(())
    }
}

fn write_export(svc: &Service, export: Export, empty_format: Format, out: ChannelWriter) {
    let Some(merged) = export.merged else {
        if let Ok(mut out) = MergeWriter::empty(out, empty_format) {
            let _ = out.flush();
        }
        return;
    };
    let Ok(mut w) = MergeWriter::new(out, merged) else {
        return;
    };
    for (id, parents) in export.entries {
        let entry = match svc.store.get(&id) {
            Ok(e) => e,
            Err(geostore_core::Error::NotFound(_)) => continue,
            Err(e) => {
                tracing::error!("export aborted: {e}");
                let out = w.into_inner();
                out.abort(io::Error::other(e.to_string()));
                return;
            }
        };
        if w.push(&entry.content, &parents).is_err() {
            return;
        }
    }
    let _ = w.finish();
}

async fn search(
    State(svc): Svc,
    layer: Option<Path<String>>,
    Query(p): Query<Params>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let permit = permit(&svc, false)?;
    let layer = layer_of(layer)?;
    let query = parse_query(p.search())?;
    let wants_json = headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("json"));
    let service = Arc::clone(&svc);
    let export = blocking(move || plan_export(&service, &query, &layer)).await?;
    let format = match &export.merged {
        Some(p) => p.format(),
        None if wants_json => Format::GeoJson,
        None => Format::Xml,
    };

    let (tx, rx) = mpsc::channel::<io::Result<Bytes>>(16);
    let service = Arc::clone(&svc);
    tokio::task::spawn_blocking(move || {
        let _permit = permit;
        let out = ChannelWriter {
            tx,
            buf: Vec::with_capacity(BLOCK),
        };
        write_export(&service, export, format, out);
    });
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        rx.recv().await.map(|item| (item, rx))
    });
    Ok((
        [(header::CONTENT_TYPE, format.content_type())],
        Body::from_stream(stream),
    )
        .into_response())
}

fn run_delete(svc: &Service, query: &SearchQuery, layer: &LayerPath) -> Result<usize, ApiError> {
    let _serial = svc.mutations.lock();
    let ids = svc.index.query(query, layer);
    svc.index.delete(&ids)?;
    Ok(svc.store.delete(&ids)?)
}

fn run_update(
    svc: &Service,
    query: &SearchQuery,
    layer: &LayerPath,
    delta: &MetadataDelta,
) -> Result<usize, ApiError> {
    let _serial = svc.mutations.lock();
    let mut changed = Vec::new();
    for doc in svc.index.query_documents(query, layer) {
        if !delta.would_change(&doc.metadata) {
            continue;
        }
        match svc.store.update_metadata(&doc.chunk_id, delta) {
            Ok(_) => changed.push(doc.chunk_id.clone()),
            Err(geostore_core::Error::NotFound(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    svc.index.update_metadata(&changed, delta)?;
    Ok(changed.len())
}

async fn delete(
    State(svc): Svc,
    layer: Option<Path<String>>,
    Query(p): Query<Params>,
) -> Result<Response, ApiError> {
    if p.properties.is_some() || p.tags.is_some() {
        let delta = MetadataDelta {
            remove_properties: list(p.properties.as_deref()).map(str::to_owned).collect(),
            remove_tags: list(p.tags.as_deref()).map(str::to_owned).collect(),
            ..MetadataDelta::default()
        };
        return metadata_change(svc, layer, &p, delta).await;
    }
    let permit = permit(&svc, false)?;
    let layer = layer_of(layer)?;
    if p.search().trim().is_empty() && !p.all() {
        return Err(ApiError::bad_request(
            "MISSING_ALL_FLAG",
            "refusing to delete everything in a layer without all=true",
        ));
    }
    let query = parse_query(p.search())?;
    let service = Arc::clone(&svc);
    let n = blocking(move || {
        let _permit = permit;
        run_delete(&service, &query, &layer)
    })
    .await?;
    Ok(Json(json!({ "deleted": n })).into_response())
}

async fn update_metadata(
    State(svc): Svc,
    layer: Option<Path<String>>,
    Query(p): Query<Params>,
) -> Result<Response, ApiError> {
    let delta = MetadataDelta {
        set_properties: property_pairs(p.properties.as_deref())?,
        add_tags: list(p.tags.as_deref()).map(str::to_owned).collect::<BTreeSet<_>>(),
        ..MetadataDelta::default()
    };
    metadata_change(svc, layer, &p, delta).await
}

async fn metadata_change(
    svc: Arc<Service>,
    layer: Option<Path<String>>,
    p: &Params,
    delta: MetadataDelta,
) -> Result<Response, ApiError> {
    let permit = permit(&svc, false)?;
    let layer = layer_of(layer)?;
    if delta.is_empty() {
        return Err(ApiError::bad_request(
            "EMPTY_UPDATE",
            "give at least one property or tag",
        ));
    }
    let query = parse_query(p.search())?;
    let service = Arc::clone(&svc);
    let n = blocking(move || {
        let _permit = permit;
        run_update(&service, &query, &layer, &delta)
    })
    .await?;
    Ok(Json(json!({ "affected": n })).into_response())
}
