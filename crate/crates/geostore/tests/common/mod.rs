//! In-process server and dataset generators shared by the integration
//! tests.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use geostore::config::Config;
use geostore::server::{serve_until, Service};
use reqwest::blocking::{Client, Response};
use serde_json::Value;
use tokio::sync::oneshot;

pub struct TestServer {
    pub url: String,
    pub service: Arc<Service>,
    pub http: Client,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

pub fn memory_config() -> Config {
    let mut c = Config::default();
    c.store.backend = "memory".into();
    c
}

pub fn fs_config(dir: &Path) -> Config {
    let mut c = Config::default();
    c.store.path = dir.to_owned();
    c
}

impl TestServer {
    pub fn start(config: Config) -> TestServer {
        let service = Service::open(config).expect("service opens");
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop_tx, stop_rx) = oneshot::channel::<()>();
        let svc = Arc::clone(&service);
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                serve_until(svc, listener, async {
                    let _ = stop_rx.await;
                })
                .await
                .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        TestServer {
            url: format!("http://{addr}"),
            service,
            http: Client::builder().timeout(None).build().unwrap(),
            stop: Some(stop_tx),
            thread: Some(thread),
        }
    }

    pub fn memory() -> TestServer {
        TestServer::start(memory_config())
    }

    pub fn store_url(&self, layer: &str) -> String {
        format!("{}/store{}", self.url, layer)
    }

    /// Posts `body` and returns the response.
    pub fn post(&self, layer: &str, query: &[(&str, &str)], body: Vec<u8>) -> Response {
        self.http
            .post(self.store_url(layer))
            .query(query)
            .body(body)
            .send()
            .unwrap()
    }

    /// Imports `body` and waits for the task to end. Returns its status.
    pub fn import(&self, layer: &str, query: &[(&str, &str)], body: Vec<u8>) -> Value {
        let resp = self.post(layer, query, body);
        assert_eq!(resp.status(), 202, "{}", resp.text().unwrap_or_default());
        let task = resp.json::<Value>().unwrap()["taskId"].as_str().unwrap().to_owned();
        self.wait(&task)
    }

    pub fn task(&self, id: &str) -> Value {
        self.http
            .get(format!("{}/tasks/{id}", self.url))
            .send()
            .unwrap()
            .json()
            .unwrap()
    }

    pub fn wait(&self, id: &str) -> Value {
        let deadline = Instant::now() + Duration::from_secs(120);
        loop {
            let status = self.task(id);
            if matches!(status["state"].as_str(), Some("FINISHED" | "FAILED")) {
                return status;
            }
            assert!(Instant::now() < deadline, "task {id} did not end: {status}");
            std::thread::sleep(Duration::from_millis(10));
        }
    }

    pub fn search(&self, layer: &str, query: &str) -> (u16, Vec<u8>) {
        let resp = self
            .http
            .get(self.store_url(layer))
            .query(&[("search", query)])
            .send()
            .unwrap();
        let status = resp.status().as_u16();
        (status, resp.bytes().unwrap().to_vec())
    }

    pub fn search_ok(&self, layer: &str, query: &str) -> Vec<u8> {
        let (status, body) = self.search(layer, query);
        assert_eq!(status, 200, "{}", String::from_utf8_lossy(&body));
        body
    }

    pub fn send(&self, method: reqwest::Method, layer: &str, query: &[(&str, &str)]) -> (u16, Value) {
        let resp = self
            .http
            .request(method, self.store_url(layer))
            .query(query)
            .send()
            .unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().unwrap_or(Value::Null))
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Values of `gml:id` in an XML export, in document order.
pub fn xml_ids(doc: &[u8]) -> Vec<String> {
    let text = std::str::from_utf8(doc).unwrap();
    let tree = roxmltree::Document::parse(text).expect("export is well-formed");
    tree.descendants()
        .filter_map(|n| n.attribute(("http://www.opengis.net/gml", "id")))
        .map(str::to_owned)
        .collect()
}

/// Number of member elements directly under the root.
pub fn xml_members(doc: &[u8]) -> usize {
    let text = std::str::from_utf8(doc).unwrap();
    let tree = roxmltree::Document::parse(text).expect("well-formed");
    tree.root_element().children().filter(|n| n.is_element()).count()
}

/// `id` properties of a GeoJSON export.
pub fn geojson_ids(doc: &[u8]) -> Vec<String> {
    let v: Value = serde_json::from_slice(doc).expect("export is valid JSON");
    v["features"]
        .as_array()
        .expect("feature collection")
        .iter()
        .map(|f| f["properties"]["id"].to_string())
        .collect()
}

pub const CITYGML_HEAD: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<core:CityModel xmlns:core="http://www.opengis.net/citygml/2.0" xmlns:bldg="http://www.opengis.net/citygml/building/2.0" xmlns:gen="http://www.opengis.net/citygml/generics/2.0" xmlns:gml="http://www.opengis.net/gml" xmlns:xAL="urn:oasis:names:tc:ciq:xsdschema:xAL:2.0">
"#;
pub const CITYGML_TAIL: &str = "</core:CityModel>\n";

pub struct Building<'a> {
    pub id: &'a str,
    pub x: f64,
    pub y: f64,
    pub street: &'a str,
    pub city: &'a str,
    pub height: f64,
}

pub fn building(b: &Building) -> String {
    let Building { id, x, y, street, city, height } = b;
    let mut s = String::new();
    write!(
        s,
        r#"  <core:cityObjectMember>
    <bldg:Building gml:id="{id}">
      <gen:doubleAttribute name="height"><gen:value>{height}</gen:value></gen:doubleAttribute>
      <bldg:address><core:Address><core:xalAddress><xAL:AddressDetails><xAL:Locality><xAL:LocalityName>{city}</xAL:LocalityName><xAL:Thoroughfare><xAL:ThoroughfareName>{street}</xAL:ThoroughfareName></xAL:Thoroughfare></xAL:Locality></xAL:AddressDetails></core:xalAddress></core:Address></bldg:address>
      <bldg:lod1Solid><gml:Solid><gml:exterior><gml:CompositeSurface><gml:surfaceMember><gml:Polygon><gml:exterior><gml:LinearRing><gml:posList srsDimension="3">{x} {y} 0 {x2} {y} 0 {x2} {y2} {height} {x} {y} 0</gml:posList></gml:LinearRing></gml:exterior></gml:Polygon></gml:surfaceMember></gml:CompositeSurface></gml:exterior></gml:Solid></bldg:lod1Solid>
    </bldg:Building>
  </core:cityObjectMember>
"#,
        x2 = x + 10.0,
        y2 = y + 10.0,
    )
    .unwrap();
    s
}

/// A CityGML document with `n` buildings, numbered from `first`.
pub fn citygml(first: usize, n: usize, street: &str, city: &str) -> Vec<u8> {
    let mut s = String::from(CITYGML_HEAD);
    for i in first..first + n {
        s.push_str(&building(&Building {
            id: &format!("b{i}"),
            x: (i % 100) as f64 * 20.0,
            y: (i / 100) as f64 * 20.0,
            street,
            city,
            height: 5.0 + (i % 30) as f64,
        }));
    }
    s.push_str(CITYGML_TAIL);
    s.into_bytes()
}

/// A GeoJSON feature collection with `n` point features.
pub fn geojson(first: usize, n: usize) -> Vec<u8> {
    let mut s = String::from("{\"type\":\"FeatureCollection\",\"features\":[\n");
    for i in first..first + n {
        if i > first {
            s.push_str(",\n");
        }
        write!(
            s,
            r#"{{"type":"Feature","properties":{{"id":{i},"name":"feature {i}","kind":"{}"}},"geometry":{{"type":"Point","coordinates":[{}.5,{}.25]}}}}"#,
            if i % 2 == 0 { "even" } else { "odd" },
            i % 180,
            i % 90
        )
        .unwrap();
    }
    s.push_str("\n]}\n");
    s.into_bytes()
}

pub fn gzip(data: &[u8]) -> Vec<u8> {
    use std::io::Write;
    let mut e = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::fast());
    e.write_all(data).unwrap();
    e.finish().unwrap()
}
