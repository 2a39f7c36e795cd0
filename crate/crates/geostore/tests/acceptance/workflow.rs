//! The import, mark, replace, search and delete workflow; the asynchronous
//! import contract; layer scoping.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;
use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use serde_json::Value;

use crate::common::{self, building, Building, CITYGML_HEAD, CITYGML_TAIL};
use crate::support::{check, cli, ServerProcess};

const STREETS: &[&str] = &["Hohe Straße", "Breite Straße", "Domkloster", "Ehrenstraße", "Severinstraße"];

fn write_buildings(path: &Path, prefix: &str, range: std::ops::Range<usize>, street: impl Fn(usize) -> &'static str) -> Result<(), String> {
    let mut s = String::from(CITYGML_HEAD);
    for i in range {
        s.push_str(&building(&Building {
            id: &format!("{prefix}{i:05}"),
            x: 356_000.0 + (i % 100) as f64 * 15.0,
            y: 5_645_000.0 + (i / 100) as f64 * 15.0,
            street: street(i),
            city: "Köln",
            height: 8.0 + (i % 25) as f64,
        }));
    }
    s.push_str(CITYGML_TAIL);
    std::fs::write(path, s).map_err(|e| e.to_string())
}

fn timed_ok(url: &str, args: &[&str], limit: Duration, times: &mut Vec<String>) -> Result<String, String> {
    let out = cli(url, args).ok(args[0])?;
    check(out.elapsed < limit, || format!("`{}` took {:.2?}, limit {limit:?}", args.join(" "), out.elapsed))?;
    times.push(format!("{} {:.0?}", args[0], out.elapsed));
    Ok(out.stdout)
}

pub fn criterion_4() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();
    // 9900 current buildings, 200 of them in the Schildergasse
    write_buildings(Path::new(&p("cologne.gml")), "K", 0..9_900, |i| {
        if i % 49 == 0 && i < 9_800 { "Schildergasse" } else { STREETS[i % STREETS.len()] }
    })?;
    // 100 buildings already marked as deleted in 2017
    write_buildings(Path::new(&p("old.gml")), "O", 0..100, |i| STREETS[i % STREETS.len()])?;
    // replacements for the Schildergasse
    write_buildings(Path::new(&p("update.gml")), "N", 0..200, |_| "Schildergasse")?;

    let server = ServerProcess::start(&dir.path().join("data"), &[])?;
    let url = server.url.as_str();
    cli(url, &["import", &p("cologne.gml")]).ok("import")?;
    cli(url, &["import", &p("old.gml"), "-props", "deleted:2017-05-01"]).ok("import")?;

    let limit = Duration::from_secs(2);
    let mut times = Vec::new();
    let out = timed_ok(url, &["property", "set", "-props", "deleted:2018-09-13", "AND(Schildergasse Köln)"], limit, &mut times)?;
    check(out.trim() == "affected: 200", || format!("property set printed {out:?}"))?;

    cli(url, &["import", &p("update.gml")]).ok("import")?;

    let out = timed_ok(url, &["search", "AND(NOT(LTE(deleted 2018-09-13)) Köln)"], limit, &mut times)?;
    let ids: BTreeSet<String> = common::xml_ids(out.as_bytes()).into_iter().collect();
    let schildergasse_old = (0..9_800).filter(|i| i % 49 == 0).count();
    check(ids.len() == 9_900 - schildergasse_old + 200, || format!("search returned {} buildings", ids.len()))?;
    check(ids.iter().all(|id| !id.starts_with('O')), || "search returned a chunk deleted in 2017".into())?;
    check(
        (0..9_800).filter(|i| i % 49 == 0).all(|i| !ids.contains(&format!("K{i:05}"))),
        || "search returned an outdated Schildergasse building".into(),
    )?;
    check((0..200).all(|i| ids.contains(&format!("N{i:05}"))), || "a replacement is missing".into())?;

    let out = timed_ok(url, &["delete", "LT(deleted 2018)"], limit, &mut times)?;
    check(out.trim() == "deleted: 100", || format!("delete printed {out:?}"))?;

    let out = cli(url, &["search", ""]).ok("search")?;
    let remaining = common::xml_ids(out.stdout.as_bytes());
    check(remaining.len() == 9_900 + 200, || format!("{} chunks remain", remaining.len()))?;
    Ok(format!("10000-chunk workflow, each step under 2 s ({})", times.join(", ")))
}

const ORDER: [&str; 4] = ["ACCEPTED", "SPLITTING", "INDEXING", "FINISHED"];

pub fn criterion_5() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let server = ServerProcess::start(
        &dir.path().join("data"),
        &[("GEOSTORE_INDEXER_BATCH_SIZE", "20"), ("GEOSTORE_INDEXER_THROTTLE_MS", "40")],
    )?;
    let http = Client::builder().timeout(None).build().map_err(|e| e.to_string())?;
    let body = common::citygml(0, 1_000, "Hohe Straße", "Köln");
    let resp = http
        .post(format!("{}/store/async", server.url))
        .body(body)
        .send()
        .map_err(|e| e.to_string())?;
    check(resp.status() == 202, || format!("import answered {}", resp.status()))?;
    let location = resp.headers()["location"].to_str().map_err(|e| e.to_string())?.to_owned();
    let status_url = format!("{}{location}", server.url);
    let status = |http: &Client| -> Result<Value, String> {
        http.get(&status_url).send().and_then(|r| r.json()).map_err(|e| e.to_string())
    };
    let first = status(&http)?;
    check(first["state"] != "FINISHED", || "task already FINISHED when the 202 arrived".into())?;
    drop(resp);

    let mut seen = vec![first["state"].as_str().unwrap_or("").to_owned()];
    let mut last = first;
    let deadline = Instant::now() + Duration::from_secs(60);
    while last["state"] != "FINISHED" {
        check(last["state"] != "FAILED", || format!("task failed: {last}"))?;
        check(Instant::now() < deadline, || "task did not finish".into())?;
        std::thread::sleep(Duration::from_millis(5));
        last = status(&http)?;
        let written = last["chunksWritten"].as_u64().unwrap_or(0);
        let indexed = last["chunksIndexed"].as_u64().unwrap_or(0);
        check(indexed <= written, || format!("chunksIndexed > chunksWritten in {last}"))?;
        let state = last["state"].as_str().unwrap_or("").to_owned();
        if seen.last() != Some(&state) {
            seen.push(state);
        }
    }
    let ranks: Vec<usize> = seen
        .iter()
        .map(|s| ORDER.iter().position(|o| o == s).ok_or_else(|| format!("unexpected state {s}")))
        .collect::<Result<_, _>>()?;
    check(ranks.windows(2).all(|w| w[0] < w[1]), || format!("states not monotone: {seen:?}"))?;
    check(seen.contains(&"INDEXING".to_owned()), || format!("INDEXING never observed: {seen:?}"))?;
    let written = last["chunksWritten"].as_u64().unwrap_or(0);
    check(last["chunksIndexed"].as_u64() == Some(written), || format!("FINISHED with {last}"))?;

    let doc = http
        .get(format!("{}/store/async", server.url))
        .send()
        .and_then(|r| r.bytes())
        .map_err(|e| e.to_string())?;
    let n = common::xml_ids(&doc).len() as u64;
    check(n == written, || format!("MatchAll returned {n}, chunksWritten is {written}"))?;
    Ok(format!("202 before indexing finished; states {}; {n} chunks visible", seen.join("→")))
}

pub fn criterion_6() -> Result<String, String> {
    let server = common::TestServer::memory();
    let names = ["a", "b", "c"];
    let mut layers: Vec<String> = Vec::new();
    for x in names {
        layers.push(format!("/{x}"));
        for y in names {
            layers.push(format!("/{x}/{y}"));
            for z in names {
                layers.push(format!("/{x}/{y}/{z}"));
            }
        }
    }
    let mut owner: Vec<(String, String)> = Vec::new();
    for (k, layer) in layers.iter().enumerate() {
        let status = server.import(layer, &[], common::citygml(k * 10, 2, "x", "y"));
        check(status["state"] == "FINISHED", || format!("import to {layer}: {status}"))?;
        for i in k * 10..k * 10 + 2 {
            owner.push((format!("b{i}"), layer.clone()));
        }
    }
    let within = |scope: &str, layer: &str| scope == "/" || layer == scope || layer.starts_with(&format!("{scope}/"));
    let mut scopes = vec!["/".to_owned()];
    scopes.extend(layers.iter().cloned());
    let mut checked = 0;
    for scope in &scopes {
        let want: HashSet<&str> = owner.iter().filter(|(_, l)| within(scope, l)).map(|(id, _)| id.as_str()).collect();
        let body = server.search_ok(scope, "");
        let ids = common::xml_ids(&body);
        let got: HashSet<&str> = ids.iter().map(String::as_str).collect();
        check(got.len() == ids.len(), || format!("duplicates at {scope}"))?;
        check(got == want, || format!("{scope}: {} chunks, expected {}", got.len(), want.len()))?;
        checked += 1;
    }
    for missing in ["/d", "/a/d", "/a/b/c/d"] {
        let (status, _) = server.search(missing, "");
        check(status == 404, || format!("{missing} answered {status}"))?;
    }
    Ok(format!("{} layers over 3 levels, {checked} scopes exact", layers.len()))
}
