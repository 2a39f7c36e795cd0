//! Joins chunks into one document of their original format.
//!
//! XML output is the declaration, the merged root start tag, the chunks
//! separated by newlines and the root end tag. GeoJSON output is always a
//! FeatureCollection; a standalone geometry is wrapped into a Feature.

use std::collections::BTreeMap;
use std::io::Write;

use quick_xml::events::Event;
use quick_xml::Reader;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{CollectionKind, Format, Parents, XmlParents};

/// Root of the XML document produced when nothing matches.
pub const EMPTY_XML: &str = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<FeatureCollection/>\n";
const GEOJSON_HEAD: &[u8] = br#"{"type":"FeatureCollection","features":["#;
const GEOJSON_TAIL: &[u8] = b"]}";

struct RootTag {
    qname: String,
    /// qualified attribute name -> (raw escaped value, unescaped value)
    attributes: Vec<(String, String, String)>,
}

fn local(qname: &str) -> &str {
    qname.rsplit_once(':').map_or(qname, |(_, l)| l)
}

fn parse_root(start: &str) -> Result<RootTag> {
    let bad = |m: String| Error::IncompatibleParents(format!("unreadable root tag: {m}"));
    let mut reader = Reader::from_str(start);
    loop {
        match reader.read_event().map_err(|e| bad(e.to_string()))? {
            Event::Start(e) | Event::Empty(e) => {
                let qname = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                let mut attributes = Vec::new();
                for a in e.attributes() {
                    let a = a.map_err(|e| bad(e.to_string()))?;
                    let raw = String::from_utf8_lossy(&a.value).into_owned();
                    let value = a
                        .unescape_value()
                        .map_err(|e| bad(e.to_string()))?
                        .into_owned();
                    attributes.push((
                        String::from_utf8_lossy(a.key.as_ref()).into_owned(),
                        raw,
                        value,
                    ));
                }
                return Ok(RootTag { qname, attributes });
            }
            Event::Eof => return Err(bad("no start tag".into())),
            _ => {}
        }
    }
}

fn merge_xml(all: &[&XmlParents]) -> Result<XmlParents> {
    let first = all[0];
    let root = parse_root(&first.root_start)?;
    let mut seen: BTreeMap<String, String> = root
        .attributes
        .iter()
        .map(|(k, _, v)| (k.clone(), v.clone()))
        .collect();
    let mut extra = String::new();
    for p in &all[1..] {
        if p.root_start == first.root_start {
            continue;
        }
        let other = parse_root(&p.root_start)?;
        if local(&other.qname) != local(&root.qname) {
            return Err(Error::IncompatibleParents(format!(
                "root elements `{}` and `{}` differ",
                root.qname, other.qname
            )));
        }
        for (k, raw, v) in other.attributes {
            match seen.get(&k) {
                Some(existing) if *existing == v => {}
                Some(existing) => {
                    let what = if k == "xmlns" || k.starts_with("xmlns:") {
                        "namespace declaration"
                    } else {
                        "attribute"
                    };
                    return Err(Error::IncompatibleParents(format!(
                        "{what} `{k}` is both \"{existing}\" and \"{v}\""
                    )));
                }
                None => {
                    let quote = if raw.contains('"') { '\'' } else { '"' };
                    extra.push_str(&format!(" {k}={quote}{raw}{quote}"));
                    seen.insert(k, v);
                }
            }
        }
    }
    let mut root_start = first.root_start.clone();
    if !extra.is_empty() {
        let close = root_start.rfind('>').expect("start tag ends with `>`");
        root_start.insert_str(close, &extra);
    }
    Ok(XmlParents {
        declaration: first.declaration.clone(),
        root_start,
        root_end: first.root_end.clone(),
    })
}

/// Combines the parents of several chunks into the parents of one output
/// document.
pub fn merge_parents<'a>(parents: impl IntoIterator<Item = &'a Parents>) -> Result<Parents> {
    let parents: Vec<&Parents> = parents.into_iter().collect();
    let Some(first) = parents.first() else {
        return Err(Error::IncompatibleParents("nothing to merge".into()));
    };
    match first {
        Parents::Xml(_) => {
            let xml = parents
                .iter()
                .map(|p| match p {
                    Parents::Xml(x) => Ok(x),
                    Parents::GeoJson { .. } => Err(mixed()),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Parents::Xml(merge_xml(&xml)?))
        }
        Parents::GeoJson { .. } => {
            let mut kind = CollectionKind::Standalone;
            for p in &parents {
                match p {
                    Parents::GeoJson {
                        kind: CollectionKind::FeatureCollection,
                    } => kind = CollectionKind::FeatureCollection,
                    Parents::GeoJson { .. } => {}
                    Parents::Xml(_) => return Err(mixed()),
                }
            }
            Ok(Parents::GeoJson { kind })
        }
    }
}

fn mixed() -> Error {
    Error::IncompatibleParents("cannot merge XML and GeoJSON chunks".into())
}

#[derive(Deserialize)]
struct TypeOnly<'a> {
    #[serde(rename = "type", borrow)]
    kind: Option<std::borrow::Cow<'a, str>>,
}

fn is_feature(chunk: &[u8]) -> bool {
    serde_json::from_slice::<TypeOnly>(chunk)
        .ok()
        .and_then(|t| t.kind)
        .is_some_and(|k| k == "Feature")
}

/// Streaming writer for a merged document. Nothing is buffered: the header
/// is written on creation and every chunk as it is pushed.
pub struct MergeWriter<W: Write> {
    out: W,
    parents: Option<Parents>,
    count: usize,
}

impl<W: Write> MergeWriter<W> {
    /// Starts a document for chunks whose merged parents are `parents`.
    pub fn new(mut out: W, parents: Parents) -> Result<Self> {
        match &parents {
            Parents::Xml(x) => {
                if let Some(decl) = &x.declaration {
                    out.write_all(decl.as_bytes())?;
                    out.write_all(b"\n")?;
                }
                out.write_all(x.root_start.as_bytes())?;
                out.write_all(b"\n")?;
            }
            Parents::GeoJson { .. } => out.write_all(GEOJSON_HEAD)?,
        }
        Ok(MergeWriter {
            out,
            parents: Some(parents),
            count: 0,
        })
    }

    /// Writes the empty document of `format` and returns the sink.
    pub fn empty(mut out: W, format: Format) -> Result<W> {
        match format {
            Format::Xml => out.write_all(EMPTY_XML.as_bytes())?,
            Format::GeoJson => {
                out.write_all(GEOJSON_HEAD)?;
                out.write_all(GEOJSON_TAIL)?;
            }
        }
        Ok(out)
    }

    /// Appends one chunk. `parents` are the chunk's own parents; for GeoJSON
    /// they tell whether the chunk may be a bare geometry.
    pub fn push(&mut self, content: &[u8], parents: &Parents) -> Result<()> {
        match parents {
            Parents::Xml(_) => {
                self.out.write_all(content)?;
                self.out.write_all(b"\n")?;
            }
            Parents::GeoJson { kind } => {
                if self.count > 0 {
                    self.out.write_all(b",")?;
                }
                if *kind == CollectionKind::Standalone && !is_feature(content) {
                    self.out
                        .write_all(br#"{"type":"Feature","properties":null,"geometry":"#)?;
                    self.out.write_all(content)?;
                    self.out.write_all(b"}")?;
                } else {
                    self.out.write_all(content)?;
                }
            }
        }
        self.count += 1;
        Ok(())
    }

    pub fn get_ref(&self) -> &W {
        &self.out
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Gives up the sink without writing the closing part.
    pub fn into_inner(self) -> W {
        self.out
    }

    pub fn finish(mut self) -> Result<W> {
        match self.parents.take().expect("finish is called once") {
            Parents::Xml(x) => {
                self.out.write_all(x.root_end.as_bytes())?;
                self.out.write_all(b"\n")?;
            }
            Parents::GeoJson { .. } => self.out.write_all(GEOJSON_TAIL)?,
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Merges fully known chunks (content with their parents) into `out`.
/// `format` decides the empty document when there are no chunks.
pub fn merge<W: Write>(
    chunks: &[(&[u8], &Parents)],
    format: Format,
    out: W,
) -> Result<W> {
    if chunks.is_empty() {
        return MergeWriter::empty(out, format);
    }
    let parents = merge_parents(chunks.iter().map(|(_, p)| *p))?;
    let mut w = MergeWriter::new(out, parents)?;
    for (content, parents) in chunks {
        w.push(content, parents)?;
    }
    w.finish()
}
