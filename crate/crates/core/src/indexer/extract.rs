//! Pattern-based extraction of bounding boxes, attributes and full-text
//! tokens from chunk content. Extractors are registered per format; several
//! may contribute to the same [`Extraction`].

use std::collections::BTreeSet;

use quick_xml::events::{BytesStart, Event as XmlEvent};
use quick_xml::Reader;

use crate::model::{parse_number, BoundingBox, DateValue, Format, IndexedAttribute, TypedValue};
use crate::splitter::RawChunk;
use crate::text::tokenize_into;

use super::json_events::{Event as JsonEvent, Events};

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Extraction {
    pub bbox: Option<BoundingBox>,
    pub attributes: Vec<IndexedAttribute>,
    pub tokens: BTreeSet<String>,
}

impl Extraction {
    fn add_points(&mut self, points: impl IntoIterator<Item = (f64, f64)>) {
        if let Some(b) = BoundingBox::from_points(points) {
            self.bbox = Some(match self.bbox {
                Some(old) => old.union(&b),
                None => b,
            });
        }
    }

    fn add_text(&mut self, text: &str) {
        tokenize_into(text, |t| {
            if !self.tokens.contains(t) {
                self.tokens.insert(t.to_owned());
            }
        });
    }
}

/// Looks for one kind of pattern in chunks of one format.
pub trait Extractor: Send + Sync {
    fn name(&self) -> &'static str;
    fn format(&self) -> Format;
    fn extract(&self, content: &[u8], out: &mut Extraction);
}

pub struct ExtractorRegistry {
    extractors: Vec<Box<dyn Extractor>>,
}

impl Default for ExtractorRegistry {
    fn default() -> Self {
        let mut r = ExtractorRegistry::empty();
        r.register(XmlBoundingBox);
        r.register(XmlGenericAttributes);
        r.register(XmlText);
        r.register(GeoJsonBoundingBox);
        r.register(GeoJsonProperties);
        r.register(GeoJsonText);
        r
    }
}

impl ExtractorRegistry {
    pub fn empty() -> Self {
        ExtractorRegistry {
            extractors: Vec::new(),
        }
    }

    pub fn register(&mut self, extractor: impl Extractor + 'static) {
        self.extractors.push(Box::new(extractor));
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.extractors.iter().map(|e| e.name()).collect()
    }

    pub fn extract(&self, format: Format, content: &[u8]) -> Extraction {
        let mut out = Extraction::default();
        for e in self.extractors.iter().filter(|e| e.format() == format) {
            e.extract(content, &mut out);
        }
        out
    }
}

pub fn extract_bbox(chunk: &RawChunk) -> Option<BoundingBox> {
    let mut out = Extraction::default();
    match chunk.format() {
        Format::Xml => XmlBoundingBox.extract(&chunk.content, &mut out),
        Format::GeoJson => GeoJsonBoundingBox.extract(&chunk.content, &mut out),
    }
    out.bbox
}

pub fn extract_attributes(chunk: &RawChunk) -> Vec<IndexedAttribute> {
    let mut out = Extraction::default();
    match chunk.format() {
        Format::Xml => XmlGenericAttributes.extract(&chunk.content, &mut out),
        Format::GeoJson => GeoJsonProperties.extract(&chunk.content, &mut out),
    }
    out.attributes
}

pub fn extract_tokens(chunk: &RawChunk) -> BTreeSet<String> {
    let mut out = Extraction::default();
    match chunk.format() {
        Format::Xml => XmlText.extract(&chunk.content, &mut out),
        Format::GeoJson => GeoJsonText.extract(&chunk.content, &mut out),
    }
    out.tokens
}

fn attr_value(e: &BytesStart<'_>, local: &[u8]) -> Option<String> {
    e.attributes().flatten().find_map(|a| {
        (a.key.local_name().as_ref() == local).then(|| match a.unescape_value() {
            Ok(v) => v.into_owned(),
            Err(_) => String::from_utf8_lossy(&a.value).into_owned(),
        })
    })
}

fn resolve_entity(name: &str) -> Option<char> {
    match name {
        "amp" => Some('&'),
        "lt" => Some('<'),
        "gt" => Some('>'),
        "quot" => Some('"'),
        "apos" => Some('\''),
        _ => {
            let num = name.strip_prefix('#')?;
            let code = match num.strip_prefix('x') {
                Some(hex) => u32::from_str_radix(hex, 16).ok()?,
                None => num.parse().ok()?,
            };
            char::from_u32(code)
        }
    }
}

/// Text of an XML text-like event, with character and predefined entity
/// references resolved.
fn xml_text(ev: &XmlEvent<'_>, buf: &mut String) {
    match ev {
        XmlEvent::Text(t) => {
            if let Ok(s) = t.decode() {
                buf.push_str(&s);
            }
        }
        XmlEvent::CData(t) => buf.push_str(&String::from_utf8_lossy(t)),
        XmlEvent::GeneralRef(r) => {
            if let Some(c) = r.decode().ok().and_then(|n| resolve_entity(&n)) {
                buf.push(c);
            }
        }
        _ => {}
    }
}

#[derive(Clone, Copy, PartialEq)]
enum CoordKind {
    Positions,
    Tuples,
}

/// Harvests coordinates from `pos`, `posList`, `lowerCorner`, `upperCorner`
/// and GML 2 `coordinates` elements.
pub struct XmlBoundingBox;

impl Extractor for XmlBoundingBox {
    fn name(&self) -> &'static str {
        "xml-bbox"
    }

    fn format(&self) -> Format {
        Format::Xml
    }

    fn extract(&self, content: &[u8], out: &mut Extraction) {
        let mut reader = Reader::from_reader(content);
        // (kind, srsDimension) per open element
        let mut stack: Vec<(Option<CoordKind>, Option<usize>)> = Vec::new();
        let mut text = String::new();
        loop {
            let ev = match reader.read_event() {
                Ok(XmlEvent::Eof) | Err(_) => break,
                Ok(ev) => ev,
            };
            match &ev {
                XmlEvent::Start(e) => {
                    let kind = match e.local_name().as_ref() {
                        b"pos" | b"posList" | b"lowerCorner" | b"upperCorner" => {
                            Some(CoordKind::Positions)
                        }
                        b"coordinates" => Some(CoordKind::Tuples),
                        _ => None,
                    };
                    let dim = attr_value(e, b"srsDimension")
                        .and_then(|d| d.trim().parse::<usize>().ok())
                        .or_else(|| stack.last().and_then(|f| f.1));
                    stack.push((kind, dim));
                    text.clear();
                }
                XmlEvent::End(_) => {
                    if let Some((Some(kind), dim)) = stack.pop() {
                        out.add_points(positions(kind, &text, dim.unwrap_or(2)));
                    }
                    text.clear();
                }
                XmlEvent::Text(_) | XmlEvent::CData(_) | XmlEvent::GeneralRef(_) => {
                    if matches!(stack.last(), Some((Some(_), _))) {
                        xml_text(&ev, &mut text);
                    }
                }
                _ => {}
            }
        }
    }
}

fn positions(kind: CoordKind, text: &str, dim: usize) -> Vec<(f64, f64)> {
    match kind {
        CoordKind::Positions => {
            let nums: Vec<f64> = text.split_whitespace().filter_map(parse_number).collect();
            let dim = dim.max(2);
            nums.chunks_exact(dim).map(|p| (p[0], p[1])).collect()
        }
        CoordKind::Tuples => text
            .split_whitespace()
            .filter_map(|tuple| {
                let mut it = tuple.split(',').map(parse_number);
                Some((it.next()??, it.next()??))
            })
            .collect(),
    }
}

/// Generic attributes: any element whose local name ends in `Attribute`,
/// carries a `name` attribute and has a child element named `value`.
pub struct XmlGenericAttributes;

impl Extractor for XmlGenericAttributes {
    fn name(&self) -> &'static str {
        "xml-generic-attributes"
    }

    fn format(&self) -> Format {
        Format::Xml
    }

    fn extract(&self, content: &[u8], out: &mut Extraction) {
        let mut reader = Reader::from_reader(content);
        // attribute name carried by each open element, if any
        let mut stack: Vec<Option<String>> = Vec::new();
        // (key, depth of the value element, text)
        let mut capture: Option<(String, usize, String)> = None;
        loop {
            let ev = match reader.read_event() {
                Ok(XmlEvent::Eof) | Err(_) => break,
                Ok(ev) => ev,
            };
            match &ev {
                XmlEvent::Start(e) => {
                    let local = e.local_name();
                    let local = local.as_ref();
                    if capture.is_none() && local == b"value" {
                        if let Some(Some(key)) = stack.last() {
                            capture = Some((key.clone(), stack.len(), String::new()));
                        }
                    }
                    let name = if local.ends_with(b"Attribute") {
                        attr_value(e, b"name")
                    } else {
                        None
                    };
                    stack.push(name);
                }
                XmlEvent::End(_) => {
                    stack.pop();
                    if capture.as_ref().is_some_and(|c| c.1 == stack.len()) {
                        let (key, _, text) = capture.take().unwrap();
                        let text = text.trim();
                        if !text.is_empty() {
                            out.attributes.push(IndexedAttribute {
                                key,
                                value: TypedValue::interpret(text),
                            });
                        }
                    }
                }
                XmlEvent::Text(_) | XmlEvent::CData(_) | XmlEvent::GeneralRef(_) => {
                    if let Some((_, _, text)) = capture.as_mut() {
                        xml_text(&ev, text);
                    }
                }
                _ => {}
            }
        }
    }
}

/// Tokens of all text content and attribute values.
pub struct XmlText;

impl Extractor for XmlText {
    fn name(&self) -> &'static str {
        "xml-text"
    }

    fn format(&self) -> Format {
        Format::Xml
    }

    fn extract(&self, content: &[u8], out: &mut Extraction) {
        let mut reader = Reader::from_reader(content);
        let mut text = String::new();
        loop {
            let ev = match reader.read_event() {
                Ok(XmlEvent::Eof) | Err(_) => break,
                Ok(ev) => ev,
            };
            match &ev {
                XmlEvent::Start(e) | XmlEvent::Empty(e) => {
                    out.add_text(&text);
                    text.clear();
                    for a in e.attributes().flatten() {
                        match a.unescape_value() {
                            Ok(v) => out.add_text(&v),
                            Err(_) => out.add_text(&String::from_utf8_lossy(&a.value)),
                        }
                    }
                }
                XmlEvent::End(_) => {
                    out.add_text(&text);
                    text.clear();
                }
                _ => xml_text(&ev, &mut text),
            }
        }
        out.add_text(&text);
    }
}

/// Positions under any `coordinates` member.
pub struct GeoJsonBoundingBox;

impl Extractor for GeoJsonBoundingBox {
    fn name(&self) -> &'static str {
        "geojson-bbox"
    }

    fn format(&self) -> Format {
        Format::GeoJson
    }

    fn extract(&self, content: &[u8], out: &mut Extraction) {
        let mut pending = false;
        // numbers directly inside each open array below `coordinates`
        let mut arrays: Vec<Vec<f64>> = Vec::new();
        let mut in_coords = false;
        let mut points = Vec::new();
        for ev in Events::new(content) {
            match ev {
                JsonEvent::Key(k) => pending = !in_coords && k == "coordinates",
                JsonEvent::StartArray if pending || in_coords => {
                    pending = false;
                    in_coords = true;
                    arrays.push(Vec::new());
                }
                JsonEvent::Num(n) if in_coords => {
                    if let (Some(v), Some(a)) = (parse_number(n), arrays.last_mut()) {
                        a.push(v);
                    }
                }
                JsonEvent::EndArray if in_coords => {
                    if let Some(a) = arrays.pop() {
                        if a.len() >= 2 {
                            points.push((a[0], a[1]));
                        }
                    }
                    in_coords = !arrays.is_empty();
                }
                _ => pending = false,
            }
        }
        out.add_points(points);
    }
}

#[derive(Clone)]
enum Frame {
    Object(Option<String>),
    Array,
}

/// Members of the feature's `properties` object; nested objects are
/// flattened with `.`-joined keys and array elements share their key.
pub struct GeoJsonProperties;

impl Extractor for GeoJsonProperties {
    fn name(&self) -> &'static str {
        "geojson-properties"
    }

    fn format(&self) -> Format {
        Format::GeoJson
    }

    fn extract(&self, content: &[u8], out: &mut Extraction) {
        let mut frames: Vec<Frame> = Vec::new();
        // index into `frames` of the properties object
        let mut props: Option<usize> = None;
        let key_path = |frames: &[Frame], from: usize| -> String {
            frames[from..]
                .iter()
                .filter_map(|f| match f {
                    Frame::Object(k) => k.clone(),
                    Frame::Array => None,
                })
                .collect::<Vec<_>>()
                .join(".")
        };
        for ev in Events::new(content) {
            let value = match ev {
                JsonEvent::Key(k) => {
                    if let Some(Frame::Object(key)) = frames.last_mut() {
                        *key = Some(k);
                    }
                    continue;
                }
                JsonEvent::StartObject => {
                    if props.is_none()
                        && frames.len() == 1
                        && matches!(&frames[0], Frame::Object(Some(k)) if k == "properties")
                    {
                        props = Some(1);
                    }
                    frames.push(Frame::Object(None));
                    continue;
                }
                JsonEvent::StartArray => {
                    frames.push(Frame::Array);
                    continue;
                }
                JsonEvent::EndObject | JsonEvent::EndArray => {
                    frames.pop();
                    if props.is_some_and(|p| frames.len() <= p) {
                        // properties object closed: nothing else is of interest
                        if frames.len() < 2 {
                            props = None;
                        }
                    }
                    continue;
                }
                JsonEvent::Null => continue,
                JsonEvent::Num(n) => match parse_number(n) {
                    Some(v) => TypedValue::Number(v),
                    None => continue,
                },
                JsonEvent::Str(s) => match DateValue::parse(&s) {
                    Some(d) => TypedValue::Date(d),
                    None => TypedValue::Text(s),
                },
                JsonEvent::Bool(b) => TypedValue::Text(b.to_string()),
            };
            if let Some(p) = props {
                if frames.len() > p {
                    let key = key_path(&frames, p);
                    if !key.is_empty() {
                        out.attributes.push(IndexedAttribute { key, value });
                    }
                }
            }
        }
    }
}

/// Tokens of all string and number values.
pub struct GeoJsonText;

impl Extractor for GeoJsonText {
    fn name(&self) -> &'static str {
        "geojson-text"
    }

    fn format(&self) -> Format {
        Format::GeoJson
    }

    fn extract(&self, content: &[u8], out: &mut Extraction) {
        for ev in Events::new(content) {
            match ev {
                JsonEvent::Str(s) => out.add_text(&s),
                JsonEvent::Num(n) => out.add_text(n),
                _ => {}
            }
        }
    }
}
