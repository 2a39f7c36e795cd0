//! Streaming division of an imported file into chunks.
//!
//! The input is read once, front to back. Memory use is bounded by the
//! largest single chunk plus one 64 KiB read block; see
//! [`Splitter::peak_buffered`].

mod json;
mod window;
mod xml;

use std::io::Read;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{Format, Parents};

pub use json::GeoJsonSplitter;
pub use xml::XmlSplitter;

use window::ByteWindow;

/// One feature as cut out of the source file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawChunk {
    /// Verbatim bytes of the feature; always valid UTF-8.
    pub content: Vec<u8>,
    pub parents: Arc<Parents>,
    pub sequence: u64,
    /// Spatial reference system name found on or above the feature.
    pub crs_hint: Option<String>,
}

impl RawChunk {
    pub fn format(&self) -> Format {
        self.parents.format()
    }
}

/// Decides the format from the first non-whitespace byte (a UTF-8 byte
/// order mark is skipped).
pub fn detect_format(prefix: &[u8]) -> Result<Format> {
    let prefix = prefix.strip_prefix(&[0xEF, 0xBB, 0xBF]).unwrap_or(prefix);
    match prefix.iter().find(|b| !b.is_ascii_whitespace()) {
        Some(b'<') => Ok(Format::Xml),
        Some(b'{' | b'[') => Ok(Format::GeoJson),
        Some(_) => Err(Error::UnsupportedFormat(
            "input is neither XML nor GeoJSON".into(),
        )),
        None => Err(Error::UnsupportedFormat("empty input".into())),
    }
}

pub enum Splitter<R> {
    Xml(XmlSplitter<R>),
    GeoJson(GeoJsonSplitter<R>),
}

impl<R: Read> Splitter<R> {
    /// Peeks at the start of `reader` to pick a format-specific splitter.
    pub fn new(reader: R) -> Result<Self> {
        let mut win = ByteWindow::new(reader);
        const BOM: [u8; 3] = [0xEF, 0xBB, 0xBF];
        let mut prefix = Vec::new();
        while let Some(b) = win.peek_at(prefix.len())? {
            prefix.push(b);
            let in_bom = prefix.len() <= 3 && BOM.starts_with(&prefix);
            if !in_bom && !b.is_ascii_whitespace() {
                break;
            }
        }
        Ok(match detect_format(&prefix)? {
            Format::Xml => Splitter::Xml(XmlSplitter::new(win)),
            Format::GeoJson => Splitter::GeoJson(GeoJsonSplitter::new(win)),
        })
    }

    pub fn format(&self) -> Format {
        match self {
            Splitter::Xml(_) => Format::Xml,
            Splitter::GeoJson(_) => Format::GeoJson,
        }
    }

    /// Largest number of input bytes held in memory at any point so far.
    pub fn peak_buffered(&self) -> usize {
        match self {
            Splitter::Xml(s) => s.peak_buffered(),
            Splitter::GeoJson(s) => s.peak_buffered(),
        }
    }
}

impl<R: Read> Iterator for Splitter<R> {
    type Item = Result<RawChunk>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            Splitter::Xml(s) => s.next(),
            Splitter::GeoJson(s) => s.next(),
        }
    }
}

/// Splits an in-memory document, collecting all chunks.
pub fn split_all(input: &[u8]) -> Result<Vec<RawChunk>> {
    Splitter::new(input)?.collect()
}
