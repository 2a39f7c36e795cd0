//! Splits GeoJSON into one chunk per element of a FeatureCollection's
//! `features` array. Anything else (a single Feature, a bare geometry) is a
//! single standalone chunk.

use std::io::Read;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{CollectionKind, Parents};

use super::window::ByteWindow;
use super::RawChunk;

enum State {
    Start,
    /// Inside the top-level object, before its next member.
    Members,
    /// Inside the `features` array.
    Features { first: bool },
    Done,
}

pub struct GeoJsonSplitter<R> {
    win: ByteWindow<R>,
    state: State,
    /// True until a `features` array was found; the whole top-level object
    /// is retained meanwhile, since it may turn out to be a single chunk.
    standalone: bool,
    first_member: bool,
    crs: Option<String>,
    sequence: u64,
    parents: Arc<Parents>,
}

#[derive(Clone, Copy, PartialEq)]
enum Frame {
    Object,
    Array,
}

impl<R: Read> GeoJsonSplitter<R> {
    pub(crate) fn new(win: ByteWindow<R>) -> Self {
        GeoJsonSplitter {
            win,
            state: State::Start,
            standalone: true,
            first_member: true,
            crs: None,
            sequence: 0,
            parents: Arc::new(Parents::GeoJson {
                kind: CollectionKind::FeatureCollection,
            }),
        }
    }

    pub fn peak_buffered(&self) -> usize {
        self.win.peak_buffered()
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::JsonMalformed {
            offset: self.win.offset(),
            message: message.into(),
        }
    }

    fn expect(&mut self, byte: u8) -> Result<()> {
        self.win.skip_whitespace()?;
        match self.win.next_byte()? {
            Some(b) if b == byte => Ok(()),
            Some(b) => Err(Error::JsonMalformed {
                offset: self.win.offset() - 1,
                message: format!("expected `{}`, found `{}`", byte as char, b as char),
            }),
            None => Err(self.err(format!("expected `{}`, found end of input", byte as char))),
        }
    }

    /// Reads a string (cursor at `"`) and returns its decoded value.
    fn string(&mut self) -> Result<String> {
        let start = self.win.offset();
        self.win.push_mark();
        let r = self.skip_string();
        let raw = self.win.pop_mark();
        r?;
        serde_json::from_slice::<String>(&raw).map_err(|e| Error::JsonMalformed {
            offset: start,
            message: e.to_string(),
        })
    }

    fn skip_string(&mut self) -> Result<()> {
        if self.win.next_byte()? != Some(b'"') {
            return Err(self.err("expected string"));
        }
        loop {
            match self.win.next_byte()? {
                None => return Err(self.err("unterminated string")),
                Some(b'"') => return Ok(()),
                Some(b'\\') => match self.win.next_byte()? {
                    Some(b'"' | b'\\' | b'/' | b'b' | b'f' | b'n' | b'r' | b't') => {}
                    Some(b'u') => {
                        for _ in 0..4 {
                            match self.win.next_byte()? {
                                Some(h) if h.is_ascii_hexdigit() => {}
                                _ => return Err(self.err("invalid unicode escape")),
                            }
                        }
                    }
                    _ => return Err(self.err("invalid escape")),
                },
                Some(c) if c < 0x20 => return Err(self.err("control character in string")),
                Some(_) => {}
            }
        }
    }

    fn skip_number(&mut self) -> Result<()> {
        let digits = |s: &mut Self| -> Result<usize> {
            let mut n = 0;
            while let Some(b'0'..=b'9') = s.win.peek()? {
                s.win.advance(1);
                n += 1;
            }
            Ok(n)
        };
        if self.win.peek()? == Some(b'-') {
            self.win.advance(1);
        }
        let leading_zero = self.win.peek()? == Some(b'0');
        let n = digits(self)?;
        if n == 0 || (leading_zero && n > 1) {
            return Err(self.err("invalid number"));
        }
        if self.win.peek()? == Some(b'.') {
            self.win.advance(1);
            if digits(self)? == 0 {
                return Err(self.err("invalid number"));
            }
        }
        if let Some(b'e' | b'E') = self.win.peek()? {
            self.win.advance(1);
            if let Some(b'+' | b'-') = self.win.peek()? {
                self.win.advance(1);
            }
            if digits(self)? == 0 {
                return Err(self.err("invalid number"));
            }
        }
        Ok(())
    }

    fn skip_literal(&mut self, lit: &[u8]) -> Result<()> {
        if self.win.starts_with(lit)? {
            self.win.advance(lit.len());
            Ok(())
        } else {
            Err(self.err("invalid literal"))
        }
    }

    fn skip_scalar(&mut self, b: u8) -> Result<()> {
        match b {
            b'"' => self.skip_string(),
            b't' => self.skip_literal(b"true"),
            b'f' => self.skip_literal(b"false"),
            b'n' => self.skip_literal(b"null"),
            b'-' | b'0'..=b'9' => self.skip_number(),
            _ => Err(self.err(format!("unexpected `{}`", b as char))),
        }
    }

    /// Skips one complete value, validating its syntax. Nesting is tracked
    /// on an explicit stack.
    fn skip_value(&mut self) -> Result<()> {
        let mut stack: Vec<Frame> = Vec::new();
        // true when a value (or key) is expected next
        let mut want_value = true;
        loop {
            self.win.skip_whitespace()?;
            let Some(b) = self.win.peek()? else {
                return Err(self.err("unexpected end of input"));
            };
            if want_value {
                match b {
                    b'{' | b'[' => {
                        self.win.advance(1);
                        let frame = if b == b'{' { Frame::Object } else { Frame::Array };
                        self.win.skip_whitespace()?;
                        let close = if frame == Frame::Object { b'}' } else { b']' };
                        if self.win.peek()? == Some(close) {
                            self.win.advance(1);
                            want_value = false;
                        } else {
                            stack.push(frame);
                            if frame == Frame::Object {
                                self.skip_string()?;
                                self.expect(b':')?;
                            }
                            continue;
                        }
                    }
                    _ => {
                        self.skip_scalar(b)?;
                        want_value = false;
                    }
                }
            } else {
                let Some(&frame) = stack.last() else {
                    return Ok(());
                };
                self.win.advance(1);
                match (frame, b) {
                    (_, b',') => {
                        if frame == Frame::Object {
                            self.win.skip_whitespace()?;
                            self.skip_string()?;
                            self.expect(b':')?;
                        }
                        want_value = true;
                    }
                    (Frame::Object, b'}') | (Frame::Array, b']') => {
                        stack.pop();
                    }
                    _ => {
                        return Err(Error::JsonMalformed {
                            offset: self.win.offset() - 1,
                            message: format!("unexpected `{}`", b as char),
                        })
                    }
                }
            }
            if stack.is_empty() && !want_value {
                return Ok(());
            }
        }
    }

    fn start(&mut self) -> Result<()> {
        self.win.skip_whitespace()?;
        match self.win.peek()? {
            Some(b'{') => {}
            Some(b'[') => {
                return Err(Error::UnsupportedFormat(
                    "top-level JSON array is not GeoJSON".into(),
                ))
            }
            Some(_) => return Err(self.err("expected a JSON object")),
            None => return Err(self.err("empty input")),
        }
        self.win.push_mark();
        self.win.advance(1);
        self.state = State::Members;
        Ok(())
    }

    fn crs_name(raw: &[u8]) -> Option<String> {
        let v: serde_json::Value = serde_json::from_slice(raw).ok()?;
        v.get("properties")?
            .get("name")?
            .as_str()
            .map(str::to_owned)
    }

    /// Advances through top-level members until a chunk is ready or the
    /// input ends.
    fn members(&mut self) -> Result<Option<RawChunk>> {
        loop {
            self.win.skip_whitespace()?;
            match self.win.peek()? {
                Some(b'}') => {
                    self.win.advance(1);
                    return self.finish();
                }
                Some(b',') if !self.first_member => {
                    self.win.advance(1);
                    self.win.skip_whitespace()?;
                }
                Some(_) if self.first_member => {}
                Some(_) => return Err(self.err("expected `,` or `}`")),
                None => return Err(self.err("unexpected end of input")),
            }
            self.first_member = false;
            let key = self.string()?;
            self.expect(b':')?;
            self.win.skip_whitespace()?;
            if key == "features" && self.standalone && self.win.peek()? == Some(b'[') {
                self.win.advance(1);
                self.win.drop_mark();
                self.standalone = false;
                self.state = State::Features { first: true };
                return Ok(None);
            }
            if key == "crs" {
                let start = self.win.offset();
                let retained = self.win.has_mark();
                if !retained {
                    self.win.push_mark();
                }
                let r = self.skip_value();
                let raw = self.win.since(start).to_vec();
                if !retained {
                    self.win.drop_mark();
                }
                r?;
                self.crs = Self::crs_name(&raw);
            } else {
                self.skip_value()?;
            }
        }
    }

    fn finish(&mut self) -> Result<Option<RawChunk>> {
        let content = self.standalone.then(|| (self.win.offset(), self.win.pop_mark()));
        self.win.skip_whitespace()?;
        if self.win.peek()?.is_some() {
            return Err(self.err("trailing content after JSON document"));
        }
        self.state = State::Done;
        let Some((end, content)) = content else {
            return Ok(None);
        };
        let content = String::from_utf8(content)
            .map_err(|_| Error::JsonMalformed {
                offset: end,
                message: "invalid UTF-8".into(),
            })?
            .into_bytes();
        Ok(Some(RawChunk {
            content,
            parents: Arc::new(Parents::GeoJson {
                kind: CollectionKind::Standalone,
            }),
            sequence: 0,
            crs_hint: self.crs.clone(),
        }))
    }

    fn feature(&mut self, first: bool) -> Result<Option<RawChunk>> {
        self.win.skip_whitespace()?;
        match self.win.peek()? {
            Some(b']') => {
                self.win.advance(1);
                self.state = State::Members;
                return Ok(None);
            }
            Some(b',') if !first => {
                self.win.advance(1);
                self.win.skip_whitespace()?;
            }
            Some(_) if first => {}
            Some(_) => return Err(self.err("expected `,` or `]`")),
            None => return Err(self.err("unexpected end of input")),
        }
        if self.win.peek()? != Some(b'{') {
            return Err(self.err("feature is not a JSON object"));
        }
        let start = self.win.offset();
        self.win.push_mark();
        let r = self.skip_value();
        let content = self.win.pop_mark();
        r?;
        let content = String::from_utf8(content)
            .map_err(|e| Error::JsonMalformed {
                offset: start + e.utf8_error().valid_up_to() as u64,
                message: "invalid UTF-8".into(),
            })?
            .into_bytes();
        self.state = State::Features { first: false };
        let chunk = RawChunk {
            content,
            parents: self.parents.clone(),
            sequence: self.sequence,
            crs_hint: self.crs.clone(),
        };
        self.sequence += 1;
        Ok(Some(chunk))
    }
}

impl<R: Read> Iterator for GeoJsonSplitter<R> {
    type Item = Result<RawChunk>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let step = match self.state {
                State::Done => return None,
                State::Start => self.start().map(|_| None),
                State::Members => self.members(),
                State::Features { first } => self.feature(first),
            };
            match step {
                Ok(Some(chunk)) => return Some(Ok(chunk)),
                Ok(None) => continue,
                Err(e) => {
                    self.state = State::Done;
                    return Some(Err(e));
                }
            }
        }
    }
}
