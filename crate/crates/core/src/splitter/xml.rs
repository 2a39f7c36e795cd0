//! Splits an XML document into one chunk per direct child of the root
//! element, without building a tree and without knowing the schema.

use std::io::Read;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{Parents, XmlParents};

use super::window::ByteWindow;
use super::RawChunk;

enum State {
    Prolog,
    Content,
    Done,
}

pub struct XmlSplitter<R> {
    win: ByteWindow<R>,
    state: State,
    parents: Option<Arc<Parents>>,
    root_name: Vec<u8>,
    inherited_crs: Option<String>,
    sequence: u64,
}

struct StartTag {
    name: Vec<u8>,
    self_closing: bool,
    srs_name: Option<String>,
}

fn local_name(name: &[u8]) -> &[u8] {
    match name.iter().rposition(|&b| b == b':') {
        Some(i) => &name[i + 1..],
        None => name,
    }
}

fn is_ws(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\r' | b'\n')
}

fn trim_end(b: &[u8]) -> &[u8] {
    let end = b.iter().rposition(|&c| !is_ws(c)).map_or(0, |i| i + 1);
    &b[..end]
}

fn declared_encoding(pi: &[u8]) -> Option<String> {
    let i = pi.windows(8).position(|w| w == b"encoding")?;
    let rest = &pi[i + 8..];
    let rest = &rest[rest.iter().position(|&b| !is_ws(b))?..];
    let rest = rest.strip_prefix(b"=")?;
    let rest = &rest[rest.iter().position(|&b| !is_ws(b))?..];
    let quote = *rest.first()?;
    if quote != b'"' && quote != b'\'' {
        return None;
    }
    let end = rest[1..].iter().position(|&b| b == quote)?;
    Some(String::from_utf8_lossy(&rest[1..1 + end]).into_owned())
}

fn utf8(bytes: Vec<u8>, offset: u64) -> Result<String> {
    String::from_utf8(bytes).map_err(|e| Error::XmlMalformed {
        offset: offset + e.utf8_error().valid_up_to() as u64,
        message: "invalid UTF-8".into(),
    })
}

impl<R: Read> XmlSplitter<R> {
    pub(crate) fn new(win: ByteWindow<R>) -> Self {
        XmlSplitter {
            win,
            state: State::Prolog,
            parents: None,
            root_name: Vec::new(),
            inherited_crs: None,
            sequence: 0,
        }
    }

    pub fn peak_buffered(&self) -> usize {
        self.win.peak_buffered()
    }

    /// Parents of the document, known once the root start tag was read.
    pub fn parents(&self) -> Option<&Arc<Parents>> {
        self.parents.as_ref()
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::XmlMalformed {
            offset: self.win.offset(),
            message: message.into(),
        }
    }

    fn expect_skip_past(&mut self, pat: &[u8], what: &str) -> Result<()> {
        if self.win.skip_past(pat)? {
            Ok(())
        } else {
            Err(self.err(format!("unterminated {what}")))
        }
    }

    /// Skips a comment, CDATA section or processing instruction at the
    /// cursor (which points at `<`). Returns false if the cursor is at none
    /// of these.
    fn skip_misc(&mut self, allow_cdata: bool) -> Result<bool> {
        if self.win.starts_with(b"<!--")? {
            self.win.advance(4);
            self.expect_skip_past(b"-->", "comment")?;
        } else if self.win.starts_with(b"<?")? {
            self.win.advance(2);
            self.expect_skip_past(b"?>", "processing instruction")?;
        } else if allow_cdata && self.win.starts_with(b"<![CDATA[")? {
            self.win.advance(9);
            self.expect_skip_past(b"]]>", "CDATA section")?;
        } else {
            return Ok(false);
        }
        Ok(true)
    }

    fn read_name(&mut self) -> Result<Vec<u8>> {
        let mut name = Vec::new();
        while let Some(b) = self.win.peek()? {
            if is_ws(b) || b == b'/' || b == b'>' || b == b'=' || b == b'<' {
                break;
            }
            name.push(b);
            self.win.advance(1);
        }
        if name.is_empty() {
            return Err(self.err("expected a name"));
        }
        if name[0].is_ascii_digit() || matches!(name[0], b'-' | b'.' | b'"' | b'\'') {
            return Err(self.err("invalid name"));
        }
        Ok(name)
    }

    /// Parses a start tag; the cursor points at `<`.
    fn start_tag(&mut self) -> Result<StartTag> {
        self.win.advance(1);
        let name = self.read_name()?;
        let mut srs_name = None;
        loop {
            let before = self.win.offset();
            self.win.skip_whitespace()?;
            let had_ws = self.win.offset() > before;
            match self.win.peek()? {
                None => return Err(self.err("unexpected end of input inside tag")),
                Some(b'>') => {
                    self.win.advance(1);
                    return Ok(StartTag {
                        name,
                        self_closing: false,
                        srs_name,
                    });
                }
                Some(b'/') => {
                    self.win.advance(1);
                    if self.win.next_byte()? != Some(b'>') {
                        return Err(self.err("expected `>` after `/`"));
                    }
                    return Ok(StartTag {
                        name,
                        self_closing: true,
                        srs_name,
                    });
                }
                Some(_) if !had_ws => {
                    return Err(self.err("expected whitespace before attribute"));
                }
                Some(_) => {
                    let attr = self.read_name()?;
                    self.win.skip_whitespace()?;
                    if self.win.next_byte()? != Some(b'=') {
                        return Err(self.err("expected `=` after attribute name"));
                    }
                    self.win.skip_whitespace()?;
                    let quote = match self.win.next_byte()? {
                        Some(q @ (b'"' | b'\'')) => q,
                        _ => return Err(self.err("expected quoted attribute value")),
                    };
                    let want = srs_name.is_none() && local_name(&attr) == b"srsName";
                    let start = self.win.offset();
                    if want {
                        self.win.push_mark();
                    }
                    if !self.win.skip_past(&[quote])? {
                        if want {
                            self.win.drop_mark();
                        }
                        return Err(self.err("unterminated attribute value"));
                    }
                    if want {
                        let mut v = self.win.pop_mark();
                        v.pop();
                        srs_name = Some(utf8(v, start)?);
                    }
                }
            }
        }
    }

    /// Parses an end tag; the cursor points at `</`.
    fn end_tag(&mut self) -> Result<Vec<u8>> {
        self.win.advance(2);
        let name = self.read_name()?;
        self.win.skip_whitespace()?;
        if self.win.next_byte()? != Some(b'>') {
            return Err(self.err("expected `>` to close end tag"));
        }
        Ok(name)
    }

    fn read_prolog(&mut self) -> Result<bool> {
        self.win.push_mark();
        if self.win.starts_with(&[0xEF, 0xBB, 0xBF])? {
            self.win.advance(3);
        } else if self.win.starts_with(&[0xFE, 0xFF])? || self.win.starts_with(&[0xFF, 0xFE])? {
            return Err(Error::UnsupportedEncoding("UTF-16".into()));
        }
        loop {
            self.win.skip_whitespace()?;
            match (self.win.peek()?, self.win.peek_at(1)?) {
                (None, _) => return Err(self.err("no root element")),
                (Some(b'<'), Some(b'?')) => {
                    let start = self.win.offset();
                    self.win.advance(2);
                    self.expect_skip_past(b"?>", "processing instruction")?;
                    let pi = self.win.since(start);
                    if pi.starts_with(b"<?xml") && pi.get(5).is_some_and(|&b| is_ws(b) || b == b'?') {
                        if let Some(enc) = declared_encoding(pi) {
                            let e = enc.to_ascii_lowercase();
                            if !matches!(e.as_str(), "utf-8" | "utf8" | "us-ascii" | "ascii") {
                                return Err(Error::UnsupportedEncoding(enc));
                            }
                        }
                    }
                }
                (Some(b'<'), Some(b'!')) => {
                    if self.win.starts_with(b"<!--")? {
                        self.skip_misc(false)?;
                    } else if self.win.starts_with(b"<!DOCTYPE")? {
                        self.skip_doctype()?;
                    } else {
                        return Err(self.err("unexpected markup before root element"));
                    }
                }
                (Some(b'<'), _) => break,
                (Some(_), _) => return Err(self.err("content before root element")),
            }
        }
        let root_offset = self.win.offset();
        let declaration = trim_end(self.win.since(0)).to_vec();
        let tag = self.start_tag()?;
        let root_start = self.win.since(root_offset).to_vec();
        self.win.drop_mark();

        let declaration = if declaration.is_empty() {
            None
        } else {
            Some(utf8(declaration, 0)?)
        };
        let mut root_start = utf8(root_start, root_offset)?;
        if tag.self_closing {
            // `<root/>`: rewrite as an open tag so that chunks could be merged in
            let trimmed = root_start.trim_end_matches('>').trim_end_matches('/').trim_end();
            root_start = format!("{trimmed}>");
        }
        let root_end = format!("</{}>", String::from_utf8_lossy(&tag.name));
        self.inherited_crs = tag.srs_name;
        self.root_name = tag.name;
        self.parents = Some(Arc::new(Parents::Xml(XmlParents {
            declaration,
            root_start,
            root_end,
        })));
        Ok(!tag.self_closing)
    }

    fn skip_doctype(&mut self) -> Result<()> {
        self.win.advance(9);
        let mut depth = 0usize;
        let mut quote = None;
        loop {
            let Some(b) = self.win.next_byte()? else {
                return Err(self.err("unterminated DOCTYPE"));
            };
            match (quote, b) {
                (Some(q), c) if c == q => quote = None,
                (Some(_), _) => {}
                (None, b'"' | b'\'') => quote = Some(b),
                (None, b'[') => depth += 1,
                (None, b']') => depth = depth.saturating_sub(1),
                (None, b'>') if depth == 0 => return Ok(()),
                _ => {}
            }
        }
    }

    fn skip_epilog(&mut self) -> Result<()> {
        loop {
            self.win.skip_whitespace()?;
            match self.win.peek()? {
                None => return Ok(()),
                Some(b'<') if self.skip_misc(false)? => {}
                Some(_) => return Err(self.err("content after root element")),
            }
        }
    }

    /// Reads one complete element starting at the cursor (`<`), which is
    /// retained by the caller's mark. Returns the first `srsName` seen and
    /// the element's name.
    fn element(&mut self) -> Result<(Vec<u8>, Option<String>)> {
        let tag = self.start_tag()?;
        let mut crs = tag.srs_name;
        if tag.self_closing {
            return Ok((tag.name, crs));
        }
        let mut stack = vec![tag.name];
        loop {
            if !self.win.skip_until(b'<')? {
                return Err(self.err("unexpected end of input inside element"));
            }
            match self.win.peek_at(1)? {
                Some(b'/') => {
                    let name = self.end_tag()?;
                    let open = stack.pop().expect("non-empty stack");
                    if name != open {
                        return Err(self.err(format!(
                            "end tag `{}` does not match `{}`",
                            String::from_utf8_lossy(&name),
                            String::from_utf8_lossy(&open)
                        )));
                    }
                    if stack.is_empty() {
                        return Ok((open, crs));
                    }
                }
                Some(b'!' | b'?') => {
                    if !self.skip_misc(true)? {
                        return Err(self.err("unexpected markup"));
                    }
                }
                _ => {
                    let tag = self.start_tag()?;
                    if crs.is_none() {
                        crs = tag.srs_name;
                    }
                    if !tag.self_closing {
                        stack.push(tag.name);
                    }
                }
            }
        }
    }

    fn next_chunk(&mut self) -> Result<Option<RawChunk>> {
        loop {
            if !self.win.skip_until(b'<')? {
                return Err(self.err("unexpected end of input, root element not closed"));
            }
            match self.win.peek_at(1)? {
                Some(b'/') => {
                    let name = self.end_tag()?;
                    if name != self.root_name {
                        return Err(self.err("end tag does not match root element"));
                    }
                    self.skip_epilog()?;
                    return Ok(None);
                }
                Some(b'!' | b'?') => {
                    if !self.skip_misc(true)? {
                        return Err(self.err("unexpected markup"));
                    }
                }
                _ => {
                    let start = self.win.offset();
                    self.win.push_mark();
                    let element = self.element();
                    let content = self.win.pop_mark();
                    let (name, own_crs) = element?;
                    if local_name(&name) == b"boundedBy" && own_crs.is_some() {
                        self.inherited_crs.clone_from(&own_crs);
                    }
                    let content = utf8(content, start)?.into_bytes();
                    let chunk = RawChunk {
                        content,
                        parents: self.parents.clone().expect("prolog read"),
                        sequence: self.sequence,
                        crs_hint: own_crs.or_else(|| self.inherited_crs.clone()),
                    };
                    self.sequence += 1;
                    return Ok(Some(chunk));
                }
            }
        }
    }
}

impl<R: Read> Iterator for XmlSplitter<R> {
    type Item = Result<RawChunk>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let step = match self.state {
                State::Done => return None,
                State::Prolog => match self.read_prolog() {
                    Ok(true) => {
                        self.state = State::Content;
                        continue;
                    }
                    Ok(false) => self.skip_epilog().map(|_| None),
                    Err(e) => Err(e),
                },
                State::Content => self.next_chunk(),
            };
            return match step {
                Ok(Some(chunk)) => Some(Ok(chunk)),
                Ok(None) => {
                    self.state = State::Done;
                    None
                }
                Err(e) => {
                    self.state = State::Done;
                    Some(Err(e))
                }
            };
        }
    }
}
