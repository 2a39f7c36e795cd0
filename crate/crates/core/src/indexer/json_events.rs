//! Pull tokenizer for a complete, in-memory JSON text. Numbers are reported
//! with their literal text.

#[derive(Debug, PartialEq)]
pub(crate) enum Event<'a> {
    StartObject,
    EndObject,
    StartArray,
    EndArray,
    Key(String),
    Str(String),
    Num(&'a str),
    Bool(bool),
    Null,
}

pub(crate) struct Events<'a> {
    src: &'a [u8],
    pos: usize,
    /// One entry per open container: `None` for arrays, for objects
    /// whether the next string is a key.
    expect_key: Vec<Option<bool>>,
    failed: bool,
}

impl<'a> Events<'a> {
    pub fn new(src: &'a [u8]) -> Self {
        Events {
            src,
            pos: 0,
            expect_key: Vec::new(),
            failed: false,
        }
    }

    fn skip_separators(&mut self) {
        while let Some(&b) = self.src.get(self.pos) {
            if b.is_ascii_whitespace() || b == b',' || b == b':' {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn string(&mut self) -> Option<String> {
        let start = self.pos;
        self.pos += 1;
        let mut escaped = false;
        while let Some(&b) = self.src.get(self.pos) {
            self.pos += 1;
            match b {
                b'\\' => {
                    escaped = true;
                    self.pos += 1;
                }
                b'"' => {
                    let raw = &self.src[start..self.pos];
                    return if escaped {
                        serde_json::from_slice(raw).ok()
                    } else {
                        std::str::from_utf8(&raw[1..raw.len() - 1])
                            .ok()
                            .map(str::to_owned)
                    };
                }
                _ => {}
            }
        }
        None
    }
}

impl<'a> Iterator for Events<'a> {
    type Item = Event<'a>;

    fn next(&mut self) -> Option<Event<'a>> {
        if self.failed {
            return None;
        }
        self.skip_separators();
        let b = *self.src.get(self.pos)?;
        let in_object_key = matches!(self.expect_key.last(), Some(Some(true)));
        let ev = match b {
            b'{' => {
                self.pos += 1;
                self.mark_value();
                self.expect_key.push(Some(true));
                Event::StartObject
            }
            b'}' => {
                self.pos += 1;
                self.expect_key.pop();
                Event::EndObject
            }
            b'[' => {
                self.pos += 1;
                self.mark_value();
                self.expect_key.push(None);
                Event::StartArray
            }
            b']' => {
                self.pos += 1;
                self.expect_key.pop();
                Event::EndArray
            }
            b'"' => {
                let Some(s) = self.string() else {
                    self.failed = true;
                    return None;
                };
                if in_object_key {
                    if let Some(Some(k)) = self.expect_key.last_mut() {
                        *k = false;
                    }
                    Event::Key(s)
                } else {
                    self.mark_value();
                    Event::Str(s)
                }
            }
            b't' | b'f' | b'n' => {
                let word_end = self.src[self.pos..]
                    .iter()
                    .position(|c| !c.is_ascii_alphabetic())
                    .map_or(self.src.len(), |i| self.pos + i);
                let word = &self.src[self.pos..word_end];
                self.pos = word_end;
                self.mark_value();
                match word {
                    b"true" => Event::Bool(true),
                    b"false" => Event::Bool(false),
                    b"null" => Event::Null,
                    _ => {
                        self.failed = true;
                        return None;
                    }
                }
            }
            _ => {
                let end = self.src[self.pos..]
                    .iter()
                    .position(|&c| !(c.is_ascii_digit() || matches!(c, b'-' | b'+' | b'.' | b'e' | b'E')))
                    .map_or(self.src.len(), |i| self.pos + i);
                if end == self.pos {
                    self.failed = true;
                    return None;
                }
                let Ok(num) = std::str::from_utf8(&self.src[self.pos..end]) else {
                    self.failed = true;
                    return None;
                };
                self.pos = end;
                self.mark_value();
                Event::Num(num)
            }
        };
        Some(ev)
    }
}

impl Events<'_> {
    /// After a value inside an object, the next string is a key again.
    fn mark_value(&mut self) {
        if let Some(Some(k)) = self.expect_key.last_mut() {
            *k = true;
        }
    }
}
