use std::io::{self, Read};

const BLOCK: usize = 64 * 1024;

/// Forward-only view of a byte stream that keeps only what is still needed:
/// the unread part of the current block, plus everything from the oldest
/// active mark onwards.
pub(crate) struct ByteWindow<R> {
    reader: R,
    buf: Vec<u8>,
    pos: usize,
    /// Absolute offset of `buf[0]`.
    base: u64,
    /// Absolute offsets of active marks, oldest first.
    marks: Vec<u64>,
    eof: bool,
    peak: usize,
}

impl<R: Read> ByteWindow<R> {
    pub fn new(reader: R) -> Self {
        ByteWindow {
            reader,
            buf: Vec::with_capacity(BLOCK),
            pos: 0,
            base: 0,
            marks: Vec::new(),
            eof: false,
            peak: 0,
        }
    }

    /// Absolute offset of the next unread byte.
    pub fn offset(&self) -> u64 {
        self.base + self.pos as u64
    }

    /// Largest number of bytes ever held in memory at once.
    pub fn peak_buffered(&self) -> usize {
        self.peak
    }

    fn fill(&mut self) -> io::Result<bool> {
        if self.eof {
            return Ok(false);
        }
        let keep_from = match self.marks.first() {
            Some(&m) => (m - self.base) as usize,
            None => self.pos,
        };
        if keep_from > 0 {
            self.buf.drain(..keep_from);
            self.base += keep_from as u64;
            self.pos -= keep_from;
        }
        let old = self.buf.len();
        self.buf.resize(old + BLOCK, 0);
        let n = loop {
            match self.reader.read(&mut self.buf[old..]) {
                Ok(n) => break n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => {
                    self.buf.truncate(old);
                    return Err(e);
                }
            }
        };
        self.buf.truncate(old + n);
        self.peak = self.peak.max(self.buf.len());
        if n == 0 {
            self.eof = true;
        }
        Ok(n > 0)
    }

    pub fn peek(&mut self) -> io::Result<Option<u8>> {
        self.peek_at(0)
    }

    /// Byte `k` positions ahead of the cursor, without consuming it.
    pub fn peek_at(&mut self, k: usize) -> io::Result<Option<u8>> {
        while self.pos + k >= self.buf.len() {
            if !self.fill()? {
                return Ok(None);
            }
        }
        Ok(Some(self.buf[self.pos + k]))
    }

    pub fn next_byte(&mut self) -> io::Result<Option<u8>> {
        let b = self.peek()?;
        if b.is_some() {
            self.pos += 1;
        }
        Ok(b)
    }

    pub fn advance(&mut self, n: usize) {
        debug_assert!(self.pos + n <= self.buf.len());
        self.pos += n;
    }

    /// True if the upcoming bytes equal `lit` (does not consume).
    pub fn starts_with(&mut self, lit: &[u8]) -> io::Result<bool> {
        for (i, &c) in lit.iter().enumerate() {
            if self.peek_at(i)? != Some(c) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Consumes bytes up to and including the first occurrence of `pat`.
    /// Returns false if the stream ended first.
    pub fn skip_past(&mut self, pat: &[u8]) -> io::Result<bool> {
        loop {
            let hay = &self.buf[self.pos..];
            if let Some(i) = find(hay, pat) {
                self.pos += i + pat.len();
                return Ok(true);
            }
            // keep a possible partial match at the end of the buffer
            let keep = pat.len().saturating_sub(1).min(hay.len());
            self.pos = self.buf.len() - keep;
            if !self.fill()? {
                self.pos = self.buf.len();
                return Ok(false);
            }
        }
    }

    /// Consumes bytes up to, but not including, the next `byte`.
    /// Returns false if the stream ended first.
    pub fn skip_until(&mut self, byte: u8) -> io::Result<bool> {
        loop {
            if let Some(i) = self.buf[self.pos..].iter().position(|&b| b == byte) {
                self.pos += i;
                return Ok(true);
            }
            self.pos = self.buf.len();
            if !self.fill()? {
                return Ok(false);
            }
        }
    }

    pub fn skip_whitespace(&mut self) -> io::Result<()> {
        while let Some(b) = self.peek()? {
            if !matches!(b, b' ' | b'\t' | b'\r' | b'\n') {
                break;
            }
            self.pos += 1;
        }
        Ok(())
    }

    /// Starts retaining bytes from the cursor onwards.
    pub fn push_mark(&mut self) {
        self.marks.push(self.offset());
    }

    /// Ends the most recent mark and returns the bytes read since it was set.
    pub fn pop_mark(&mut self) -> Vec<u8> {
        let m = self.marks.pop().expect("mark set");
        let start = (m - self.base) as usize;
        self.buf[start..self.pos].to_vec()
    }

    pub fn drop_mark(&mut self) {
        self.marks.pop();
    }

    /// Bytes between the absolute offset `from` and the cursor. `from` must
    /// not precede the oldest active mark.
    pub fn since(&self, from: u64) -> &[u8] {
        let start = (from - self.base) as usize;
        &self.buf[start..self.pos]
    }

    pub fn has_mark(&self) -> bool {
        !self.marks.is_empty()
    }
}

fn find(hay: &[u8], pat: &[u8]) -> Option<usize> {
    if pat.len() == 1 {
        return hay.iter().position(|&b| b == pat[0]);
    }
    hay.windows(pat.len()).position(|w| w == pat)
}
