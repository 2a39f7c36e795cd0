use crate::error::{Error, Result};
use crate::model::{parse_number, BoundingBox, DateValue, TypedValue};

use super::ast::{CompareOp, LogicalOp, Query, Term};
use super::IMPLICIT_COMBINATOR;

const MAX_DEPTH: usize = 128;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Word {
        text: String,
        quoted: bool,
        /// Immediately followed by `(`.
        head: bool,
    },
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    offset: usize,
}

fn lex(input: &str) -> Result<Vec<Spanned>> {
    let mut out = Vec::new();
    let mut chars = input.char_indices().peekable();
    while let Some(&(start, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        match c {
            '(' => {
                chars.next();
                out.push(Spanned {
                    tok: Tok::Open,
                    offset: start,
                });
            }
            ')' => {
                chars.next();
                out.push(Spanned {
                    tok: Tok::Close,
                    offset: start,
                });
            }
            '"' => {
                chars.next();
                let mut text = String::new();
                let mut closed = false;
                while let Some((pos, c)) = chars.next() {
                    match c {
                        '"' => {
                            closed = true;
                            break;
                        }
                        '\\' => match chars.next() {
                            Some((_, e @ ('"' | '\\'))) => text.push(e),
                            Some(_) => return Err(Error::parse(pos, "invalid escape sequence")),
                            None => break,
                        },
                        c => text.push(c),
                    }
                }
                if !closed {
                    return Err(Error::parse(start, "unterminated quoted string"));
                }
                out.push(Spanned {
                    tok: Tok::Word {
                        text,
                        quoted: true,
                        head: false,
                    },
                    offset: start,
                });
            }
            _ => {
                let mut end = input.len();
                while let Some(&(pos, c)) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' {
                        end = pos;
                        break;
                    }
                    chars.next();
                }
                let head = input[end..].starts_with('(');
                out.push(Spanned {
                    tok: Tok::Word {
                        text: input[start..end].to_owned(),
                        quoted: false,
                        head,
                    },
                    offset: start,
                });
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self, depth: usize) -> Result<Query> {
        let Some(Spanned { tok, offset }) = self.next() else {
            return Err(Error::parse(self.end, "unexpected end of query"));
        };
        if depth > MAX_DEPTH {
            return Err(Error::parse(offset, "query nested too deeply"));
        }
        match tok {
            Tok::Open => Err(Error::parse(offset, "unexpected `(`")),
            Tok::Close => Err(Error::parse(offset, "unbalanced parentheses")),
            Tok::Word {
                text,
                quoted: false,
                head: true,
            } => {
                // consume the `(`
                self.next();
                if let Some(op) = LogicalOp::from_keyword(&text) {
                    self.logical(op, offset, depth)
                } else if let Some(op) = CompareOp::from_keyword(&text) {
                    self.comparison(op, offset)
                } else {
                    Err(Error::parse(offset, format!("unknown operator `{text}`")))
                }
            }
            Tok::Word { text, .. } => classify_term(&text)
                .map(Query::Term)
                .map_err(|e| Error::parse(offset, e.to_string())),
        }
    }

    fn logical(&mut self, op: LogicalOp, offset: usize, depth: usize) -> Result<Query> {
        let mut children = Vec::new();
        loop {
            match self.peek() {
                None => return Err(Error::parse(self.end, "unbalanced parentheses")),
                Some(Spanned {
                    tok: Tok::Close, ..
                }) => {
                    self.next();
                    break;
                }
                Some(_) => children.push(self.expr(depth + 1)?),
            }
        }
        if children.is_empty() {
            return Err(Error::parse(
                offset,
                format!("{} needs at least one argument", op.keyword()),
            ));
        }
        Ok(Query::Logical { op, children })
    }

    fn comparison(&mut self, op: CompareOp, offset: usize) -> Result<Query> {
        let mut args = Vec::new();
        loop {
            match self.next() {
                None => return Err(Error::parse(self.end, "unbalanced parentheses")),
                Some(Spanned {
                    tok: Tok::Close, ..
                }) => break,
                Some(Spanned {
                    tok: Tok::Word { text, head, .. },
                    offset: arg_offset,
                }) => {
                    if head {
                        return Err(Error::parse(
                            arg_offset,
                            "comparison arguments must be plain tokens",
                        ));
                    }
                    args.push(text);
                }
                Some(Spanned {
                    tok: Tok::Open,
                    offset: o,
                }) => return Err(Error::parse(o, "unexpected `(`")),
            }
        }
        if args.len() != 2 {
            return Err(Error::parse(
                offset,
                format!(
                    "{} expects a key and a value, got {} argument(s)",
                    op.keyword(),
                    args.len()
                ),
            ));
        }
        let value = args.pop().unwrap();
        let key = args.pop().unwrap();
        if key.is_empty() {
            return Err(Error::parse(offset, "empty comparison key"));
        }
        Ok(Query::Comparison {
            op,
            key,
            value: TypedValue::interpret(&value),
        })
    }
}

/// Parses a query. Empty input yields [`Query::MatchAll`].
pub fn parse_query(input: &str) -> Result<Query> {
    let toks = lex(input)?;
    let mut parser = Parser {
        toks,
        pos: 0,
        end: input.len(),
    };
    let mut exprs = Vec::new();
    while parser.peek().is_some() {
        exprs.push(parser.expr(0)?);
    }
    Ok(match exprs.len() {
        0 => Query::MatchAll,
        1 => exprs.pop().unwrap(),
        _ => Query::Logical {
            op: IMPLICIT_COMBINATOR,
            children: exprs,
        },
    })
}

/// Classifies a bare term as bounding box, date or text.
///
/// A token with exactly three commas must be four numbers
/// `minX,minY,maxX,maxY`, otherwise it is a [`Error::MalformedBbox`].
pub fn classify_term(token: &str) -> Result<Term> {
    if token.is_empty() {
        return Err(Error::parse(0, "empty term"));
    }
    if token.bytes().filter(|&b| b == b',').count() == 3 {
        let nums: Option<Vec<f64>> = token.split(',').map(parse_number).collect();
        return nums
            .and_then(|n| BoundingBox::new(n[0], n[1], n[2], n[3]))
            .map(Term::BBox)
            .ok_or_else(|| Error::MalformedBbox(token.to_owned()));
    }
    if let Some(d) = DateValue::parse(token) {
        return Ok(Term::Date(d));
    }
    Ok(Term::Text(token.to_owned()))
}
