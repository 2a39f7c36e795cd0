use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{BoundingBox, DateValue, TypedValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LogicalOp {
    And,
    Or,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CompareOp {
    Eq,
    Gt,
    Gte,
    Lt,
    Lte,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Term {
    Text(String),
    BBox(BoundingBox),
    Date(DateValue),
}

/// Parsed query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Query {
    MatchAll,
    Term(Term),
    /// Always has at least one child.
    Logical { op: LogicalOp, children: Vec<Query> },
    /// `key` is never empty.
    Comparison {
        op: CompareOp,
        key: String,
        value: TypedValue,
    },
}

impl Query {
    pub fn text(token: impl Into<String>) -> Query {
        Query::Term(Term::Text(token.into()))
    }

    pub fn and(children: Vec<Query>) -> Query {
        Query::Logical {
            op: LogicalOp::And,
            children,
        }
    }

    pub fn or(children: Vec<Query>) -> Query {
        Query::Logical {
            op: LogicalOp::Or,
            children,
        }
    }

    pub fn not(children: Vec<Query>) -> Query {
        Query::Logical {
            op: LogicalOp::Not,
            children,
        }
    }

    pub fn compare(op: CompareOp, key: impl Into<String>, value: TypedValue) -> Query {
        Query::Comparison {
            op,
            key: key.into(),
            value,
        }
    }
}

impl LogicalOp {
    pub fn keyword(self) -> &'static str {
        match self {
            LogicalOp::And => "AND",
            LogicalOp::Or => "OR",
            LogicalOp::Not => "NOT",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s {
            "AND" => Some(LogicalOp::And),
            "OR" => Some(LogicalOp::Or),
            "NOT" => Some(LogicalOp::Not),
            _ => None,
        }
    }
}

impl CompareOp {
    pub fn keyword(self) -> &'static str {
        match self {
            CompareOp::Eq => "EQ",
            CompareOp::Gt => "GT",
            CompareOp::Gte => "GTE",
            CompareOp::Lt => "LT",
            CompareOp::Lte => "LTE",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s {
            "EQ" => Some(CompareOp::Eq),
            "GT" => Some(CompareOp::Gt),
            "GTE" => Some(CompareOp::Gte),
            "LT" => Some(CompareOp::Lt),
            "LTE" => Some(CompareOp::Lte),
            _ => None,
        }
    }
}

fn needs_quotes(s: &str) -> bool {
    s.is_empty()
        || s.starts_with('"')
        || s.chars()
            .any(|c| c.is_whitespace() || c == '(' || c == ')')
}

fn write_token(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    if !needs_quotes(s) {
        return f.write_str(s);
    }
    f.write_str("\"")?;
    for c in s.chars() {
        if c == '"' || c == '\\' {
            f.write_str("\\")?;
        }
        write!(f, "{c}")?;
    }
    f.write_str("\"")
}

fn write_number(f: &mut fmt::Formatter<'_>, n: f64) -> fmt::Result {
    let s = n.to_string();
    // A bare four-digit integer would read back as a year.
    if DateValue::parse(&s).is_some() {
        write!(f, "{s}.0")
    } else {
        f.write_str(&s)
    }
}

/// Renders the query so that parsing the output yields the same AST.
impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Query::MatchAll => Ok(()),
            Query::Term(Term::Text(t)) => write_token(f, t),
            Query::Term(Term::BBox(b)) => {
                write!(f, "{},{},{},{}", b.min_x, b.min_y, b.max_x, b.max_y)
            }
            Query::Term(Term::Date(d)) => write!(f, "{d}"),
            Query::Logical { op, children } => {
                write!(f, "{}(", op.keyword())?;
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str(")")
            }
            Query::Comparison { op, key, value } => {
                write!(f, "{}(", op.keyword())?;
                write_token(f, key)?;
                f.write_str(" ")?;
                match value {
                    TypedValue::Text(t) => write_token(f, t)?,
                    TypedValue::Number(n) => write_number(f, *n)?,
                    TypedValue::Date(d) => write!(f, "{d}")?,
                }
                f.write_str(")")
            }
        }
    }
}
