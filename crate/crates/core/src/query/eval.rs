//! Reference semantics of the query language, evaluated directly against a
//! single [`IndexDocument`]. The index must agree with this evaluator on
//! every query and document.

use crate::model::{IndexDocument, TypedValue};
use crate::text::tokenize_into;

use super::ast::{CompareOp, LogicalOp, Query, Term};

/// Decides whether `doc` satisfies `query`.
pub fn evaluate_oracle(query: &Query, doc: &IndexDocument) -> bool {
    match query {
        Query::MatchAll => true,
        Query::Term(Term::Text(token)) => text_matches(&token.to_lowercase(), doc),
        Query::Term(Term::BBox(b)) => doc.bbox.is_some_and(|d| d.intersects(b)),
        Query::Term(Term::Date(d)) => {
            let ts = doc.metadata.import_timestamp;
            d.lower_bound() <= ts && ts < d.upper_bound()
        }
        Query::Logical { op, children } => match op {
            LogicalOp::And => children.iter().all(|c| evaluate_oracle(c, doc)),
            LogicalOp::Or => children.iter().any(|c| evaluate_oracle(c, doc)),
            LogicalOp::Not => !children.iter().any(|c| evaluate_oracle(c, doc)),
        },
        Query::Comparison { op, key, value } => {
            let attrs = doc
                .attributes
                .iter()
                .filter(|a| &a.key == key)
                .map(|a| a.value.normalized());
            let props = doc
                .metadata
                .properties
                .get(key)
                .map(|v| TypedValue::interpret(v));
            attrs
                .chain(props)
                .any(|left| compare_typed(*op, &left, value))
        }
    }
}

fn text_matches(token: &str, doc: &IndexDocument) -> bool {
    if doc.tokens.contains(token) {
        return true;
    }
    if doc.metadata.tags.iter().any(|t| t.to_lowercase() == token) {
        return true;
    }
    let mut found = false;
    for v in doc.metadata.properties.values() {
        tokenize_into(v, |t| found |= t == token);
        if found {
            return true;
        }
    }
    false
}

/// Compares a document value (`left`) with a query value (`right`).
///
/// Numbers compare numerically and exactly. Texts compare
/// case-insensitively for `EQ` and byte-lexicographically otherwise.
/// Dates compare as intervals `[lower, upper)`: `EQ` means overlap,
/// `LT` means `left` ends before `right` starts, `LTE` means `left` starts
/// before `right` ends, and `GT`/`GTE` mirror these. Mixed types never match.
pub fn compare_typed(op: CompareOp, left: &TypedValue, right: &TypedValue) -> bool {
    match (left, right) {
        (TypedValue::Number(l), TypedValue::Number(r)) => match op {
            CompareOp::Eq => l == r,
            CompareOp::Gt => l > r,
            CompareOp::Gte => l >= r,
            CompareOp::Lt => l < r,
            CompareOp::Lte => l <= r,
        },
        (TypedValue::Text(l), TypedValue::Text(r)) => match op {
            CompareOp::Eq => l.to_lowercase() == r.to_lowercase(),
            CompareOp::Gt => l.as_bytes() > r.as_bytes(),
            CompareOp::Gte => l.as_bytes() >= r.as_bytes(),
            CompareOp::Lt => l.as_bytes() < r.as_bytes(),
            CompareOp::Lte => l.as_bytes() <= r.as_bytes(),
        },
        (TypedValue::Date(l), TypedValue::Date(r)) => {
            let (l_lo, l_hi) = (l.lower_bound(), l.upper_bound());
            let (r_lo, r_hi) = (r.lower_bound(), r.upper_bound());
            match op {
                CompareOp::Eq => l_lo < r_hi && r_lo < l_hi,
                CompareOp::Lt => l_hi <= r_lo,
                CompareOp::Lte => l_lo < r_hi,
                CompareOp::Gt => l_lo >= r_hi,
                CompareOp::Gte => l_hi > r_lo,
            }
        }
        _ => false,
    }
}
