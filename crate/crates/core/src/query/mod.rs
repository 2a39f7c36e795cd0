//! The query language: terms, logical operators and comparison operators.
//!
//! ```text
//! query      := expr* ;
//! expr       := logical | comparison | term ;
//! logical    := ("AND"|"OR"|"NOT") "(" expr+ ")" ;
//! comparison := ("EQ"|"GT"|"GTE"|"LT"|"LTE") "(" key value ")" ;
//! term       := token          (bounding box | date | text)
//! token      := quoted-string | run of non-space, non-paren characters ;
//! ```
//!
//! Operator heads are only recognized when immediately followed by `(`.
//! Several top-level expressions are combined with [`IMPLICIT_COMBINATOR`].

mod ast;
mod eval;
mod parser;

pub use ast::{CompareOp, LogicalOp, Query, Term};
pub use eval::{compare_typed, evaluate_oracle};
pub use parser::{classify_term, parse_query};

/// Combinator applied to several top-level expressions.
pub const IMPLICIT_COMBINATOR: LogicalOp = LogicalOp::Or;
