use std::fmt;

use serde::{Deserialize, Serialize};

use super::DateValue;

/// A value compared by the query language's comparison operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "lowercase")]
pub enum TypedValue {
    Text(String),
    Number(f64),
    Date(DateValue),
}

impl TypedValue {
    /// Interprets raw text: a date if it is an ISO-8601 date, a number if it
    /// is a plain numeric literal, text otherwise. Dates win over numbers, so
    /// `2018` is the year 2018, never the number 2018.
    pub fn interpret(s: &str) -> TypedValue {
        if let Some(d) = DateValue::parse(s) {
            return TypedValue::Date(d);
        }
        if let Some(n) = parse_number(s) {
            return TypedValue::Number(n);
        }
        TypedValue::Text(s.to_owned())
    }

    /// Text values are re-interpreted; numbers and dates are kept.
    pub fn normalized(&self) -> TypedValue {
        match self {
            TypedValue::Text(s) => TypedValue::interpret(s),
            other => other.clone(),
        }
    }
}

impl fmt::Display for TypedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypedValue::Text(s) => f.write_str(s),
            TypedValue::Number(n) => write!(f, "{n}"),
            TypedValue::Date(d) => write!(f, "{d}"),
        }
    }
}

/// Parses a decimal literal such as `12`, `-0.5`, `.5`, `1e-3`.
/// Rejects `inf`, `NaN` and hex forms that `f64::from_str` would accept.
pub fn parse_number(s: &str) -> Option<f64> {
    let b = s.as_bytes();
    let mut i = 0;
    if matches!(b.first(), Some(b'+' | b'-')) {
        i += 1;
    }
    let int_start = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    let mut mantissa_digits = i - int_start;
    if i < b.len() && b[i] == b'.' {
        i += 1;
        let frac_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        mantissa_digits += i - frac_start;
    }
    if mantissa_digits == 0 {
        return None;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        i += 1;
        if matches!(b.get(i), Some(b'+' | b'-')) {
            i += 1;
        }
        let exp_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if i == exp_start {
            return None;
        }
    }
    if i != b.len() {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}
