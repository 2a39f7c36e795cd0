//! Typed value index for one attribute or property key.

use std::collections::{BTreeMap, HashMap};
use std::ops::Bound;

use ordered_float::OrderedFloat;
use roaring::RoaringBitmap;

use crate::model::TypedValue;
use crate::query::CompareOp;

#[derive(Debug, Default, Clone)]
pub struct KeyIndex {
    numbers: BTreeMap<OrderedFloat<f64>, RoaringBitmap>,
    texts: BTreeMap<String, RoaringBitmap>,
    texts_lower: HashMap<String, RoaringBitmap>,
    /// Keyed by `(lower, upper)` bound.
    dates_by_lo: BTreeMap<(i64, i64), RoaringBitmap>,
    /// Keyed by `(upper, lower)` bound.
    dates_by_hi: BTreeMap<(i64, i64), RoaringBitmap>,
}

fn add_to<K: Ord>(map: &mut BTreeMap<K, RoaringBitmap>, key: K, slot: u32) {
    map.entry(key).or_default().insert(slot);
}

fn remove_from<K: Ord>(map: &mut BTreeMap<K, RoaringBitmap>, key: &K, slot: u32) {
    if let Some(b) = map.get_mut(key) {
        b.remove(slot);
        if b.is_empty() {
            map.remove(key);
        }
    }
}

fn union<'a>(bitmaps: impl Iterator<Item = &'a RoaringBitmap>) -> RoaringBitmap {
    let mut out = RoaringBitmap::new();
    for b in bitmaps {
        out |= b;
    }
    out
}

impl KeyIndex {
    pub fn is_empty(&self) -> bool {
        self.numbers.is_empty() && self.texts.is_empty() && self.dates_by_lo.is_empty()
    }

    /// `value` must already be normalized.
    pub fn insert(&mut self, value: &TypedValue, slot: u32) {
        match value {
            TypedValue::Number(n) => add_to(&mut self.numbers, OrderedFloat(*n), slot),
            TypedValue::Text(t) => {
                add_to(&mut self.texts, t.clone(), slot);
                self.texts_lower
                    .entry(t.to_lowercase())
                    .or_default()
                    .insert(slot);
            }
            TypedValue::Date(d) => {
                let (lo, hi) = (d.lower_bound(), d.upper_bound());
                add_to(&mut self.dates_by_lo, (lo, hi), slot);
                add_to(&mut self.dates_by_hi, (hi, lo), slot);
            }
        }
    }

    pub fn remove(&mut self, value: &TypedValue, slot: u32) {
        match value {
            TypedValue::Number(n) => remove_from(&mut self.numbers, &OrderedFloat(*n), slot),
            TypedValue::Text(t) => {
                remove_from(&mut self.texts, t, slot);
                let lower = t.to_lowercase();
                if let Some(b) = self.texts_lower.get_mut(&lower) {
                    b.remove(slot);
                    if b.is_empty() {
                        self.texts_lower.remove(&lower);
                    }
                }
            }
            TypedValue::Date(d) => {
                let (lo, hi) = (d.lower_bound(), d.upper_bound());
                remove_from(&mut self.dates_by_lo, &(lo, hi), slot);
                remove_from(&mut self.dates_by_hi, &(hi, lo), slot);
            }
        }
    }

    /// Slots having at least one value `v` with `v <op> value`.
    pub fn matching(&self, op: CompareOp, value: &TypedValue) -> RoaringBitmap {
        use Bound::{Excluded, Included, Unbounded};
        match value {
            TypedValue::Number(r) => {
                let r = OrderedFloat(*r);
                let range = match op {
                    CompareOp::Eq => (Included(r), Included(r)),
                    CompareOp::Gt => (Excluded(r), Unbounded),
                    CompareOp::Gte => (Included(r), Unbounded),
                    CompareOp::Lt => (Unbounded, Excluded(r)),
                    CompareOp::Lte => (Unbounded, Included(r)),
                };
                union(self.numbers.range(range).map(|(_, b)| b))
            }
            TypedValue::Text(r) => {
                if op == CompareOp::Eq {
                    return self
                        .texts_lower
                        .get(&r.to_lowercase())
                        .cloned()
                        .unwrap_or_default();
                }
                let r = r.as_str();
                let range: (Bound<&str>, Bound<&str>) = match op {
                    CompareOp::Gt => (Excluded(r), Unbounded),
                    CompareOp::Gte => (Included(r), Unbounded),
                    CompareOp::Lt => (Unbounded, Excluded(r)),
                    CompareOp::Lte => (Unbounded, Included(r)),
                    CompareOp::Eq => unreachable!(),
                };
                union(self.texts.range::<str, _>(range).map(|(_, b)| b))
            }
            TypedValue::Date(d) => {
                let (r_lo, r_hi) = (d.lower_bound(), d.upper_bound());
                match op {
                    // lo < r_hi and hi > r_lo
                    CompareOp::Eq => union(
                        self.dates_by_lo
                            .range(..(r_hi, i64::MIN))
                            .filter(|((_, hi), _)| *hi > r_lo)
                            .map(|(_, b)| b),
                    ),
                    // hi <= r_lo
                    CompareOp::Lt => {
                        union(self.dates_by_hi.range(..=(r_lo, i64::MAX)).map(|(_, b)| b))
                    }
                    // lo < r_hi
                    CompareOp::Lte => {
                        union(self.dates_by_lo.range(..(r_hi, i64::MIN)).map(|(_, b)| b))
                    }
                    // lo >= r_hi
                    CompareOp::Gt => {
                        union(self.dates_by_lo.range((r_hi, i64::MIN)..).map(|(_, b)| b))
                    }
                    // hi > r_lo
                    CompareOp::Gte => union(
                        self.dates_by_hi
                            .range((Excluded((r_lo, i64::MAX)), Unbounded))
                            .map(|(_, b)| b),
                    ),
                }
            }
        }
    }
}
