//! ISO-8601 dates at year, month, day or date-time granularity.
//!
//! Every [`DateValue`] denotes a half-open interval of instants
//! `[lower_bound, upper_bound)` in milliseconds since the Unix epoch.
//! Values without a zone offset are interpreted as UTC.

use std::fmt;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Zone {
    /// Written as `Z`.
    Utc,
    /// Offset from UTC in minutes, written as `±hh:mm`.
    Offset(i16),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TimeOfDay {
    pub hour: u8,
    pub minute: u8,
    pub second: Option<u8>,
    /// Fractional second digits exactly as written (only with `second`).
    pub fraction: Option<String>,
    pub zone: Option<Zone>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DateValue {
    pub year: i32,
    pub month: Option<u8>,
    pub day: Option<u8>,
    pub time: Option<TimeOfDay>,
}

impl DateValue {
    pub fn year(year: i32) -> Self {
        DateValue {
            year,
            month: None,
            day: None,
            time: None,
        }
    }

    pub fn ymd(year: i32, month: u8, day: u8) -> Option<Self> {
        NaiveDate::from_ymd_opt(year, month as u32, day as u32)?;
        Some(DateValue {
            year,
            month: Some(month),
            day: Some(day),
            time: None,
        })
    }

    /// Parses `YYYY`, `YYYY-MM`, `YYYY-MM-DD` or
    /// `YYYY-MM-DDThh:mm[:ss[.fff]][Z|±hh:mm|±hhmm]`.
    pub fn parse(s: &str) -> Option<Self> {
        let b = s.as_bytes();
        if b.len() < 4 || !b[..4].iter().all(u8::is_ascii_digit) {
            return None;
        }
        let year = digits(&b[0..4])? as i32;
        if b.len() == 4 {
            return Some(DateValue::year(year));
        }
        if b.len() < 7 || b[4] != b'-' {
            return None;
        }
        let month = two_digits(&b[5..7])?;
        if !(1..=12).contains(&month) {
            return None;
        }
        if b.len() == 7 {
            return Some(DateValue {
                year,
                month: Some(month),
                day: None,
                time: None,
            });
        }
        if b.len() < 10 || b[7] != b'-' {
            return None;
        }
        let day = two_digits(&b[8..10])?;
        NaiveDate::from_ymd_opt(year, month as u32, day as u32)?;
        if b.len() == 10 {
            return DateValue::ymd(year, month, day);
        }
        if b[10] != b'T' {
            return None;
        }
        let time = parse_time(&s[11..])?;
        Some(DateValue {
            year,
            month: Some(month),
            day: Some(day),
            time: Some(time),
        })
    }

    /// Inclusive lower bound of the denoted interval, in epoch milliseconds.
    pub fn lower_bound(&self) -> i64 {
        self.start().and_utc().timestamp_millis() - self.offset_millis()
    }

    /// Exclusive upper bound of the denoted interval, in epoch milliseconds.
    pub fn upper_bound(&self) -> i64 {
        let start = self.start();
        let end = match (&self.month, &self.day, &self.time) {
            (None, _, _) => first_of(self.year + 1, 1),
            (Some(m), None, _) => {
                if *m == 12 {
                    first_of(self.year + 1, 1)
                } else {
                    first_of(self.year, *m as u32 + 1)
                }
            }
            (Some(_), Some(_), None) => start + Duration::days(1),
            (Some(_), Some(_), Some(t)) => start + Duration::milliseconds(t.granule_millis()),
        };
        end.and_utc().timestamp_millis() - self.offset_millis()
    }

    fn start(&self) -> NaiveDateTime {
        let date = NaiveDate::from_ymd_opt(
            self.year,
            self.month.unwrap_or(1) as u32,
            self.day.unwrap_or(1) as u32,
        )
        .expect("validated at construction");
        let time = match &self.time {
            None => NaiveTime::MIN,
            Some(t) => {
                let millis = t.fraction_millis();
                NaiveTime::from_hms_milli_opt(
                    t.hour as u32,
                    t.minute as u32,
                    t.second.unwrap_or(0) as u32,
                    millis,
                )
                .expect("validated at construction")
            }
        };
        date.and_time(time)
    }

    fn offset_millis(&self) -> i64 {
        match self.time.as_ref().and_then(|t| t.zone) {
            Some(Zone::Offset(m)) => m as i64 * 60_000,
            _ => 0,
        }
    }

    /// The interval `[lower, upper)` of an instant with millisecond resolution.
    pub fn from_millis(ms: i64) -> Self {
        let dt = chrono::DateTime::from_timestamp_millis(ms)
            .unwrap_or_default()
            .naive_utc();
        DateValue {
            year: dt.year(),
            month: Some(dt.month() as u8),
            day: Some(dt.day() as u8),
            time: Some(TimeOfDay {
                hour: chrono::Timelike::hour(&dt) as u8,
                minute: chrono::Timelike::minute(&dt) as u8,
                second: Some(chrono::Timelike::second(&dt) as u8),
                fraction: Some(format!("{:03}", dt.and_utc().timestamp_subsec_millis())),
                zone: Some(Zone::Utc),
            }),
        }
    }
}

impl TimeOfDay {
    fn fraction_millis(&self) -> u32 {
        match &self.fraction {
            None => 0,
            Some(f) => {
                let mut padded: String = f.chars().take(3).collect();
                while padded.len() < 3 {
                    padded.push('0');
                }
                padded.parse().unwrap_or(0)
            }
        }
    }

    /// Width of the interval implied by the finest written component.
    fn granule_millis(&self) -> i64 {
        match (&self.second, &self.fraction) {
            (None, _) => 60_000,
            (Some(_), None) => 1_000,
            (Some(_), Some(f)) => match f.len() {
                1 => 100,
                2 => 10,
                _ => 1,
            },
        }
    }
}

fn first_of(year: i32, month: u32) -> NaiveDateTime {
    NaiveDate::from_ymd_opt(year, month, 1)
        .expect("valid month start")
        .and_time(NaiveTime::MIN)
}

fn digits(b: &[u8]) -> Option<u32> {
    let mut v = 0u32;
    for &c in b {
        if !c.is_ascii_digit() {
            return None;
        }
        v = v * 10 + (c - b'0') as u32;
    }
    Some(v)
}

fn two_digits(b: &[u8]) -> Option<u8> {
    if b.len() != 2 {
        return None;
    }
    digits(b).map(|v| v as u8)
}

fn parse_time(s: &str) -> Option<TimeOfDay> {
    let b = s.as_bytes();
    if b.len() < 5 || b[2] != b':' {
        return None;
    }
    let hour = two_digits(&b[0..2])?;
    let minute = two_digits(&b[3..5])?;
    if hour > 23 || minute > 59 {
        return None;
    }
    let mut i = 5;
    let mut second = None;
    let mut fraction = None;
    if b.get(i) == Some(&b':') {
        let sec = two_digits(b.get(i + 1..i + 3)?)?;
        if sec > 59 {
            return None;
        }
        second = Some(sec);
        i += 3;
        if b.get(i) == Some(&b'.') {
            let start = i + 1;
            let mut end = start;
            while end < b.len() && b[end].is_ascii_digit() {
                end += 1;
            }
            if end == start || end - start > 9 {
                return None;
            }
            fraction = Some(s[start..end].to_owned());
            i = end;
        }
    }
    let zone = match b.get(i) {
        None => None,
        Some(b'Z') if i + 1 == b.len() => Some(Zone::Utc),
        Some(&sign @ (b'+' | b'-')) => {
            let rest = &b[i + 1..];
            let (hh, mm) = match rest.len() {
                5 if rest[2] == b':' => (two_digits(&rest[0..2])?, two_digits(&rest[3..5])?),
                4 => (two_digits(&rest[0..2])?, two_digits(&rest[2..4])?),
                _ => return None,
            };
            if hh > 23 || mm > 59 {
                return None;
            }
            let total = hh as i16 * 60 + mm as i16;
            Some(Zone::Offset(if sign == b'-' { -total } else { total }))
        }
        _ => return None,
    };
    Some(TimeOfDay {
        hour,
        minute,
        second,
        fraction,
        zone,
    })
}

impl fmt::Display for DateValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}", self.year)?;
        if let Some(m) = self.month {
            write!(f, "-{m:02}")?;
        }
        if let Some(d) = self.day {
            write!(f, "-{d:02}")?;
        }
        if let Some(t) = &self.time {
            write!(f, "T{:02}:{:02}", t.hour, t.minute)?;
            if let Some(s) = t.second {
                write!(f, ":{s:02}")?;
                if let Some(frac) = &t.fraction {
                    write!(f, ".{frac}")?;
                }
            }
            match t.zone {
                None => {}
                Some(Zone::Utc) => f.write_str("Z")?,
                Some(Zone::Offset(m)) => {
                    let sign = if m < 0 { '-' } else { '+' };
                    let m = m.unsigned_abs();
                    write!(f, "{sign}{:02}:{:02}", m / 60, m % 60)?;
                }
            }
        }
        Ok(())
    }
}

impl Serialize for DateValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DateValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        DateValue::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("invalid date {s}")))
    }
}
