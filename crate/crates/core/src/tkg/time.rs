use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;

use super::TimeId;

/// Granularity of timestamp labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TimeKind {
    /// Year granularity. Accepts `1985`, `1985-##-##`, `1985-03-01`, `-44`.
    Year,
    /// Calendar day, `YYYY-MM-DD`; stored as days since 1970-01-01.
    Date,
    /// Labels are already integer time indices.
    Index,
}

impl TimeKind {
    pub fn name(self) -> &'static str {
        match self {
            TimeKind::Year => "year",
            TimeKind::Date => "date",
            TimeKind::Index => "index",
        }
    }
}

impl fmt::Display for TimeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TimeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "year" => Ok(TimeKind::Year),
            "date" => Ok(TimeKind::Date),
            "index" => Ok(TimeKind::Index),
            other => Err(format!("unknown time kind `{other}` (expected year, date or index)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParsedTime {
    Value(i64),
    Missing,
    Invalid,
}

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch")
}

impl TimeKind {
    /// Parses one time field. A field is missing when it is listed in
    /// `missing_tokens` or its year part is masked with `#`.
    pub fn parse(self, raw: &str, missing_tokens: &[String]) -> ParsedTime {
        let raw = raw.trim();
        if missing_tokens.iter().any(|m| m == raw) || raw.starts_with('#') {
            return ParsedTime::Missing;
        }
        match self {
            TimeKind::Year => parse_year(raw),
            TimeKind::Date => match NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
                Ok(d) => ParsedTime::Value((d - epoch()).num_days()),
                Err(_) => ParsedTime::Invalid,
            },
            TimeKind::Index => raw.parse().map_or(ParsedTime::Invalid, ParsedTime::Value),
        }
    }

    pub fn format(self, value: i64) -> String {
        match self {
            TimeKind::Year | TimeKind::Index => value.to_string(),
            TimeKind::Date => (epoch() + chrono::Duration::days(value))
                .format("%Y-%m-%d")
                .to_string(),
        }
    }
}

fn parse_year(raw: &str) -> ParsedTime {
    let (neg, body) = match raw.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, raw),
    };
    let year_part = body.split('-').next().unwrap_or("");
    if year_part.is_empty() || !year_part.bytes().all(|c| c.is_ascii_digit()) {
        return ParsedTime::Invalid;
    }
    // Anything after the year must look like month/day fields, masked or not.
    let rest = &body[year_part.len()..];
    if !rest
        .bytes()
        .all(|c| c == b'-' || c == b'#' || c.is_ascii_digit())
    {
        return ParsedTime::Invalid;
    }
    match year_part.parse::<i64>() {
        Ok(y) => ParsedTime::Value(if neg { -y } else { y }),
        Err(_) => ParsedTime::Invalid,
    }
}

/// The ordered set of distinct timestamp values of a dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimeAxis {
    kind: TimeKind,
    values: Vec<i64>,
}

impl TimeAxis {
    /// Builds an axis from arbitrary values; duplicates are collapsed.
    pub fn new(kind: TimeKind, mut values: Vec<i64>) -> Self {
        values.sort_unstable();
        values.dedup();
        Self { kind, values }
    }

    /// An index axis `0..len`.
    pub fn indices(len: usize) -> Self {
        Self::new(TimeKind::Index, (0..len as i64).collect())
    }

    pub fn kind(&self) -> TimeKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn value(&self, t: TimeId) -> i64 {
        self.values[t.index()]
    }

    pub fn id_of(&self, value: i64) -> Option<TimeId> {
        self.values.binary_search(&value).ok().map(TimeId::from_index)
    }

    pub fn label(&self, t: TimeId) -> String {
        self.kind.format(self.value(t))
    }

    pub fn first(&self) -> Option<TimeId> {
        (!self.is_empty()).then_some(TimeId(0))
    }

    pub fn last(&self) -> Option<TimeId> {
        self.len().checked_sub(1).map(TimeId::from_index)
    }

    pub fn ids(&self) -> impl Iterator<Item = TimeId> + '_ {
        (0..self.len()).map(TimeId::from_index)
    }
}
