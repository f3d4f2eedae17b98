use std::path::Path;

use chrono::{Datelike, NaiveDateTime, Timelike, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dataset column names for each role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub date: String,
    pub offense: String,
    pub region: String,
    #[serde(default)]
    pub latitude: Option<String>,
    #[serde(default)]
    pub longitude: Option<String>,
    /// Column holding the block identifier (e.g. a police beat).
    #[serde(default)]
    pub block: Option<String>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            date: "Date".into(),
            offense: "Primary Type".into(),
            region: "District".into(),
            latitude: Some("Latitude".into()),
            longitude: Some("Longitude".into()),
            block: Some("Beat".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    #[serde(default)]
    pub columns: ColumnMapping,
    /// chrono formats tried in order.
    #[serde(default = "default_date_formats")]
    pub date_formats: Vec<String>,
}

fn default_date_formats() -> Vec<String> {
    vec![
        "%m/%d/%Y %I:%M:%S %p".into(),
        "%Y-%m-%dT%H:%M:%S".into(),
        "%Y-%m-%d %H:%M:%S".into(),
    ]
}

impl Default for SchemaConfig {
    fn default() -> Self {
        SchemaConfig {
            columns: ColumnMapping::default(),
            date_formats: default_date_formats(),
        }
    }
}

/// One parsed CSV row before block resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEvent {
    /// 1-based line number in the source file.
    pub line: usize,
    pub timestamp: NaiveDateTime,
    pub offense: String,
    pub region: String,
    pub lat_lon: Option<(f64, f64)>,
    pub block_key: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ParseReport {
    pub rows: usize,
    pub parsed: usize,
    pub skipped: Vec<(usize, String)>,
}

/// Reads a crime CSV. Malformed rows are reported, not fatal; a missing
/// mandatory column is.
pub fn parse_csv(path: &Path, schema: &SchemaConfig) -> Result<(Vec<RawEvent>, ParseReport)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_reader(file, schema)
}

pub fn parse_reader(
    reader: impl std::io::Read,
    schema: &SchemaConfig,
) -> Result<(Vec<RawEvent>, ParseReport)> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let need =
        |name: &str| find(name).ok_or_else(|| Error::Schema(format!("missing column `{name}`")));
    let cols = &schema.columns;
    let date_i = need(&cols.date)?;
    let offense_i = need(&cols.offense)?;
    let region_i = need(&cols.region)?;
    let lat_i = cols.latitude.as_deref().map(need).transpose()?;
    let lon_i = cols.longitude.as_deref().map(need).transpose()?;
    let block_i = cols.block.as_deref().map(need).transpose()?;
    if (lat_i.is_none() || lon_i.is_none()) && block_i.is_none() {
        return Err(Error::Schema(
            "need latitude+longitude columns or a block column".into(),
        ));
    }

    let mut events = Vec::new();
    let mut report = ParseReport::default();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        report.rows += 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                report.skipped.push((line, format!("unreadable row: {e}")));
                continue;
            }
        };
        let field = |i: usize| rec.get(i).map(str::trim).unwrap_or("");
        let Some(timestamp) = parse_datetime(field(date_i), &schema.date_formats) else {
            report
                .skipped
                .push((line, format!("bad date `{}`", field(date_i))));
            continue;
        };
        let lat_lon = match (lat_i.map(field), lon_i.map(field)) {
            (Some(la), Some(lo)) if !la.is_empty() && !lo.is_empty() => {
                match (la.parse::<f64>(), lo.parse::<f64>()) {
                    (Ok(a), Ok(b)) if a.is_finite() && b.is_finite() => Some((a, b)),
                    _ => {
                        report.skipped.push((line, "bad coordinates".into()));
                        continue;
                    }
                }
            }
            _ => None,
        };
        let block_key = block_i
            .map(field)
            .filter(|s| !s.is_empty())
            .map(String::from);
        if lat_lon.is_none() && block_key.is_none() {
            report.skipped.push((line, "no location".into()));
            continue;
        }
        events.push(RawEvent {
            line,
            timestamp,
            offense: field(offense_i).to_string(),
            region: field(region_i).to_string(),
            lat_lon,
            block_key,
        });
    }
    report.parsed = events.len();
    Ok((events, report))
}

fn parse_datetime(s: &str, formats: &[String]) -> Option<NaiveDateTime> {
    formats
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

/// The weekly study window: one weekday, `[start, end)` minutes of day, one
/// region. `end_minute = 1440` means midnight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSpec {
    #[serde(with = "weekday_serde")]
    pub weekday: Weekday,
    pub start_minute: u32,
    pub end_minute: u32,
    pub region: String,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            weekday: Weekday::Fri,
            start_minute: 19 * 60,
            end_minute: 24 * 60,
            region: "6".into(),
        }
    }
}

impl WindowSpec {
    pub fn contains(&self, ts: &NaiveDateTime, region: &str) -> bool {
        let minute = ts.hour() * 60 + ts.minute();
        ts.weekday() == self.weekday
            && minute >= self.start_minute
            && minute < self.end_minute
            && same_region(region, &self.region)
    }
}

/// Region codes compare numerically when both parse ("006" == "6").
pub fn same_region(a: &str, b: &str) -> bool {
    let (a, b) = (a.trim(), b.trim());
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a.eq_ignore_ascii_case(b),
    }
}

pub fn filter_window(events: &[RawEvent], window: &WindowSpec) -> Vec<RawEvent> {
    events
        .iter()
        .filter(|e| window.contains(&e.timestamp, &e.region))
        .cloned()
        .collect()
}

pub(crate) mod weekday_serde {
    use chrono::Weekday;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(w: &Weekday, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&w.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Weekday, D::Error> {
        let s = String::deserialize(d)?;
        s.parse()
            .map_err(|_| serde::de::Error::custom(format!("bad weekday `{s}`")))
    }
}
