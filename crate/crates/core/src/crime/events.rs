use std::path::Path;

use chrono::{Datelike, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::blocks::BlockMap;
use super::parse::RawEvent;
use super::severity::{Severity, SeverityClassifier};
use crate::error::{Error, Result};
use crate::io::{csv_bytes, write_atomic};

#[derive(Debug, Clone, PartialEq)]
pub struct CrimeEvent {
    pub timestamp: NaiveDateTime,
    pub x_m: f64,
    pub y_m: f64,
    pub block_id: usize,
    pub severity: Severity,
}

impl CrimeEvent {
    pub fn is_major(&self) -> bool {
        self.severity == Severity::Major
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Time-ordered events of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub events: Vec<CrimeEvent>,
    pub block_count: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(mut events: Vec<CrimeEvent>, block_count: usize, split: Split) -> Result<Self> {
        if let Some(e) = events.iter().find(|e| e.block_id >= block_count) {
            return Err(Error::Config(format!(
                "event block {} out of range for {block_count} blocks",
                e.block_id
            )));
        }
        sort_events(&mut events);
        Ok(Dataset {
            events,
            block_count,
            split,
        })
    }

    pub fn majors(&self) -> impl Iterator<Item = &CrimeEvent> {
        self.events.iter().filter(|e| e.is_major())
    }

    /// Events whose year lies in `[first, last]`.
    pub fn years(&self, first: i32, last: i32) -> Vec<CrimeEvent> {
        self.events
            .iter()
            .filter(|e| (first..=last).contains(&e.timestamp.year()))
            .cloned()
            .collect()
    }
}

/// Canonical order: time, then block, then position, then severity.
pub fn sort_events(events: &mut [CrimeEvent]) {
    events.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then(a.block_id.cmp(&b.block_id))
            .then(a.x_m.total_cmp(&b.x_m))
            .then(a.y_m.total_cmp(&b.y_m))
            .then(a.severity.cmp(&b.severity))
    });
}

/// Resolves blocks and severities; unlocatable events are dropped and
/// counted.
pub fn locate_events(
    raw: &[RawEvent],
    blocks: &BlockMap,
    classes: &SeverityClassifier,
) -> (Vec<CrimeEvent>, usize) {
    let mut dropped = 0;
    let mut out = Vec::with_capacity(raw.len());
    for r in raw {
        match blocks.locate(r.lat_lon, r.block_key.as_deref()) {
            Some((block_id, x_m, y_m)) => out.push(CrimeEvent {
                timestamp: r.timestamp,
                x_m,
                y_m,
                block_id,
                severity: classes.classify(&r.offense),
            }),
            None => dropped += 1,
        }
    }
    sort_events(&mut out);
    (out, dropped)
}

#[derive(Debug, Serialize, Deserialize)]
struct EventRow {
    iso_datetime: String,
    x_m: String,
    y_m: String,
    block_id: usize,
    severity: Severity,
}

const ISO: &str = "%Y-%m-%dT%H:%M:%S";

/// Canonical event CSV: `iso_datetime,x_m,y_m,block_id,severity`, meters to
/// millimeter precision.
pub fn events_csv(events: &[CrimeEvent]) -> Result<Vec<u8>> {
    let rows: Vec<EventRow> = events
        .iter()
        .map(|e| EventRow {
            iso_datetime: e.timestamp.format(ISO).to_string(),
            x_m: format!("{:.3}", e.x_m),
            y_m: format!("{:.3}", e.y_m),
            block_id: e.block_id,
            severity: e.severity,
        })
        .collect();
    csv_bytes(&rows)
}

pub fn write_events(path: &Path, events: &[CrimeEvent]) -> Result<()> {
    write_atomic(path, &events_csv(events)?)
}

pub fn read_events(path: &Path) -> Result<Vec<CrimeEvent>> {
    let rows: Vec<EventRow> = crate::io::read_csv(path)?;
    rows.into_iter()
        .map(|r| {
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| {
                    Error::Parse(format!("bad coordinate `{s}` in {}", path.display()))
                })
            };
            Ok(CrimeEvent {
                timestamp: NaiveDateTime::parse_from_str(&r.iso_datetime, ISO).map_err(|e| {
                    Error::Parse(format!("bad timestamp `{}`: {e}", r.iso_datetime))
                })?,
                x_m: parse(&r.x_m)?,
                y_m: parse(&r.y_m)?,
                block_id: r.block_id,
                severity: r.severity,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    #[test]
    fn event_file_round_trip() {
        let ts = NaiveDate::from_ymd_opt(2016, 1, 1)
            .unwrap()
            .and_hms_opt(19, 5, 0)
            .unwrap();
        let events = vec![CrimeEvent {
            timestamp: ts,
            x_m: 12.3456,
            y_m: -7.0,
            block_id: 3,
            severity: Severity::Major,
        }];
        let text = String::from_utf8(events_csv(&events).unwrap()).unwrap();
        assert_eq!(
            text,
            "iso_datetime,x_m,y_m,block_id,severity\n2016-01-01T19:05:00,12.346,-7.000,3,major\n"
        );
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        write_events(&p, &events).unwrap();
        let back = read_events(&p).unwrap();
        assert_eq!(back[0].block_id, 3);
        assert_eq!(back[0].x_m, 12.346);
    }

    #[test]
    fn dataset_rejects_out_of_range_block() {
        let ts = NaiveDate::from_ymd_opt(2016, 1, 1)
            .unwrap()
            .and_hms_opt(19, 5, 0)
            .unwrap();
        let e = CrimeEvent {
            timestamp: ts,
            x_m: 0.0,
            y_m: 0.0,
            block_id: 12,
            severity: Severity::Major,
        };
        assert!(Dataset::new(vec![e], 12, Split::Test).is_err());
    }
}
