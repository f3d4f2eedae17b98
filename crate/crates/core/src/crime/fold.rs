//! Folding several test years onto one canonical year.
//!
//! An event keeps its month, its weekday, its occurrence index of that
//! weekday within the month ("the 2nd Friday of May") and its time of day.

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike, Weekday};

use super::events::{sort_events, CrimeEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FoldKey {
    pub month: u32,
    /// 0-based occurrence of the weekday within the month.
    pub week_index: u32,
    pub weekday: Weekday,
    pub minute_of_day: u32,
}

pub fn fold_key(ts: &NaiveDateTime) -> FoldKey {
    FoldKey {
        month: ts.month(),
        week_index: (ts.day() - 1) / 7,
        weekday: ts.weekday(),
        minute_of_day: ts.hour() * 60 + ts.minute(),
    }
}

/// The `week_index`-th `weekday` of `month` in `year`, clamped to the last
/// such weekday when the month is too short.
pub fn canonical_date(year: i32, month: u32, weekday: Weekday, week_index: u32) -> NaiveDate {
    let mut k = week_index.min(4) as u8 + 1;
    loop {
        if let Some(d) = NaiveDate::from_weekday_of_month_opt(year, month, weekday, k) {
            return d;
        }
        k -= 1;
    }
}

/// Re-dates every event from `years` onto `canonical_year`; other years are
/// dropped. The event count over `years` is preserved.
pub fn fold_years(events: &[CrimeEvent], years: &[i32], canonical_year: i32) -> Vec<CrimeEvent> {
    let mut out: Vec<CrimeEvent> = events
        .iter()
        .filter(|e| years.contains(&e.timestamp.year()))
        .map(|e| {
            let key = fold_key(&e.timestamp);
            let date = canonical_date(canonical_year, key.month, key.weekday, key.week_index);
            CrimeEvent {
                timestamp: date.and_time(e.timestamp.time()),
                ..e.clone()
            }
        })
        .collect();
    sort_events(&mut out);
    out
}
