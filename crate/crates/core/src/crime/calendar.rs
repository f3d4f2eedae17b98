use chrono::{Datelike, NaiveDate, Weekday};

use super::events::CrimeEvent;
use crate::nn::Tensor;

/// Ordered weekly control cycles: every `weekday` in a span of years.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleCalendar {
    pub dates: Vec<NaiveDate>,
}

impl CycleCalendar {
    pub fn weekly(weekday: Weekday, first_year: i32, last_year: i32) -> Self {
        let mut dates = Vec::new();
        let Some(mut d) = NaiveDate::from_ymd_opt(first_year, 1, 1) else {
            return CycleCalendar { dates };
        };
        while d.weekday() != weekday {
            d = d.succ_opt().expect("in range");
        }
        while d.year() <= last_year {
            dates.push(d);
            d += chrono::Duration::days(7);
        }
        CycleCalendar { dates }
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Events bucketed by cycle; events outside the calendar are ignored.
    pub fn group<'a>(&self, events: &'a [CrimeEvent]) -> Vec<Vec<&'a CrimeEvent>> {
        let mut out = vec![Vec::new(); self.len()];
        for e in events {
            if let Some(i) = self.index_of(e.timestamp.date()) {
                out[i].push(e);
            }
        }
        out
    }

    /// Owned variant of [`group`](Self::group).
    pub fn group_owned(&self, events: &[CrimeEvent]) -> Vec<Vec<CrimeEvent>> {
        self.group(events)
            .into_iter()
            .map(|c| c.into_iter().cloned().collect())
            .collect()
    }
}

/// `[cycles, blocks]` event counts; empty cells are explicit zeros.
pub fn block_counts<'a>(
    events: impl IntoIterator<Item = &'a CrimeEvent>,
    block_count: usize,
    calendar: &CycleCalendar,
) -> Tensor {
    let mut t = Tensor::zeros(&[calendar.len().max(1), block_count]);
    for e in events {
        if e.block_id >= block_count {
            continue;
        }
        if let Some(i) = calendar.index_of(e.timestamp.date()) {
            t.data_mut()[i * block_count + e.block_id] += 1.0;
        }
    }
    t
}
