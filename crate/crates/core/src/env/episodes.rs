//! Turning located events into replayable episodes.
//!
//! An episode is one composite year: the events of a group of consecutive
//! years folded onto a canonical calendar. Its prelude holds the
//! misdemeanor counts of the cycles right before the year starts, folded
//! the same way from the preceding years.

use chrono::{NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::crime::{block_counts, fold_years, CrimeEvent, CycleCalendar, Split};
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::predictor::make_training_set;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct YearSplit {
    pub train_first: i32,
    pub train_last: i32,
    pub test_first: i32,
    pub test_last: i32,
    pub canonical_year: i32,
}

impl Default for YearSplit {
    fn default() -> Self {
        YearSplit {
            train_first: 2005,
            train_last: 2013,
            test_first: 2014,
            test_last: 2016,
            canonical_year: 2016,
        }
    }
}

impl YearSplit {
    /// Years folded into one episode; equal to the number of test years.
    pub fn span(&self) -> i32 {
        self.test_last - self.test_first + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_first > self.train_last || self.test_first > self.test_last {
            return Err(Error::Config("year ranges must be non-empty".into()));
        }
        if self.train_last >= self.test_first {
            return Err(Error::Config(
                "training years must precede test years".into(),
            ));
        }
        if self.train_last - self.train_first < self.span() {
            return Err(Error::Config(format!(
                "training years {}..={} cannot hold a {}-year fold after a preceding year",
                self.train_first,
                self.train_last,
                self.span()
            )));
        }
        Ok(())
    }

    /// Year groups for `split`. Training groups slide one year at a time and
    /// start no earlier than the second training year so every group has a
    /// preceding year.
    pub fn groups(&self, split: Split) -> Vec<Vec<i32>> {
        let span = self.span();
        match split {
            Split::Test => vec![(self.test_first..=self.test_last).collect()],
            Split::Train => (self.train_first + 1..=self.train_last - span + 1)
                .map(|y0| (y0..y0 + span).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub label: String,
    /// `[rows, blocks]` misdemeanor counts preceding the first cycle.
    pub prelude: Tensor,
    pub cycle_dates: Vec<NaiveDate>,
    pub cycles: Vec<Vec<CrimeEvent>>,
}

impl Episode {
    pub fn new(
        label: impl Into<String>,
        prelude: Tensor,
        cycle_dates: Vec<NaiveDate>,
        cycles: Vec<Vec<CrimeEvent>>,
    ) -> Result<Self> {
        prelude.expect_rank(2, "episode prelude")?;
        if cycle_dates.len() != cycles.len() {
            return Err(Error::Dimension(format!(
                "{} cycle dates for {} cycles",
                cycle_dates.len(),
                cycles.len()
            )));
        }
        let b = prelude.dim(1);
        if let Some(e) = cycles.iter().flatten().find(|e| e.block_id >= b) {
            return Err(Error::Config(format!(
                "event block {} out of range for {b} blocks",
                e.block_id
            )));
        }
        Ok(Episode {
            label: label.into(),
            prelude,
            cycle_dates,
            cycles,
        })
    }

    pub fn block_count(&self) -> usize {
        self.prelude.dim(1)
    }

    /// Prelude rows followed by the full misdemeanor counts of each cycle.
    pub fn misdemeanor_series(&self) -> Tensor {
        let b = self.block_count();
        let mut data = self.prelude.data().to_vec();
        for cycle in &self.cycles {
            let mut row = vec![0.0; b];
            for e in cycle.iter().filter(|e| !e.is_major()) {
                row[e.block_id] += 1.0;
            }
            data.extend(row);
        }
        Tensor::new(&[self.prelude.dim(0) + self.cycles.len(), b], data).expect("consistent rows")
    }

    pub fn major_count(&self, cycles: usize) -> usize {
        self.cycles
            .iter()
            .take(cycles)
            .flatten()
            .filter(|e| e.is_major())
            .count()
    }
}

/// Folds `years` onto `canonical_year` and takes the prelude from the
/// years one earlier folded onto the year before.
pub fn folded_episode(
    events: &[CrimeEvent],
    years: &[i32],
    canonical_year: i32,
    weekday: Weekday,
    prelude_len: usize,
    block_count: usize,
) -> Result<Episode> {
    let calendar = CycleCalendar::weekly(weekday, canonical_year, canonical_year);
    let folded = fold_years(events, years, canonical_year);
    let cycles = calendar.group_owned(&folded);

    let before: Vec<i32> = years.iter().map(|y| y - 1).collect();
    let prev_calendar = CycleCalendar::weekly(weekday, canonical_year - 1, canonical_year - 1);
    if prev_calendar.len() < prelude_len {
        return Err(Error::Config(format!(
            "prelude of {prelude_len} cycles exceeds one year"
        )));
    }
    let prev = fold_years(events, &before, canonical_year - 1);
    let counts = block_counts(
        prev.iter().filter(|e| !e.is_major()),
        block_count,
        &prev_calendar,
    );
    let prelude = counts.slice_outer(counts.dim(0) - prelude_len, counts.dim(0));

    let label = match (years.first(), years.last()) {
        (Some(a), Some(b)) => format!("{a}-{b}"),
        _ => String::from("empty"),
    };
    Episode::new(label, prelude, calendar.dates, cycles)
}

pub fn split_episodes(
    events: &[CrimeEvent],
    years: &YearSplit,
    split: Split,
    weekday: Weekday,
    prelude_len: usize,
    block_count: usize,
) -> Result<Vec<Episode>> {
    years.validate()?;
    years
        .groups(split)
        .iter()
        .map(|g| {
            folded_episode(
                events,
                g,
                years.canonical_year,
                weekday,
                prelude_len,
                block_count,
            )
        })
        .collect()
}

/// Windows over every episode's misdemeanor series, concatenated; windows
/// never straddle two episodes.
pub fn predictor_training_set(episodes: &[Episode], window_len: usize) -> Result<(Tensor, Tensor)> {
    let first = episodes
        .first()
        .ok_or_else(|| Error::InsufficientData("no episodes to train the predictor on".into()))?;
    let b = first.block_count();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut n = 0;
    for ep in episodes {
        let (x, y) = make_training_set(&ep.misdemeanor_series(), window_len)?;
        n += x.dim(0);
        xs.extend_from_slice(x.data());
        ys.extend_from_slice(y.data());
    }
    Ok((
        Tensor::new(&[n, window_len, b], xs)?,
        Tensor::new(&[n, b], ys)?,
    ))
}
