//! Deterministic synthetic crime records in the Chicago open-data layout.
//!
//! Crimes cluster around persistent hotspots whose intensity follows a
//! yearly cycle, plus a uniform background. Rows outside the study window,
//! rows from other regions, rows without coordinates and a few malformed
//! rows are mixed in so the ingestion path is exercised end to end.

use chrono::{Datelike, NaiveDate, Weekday};
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::blocks::BlockMap;
use super::calendar::CycleCalendar;
use crate::error::Result;
use crate::rng::{stream, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub first_year: i32,
    pub last_year: i32,
    pub region: String,
    pub hotspots: usize,
    pub hotspot_sigma_m: f64,
    /// Expected misdemeanors per weekly window across the region.
    pub misdemeanors_per_cycle: f64,
    pub majors_per_cycle: f64,
    /// Share of crimes placed uniformly instead of at hotspots.
    pub background_fraction: f64,
    /// Relative amplitude of each hotspot's yearly intensity cycle.
    pub seasonal_amplitude: f64,
    /// Rows per week outside the window or region.
    pub distractors_per_cycle: f64,
    pub missing_coordinate_fraction: f64,
    pub malformed_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            first_year: 2005,
            last_year: 2016,
            region: "006".into(),
            hotspots: 6,
            hotspot_sigma_m: 60.0,
            misdemeanors_per_cycle: 14.0,
            majors_per_cycle: 4.0,
            background_fraction: 0.15,
            seasonal_amplitude: 0.5,
            distractors_per_cycle: 6.0,
            missing_coordinate_fraction: 0.02,
            malformed_fraction: 0.002,
        }
    }
}

const MAJOR_TYPES: [&str; 5] = [
    "ROBBERY",
    "ROBBERY",
    "CRIM SEXUAL ASSAULT",
    "HOMICIDE",
    "ARSON",
];
const MINOR_TYPES: [&str; 6] = [
    "THEFT",
    "BATTERY",
    "CRIMINAL DAMAGE",
    "NARCOTICS",
    "ASSAULT",
    "DECEPTIVE PRACTICE",
];

struct Hotspot {
    x: f64,
    y: f64,
    minor_weight: f64,
    major_weight: f64,
    phase: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SynthSummary {
    pub rows: usize,
    pub windowed_rows: usize,
    pub majors: usize,
}

/// Generates the CSV text for `config`, fully determined by `seed`.
pub fn generate_csv(
    config: &SynthConfig,
    blocks: &BlockMap,
    seed: u64,
) -> Result<(Vec<u8>, SynthSummary)> {
    let mut rng = stream(seed, streams::SYNTH);
    let (x0, y0, x1, y1) = blocks.bounds();
    let mut spots: Vec<Hotspot> = (0..config.hotspots)
        .map(|_| Hotspot {
            x: rng.random_range(x0 + 150.0..x1 - 150.0),
            y: rng.random_range(y0 + 150.0..y1 - 150.0),
            minor_weight: -rng.random::<f64>().max(1e-9).ln(),
            major_weight: -rng.random::<f64>().max(1e-9).ln(),
            phase: rng.random(),
        })
        .collect();
    let (ms, js): (f64, f64) = spots.iter().fold((0.0, 0.0), |(a, b), s| {
        (a + s.minor_weight, b + s.major_weight)
    });
    for s in &mut spots {
        // Majors follow the misdemeanor geography, with some independence.
        s.minor_weight /= ms;
        s.major_weight = 0.6 * s.minor_weight + 0.4 * s.major_weight / js;
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "ID",
        "Date",
        "Primary Type",
        "Beat",
        "District",
        "Latitude",
        "Longitude",
        "Year",
    ])?;
    let mut summary = SynthSummary::default();
    let mut next_id = 10_000_000u64;
    let jitter = Normal::new(0.0, config.hotspot_sigma_m.max(1e-9)).expect("positive sigma");
    let calendar = CycleCalendar::weekly(Weekday::Fri, config.first_year, config.last_year);
    let hotspot_share = 1.0 - config.background_fraction;

    for date in &calendar.dates {
        let season = date.ordinal0() as f64 / 365.25;
        let mut emit = |rng: &mut rand_chacha::ChaCha8Rng,
                        date: NaiveDate,
                        minute: u32,
                        offense: &str,
                        xy: (f64, f64),
                        district: &str,
                        summary: &mut SynthSummary|
         -> Result<()> {
            next_id += 1;
            let ts = date
                .and_hms_opt(minute / 60, minute % 60, rng.random_range(0..60))
                .expect("valid time");
            let mut date_s = ts.format("%m/%d/%Y %I:%M:%S %p").to_string();
            if rng.random::<f64>() < config.malformed_fraction {
                date_s = "??/??/???? 00:00:00".into();
            }
            let beat = blocks
                .containing(xy.0, xy.1)
                .map(|b| blocks.blocks[b].key.clone())
                .unwrap_or_else(|| "9999".into());
            let (lat, lon) = if rng.random::<f64>() < config.missing_coordinate_fraction {
                (String::new(), String::new())
            } else {
                let (la, lo) = blocks.unproject(xy.0, xy.1);
                (format!("{la:.9}"), format!("{lo:.9}"))
            };
            w.write_record([
                next_id.to_string().as_str(),
                &date_s,
                offense,
                &beat,
                district,
                &lat,
                &lon,
                &date.year().to_string(),
            ])?;
            summary.rows += 1;
            Ok(())
        };

        for (rate, major) in [
            (config.misdemeanors_per_cycle, false),
            (config.majors_per_cycle, true),
        ] {
            for (si, s) in spots.iter().enumerate() {
                let weight = if major {
                    s.major_weight
                } else {
                    s.minor_weight
                };
                let lambda = rate
                    * hotspot_share
                    * weight
                    * (1.0
                        + config.seasonal_amplitude
                            * (2.0 * std::f64::consts::PI * (season + s.phase)).sin());
                let n = poisson(&mut rng, lambda);
                for _ in 0..n {
                    let xy = (s.x + jitter.sample(&mut rng), s.y + jitter.sample(&mut rng));
                    let offense = pick(&mut rng, major, si);
                    let minute = rng.random_range(19 * 60..24 * 60);
                    emit(
                        &mut rng,
                        *date,
                        minute,
                        offense,
                        xy,
                        &config.region,
                        &mut summary,
                    )?;
                    summary.windowed_rows += 1;
                    summary.majors += usize::from(major);
                }
            }
            let n = poisson(&mut rng, rate * config.background_fraction);
            for _ in 0..n {
                let xy = (rng.random_range(x0..x1), rng.random_range(y0..y1));
                let offense = pick(&mut rng, major, usize::MAX);
                let minute = rng.random_range(19 * 60..24 * 60);
                emit(
                    &mut rng,
                    *date,
                    minute,
                    offense,
                    xy,
                    &config.region,
                    &mut summary,
                )?;
                summary.windowed_rows += 1;
                summary.majors += usize::from(major);
            }
        }

        let n = poisson(&mut rng, config.distractors_per_cycle);
        for _ in 0..n {
            let xy = (rng.random_range(x0..x1), rng.random_range(y0..y1));
            let major = rng.random::<f64>() < 0.2;
            let offense = pick(&mut rng, major, usize::MAX);
            let (d, minute, district) = match rng.random_range(0..3) {
                0 => (
                    *date + chrono::Duration::days(rng.random_range(1..7)),
                    rng.random_range(0..24 * 60),
                    config.region.as_str(),
                ),
                1 => (*date, rng.random_range(0..19 * 60), config.region.as_str()),
                _ => (*date, rng.random_range(19 * 60..24 * 60), "007"),
            };
            emit(&mut rng, d, minute, offense, xy, district, &mut summary)?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| crate::Error::Parse(format!("csv buffer: {e}")))?;
    Ok((bytes, summary))
}

fn poisson(rng: &mut impl Rng, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda)
        .map(|p| p.sample(rng) as u64)
        .unwrap_or(0)
}

fn pick(rng: &mut impl Rng, major: bool, spot: usize) -> &'static str {
    if major {
        MAJOR_TYPES[rng.random_range(0..MAJOR_TYPES.len())]
    } else {
        // Hotspots lean towards one offense type.
        if spot != usize::MAX && rng.random::<f64>() < 0.5 {
            MINOR_TYPES[spot % MINOR_TYPES.len()]
        } else {
            MINOR_TYPES[rng.random_range(0..MINOR_TYPES.len())]
        }
    }
}
