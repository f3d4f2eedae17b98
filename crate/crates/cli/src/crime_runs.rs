//! Crime-deterrence stages: ingestion, predictor and policy training,
//! policy evaluation, the random baseline and plot data.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use skywatch::crime::synth::{generate_csv, SynthSummary};
use skywatch::crime::{filter_window, parse_csv, read_events, CrimeEvent, Split};
use skywatch::env::{
    deterrence_ratio, predictor_training_set, split_episodes, CrimeEnv, EnvConfig, Episode,
    EpisodeStats,
};
use skywatch::par::{try_map_indexed, Execution};
use skywatch::ppo::{run_episode, train_from, PolicyNetwork, TrainOutcome};
use skywatch::predictor::{train_predictor, EpochLoss, PredictorModel};
use skywatch::rng::{indexed, streams};
use skywatch::world::{
    build_grid, deterred_count, Grid, Placement, Role, UavAssignment, WorldConfig,
};
use skywatch::{Error, Result};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub parsed: usize,
    pub skipped: usize,
    pub in_window: usize,
    pub located: usize,
    pub unlocated: usize,
    pub majors: usize,
}

/// Raw synthetic records for the configured layout, seeded by the global
/// seed.
pub fn synth_raw(cfg: &ExperimentConfig) -> Result<(Vec<u8>, SynthSummary)> {
    generate_csv(&cfg.data.synth, &cfg.data.block_map(), cfg.seed)
}

/// Parses, filters to the study window and places events on blocks.
pub fn ingest(cfg: &ExperimentConfig, raw: &Path) -> Result<(Vec<CrimeEvent>, IngestReport)> {
    let (raw_events, parse) = parse_csv(raw, &cfg.data.schema)?;
    let windowed = filter_window(&raw_events, &cfg.data.window);
    let blocks = cfg.data.block_map();
    let (events, unlocated) =
        skywatch::crime::events::locate_events(&windowed, &blocks, &cfg.data.severity);
    let report = IngestReport {
        rows: parse.rows,
        parsed: parse.parsed,
        skipped: parse.skipped.len(),
        in_window: windowed.len(),
        located: events.len(),
        unlocated,
        majors: events.iter().filter(|e| e.is_major()).count(),
    };
    if events.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no events from {} fall in the study window and blocks",
            raw.display()
        )));
    }
    Ok((events, report))
}

pub fn load_events(path: &Path) -> Result<Vec<CrimeEvent>> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "{} not found; run `ingest` first",
            path.display()
        )));
    }
    read_events(path)
}

pub fn episodes(
    cfg: &ExperimentConfig,
    events: &[CrimeEvent],
    split: Split,
) -> Result<Vec<Episode>> {
    split_episodes(
        events,
        &cfg.data.years,
        split,
        cfg.data.window.weekday,
        cfg.predictor.window_len,
        cfg.world.block_count,
    )
}

/// Fits the forecaster on the training episodes' misdemeanor counts.
pub fn fit_predictor(
    cfg: &ExperimentConfig,
    events: &[CrimeEvent],
) -> Result<(PredictorModel, Vec<EpochLoss>)> {
    let train = episodes(cfg, events, Split::Train)?;
    let (x, y) = predictor_training_set(&train, cfg.predictor.window_len)?;
    train_predictor(&x, &y, &cfg.predictor, cfg.seed)
}

/// Everything the crime environments share.
#[derive(Debug, Clone)]
pub struct CrimeWorld {
    pub grid: Arc<Grid>,
    pub train: Arc<Vec<Episode>>,
    pub test: Arc<Vec<Episode>>,
    pub predictor: Arc<PredictorModel>,
}

impl CrimeWorld {
    pub fn prepare(
        cfg: &ExperimentConfig,
        events: &[CrimeEvent],
        predictor: PredictorModel,
    ) -> Result<Self> {
        Ok(CrimeWorld {
            grid: Arc::new(build_grid(&cfg.world)?),
            train: Arc::new(episodes(cfg, events, Split::Train)?),
            test: Arc::new(episodes(cfg, events, Split::Test)?),
            predictor: Arc::new(predictor),
        })
    }

    pub fn env(&self, cfg: &ExperimentConfig, split: Split, range_m: f64) -> Result<CrimeEnv> {
        let config = EnvConfig {
            world: WorldConfig {
                deterrence_range_m: range_m,
                ..cfg.world.clone()
            },
            episode_cycles: cfg.env.episode_cycles,
            split,
            predictor_checkpoint: None,
        };
        let episodes = match split {
            Split::Train => self.train.clone(),
            Split::Test => self.test.clone(),
        };
        CrimeEnv::with_grid(
            config,
            self.grid.clone(),
            episodes,
            Some(self.predictor.clone()),
        )
    }
}

/// Seed of the policy trained for the `index`-th range.
pub fn range_seed(cfg: &ExperimentConfig, index: usize) -> u64 {
    skywatch::rng::derive_seed(cfg.seed, &format!("range-{index}"))
}

/// One policy per sweep range, optionally warm-started from the previous
/// range's policy.
pub fn train_policies(
    cfg: &ExperimentConfig,
    world: &CrimeWorld,
    exec: Execution,
    mut on_trained: impl FnMut(f64, &TrainOutcome) -> Result<()>,
) -> Result<Vec<(f64, PolicyNetwork)>> {
    let mut out: Vec<(f64, PolicyNetwork)> = Vec::new();
    for (i, &range) in cfg.sweep.ranges_m.iter().enumerate() {
        let initial = if cfg.sweep.warm_start {
            out.last().map(|(_, p)| p.clone())
        } else {
            None
        };
        let outcome = train_from(
            |_| world.env(cfg, Split::Train, range),
            &cfg.ppo,
            range_seed(cfg, i),
            exec,
            initial,
        )?;
        on_trained(range, &outcome)?;
        out.push((range, outcome.policy));
    }
    Ok(out)
}

/// One row of a deterrence sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub range_m: f64,
    pub trial: usize,
    pub deterred: usize,
    pub potential: usize,
    pub ratio: f64,
}

fn record(range_m: f64, trial: usize, stats: &EpisodeStats) -> SweepRecord {
    SweepRecord {
        range_m,
        trial,
        deterred: stats.deterred,
        potential: stats.potential_majors,
        ratio: deterrence_ratio(stats),
    }
}

/// Replays the test year `trials` times per range with the trained
/// policies.
pub fn run_deterrence_sweep(
    cfg: &ExperimentConfig,
    world: &CrimeWorld,
    policies: &[(f64, PolicyNetwork)],
    trials: usize,
    exec: Execution,
) -> Result<Vec<SweepRecord>> {
    try_map_indexed(exec, policies.len() * trials, |c| {
        let (range, policy) = &policies[c / trials];
        let trial = c % trials;
        let mut env = world.env(cfg, Split::Test, *range)?;
        let mut rng = indexed(cfg.seed, streams::POLICY_SAMPLING, 1_000_000 + trial as u64);
        run_episode(
            policy,
            &mut env,
            trial as u64,
            &mut rng,
            cfg.sweep.greedy_eval,
        )?;
        let stats = env
            .stats()
            .ok_or_else(|| Error::State("episode produced no statistics".into()))?;
        Ok(record(*range, trial, &stats))
    })
}

/// Every UAV deters from a uniformly random cell, redrawn each cycle. A
/// trial's placements are shared by all ranges.
pub fn run_random_baseline(
    cfg: &ExperimentConfig,
    grid: &Grid,
    test: &Episode,
    ranges: &[f64],
    trials: usize,
    exec: Execution,
) -> Result<Vec<SweepRecord>> {
    cfg.world.validate()?;
    let cycles = cfg.env.episode_cycles.min(test.cycles.len());
    let per_trial = try_map_indexed(exec, trials, |trial| {
        let mut rng = indexed(cfg.seed, streams::BASELINE_PLACEMENT, trial as u64);
        let mut stats = vec![EpisodeStats::default(); ranges.len()];
        for cycle in &test.cycles[..cycles] {
            let assignments: Vec<UavAssignment> = (0..cfg.world.uav_total)
                .map(|uav_id| UavAssignment {
                    uav_id,
                    cell_index: rng.random_range(0..grid.len()),
                    role: Role::Deterrence,
                })
                .collect();
            let placement = Placement::new(assignments, grid, &cfg.world)?;
            let events: Vec<&CrimeEvent> = cycle.iter().collect();
            let majors = events.iter().filter(|e| e.is_major()).count();
            for (s, &range) in stats.iter_mut().zip(ranges) {
                s.cycles += 1;
                s.potential_majors += majors;
                s.deterred += deterred_count(&events, &placement, range);
            }
        }
        Ok::<_, Error>(stats)
    })?;
    let mut out = Vec::with_capacity(ranges.len() * trials);
    for (i, &range) in ranges.iter().enumerate() {
        for (trial, stats) in per_trial.iter().enumerate() {
            out.push(record(range, trial, &stats[i]));
        }
    }
    Ok(out)
}

/// One point of the deterrence-versus-range plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub range_m: f64,
    pub mean_ratio: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Per-range mean ratio and standard error, ranges ascending.
pub fn plot_points(records: &[SweepRecord]) -> Vec<PlotPoint> {
    let mut ranges: Vec<f64> = records.iter().map(|r| r.range_m).collect();
    ranges.sort_by(f64::total_cmp);
    ranges.dedup();
    ranges
        .into_iter()
        .map(|range_m| {
            let ratios: Vec<f64> = records
                .iter()
                .filter(|r| r.range_m == range_m)
                .map(|r| r.ratio)
                .collect();
            let (mean_ratio, stderr) = skywatch::di::mean_stderr(&ratios);
            PlotPoint {
                range_m,
                mean_ratio,
                stderr,
                n: ratios.len(),
            }
        })
        .collect()
}

/// Plot-data text: a comment line marking the logarithmic x axis, then
/// CSV with columns `range_m,mean_ratio,stderr,n`.
pub fn emit_plotdata(sweep_csv: &Path) -> Result<String> {
    let records: Vec<SweepRecord> = skywatch::io::read_csv(sweep_csv).map_err(|e| match e {
        Error::Csv(c) => Error::Parse(format!("{}: {c}", sweep_csv.display())),
        other => other,
    })?;
    if records.is_empty() {
        return Err(Error::Parse(format!(
            "{} has no sweep rows",
            sweep_csv.display()
        )));
    }
    plotdata_text(&records)
}

pub fn plotdata_text(records: &[SweepRecord]) -> Result<String> {
    let body = skywatch::io::csv_bytes(&plot_points(records))?;
    Ok(format!(
        "# x=range_m scale=log10\n{}",
        String::from_utf8(body).expect("csv is utf-8")
    ))
}
