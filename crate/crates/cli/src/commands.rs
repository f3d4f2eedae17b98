//! Subcommand definitions and their drivers.

use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use skywatch::crime::events::events_csv;
use skywatch::crime::Split;
use skywatch::io::{csv_bytes, write_atomic};
use skywatch::ppo::PolicyNetwork;
use skywatch::predictor::PredictorModel;
use skywatch::{Error, Result};

use crate::config::ExperimentConfig;
use crate::crime_runs::{self, CrimeWorld};
use crate::di_runs;

#[derive(Debug, Parser)]
#[command(
    name = "skywatch",
    version,
    about = "UAV crime-deterrence and distributed-inference experiments"
)]
pub struct Cli {
    /// Experiment config (TOML); built-in defaults when omitted.
    #[arg(long, global = true, env = "SKYWATCH_CONFIG")]
    pub config: Option<PathBuf>,
    /// Overrides the config's global seed.
    #[arg(long, global = true, env = "SKYWATCH_SEED")]
    pub seed: Option<u64>,
    /// Output directory; inputs of later stages are read from here too.
    #[arg(long, global = true, env = "SKYWATCH_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Overrides the trials per range (crime sweeps) or loss seeds (DI sweep).
    #[arg(long, global = true, env = "SKYWATCH_TRIALS")]
    pub trials: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Writes a synthetic raw crime CSV for the configured block layout.
    SynthData,
    /// Parses, filters and geolocates a raw crime CSV into events.csv.
    Ingest {
        /// Raw CSV; defaults to the config's data.raw_csv.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Fits the crime-count forecaster on the training years.
    TrainPredictor,
    /// Trains one placement policy per deterrence range.
    TrainPolicy,
    /// Replays the test year with the trained policies.
    EvalSweep,
    /// Random all-deterrence placement on the test year.
    Baseline,
    /// Per-range mean and standard error of a sweep CSV.
    Plot {
        #[arg(long)]
        input: PathBuf,
    },
    /// Trains the conventional and dropout fine-tuned image classifiers.
    DiTrain,
    /// Accuracy of the split classifiers under link packet loss.
    DiSweep,
    /// Serves the crime environment as JSON lines on stdin/stdout.
    EnvServe {
        #[arg(long)]
        range: Option<f64>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
}

pub mod files {
    pub const RAW: &str = "raw_crimes.csv";
    pub const SYNTH_SUMMARY: &str = "synth_summary.csv";
    pub const EVENTS: &str = "events.csv";
    pub const INGEST_REPORT: &str = "ingest_report.csv";
    pub const PREDICTOR: &str = "predictor.ckpt";
    pub const PREDICTOR_LOSS: &str = "predictor_loss.csv";
    pub const POLICY_SUMMARY: &str = "policy_summary.csv";
    pub const RL_SWEEP: &str = "rl_sweep.csv";
    pub const RL_PLOT: &str = "rl_plot.txt";
    pub const BASELINE_SWEEP: &str = "baseline_sweep.csv";
    pub const BASELINE_PLOT: &str = "baseline_plot.txt";
    pub const DI_CLEAN: &str = "di_clean.csv";
    pub const DI_SWEEP: &str = "di_sweep.csv";
    pub const DI_PLOT: &str = "di_plot.csv";
}

pub fn policy_path(out: &Path, range_m: f64) -> PathBuf {
    out.join(format!("policy_{range_m}m.ckpt"))
}

pub fn curve_path(out: &Path, range_m: f64) -> PathBuf {
    out.join(format!("curve_{range_m}m.csv"))
}

/// Config with command-line overrides applied, fully validated.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.sweep.trials = trials;
        cfg.di.loss_seeds = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Files produced by one command, written only once all are computed.
#[derive(Default)]
struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    fn add(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.files.push((path, bytes));
    }

    fn csv<S: Serialize>(&mut self, path: PathBuf, rows: &[S]) -> Result<()> {
        let bytes = csv_bytes(rows)?;
        self.add(path, bytes);
        Ok(())
    }

    fn commit(self, out: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let mut written = Vec::new();
        for (path, bytes) in self.files {
            write_atomic(&path, &bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn require(path: &Path, producer: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{} not found; run `{producer}` first",
            path.display()
        )))
    }
}

fn load_world(cfg: &ExperimentConfig, out: &Path) -> Result<CrimeWorld> {
    let events_path = out.join(files::EVENTS);
    let predictor_path = out.join(files::PREDICTOR);
    require(&events_path, "ingest")?;
    require(&predictor_path, "train-predictor")?;
    let events = crime_runs::load_events(&events_path)?;
    let predictor = PredictorModel::load(&predictor_path)?;
    CrimeWorld::prepare(cfg, &events, predictor)
}

fn load_policies(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<(f64, PolicyNetwork)>> {
    cfg.sweep
        .ranges_m
        .iter()
        .map(|&range| {
            let path = policy_path(out, range);
            require(&path, "train-policy")?;
            Ok((range, PolicyNetwork::load(&path)?))
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct PolicySummary {
    range_m: f64,
    updates: usize,
    env_steps: usize,
    first_mean_reward: f64,
    last_mean_reward: f64,
    stopped_on_plateau: bool,
}

/// Runs the parsed command, returning the files it wrote.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let cfg = resolve_config(cli)?;
    let exec = cfg.execution();
    let out = cli.out.as_path();
    let mut outputs = Outputs::default();
    match &cli.command {
        Command::SynthData => {
            let (bytes, summary) = crime_runs::synth_raw(&cfg)?;
            outputs.add(out.join(files::RAW), bytes);
            outputs.csv(out.join(files::SYNTH_SUMMARY), &[summary])?;
        }
        Command::Ingest { input } => {
            let raw = input
                .clone()
                .or_else(|| cfg.data.raw_csv.clone())
                .ok_or_else(|| {
                    Error::Config("no raw CSV: pass --input or set data.raw_csv".into())
                })?;
            require(&raw, "synth-data")?;
            let (events, report) = crime_runs::ingest(&cfg, &raw)?;
            outputs.add(out.join(files::EVENTS), events_csv(&events)?);
            outputs.csv(out.join(files::INGEST_REPORT), &[report])?;
        }
        Command::TrainPredictor => {
            let events_path = out.join(files::EVENTS);
            require(&events_path, "ingest")?;
            let events = crime_runs::load_events(&events_path)?;
            let (model, losses) = crime_runs::fit_predictor(&cfg, &events)?;
            outputs.add(
                out.join(files::PREDICTOR),
                model.checkpoint().to_text().into_bytes(),
            );
            outputs.csv(out.join(files::PREDICTOR_LOSS), &losses)?;
        }
        Command::TrainPolicy => {
            let world = load_world(&cfg, out)?;
            let mut summaries = Vec::new();
            let mut curves = Vec::new();
            let policies = crime_runs::train_policies(&cfg, &world, exec, |range, outcome| {
                let first = outcome.curve.first();
                let last = outcome.curve.last();
                summaries.push(PolicySummary {
                    range_m: range,
                    updates: outcome.curve.len(),
                    env_steps: last.map_or(0, |c| c.env_steps),
                    first_mean_reward: first.map_or(0.0, |c| c.mean_reward),
                    last_mean_reward: last.map_or(0.0, |c| c.mean_reward),
                    stopped_on_plateau: outcome.stopped_on_plateau,
                });
                curves.push((range, csv_bytes(&outcome.curve)?));
                Ok(())
            })?;
            for (range, policy) in &policies {
                outputs.add(
                    policy_path(out, *range),
                    policy.checkpoint().to_text().into_bytes(),
                );
            }
            for (range, bytes) in curves {
                outputs.add(curve_path(out, range), bytes);
            }
            outputs.csv(out.join(files::POLICY_SUMMARY), &summaries)?;
        }
        Command::EvalSweep => {
            let policies = load_policies(&cfg, out)?;
            let world = load_world(&cfg, out)?;
            let records =
                crime_runs::run_deterrence_sweep(&cfg, &world, &policies, cfg.sweep.trials, exec)?;
            outputs.csv(out.join(files::RL_SWEEP), &records)?;
            outputs.add(
                out.join(files::RL_PLOT),
                crime_runs::plotdata_text(&records)?.into_bytes(),
            );
        }
        Command::Baseline => {
            let events_path = out.join(files::EVENTS);
            require(&events_path, "ingest")?;
            let events = crime_runs::load_events(&events_path)?;
            let test = crime_runs::episodes(&cfg, &events, Split::Test)?;
            let grid = skywatch::world::build_grid(&cfg.world)?;
            let records = crime_runs::run_random_baseline(
                &cfg,
                &grid,
                &test[0],
                &cfg.sweep.ranges_m,
                cfg.sweep.trials,
                exec,
            )?;
            outputs.csv(out.join(files::BASELINE_SWEEP), &records)?;
            outputs.add(
                out.join(files::BASELINE_PLOT),
                crime_runs::plotdata_text(&records)?.into_bytes(),
            );
        }
        Command::Plot { input } => {
            let text = crime_runs::emit_plotdata(input)?;
            let stem = input
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("sweep");
            outputs.add(out.join(format!("{stem}_plot.txt")), text.into_bytes());
        }
        Command::DiTrain => {
            let (models, clean) = di_runs::train(&cfg, exec)?;
            for (tag, net) in &models {
                outputs.add(
                    di_runs::model_path(out, tag),
                    net.checkpoint().to_text().into_bytes(),
                );
            }
            outputs.csv(out.join(files::DI_CLEAN), &clean)?;
        }
        Command::DiSweep => {
            let models = di_runs::load_models(&cfg, out)?;
            let (rows, plot) = di_runs::sweep(&cfg, &models, exec)?;
            outputs.csv(out.join(files::DI_SWEEP), &rows)?;
            outputs.csv(out.join(files::DI_PLOT), &plot)?;
        }
        Command::EnvServe { range, split } => {
            let world = load_world(&cfg, out)?;
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            let range = range.unwrap_or(cfg.world.deterrence_range_m);
            let mut env = world.env(&cfg, split, range)?;
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            skywatch::env::protocol::serve(&mut env, BufReader::new(stdin.lock()), stdout.lock())?;
            std::io::stdout()
                .flush()
                .map_err(|e| Error::io("<stdout>", e))?;
        }
    }
    outputs.commit(out)
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err.class() {
        skywatch::ErrorClass::Config => 2,
        skywatch::ErrorClass::Data => 3,
        skywatch::ErrorClass::Numeric => 4,
    }
}
