//! Tiny end-to-end pipeline driven through the built binary.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const TINY_CONFIG: &str = r#"
seed = 11

[data]
raw_csv = "raw_crimes.csv"

[data.synth]
first_year = 2012
last_year = 2016

[world]
placement_radius_m = 1200.0
grid_spacing_m = 400.0
uav_total = 4

[env]
episode_cycles = 6

[predictor]
hidden_units = 6
epochs = 2
batch_size = 16

[ppo]
n_steps = 32
minibatch_size = 16
epochs_per_update = 2
total_steps = 96
hidden = [16]
plateau_window = 0

[sweep]
ranges_m = [160.0, 640.0]
trials = 2

[di]
train_images = 120
test_images = 60
dropout_rates = [0.5]
plans = [{ cut_a = 1, cut_b = 3 }]
p_grid = [0.0, 0.5]
loss_seeds = 2

[di.net]
channels = [4, 4, 4, 4, 4]
fc_hidden = 8

[di.pretrain]
epochs = 1
batch_size = 32
learning_rate = 0.001

[di.finetune]
epochs = 1
batch_size = 32
learning_rate = 0.0005
"#;

/// Every subcommand that writes files, in dependency order.
pub const PIPELINE: &[&[&str]] = &[
    &["synth-data"],
    &["ingest"],
    &["train-predictor"],
    &["train-policy"],
    &["eval-sweep"],
    &["baseline"],
    &["plot", "--input", "baseline_sweep.csv"],
    &["di-train"],
    &["di-sweep"],
];

pub fn skywatch(dir: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_skywatch"));
    cmd.current_dir(dir);
    for var in [
        "SKYWATCH_CONFIG",
        "SKYWATCH_SEED",
        "SKYWATCH_OUT",
        "SKYWATCH_TRIALS",
    ] {
        cmd.env_remove(var);
    }
    cmd.args(args).output().expect("binary runs")
}

/// Writes the tiny config into `dir` and runs the whole pipeline there.
pub fn run_pipeline(dir: &Path) -> Result<(), String> {
    std::fs::write(dir.join("tiny.toml"), TINY_CONFIG).map_err(|e| e.to_string())?;
    for step in PIPELINE {
        let mut args = vec!["--config", "tiny.toml", "--out", "."];
        args.extend_from_slice(step);
        let out = skywatch(dir, &args);
        if !out.status.success() {
            return Err(format!(
                "{step:?}: {}",
                String::from_utf8_lossy(&out.stderr)
            ));
        }
    }
    Ok(())
}

/// Output files of a pipeline directory, sorted, excluding the config.
pub fn outputs(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().is_some_and(|n| n != "tiny.toml"))
        .collect();
    files.sort();
    files
}
