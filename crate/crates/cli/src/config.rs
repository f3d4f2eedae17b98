//! Experiment configuration, read from TOML. Every section is optional and
//! falls back to the documented defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use skywatch::crime::synth::SynthConfig;
use skywatch::crime::{BlockDef, BlockMap, SchemaConfig, SeverityClassifier, WindowSpec};
use skywatch::di::DiConfig;
use skywatch::env::YearSplit;
use skywatch::ppo::PpoConfig;
use skywatch::predictor::PredictorConfig;
use skywatch::world::WorldConfig;
use skywatch::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Run independent trials and sweep cells on the thread pool.
    pub parallel: bool,
    pub data: DataConfig,
    pub world: WorldConfig,
    pub env: EnvSection,
    pub predictor: PredictorConfig,
    pub ppo: PpoConfig,
    pub sweep: SweepConfig,
    pub di: DiConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            parallel: true,
            data: DataConfig::default(),
            world: WorldConfig::default(),
            env: EnvSection::default(),
            predictor: PredictorConfig::default(),
            ppo: PpoConfig::default(),
            sweep: SweepConfig::default(),
            di: DiConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Raw open-data CSV read by `ingest`. Relative paths resolve against
    /// the config file's directory.
    pub raw_csv: Option<PathBuf>,
    pub layout: BlockLayout,
    /// Explicit block rectangles; replaces the tiling when non-empty.
    pub blocks: Vec<BlockDef>,
    pub schema: SchemaConfig,
    pub window: WindowSpec,
    pub severity: SeverityClassifier,
    pub years: YearSplit,
    pub synth: SynthConfig,
}

/// Regular tiling of the study region, centered on the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockLayout {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub cols: usize,
    pub rows: usize,
    pub block_width_m: f64,
    pub block_height_m: f64,
}

impl Default for BlockLayout {
    fn default() -> Self {
        BlockLayout {
            origin_lat: 41.7508,
            origin_lon: -87.6288,
            cols: 4,
            rows: 3,
            block_width_m: 600.0,
            block_height_m: 600.0,
        }
    }
}

impl DataConfig {
    pub fn block_map(&self) -> BlockMap {
        if self.blocks.is_empty() {
            let l = &self.layout;
            BlockMap::tiling(
                l.origin_lat,
                l.origin_lon,
                l.cols,
                l.rows,
                l.block_width_m,
                l.block_height_m,
            )
        } else {
            BlockMap {
                origin_lat: self.layout.origin_lat,
                origin_lon: self.layout.origin_lon,
                blocks: self.blocks.clone(),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub episode_cycles: usize,
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection { episode_cycles: 52 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub ranges_m: Vec<f64>,
    pub trials: usize,
    /// Evaluate policies by their most likely action instead of sampling.
    pub greedy_eval: bool,
    /// Initialise each range's policy from the previous range's.
    pub warm_start: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            ranges_m: vec![80.0, 160.0, 320.0, 640.0, 1280.0],
            trials: 10,
            greedy_eval: false,
            warm_start: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    /// Reads a config file; relative data paths become relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(raw), Some(dir)) = (&cfg.data.raw_csv, path.parent()) {
            if raw.is_relative() {
                cfg.data.raw_csv = Some(dir.join(raw));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.predictor.validate()?;
        self.ppo.validate()?;
        self.data.years.validate()?;
        self.data.block_map().validate()?;
        self.di.validate()?;
        if self.data.block_map().len() != self.world.block_count {
            return Err(Error::Config(format!(
                "world.block_count is {} but the layout has {} blocks",
                self.world.block_count,
                self.data.block_map().len()
            )));
        }
        if self.env.episode_cycles == 0 {
            return Err(Error::Config("env.episode_cycles must be ≥ 1".into()));
        }
        if self.sweep.ranges_m.is_empty()
            || self
                .sweep
                .ranges_m
                .iter()
                .any(|r| !(r.is_finite() && *r > 0.0))
        {
            return Err(Error::Config(
                "sweep.ranges_m must be non-empty and positive".into(),
            ));
        }
        if self.sweep.trials == 0 {
            return Err(Error::Config("sweep.trials must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn execution(&self) -> skywatch::par::Execution {
        if self.parallel {
            skywatch::par::Execution::Parallel
        } else {
            skywatch::par::Execution::Sequential
        }
    }
}
