//! Episodic UAV placement environment.
//!
//! One step is one weekly control cycle. The agent assigns every UAV a grid
//! cell and a role, the cycle's crimes are replayed against that placement,
//! and the reward is the number of major crimes inside deterrence range.
//! The observation is the frozen predictor's forecast over the history of
//! sensed misdemeanor counts.

mod episodes;
pub mod protocol;

pub use episodes::{folded_episode, predictor_training_set, split_episodes, Episode, YearSplit};

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crime::{CrimeEvent, Split};
use crate::error::{Error, Result};
use crate::io::write_csv;
use crate::nn::Tensor;
use crate::ppo::Environment;
use crate::predictor::{predict_counts, PredictorModel};
use crate::rng::{stream, streams};
use crate::world::{build_grid, evaluate_cycle, Grid, Placement, Role, UavAssignment, WorldConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub world: WorldConfig,
    pub episode_cycles: usize,
    pub split: Split,
    pub predictor_checkpoint: Option<PathBuf>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            world: WorldConfig::default(),
            episode_cycles: 52,
            split: Split::Train,
            predictor_checkpoint: None,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        if self.episode_cycles == 0 {
            return Err(Error::Config("episode_cycles must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Joint action: one cell and one role per UAV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionVector {
    pub cells: Vec<usize>,
    pub roles: Vec<Role>,
}

impl ActionVector {
    pub fn uniform(cell: usize, role: Role, uav_total: usize) -> Self {
        ActionVector {
            cells: vec![cell; uav_total],
            roles: vec![role; uav_total],
        }
    }

    /// Decodes policy head outputs: `uav_total` cell choices then
    /// `uav_total` role indices.
    pub fn from_heads(heads: &[usize], uav_total: usize) -> Result<Self> {
        if heads.len() != 2 * uav_total {
            return Err(Error::Domain(format!(
                "expected {} head outputs, got {}",
                2 * uav_total,
                heads.len()
            )));
        }
        let roles = heads[uav_total..]
            .iter()
            .map(|&r| Role::from_index(r).ok_or_else(|| Error::Domain(format!("role index {r}"))))
            .collect::<Result<_>>()?;
        Ok(ActionVector {
            cells: heads[..uav_total].to_vec(),
            roles,
        })
    }

    pub fn to_heads(&self) -> Vec<usize> {
        self.cells
            .iter()
            .copied()
            .chain(self.roles.iter().map(|r| r.index()))
            .collect()
    }

    pub fn validate(&self, uav_total: usize, grid_size: usize) -> Result<()> {
        if self.cells.len() != uav_total || self.roles.len() != uav_total {
            return Err(Error::Domain(format!(
                "action covers {} cells and {} roles for {uav_total} UAVs",
                self.cells.len(),
                self.roles.len()
            )));
        }
        if let Some(c) = self.cells.iter().find(|&&c| c >= grid_size) {
            return Err(Error::Domain(format!(
                "cell {c} outside grid of {grid_size}"
            )));
        }
        Ok(())
    }

    pub fn assignments(&self) -> Vec<UavAssignment> {
        self.cells
            .iter()
            .zip(&self.roles)
            .enumerate()
            .map(|(uav_id, (&cell_index, &role))| UavAssignment {
                uav_id,
                cell_index,
                role,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub potential_majors: usize,
    pub deterred: usize,
    pub sensed: usize,
    pub sensing_uavs: usize,
    pub computing_uavs: usize,
    pub deterrence_uavs: usize,
    pub reachable_sensing: usize,
    pub links: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub cycles: usize,
    pub deterred: usize,
    pub potential_majors: usize,
}

/// Deterred over potential majors; zero when there were none.
pub fn deterrence_ratio(stats: &EpisodeStats) -> f64 {
    if stats.potential_majors == 0 {
        0.0
    } else {
        stats.deterred as f64 / stats.potential_majors as f64
    }
}

/// One row of the episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub cycle: usize,
    pub date: String,
    pub reward: f64,
    pub deterred: usize,
    pub potential_majors: usize,
    pub sensed: usize,
    pub sensing_uavs: usize,
    pub computing_uavs: usize,
    pub deterrence_uavs: usize,
    pub reachable_sensing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenderState {
    pub episode: String,
    pub cycle: usize,
    pub done: bool,
    pub stats: EpisodeStats,
    pub history: Vec<Vec<f64>>,
    pub uavs: Vec<RenderedUav>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenderedUav {
    pub uav_id: usize,
    pub cell_index: usize,
    pub role: Role,
    pub x_m: f64,
    pub y_m: f64,
}

#[derive(Debug, Clone)]
struct Running {
    episode: usize,
    cursor: usize,
    history: VecDeque<Vec<f64>>,
    stats: EpisodeStats,
    placement: Option<Placement>,
}

#[derive(Debug, Clone)]
pub struct CrimeEnv {
    config: EnvConfig,
    grid: Arc<Grid>,
    episodes: Arc<Vec<Episode>>,
    predictor: Option<Arc<PredictorModel>>,
    state: Option<Running>,
    log: Vec<StepRecord>,
}

impl CrimeEnv {
    /// `predictor` may be omitted when the config names a checkpoint; it is
    /// then loaded on the first reset.
    pub fn new(
        config: EnvConfig,
        episodes: Arc<Vec<Episode>>,
        predictor: Option<Arc<PredictorModel>>,
    ) -> Result<Self> {
        config.validate()?;
        let grid = Arc::new(build_grid(&config.world)?);
        Self::with_grid(config, grid, episodes, predictor)
    }

    /// Shares an already built grid between many environments.
    pub fn with_grid(
        config: EnvConfig,
        grid: Arc<Grid>,
        episodes: Arc<Vec<Episode>>,
        predictor: Option<Arc<PredictorModel>>,
    ) -> Result<Self> {
        config.validate()?;
        if episodes.is_empty() {
            return Err(Error::InsufficientData(
                "environment has no episodes".into(),
            ));
        }
        for ep in episodes.iter() {
            if ep.cycles.len() < config.episode_cycles {
                return Err(Error::InsufficientData(format!(
                    "episode {} has {} cycles, {} required",
                    ep.label,
                    ep.cycles.len(),
                    config.episode_cycles
                )));
            }
            if ep.block_count() != config.world.block_count {
                return Err(Error::Config(format!(
                    "episode {} has {} blocks, world expects {}",
                    ep.label,
                    ep.block_count(),
                    config.world.block_count
                )));
            }
        }
        let mut env = CrimeEnv {
            config,
            grid,
            episodes,
            predictor: None,
            state: None,
            log: Vec::new(),
        };
        if let Some(p) = predictor {
            env.check_predictor(&p)?;
            env.predictor = Some(p);
        }
        Ok(env)
    }

    fn check_predictor(&self, p: &PredictorModel) -> Result<()> {
        if p.block_count != self.config.world.block_count {
            return Err(Error::Config(format!(
                "predictor forecasts {} blocks, world has {}",
                p.block_count, self.config.world.block_count
            )));
        }
        if self
            .episodes
            .iter()
            .any(|e| e.prelude.dim(0) < p.config.window_len)
        {
            return Err(Error::Config(format!(
                "episode preludes are shorter than the predictor window {}",
                p.config.window_len
            )));
        }
        Ok(())
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    pub fn log(&self) -> &[StepRecord] {
        &self.log
    }

    pub fn stats(&self) -> Option<EpisodeStats> {
        self.state.as_ref().map(|s| s.stats)
    }

    pub fn is_done(&self) -> bool {
        self.state
            .as_ref()
            .is_some_and(|s| s.cursor >= self.config.episode_cycles)
    }

    /// Events of the cycle the next step will replay.
    pub fn pending_cycle(&self) -> Option<&[CrimeEvent]> {
        let s = self.state.as_ref()?;
        self.episodes[s.episode]
            .cycles
            .get(s.cursor)
            .map(Vec::as_slice)
    }

    fn ensure_predictor(&mut self) -> Result<Arc<PredictorModel>> {
        if let Some(p) = &self.predictor {
            return Ok(p.clone());
        }
        let path = self
            .config
            .predictor_checkpoint
            .clone()
            .ok_or_else(|| Error::Config("no predictor checkpoint configured".into()))?;
        if !path.exists() {
            return Err(Error::Config(format!(
                "predictor checkpoint {} not found",
                path.display()
            )));
        }
        let model = Arc::new(PredictorModel::load(&path)?);
        self.check_predictor(&model)?;
        self.predictor = Some(model.clone());
        Ok(model)
    }

    fn observe(predictor: &PredictorModel, history: &VecDeque<Vec<f64>>) -> Result<Vec<f64>> {
        let rows: Vec<Vec<f64>> = history.iter().cloned().collect();
        predict_counts(predictor, &Tensor::from_rows(&rows)?)
    }

    /// Starts an episode. On the training split the seed picks which
    /// composite year is replayed.
    pub fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let predictor = self.ensure_predictor()?;
        let episode = if self.episodes.len() == 1 {
            0
        } else {
            stream(seed, streams::ENV).random_range(0..self.episodes.len())
        };
        let prelude = &self.episodes[episode].prelude;
        let w = predictor.config.window_len;
        let history: VecDeque<Vec<f64>> = (prelude.dim(0) - w..prelude.dim(0))
            .map(|r| prelude.row(r).to_vec())
            .collect();
        let obs = Self::observe(&predictor, &history)?;
        self.state = Some(Running {
            episode,
            cursor: 0,
            history,
            stats: EpisodeStats::default(),
            placement: None,
        });
        self.log.clear();
        Ok(obs)
    }

    pub fn step(&mut self, action: &ActionVector) -> Result<EnvStep> {
        let predictor = self
            .predictor
            .clone()
            .ok_or_else(|| Error::State("step before reset".into()))?;
        let horizon = self.config.episode_cycles;
        let world = &self.config.world;
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::State("step before reset".into()))?;
        if state.cursor >= horizon {
            return Err(Error::State("episode is done; call reset".into()));
        }
        action.validate(world.uav_total, self.grid.len())?;
        let placement = Placement::new(action.assignments(), &self.grid, world)?;

        let episode = &self.episodes[state.episode];
        let events: Vec<&CrimeEvent> = episode.cycles[state.cursor].iter().collect();
        let outcome = evaluate_cycle(&events, &placement, world);

        let mut counts = vec![0.0; world.block_count];
        for e in &outcome.sensed {
            counts[e.block_id] += 1.0;
        }
        state.history.pop_front();
        state.history.push_back(counts);
        let observation = Self::observe(&predictor, &state.history)?;

        let [sensing, computing, deterrence] = placement.role_counts();
        let info = StepInfo {
            potential_majors: outcome.potential_majors,
            deterred: outcome.deterred,
            sensed: outcome.sensed.len(),
            sensing_uavs: sensing,
            computing_uavs: computing,
            deterrence_uavs: deterrence,
            reachable_sensing: outcome.connectivity.reachable_sensing(),
            links: outcome.connectivity.edges.len(),
        };
        self.log.push(StepRecord {
            cycle: state.cursor,
            date: episode.cycle_dates[state.cursor].to_string(),
            reward: info.deterred as f64,
            deterred: info.deterred,
            potential_majors: info.potential_majors,
            sensed: info.sensed,
            sensing_uavs: sensing,
            computing_uavs: computing,
            deterrence_uavs: deterrence,
            reachable_sensing: info.reachable_sensing,
        });
        state.stats.cycles += 1;
        state.stats.deterred += info.deterred;
        state.stats.potential_majors += info.potential_majors;
        state.cursor += 1;
        state.placement = Some(placement);
        Ok(EnvStep {
            observation,
            reward: info.deterred as f64,
            done: state.cursor >= horizon,
            info,
        })
    }

    pub fn render(&self) -> Result<RenderState> {
        let s = self
            .state
            .as_ref()
            .ok_or_else(|| Error::State("render before reset".into()))?;
        let uavs = s
            .placement
            .as_ref()
            .map(|p| {
                p.assignments
                    .iter()
                    .zip(&p.positions)
                    .map(|(a, pos)| RenderedUav {
                        uav_id: a.uav_id,
                        cell_index: a.cell_index,
                        role: a.role,
                        x_m: pos[0],
                        y_m: pos[1],
                    })
                    .collect()
            })
            .unwrap_or_default();
        Ok(RenderState {
            episode: self.episodes[s.episode].label.clone(),
            cycle: s.cursor,
            done: s.cursor >= self.config.episode_cycles,
            stats: s.stats,
            history: s.history.iter().cloned().collect(),
            uavs,
        })
    }

    pub fn write_log(&self, path: &Path) -> Result<()> {
        write_csv(path, &self.log)
    }
}

impl Environment for CrimeEnv {
    fn observation_size(&self) -> usize {
        self.config.world.block_count
    }

    fn action_heads(&self) -> Vec<usize> {
        let u = self.config.world.uav_total;
        let mut heads = vec![self.grid.len(); u];
        heads.extend(std::iter::repeat_n(Role::ALL.len(), u));
        heads
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        CrimeEnv::reset(self, seed)
    }

    fn step(&mut self, action: &[usize]) -> Result<(Vec<f64>, f64, bool)> {
        let a = ActionVector::from_heads(action, self.config.world.uav_total)?;
        let s = CrimeEnv::step(self, &a)?;
        Ok((s.observation, s.reward, s.done))
    }
}
