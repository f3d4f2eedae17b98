//! Proximal policy optimisation over factored discrete actions.
//!
//! The policy emits one categorical distribution per action component. The
//! trainer alternates rollout collection, generalized advantage estimation
//! and several epochs of clipped-surrogate minibatch updates.

mod buffer;
mod policy;
mod update;

pub use buffer::{compute_gae, RolloutBuffer};
pub use policy::{
    sample_action, sample_categorical, PolicyNetwork, PolicyOutput, RunningNorm, Sampled,
    TrunkActivation,
};
pub use update::{loss_and_grad, ppo_update, Batch, ClipMode, LossParts, UpdateStats};

use std::path::Path;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_csv;
use crate::nn::{AdamConfig, AdamState, Parameterized};
use crate::par::{map_mut, Execution};
use crate::rng::{indexed, stream, streams, SimRng};

/// Episodic environment with a flat observation and factored discrete
/// actions.
pub trait Environment: Send {
    fn observation_size(&self) -> usize;
    /// Number of choices of each action component.
    fn action_heads(&self) -> Vec<usize>;
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;
    /// Returns `(observation, reward, done)`.
    fn step(&mut self, action: &[usize]) -> Result<(Vec<f64>, f64, bool)>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip_epsilon: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    /// Transitions collected per update, summed over environments.
    pub n_steps: usize,
    pub n_envs: usize,
    pub learning_rate: f64,
    pub adam_epsilon: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub total_steps: usize,
    pub hidden: Vec<usize>,
    pub activation: TrunkActivation,
    pub normalize_observations: bool,
    pub normalize_advantages: bool,
    pub clip_mode: ClipMode,
    /// Updates compared by the plateau stop; 0 disables it.
    pub plateau_window: usize,
    pub plateau_min_improvement: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip_epsilon: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            epochs_per_update: 10,
            minibatch_size: 64,
            n_steps: 2048,
            n_envs: 1,
            learning_rate: 3e-4,
            adam_epsilon: 1e-5,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            total_steps: 100_000,
            hidden: vec![64, 64],
            activation: TrunkActivation::Tanh,
            normalize_observations: true,
            normalize_advantages: true,
            clip_mode: ClipMode::Joint,
            plateau_window: 20,
            plateau_min_improvement: 0.01,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.clip_epsilon <= 0.0 || !self.clip_epsilon.is_finite() {
            return bad("clip_epsilon must be > 0");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and gae_lambda must lie in [0, 1]");
        }
        if self.n_envs == 0
            || self.n_steps < self.n_envs
            || self.minibatch_size == 0
            || self.epochs_per_update == 0
        {
            return bad("n_envs, n_steps, minibatch_size and epochs_per_update must be ≥ 1 with n_steps ≥ n_envs");
        }
        if self.learning_rate <= 0.0 || self.max_grad_norm <= 0.0 {
            return bad("learning_rate and max_grad_norm must be > 0");
        }
        if self.plateau_window % 2 == 1 {
            return bad("plateau_window must be even");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            epsilon: self.adam_epsilon,
            ..AdamConfig::default()
        }
    }

    pub fn steps_per_env(&self) -> usize {
        self.n_steps / self.n_envs
    }

    pub fn planned_updates(&self) -> usize {
        let per = self.steps_per_env() * self.n_envs;
        self.total_steps.div_ceil(per).max(1)
    }
}

/// One learning-curve row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub update_index: usize,
    pub env_steps: usize,
    pub mean_reward: f64,
    pub entropy: f64,
    pub value_loss: f64,
}

pub fn write_curve(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    write_csv(path, curve)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: PolicyNetwork,
    pub curve: Vec<CurvePoint>,
    pub stopped_on_plateau: bool,
}

/// True when the mean reward of the latest half of the window improved on
/// the earlier half by less than the configured relative margin.
pub fn plateaued(curve: &[CurvePoint], window: usize, min_improvement: f64) -> bool {
    if window == 0 || curve.len() < window {
        return false;
    }
    let tail = &curve[curve.len() - window..];
    let half = window / 2;
    let mean = |s: &[CurvePoint]| s.iter().map(|c| c.mean_reward).sum::<f64>() / s.len() as f64;
    let early = mean(&tail[..half]);
    let late = mean(&tail[half..]);
    (late - early) < min_improvement * early.abs().max(1e-12)
}

struct Worker<E> {
    env: E,
    sampler: SimRng,
    resets: SimRng,
    obs: Vec<f64>,
    episode_return: f64,
}

struct Segment {
    raw_obs: Vec<Vec<f64>>,
    buffer: RolloutBuffer,
    advantages: Vec<f64>,
    returns: Vec<f64>,
    finished_returns: Vec<f64>,
}

impl<E: Environment> Worker<E> {
    fn collect(
        &mut self,
        policy: &PolicyNetwork,
        steps: usize,
        config: &PpoConfig,
    ) -> Result<Segment> {
        let mut buffer = RolloutBuffer::new(steps);
        let mut raw_obs = Vec::with_capacity(steps);
        let mut finished_returns = Vec::new();
        while !buffer.is_full() {
            let s = policy.act(&self.obs, &mut self.sampler, false)?;
            let (next, reward, done) = self.env.step(&s.action)?;
            raw_obs.push(std::mem::replace(&mut self.obs, next));
            buffer.push(
                policy.obs_norm.normalize(raw_obs.last().expect("pushed")),
                s.action,
                s.head_log_probs,
                reward,
                s.value,
                done,
            )?;
            self.episode_return += reward;
            if done {
                finished_returns.push(self.episode_return);
                self.episode_return = 0.0;
                self.obs = self.env.reset(self.resets.next_u64())?;
            }
        }
        let last_value = policy
            .act(&self.obs, &mut self.sampler.clone(), true)?
            .value;
        let (advantages, returns) =
            compute_gae(&buffer, last_value, config.gamma, config.gae_lambda)?;
        Ok(Segment {
            raw_obs,
            buffer,
            advantages,
            returns,
            finished_returns,
        })
    }
}

/// Trains a fresh policy. `env_factory(i)` builds the `i`-th rollout
/// environment. The result depends only on `(config, seed)`, not on
/// `exec`.
pub fn train<E, F>(
    env_factory: F,
    config: &PpoConfig,
    seed: u64,
    exec: Execution,
) -> Result<TrainOutcome>
where
    E: Environment,
    F: Fn(usize) -> Result<E>,
{
    train_from(env_factory, config, seed, exec, None)
}

/// [`train`] starting from `initial` weights and normalizer instead of a
/// fresh network.
pub fn train_from<E, F>(
    env_factory: F,
    config: &PpoConfig,
    seed: u64,
    exec: Execution,
    initial: Option<PolicyNetwork>,
) -> Result<TrainOutcome>
where
    E: Environment,
    F: Fn(usize) -> Result<E>,
{
    config.validate()?;
    let mut workers = Vec::with_capacity(config.n_envs);
    for i in 0..config.n_envs {
        let mut env = env_factory(i)?;
        let mut resets = indexed(seed, streams::ENV, i as u64);
        let obs = env.reset(resets.next_u64())?;
        workers.push(Worker {
            env,
            sampler: indexed(seed, streams::POLICY_SAMPLING, i as u64),
            resets,
            obs,
            episode_return: 0.0,
        });
    }
    let obs_size = workers[0].env.observation_size();
    let heads = workers[0].env.action_heads();
    if workers
        .iter()
        .any(|w| w.env.observation_size() != obs_size || w.env.action_heads() != heads)
    {
        return Err(Error::Config(
            "rollout environments disagree on shapes".into(),
        ));
    }
    let mut policy = match initial {
        Some(p) => {
            if p.obs_size != obs_size || p.head_sizes != heads {
                return Err(Error::Config(
                    "initial policy does not match the environment".into(),
                ));
            }
            p
        }
        None => {
            let mut p = PolicyNetwork::new(
                obs_size,
                heads,
                &config.hidden,
                config.activation,
                config.normalize_observations,
                &mut stream(seed, streams::POLICY_INIT),
            )?;
            p.obs_norm
                .update(&workers.iter().map(|w| w.obs.clone()).collect::<Vec<_>>());
            p
        }
    };
    let mut adam = AdamState::for_params(config.adam(), &policy.params_mut());
    let mut shuffle = stream(seed, streams::POLICY_UPDATE);

    let steps = config.steps_per_env();
    let mut curve: Vec<CurvePoint> = Vec::new();
    let mut env_steps = 0;
    let mut stopped_on_plateau = false;
    for update_index in 1..=config.planned_updates() {
        let snapshot = &policy;
        let segments: Vec<Segment> = map_mut(exec, &mut workers, |_, w| {
            w.collect(snapshot, steps, config)
        })
        .into_iter()
        .collect::<Result<_>>()?;

        let mut batch = Batch::default();
        let mut raw = Vec::new();
        let mut finished = Vec::new();
        let mut reward_sum = 0.0;
        for s in segments {
            reward_sum += s.buffer.rewards.iter().sum::<f64>();
            batch.observations.extend(s.buffer.observations);
            batch.actions.extend(s.buffer.actions);
            batch.head_log_probs.extend(s.buffer.head_log_probs);
            batch.advantages.extend(s.advantages);
            batch.returns.extend(s.returns);
            raw.extend(s.raw_obs);
            finished.extend(s.finished_returns);
        }
        env_steps += batch.len();
        let mean_reward = if finished.is_empty() {
            // No episode ended in this rollout: report per-step reward.
            reward_sum / batch.len() as f64
        } else {
            finished.iter().sum::<f64>() / finished.len() as f64
        };

        let stats = ppo_update(&mut policy, &batch, config, &mut adam, &mut shuffle)?;
        policy.obs_norm.update(&raw);
        if !stats.entropy.is_finite() || stats.entropy < -1e-9 {
            return Err(Error::Numeric(format!(
                "policy entropy {} at update {update_index}",
                stats.entropy
            )));
        }
        curve.push(CurvePoint {
            update_index,
            env_steps,
            mean_reward,
            entropy: stats.entropy,
            value_loss: stats.value_loss,
        });
        if plateaued(
            &curve,
            config.plateau_window,
            config.plateau_min_improvement,
        ) {
            stopped_on_plateau = true;
            break;
        }
    }
    Ok(TrainOutcome {
        policy,
        curve,
        stopped_on_plateau,
    })
}

/// Plays one episode; returns the total reward and the step count.
pub fn run_episode<E: Environment>(
    policy: &PolicyNetwork,
    env: &mut E,
    reset_seed: u64,
    rng: &mut impl Rng,
    greedy: bool,
) -> Result<(f64, usize)> {
    let mut obs = env.reset(reset_seed)?;
    let mut total = 0.0;
    let mut steps = 0;
    loop {
        let a = policy.act(&obs, rng, greedy)?;
        let (next, r, done) = env.step(&a.action)?;
        total += r;
        steps += 1;
        obs = next;
        if done {
            return Ok((total, steps));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(r: f64) -> CurvePoint {
        CurvePoint {
            update_index: 0,
            env_steps: 0,
            mean_reward: r,
            entropy: 0.0,
            value_loss: 0.0,
        }
    }

    #[test]
    fn plateau_detection() {
        let flat: Vec<CurvePoint> = (0..20).map(|_| point(5.0)).collect();
        assert!(plateaued(&flat, 20, 0.01));
        assert!(!plateaued(&flat[..19], 20, 0.01));
        let rising: Vec<CurvePoint> = (0..20).map(|i| point(i as f64 + 1.0)).collect();
        assert!(!plateaued(&rising, 20, 0.01));
        assert!(!plateaued(&flat, 0, 0.01));
    }

    #[test]
    fn config_validation() {
        PpoConfig::default().validate().unwrap();
        let c = PpoConfig {
            clip_epsilon: 0.0,
            ..PpoConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = PpoConfig {
            gamma: 1.5,
            ..PpoConfig::default()
        };
        assert!(c.validate().is_err());
        assert_eq!(PpoConfig::default().planned_updates(), 49);
    }
}
