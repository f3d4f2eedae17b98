use crate::error::{Error, Result};

/// One environment's transitions since the last update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub capacity: usize,
    /// Observations as the policy saw them (normalized).
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<usize>>,
    pub head_log_probs: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// True when the episode ended with this transition.
    pub dones: Vec<bool>,
}

impl RolloutBuffer {
    pub fn new(capacity: usize) -> Self {
        RolloutBuffer {
            capacity,
            ..Default::default()
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        observation: Vec<f64>,
        action: Vec<usize>,
        head_log_probs: Vec<f64>,
        reward: f64,
        value: f64,
        done: bool,
    ) -> Result<()> {
        if self.is_full() {
            return Err(Error::State(format!(
                "rollout buffer full at {}",
                self.capacity
            )));
        }
        self.log_probs.push(head_log_probs.iter().sum());
        self.observations.push(observation);
        self.actions.push(action);
        self.head_log_probs.push(head_log_probs);
        self.rewards.push(reward);
        self.values.push(value);
        self.dones.push(done);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.len() >= self.capacity
    }

    pub fn clear(&mut self) {
        *self = RolloutBuffer::new(self.capacity);
    }
}

/// Generalized advantage estimates and value targets for `buffer`, with
/// `last_value` the critic's estimate after the final transition.
pub fn compute_gae(
    buffer: &RolloutBuffer,
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if buffer.is_empty() {
        return Err(Error::State(
            "advantages requested for an empty buffer".into(),
        ));
    }
    let n = buffer.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = last_value;
    for t in (0..n).rev() {
        let live = if buffer.dones[t] { 0.0 } else { 1.0 };
        let delta = buffer.rewards[t] + gamma * next_value * live - buffer.values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = buffer.values[t];
    }
    let returns = adv.iter().zip(&buffer.values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}
