use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::activation::log_softmax_in_place;
use crate::nn::{Activation, Checkpoint, Dense, Param, Parameterized, Tensor};

pub const CHECKPOINT_KIND: &str = "policy";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TrunkActivation {
    #[default]
    Tanh,
    Relu,
}

impl From<TrunkActivation> for Activation {
    fn from(a: TrunkActivation) -> Self {
        match a {
            TrunkActivation::Tanh => Activation::Tanh,
            TrunkActivation::Relu => Activation::Relu,
        }
    }
}

/// Running mean and variance of observations, merged batch-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningNorm {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
    pub enabled: bool,
}

impl RunningNorm {
    const CLIP: f64 = 10.0;
    const EPS: f64 = 1e-8;

    pub fn new(size: usize, enabled: bool) -> Self {
        RunningNorm {
            mean: vec![0.0; size],
            var: vec![1.0; size],
            count: 1e-4,
            enabled,
        }
    }

    pub fn update(&mut self, rows: &[Vec<f64>]) {
        if !self.enabled || rows.is_empty() {
            return;
        }
        let n = rows.len() as f64;
        for j in 0..self.mean.len() {
            let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let v = rows.iter().map(|r| (r[j] - m) * (r[j] - m)).sum::<f64>() / n;
            let delta = m - self.mean[j];
            let total = self.count + n;
            let m2 = self.var[j] * self.count + v * n + delta * delta * self.count * n / total;
            self.mean[j] += delta * n / total;
            self.var[j] = m2 / total;
        }
        self.count += n;
    }

    pub fn normalize(&self, obs: &[f64]) -> Vec<f64> {
        if !self.enabled {
            return obs.to_vec();
        }
        obs.iter()
            .enumerate()
            .map(|(j, x)| {
                ((x - self.mean[j]) / (self.var[j] + Self::EPS).sqrt())
                    .clamp(-Self::CLIP, Self::CLIP)
            })
            .collect()
    }
}

/// Shared trunk feeding one categorical head per action component and a
/// scalar value head. All heads share one dense layer whose outputs are
/// sliced per head.
#[derive(Debug, Clone)]
pub struct PolicyNetwork {
    pub obs_size: usize,
    pub head_sizes: Vec<usize>,
    offsets: Vec<usize>,
    pub hidden: Vec<usize>,
    pub activation: TrunkActivation,
    pub trunk: Vec<Dense>,
    pub heads: Dense,
    pub value: Dense,
    pub obs_norm: RunningNorm,
}

/// Network outputs for a batch.
#[derive(Debug, Clone)]
pub struct PolicyOutput {
    pub logits: Tensor,
    pub values: Vec<f64>,
}

/// One sampled joint action.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampled {
    pub action: Vec<usize>,
    pub head_log_probs: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
}

impl PolicyNetwork {
    pub fn new(
        obs_size: usize,
        head_sizes: Vec<usize>,
        hidden: &[usize],
        activation: TrunkActivation,
        normalize_observations: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if obs_size == 0 || head_sizes.is_empty() || head_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "policy needs a non-empty observation and non-empty heads, got {obs_size} and {head_sizes:?}"
            )));
        }
        let mut trunk = Vec::with_capacity(hidden.len());
        let mut width = obs_size;
        for &h in hidden {
            trunk.push(Dense::new(width, h, activation.into(), rng));
            width = h;
        }
        let total: usize = head_sizes.iter().sum();
        let mut heads = Dense::new(width, total, Activation::Identity, rng);
        // Near-uniform initial policy.
        heads.weight.value.scale(0.01);
        let value = Dense::new(width, 1, Activation::Identity, rng);
        Ok(PolicyNetwork {
            obs_size,
            offsets: offsets(&head_sizes),
            head_sizes,
            hidden: hidden.to_vec(),
            activation,
            trunk,
            heads,
            value,
            obs_norm: RunningNorm::new(obs_size, normalize_observations),
        })
    }

    pub fn total_logits(&self) -> usize {
        self.head_sizes.iter().sum()
    }

    /// Logit range of head `h` within a row.
    pub fn head_range(&self, h: usize) -> std::ops::Range<usize> {
        self.offsets[h]..self.offsets[h] + self.head_sizes[h]
    }

    /// Pure evaluation on already normalized observations `[batch, obs]`.
    pub fn infer(&self, obs: &Tensor) -> Result<PolicyOutput> {
        let mut h = obs.clone();
        for layer in &self.trunk {
            h = layer.infer(&h)?;
        }
        let logits = self.heads.infer(&h)?;
        let values = self.value.infer(&h)?.into_data();
        Ok(PolicyOutput { logits, values })
    }

    /// Training pass; caches activations for [`backward`](Self::backward).
    pub fn forward(&mut self, obs: &Tensor) -> Result<PolicyOutput> {
        let mut h = obs.clone();
        for layer in &mut self.trunk {
            h = layer.forward(&h)?;
        }
        let logits = self.heads.forward(&h)?;
        let values = self.value.forward(&h)?.into_data();
        Ok(PolicyOutput { logits, values })
    }

    /// Accumulates parameter gradients from logit and value gradients.
    pub fn backward(&mut self, dlogits: &Tensor, dvalues: &[f64]) -> Result<()> {
        let dv = Tensor::new(&[dvalues.len(), 1], dvalues.to_vec())?;
        let mut dh = self.heads.backward(dlogits)?;
        dh.add_assign(&self.value.backward(&dv)?)?;
        for layer in self.trunk.iter_mut().rev() {
            dh = layer.backward(&dh)?;
        }
        Ok(())
    }

    /// Per-head log-probabilities for one row of logits, in place.
    pub fn log_probs_row(&self, row: &mut [f64]) -> Result<()> {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite policy logits".into()));
        }
        for h in 0..self.head_sizes.len() {
            log_softmax_in_place(&mut row[self.head_range(h)]);
        }
        Ok(())
    }

    /// Samples every head independently, or takes each head's mode when
    /// `greedy`. `obs` is normalized with the current statistics.
    pub fn act(&self, obs: &[f64], rng: &mut impl Rng, greedy: bool) -> Result<Sampled> {
        if obs.len() != self.obs_size {
            return Err(Error::Dimension(format!(
                "policy expects {} observations, got {}",
                self.obs_size,
                obs.len()
            )));
        }
        let x = Tensor::new(&[1, self.obs_size], self.obs_norm.normalize(obs))?;
        let out = self.infer(&x)?;
        let mut lp = out.logits.into_data();
        self.log_probs_row(&mut lp)?;
        let mut action = Vec::with_capacity(self.head_sizes.len());
        let mut head_log_probs = Vec::with_capacity(self.head_sizes.len());
        for h in 0..self.head_sizes.len() {
            let row = &lp[self.head_range(h)];
            let k = if greedy {
                argmax(row)
            } else {
                sample_categorical(row, rng)
            };
            action.push(k);
            head_log_probs.push(row[k]);
        }
        Ok(Sampled {
            log_prob: head_log_probs.iter().sum(),
            action,
            head_log_probs,
            value: out.values[0],
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new(
            CHECKPOINT_KIND,
            serde_json::json!({
                "obs_size": self.obs_size,
                "head_sizes": self.head_sizes,
                "hidden": self.hidden,
                "activation": self.activation,
                "normalize_observations": self.obs_norm.enabled,
            }),
        );
        c.push_params("policy.", self);
        let n = self.obs_size;
        c.push(
            "norm.mean",
            &Tensor::new(&[n], self.obs_norm.mean.clone()).expect("sized"),
        );
        c.push(
            "norm.var",
            &Tensor::new(&[n], self.obs_norm.var.clone()).expect("sized"),
        );
        c.push(
            "norm.count",
            &Tensor::new(&[1], vec![self.obs_norm.count]).expect("sized"),
        );
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        c.expect_kind(CHECKPOINT_KIND)?;
        #[derive(Deserialize)]
        struct Shape {
            obs_size: usize,
            head_sizes: Vec<usize>,
            hidden: Vec<usize>,
            activation: TrunkActivation,
            normalize_observations: bool,
        }
        let s: Shape = serde_json::from_value(c.config.clone())
            .map_err(|e| Error::Parse(format!("policy config: {e}")))?;
        let mut rng = crate::rng::stream(0, crate::rng::streams::POLICY_INIT);
        let mut p = PolicyNetwork::new(
            s.obs_size,
            s.head_sizes,
            &s.hidden,
            s.activation,
            s.normalize_observations,
            &mut rng,
        )?;
        c.load_params("policy.", &mut p)?;
        p.obs_norm.mean = c.tensor("norm.mean")?.data().to_vec();
        p.obs_norm.var = c.tensor("norm.var")?.data().to_vec();
        p.obs_norm.count = c.tensor("norm.count")?.data()[0];
        if p.obs_norm.mean.len() != p.obs_size || p.obs_norm.var.len() != p.obs_size {
            return Err(Error::Parse("policy normalizer size mismatch".into()));
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

impl Parameterized for PolicyNetwork {
    fn params(&self) -> Vec<(String, &Param)> {
        let mut v = Vec::new();
        for (i, layer) in self.trunk.iter().enumerate() {
            v.extend(
                layer
                    .params()
                    .into_iter()
                    .map(|(n, p)| (format!("trunk{i}.{n}"), p)),
            );
        }
        v.extend(
            self.heads
                .params()
                .into_iter()
                .map(|(n, p)| (format!("heads.{n}"), p)),
        );
        v.extend(
            self.value
                .params()
                .into_iter()
                .map(|(n, p)| (format!("value.{n}"), p)),
        );
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::new();
        for layer in &mut self.trunk {
            v.extend(layer.params_mut());
        }
        v.extend(self.heads.params_mut());
        v.extend(self.value.params_mut());
        v
    }
}

fn offsets(sizes: &[usize]) -> Vec<usize> {
    sizes
        .iter()
        .scan(0, |acc, &s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect()
}

fn argmax(row: &[f64]) -> usize {
    crate::nn::tensor::argmax(row)
}

/// Inverse-CDF draw from log-probabilities.
pub fn sample_categorical(log_probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return k;
        }
    }
    // Rounding left the total just below one.
    log_probs.len() - 1
}

/// `(action, joint log-probability, value)` for one raw observation.
pub fn sample_action(
    policy: &PolicyNetwork,
    observation: &[f64],
    rng: &mut impl Rng,
) -> Result<(Vec<usize>, f64, f64)> {
    let s = policy.act(observation, rng, false)?;
    Ok((s.action, s.log_prob, s.value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn policy(heads: Vec<usize>) -> PolicyNetwork {
        PolicyNetwork::new(
            3,
            heads,
            &[8, 8],
            TrunkActivation::Tanh,
            true,
            &mut stream(1, "t"),
        )
        .unwrap()
    }

    #[test]
    fn running_norm_matches_batch_statistics() {
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|i| vec![i as f64, (i * i) as f64 * 0.01])
            .collect();
        let mut n = RunningNorm::new(2, true);
        n.update(&rows[..37]);
        n.update(&rows[37..]);
        for j in 0..2 {
            let m = rows.iter().map(|r| r[j]).sum::<f64>() / 100.0;
            let v = rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / 100.0;
            assert!((n.mean[j] - m).abs() < 1e-4 * m.abs().max(1.0));
            assert!((n.var[j] - v).abs() < 1e-4 * v.max(1.0));
        }
    }

    #[test]
    fn log_prob_is_sum_of_heads() {
        let p = policy(vec![4, 3, 5]);
        let mut rng = stream(2, "s");
        let obs = [0.3, -1.0, 2.0];
        let s = p.act(&obs, &mut rng, false).unwrap();
        let x = Tensor::new(&[1, 3], p.obs_norm.normalize(&obs)).unwrap();
        let logits = p.infer(&x).unwrap().logits.into_data();
        let mut oracle = 0.0;
        for h in 0..3 {
            let row = &logits[p.head_range(h)];
            let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
            oracle += row[s.action[h]] - lse;
        }
        assert!((s.log_prob - oracle).abs() < 1e-12);
    }

    #[test]
    fn saturated_head_is_deterministic() {
        let mut p = policy(vec![4]);
        p.heads.weight.value.fill(0.0);
        p.heads
            .bias
            .value
            .data_mut()
            .copy_from_slice(&[0.0, 1e3, 0.0, 0.0]);
        let mut rng = stream(3, "s");
        for _ in 0..100 {
            assert_eq!(p.act(&[0.0; 3], &mut rng, false).unwrap().action, vec![1]);
        }
    }

    #[test]
    fn non_finite_logits_are_numeric_errors() {
        let mut p = policy(vec![2]);
        p.heads.bias.value.data_mut()[0] = f64::NAN;
        assert!(matches!(
            p.act(&[0.0; 3], &mut stream(0, "s"), false),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut p = policy(vec![4, 3]);
        p.obs_norm
            .update(&[vec![1.0, 2.0, 3.0], vec![0.1, 0.2, 0.3]]);
        let back =
            PolicyNetwork::from_checkpoint(&Checkpoint::parse(&p.checkpoint().to_text()).unwrap())
                .unwrap();
        let a = p.act(&[0.5, 0.5, 0.5], &mut stream(4, "s"), false).unwrap();
        let b = back
            .act(&[0.5, 0.5, 0.5], &mut stream(4, "s"), false)
            .unwrap();
        assert_eq!(a, b);
    }
}
