use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::policy::PolicyNetwork;
use super::PpoConfig;
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, AdamState, Parameterized, Tensor};

/// Which probability ratio the surrogate clips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClipMode {
    /// One ratio over the joint action.
    #[default]
    Joint,
    /// A separate clipped term per action head.
    PerHead,
}

/// Flattened rollout data for one update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<usize>>,
    pub head_log_probs: Vec<Vec<f64>>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.advantages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.advantages.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossParts {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub minibatches: usize,
}

fn normalized(adv: &[f64]) -> Vec<f64> {
    if adv.len() < 2 {
        return adv.to_vec();
    }
    let n = adv.len() as f64;
    let m = adv.iter().sum::<f64>() / n;
    let sd = (adv.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (n - 1.0)).sqrt();
    adv.iter().map(|a| (a - m) / (sd + 1e-8)).collect()
}

/// Loss on the samples `idx` of `batch`; parameter gradients of the loss
/// are accumulated into `policy`.
pub fn loss_and_grad(
    policy: &mut PolicyNetwork,
    batch: &Batch,
    idx: &[usize],
    config: &PpoConfig,
) -> Result<LossParts> {
    let m = idx.len();
    if m == 0 {
        return Err(Error::State("empty minibatch".into()));
    }
    let obs: Vec<Vec<f64>> = idx.iter().map(|&i| batch.observations[i].clone()).collect();
    let out = policy.forward(&Tensor::from_rows(&obs)?)?;
    let raw_adv: Vec<f64> = idx.iter().map(|&i| batch.advantages[i]).collect();
    let adv = if config.normalize_advantages {
        normalized(&raw_adv)
    } else {
        raw_adv
    };

    let heads = policy.head_sizes.len();
    let width = policy.total_logits();
    let groups: Vec<Vec<usize>> = match config.clip_mode {
        ClipMode::Joint => vec![(0..heads).collect()],
        ClipMode::PerHead => (0..heads).map(|h| vec![h]).collect(),
    };
    let eps = config.clip_epsilon;
    let inv_m = 1.0 / m as f64;
    let mut dlogits = vec![0.0; m * width];
    let mut dvalues = vec![0.0; m];
    let mut parts = LossParts::default();
    let mut clipped = 0usize;

    for (r, &i) in idx.iter().enumerate() {
        let mut lp = out.logits.row(r).to_vec();
        policy.log_probs_row(&mut lp)?;
        let a = adv[r];
        let grad_row = &mut dlogits[r * width..(r + 1) * width];

        let mut coef = vec![0.0; heads];
        for g in &groups {
            let new: f64 = g
                .iter()
                .map(|&h| lp[policy.head_range(h).start + batch.actions[i][h]])
                .sum();
            let old: f64 = g.iter().map(|&h| batch.head_log_probs[i][h]).sum();
            let log_ratio = new - old;
            let ratio = log_ratio.exp();
            let clipped_ratio = ratio.clamp(1.0 - eps, 1.0 + eps);
            parts.policy -= (ratio * a).min(clipped_ratio * a) * inv_m;
            parts.approx_kl += ((ratio - 1.0) - log_ratio) * inv_m / groups.len() as f64;
            let outside = (a > 0.0 && ratio > 1.0 + eps) || (a < 0.0 && ratio < 1.0 - eps);
            if (ratio - 1.0).abs() > eps {
                clipped += 1;
            }
            if !outside {
                for &h in g {
                    coef[h] = ratio * a;
                }
            }
        }

        for (h, &c) in coef.iter().enumerate() {
            let range = policy.head_range(h);
            let lph = &lp[range.clone()];
            let entropy: f64 = -lph.iter().map(|l| l.exp() * l).sum::<f64>();
            parts.entropy += entropy * inv_m;
            let chosen = batch.actions[i][h];
            for (k, &l) in lph.iter().enumerate() {
                let p = l.exp();
                let onehot = if k == chosen { 1.0 } else { 0.0 };
                // d(-surrogate)/dz and d(-ent_coef * H)/dz.
                grad_row[range.start + k] =
                    -inv_m * c * (onehot - p) + config.entropy_coef * inv_m * p * (l + entropy);
            }
        }

        let err = out.values[r] - batch.returns[i];
        parts.value += err * err * inv_m;
        dvalues[r] = config.value_coef * 2.0 * err * inv_m;
    }
    parts.clip_fraction = clipped as f64 / (m * groups.len()) as f64;
    parts.total =
        parts.policy - config.entropy_coef * parts.entropy + config.value_coef * parts.value;
    if !parts.total.is_finite() {
        return Err(Error::Numeric(format!(
            "PPO loss is not finite (policy {}, value {}, entropy {})",
            parts.policy, parts.value, parts.entropy
        )));
    }
    policy.backward(&Tensor::new(&[m, width], dlogits)?, &dvalues)?;
    Ok(parts)
}

/// Clipped-surrogate optimisation over `batch` for the configured epochs
/// and minibatches.
pub fn ppo_update(
    policy: &mut PolicyNetwork,
    batch: &Batch,
    config: &PpoConfig,
    adam: &mut AdamState,
    rng: &mut impl Rng,
) -> Result<UpdateStats> {
    if batch.is_empty() {
        return Err(Error::State("update on an empty batch".into()));
    }
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut stats = UpdateStats::default();
    for _ in 0..config.epochs_per_update {
        order.shuffle(rng);
        for chunk in order.chunks(config.minibatch_size.max(1)) {
            policy.zero_grad();
            let parts = loss_and_grad(policy, batch, chunk, config)?;
            let mut params = policy.params_mut();
            clip_grad_norm(&mut params, config.max_grad_norm);
            adam.step(&mut params)?;
            stats.policy_loss += parts.policy;
            stats.value_loss += parts.value;
            stats.entropy += parts.entropy;
            stats.approx_kl += parts.approx_kl;
            stats.clip_fraction += parts.clip_fraction;
            stats.minibatches += 1;
        }
    }
    let k = stats.minibatches as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.approx_kl /= k;
    stats.clip_fraction /= k;
    Ok(stats)
}
