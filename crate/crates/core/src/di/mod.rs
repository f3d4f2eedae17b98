//! Split inference over lossy UAV links.
//!
//! A small convolutional classifier is cut into input, middle and output
//! sub-networks hosted on three UAVs in a chain. Intermediate activations
//! cross two links that drop packets; dropped elements arrive as zeros.
//! Fine-tuning with dropout after every conv block makes the classifier
//! tolerate those zeros.

mod desknet;
mod images;
mod split;

pub use desknet::{
    accuracy, cross_entropy, evaluate, fine_tune_with_dropout, train_classifier, DeskNet,
    DeskNetConfig, TrainSchedule,
};
pub use images::{generate_images, ImageConfig, ImageSet};
pub use split::{
    distributed_infer, distributed_logits, relay_from_input, split_model, transmit, transmit_with,
    LossyLink, SplitModel, SplitPlan, SubNet,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{try_map_indexed, Execution};
use crate::rng::{indexed, splitmix64, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiConfig {
    pub images: ImageConfig,
    pub net: DeskNetConfig,
    pub train_images: usize,
    pub test_images: usize,
    pub pretrain: TrainSchedule,
    pub finetune: TrainSchedule,
    pub dropout_rates: Vec<f64>,
    pub plans: Vec<SplitPlan>,
    pub p_grid: Vec<f64>,
    /// Loss rate of the link held constant in each sweep slice.
    pub fixed_p: f64,
    pub loss_seeds: usize,
    pub elements_per_packet: usize,
    pub rescale: bool,
}

impl Default for DiConfig {
    fn default() -> Self {
        DiConfig {
            images: ImageConfig::default(),
            net: DeskNetConfig::default(),
            train_images: 4000,
            test_images: 1000,
            pretrain: TrainSchedule {
                epochs: 10,
                batch_size: 32,
                learning_rate: 1e-3,
            },
            finetune: TrainSchedule {
                epochs: 15,
                batch_size: 32,
                learning_rate: 5e-4,
            },
            dropout_rates: vec![0.1, 0.3, 0.5],
            plans: vec![SplitPlan::new(1, 3), SplitPlan::new(1, 4)],
            p_grid: (0..10).map(|i| i as f64 / 10.0).collect(),
            fixed_p: 0.5,
            loss_seeds: 10,
            elements_per_packet: 1,
            rescale: false,
        }
    }
}

impl DiConfig {
    pub fn validate(&self) -> Result<()> {
        self.images.validate()?;
        self.net.validate()?;
        if self.images.size != self.net.image_size || self.images.classes != self.net.classes {
            return Err(Error::Config(
                "image generator and DeskNet disagree on size or classes".into(),
            ));
        }
        if self.train_images == 0
            || self.test_images == 0
            || self.loss_seeds == 0
            || self.elements_per_packet == 0
        {
            return Err(Error::Config(
                "image counts, loss_seeds and elements_per_packet must be ≥ 1".into(),
            ));
        }
        if let Some(r) = self.dropout_rates.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(Error::Config(format!("dropout rate {r} outside [0, 1)")));
        }
        for plan in &self.plans {
            plan.validate(self.net.block_count())?;
        }
        if self
            .p_grid
            .iter()
            .chain([&self.fixed_p])
            .any(|p| !(0.0..=1.0).contains(p))
        {
            return Err(Error::Config("loss rates must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn link(&self, p: f64, seed: u64) -> LossyLink {
        LossyLink {
            p,
            elements_per_packet: self.elements_per_packet,
            seed,
            rescale: self.rescale,
        }
    }

    /// Every `(p12, p23)` point of the two slices, without repeats.
    pub fn sweep_points(&self) -> Vec<(f64, f64)> {
        let mut pts = Vec::new();
        for &p in &self.p_grid {
            for pt in [(p, self.fixed_p), (self.fixed_p, p)] {
                if !pts.contains(&pt) {
                    pts.push(pt);
                }
            }
        }
        pts
    }
}

/// Training and evaluation data drawn from the configured generator.
pub fn datasets(config: &DiConfig, seed: u64) -> (ImageSet, ImageSet) {
    let train = generate_images(
        &config.images,
        config.train_images,
        &mut indexed(seed, streams::DI_DATA, 0),
    );
    let test = generate_images(
        &config.images,
        config.test_images,
        &mut indexed(seed, streams::DI_DATA, 1),
    );
    (train, test)
}

/// The conventional model and its dropout fine-tuned variants, tagged.
pub fn train_models(
    config: &DiConfig,
    train: &ImageSet,
    seed: u64,
    exec: Execution,
) -> Result<Vec<(String, DeskNet)>> {
    config.validate()?;
    let mut base = DeskNet::new(
        config.net.clone(),
        0.0,
        &mut indexed(seed, streams::DI_TRAIN, 0),
    )?;
    train_classifier(
        &mut base,
        train,
        &config.pretrain,
        &mut indexed(seed, streams::DI_TRAIN, 1_000),
    )?;
    let tuned = try_map_indexed(exec, config.dropout_rates.len(), |i| {
        let r = config.dropout_rates[i];
        // Same stream index as a sequential fine_tune_with_dropout call.
        let mut net = base.clone();
        net.set_dropout_rate(r)?;
        train_classifier(
            &mut net,
            train,
            &config.finetune,
            &mut indexed(seed, streams::DI_TRAIN, 1 + i as u64),
        )?;
        Ok::<_, Error>((model_tag(Some(r)), net))
    })?;
    let mut out = vec![(model_tag(None), base)];
    out.extend(tuned);
    Ok(out)
}

pub fn model_tag(rate: Option<f64>) -> String {
    match rate {
        None => "conventional".into(),
        Some(r) => format!("dropout_{r}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model_tag: String,
    pub cut_a: usize,
    pub cut_b: usize,
    pub p12: f64,
    pub p23: f64,
    pub seed: usize,
    pub accuracy: f64,
}

/// Seeds of the two links for one loss realisation. They do not depend on
/// the loss rate, so realisations at different rates are nested.
pub fn link_seeds(seed: u64, plan: SplitPlan, trial: usize) -> [u64; 2] {
    let cell =
        splitmix64(plan.cut_a as u64 ^ splitmix64(plan.cut_b as u64 ^ splitmix64(trial as u64)));
    let mut rng = indexed(seed, streams::LOSS_LINKS, cell);
    use rand::RngCore;
    [rng.next_u64(), rng.next_u64()]
}

/// Accuracy of every model and plan at every sweep point for each loss
/// seed.
pub fn sweep_eval(
    models: &[(String, DeskNet)],
    config: &DiConfig,
    test: &ImageSet,
    seed: u64,
    exec: Execution,
) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let mut splits = Vec::new();
    for (tag, net) in models {
        for &plan in &config.plans {
            let m = split_model(net, plan)?;
            let first = m.input.infer(&test.images)?;
            splits.push((tag.clone(), m, first));
        }
    }
    let points = config.sweep_points();
    let per_split = points.len() * config.loss_seeds;
    let cells = try_map_indexed(exec, splits.len() * per_split, |c| {
        let (tag, model, first) = &splits[c / per_split];
        let (p12, p23) = points[(c % per_split) / config.loss_seeds];
        let trial = c % config.loss_seeds;
        let [s1, s2] = link_seeds(seed, model.plan, trial);
        let logits =
            relay_from_input(model, [&config.link(p12, s1), &config.link(p23, s2)], first)?;
        Ok::<_, Error>(SweepRow {
            model_tag: tag.clone(),
            cut_a: model.plan.cut_a,
            cut_b: model.plan.cut_b,
            p12,
            p23,
            seed: trial,
            accuracy: accuracy(&logits.argmax_rows(), &test.labels),
        })
    })?;
    Ok(cells)
}

/// One point of an accuracy-versus-loss curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiPlotRow {
    pub model_tag: String,
    pub cut_a: usize,
    pub cut_b: usize,
    /// Which link's loss rate varies: `p12` or `p23`.
    pub varied: String,
    pub p: f64,
    pub mean_accuracy: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Mean and standard error over seeds along both slices.
pub fn plot_rows(rows: &[SweepRow], config: &DiConfig) -> Vec<DiPlotRow> {
    let mut keys: Vec<(String, usize, usize)> = Vec::new();
    for r in rows {
        let k = (r.model_tag.clone(), r.cut_a, r.cut_b);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut out = Vec::new();
    for (tag, a, b) in keys {
        for varied in ["p12", "p23"] {
            for &p in &config.p_grid {
                let (p12, p23) = if varied == "p12" {
                    (p, config.fixed_p)
                } else {
                    (config.fixed_p, p)
                };
                let acc: Vec<f64> = rows
                    .iter()
                    .filter(|r| {
                        r.model_tag == tag
                            && r.cut_a == a
                            && r.cut_b == b
                            && r.p12 == p12
                            && r.p23 == p23
                    })
                    .map(|r| r.accuracy)
                    .collect();
                if acc.is_empty() {
                    continue;
                }
                let (mean, stderr) = mean_stderr(&acc);
                out.push(DiPlotRow {
                    model_tag: tag.clone(),
                    cut_a: a,
                    cut_b: b,
                    varied: varied.into(),
                    p,
                    mean_accuracy: mean,
                    stderr,
                    n: acc.len(),
                });
            }
        }
    }
    out
}

/// Sample mean and standard error of the mean; the error is 0 for one value.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let c = DiConfig::default();
        c.validate().unwrap();
        assert_eq!(c.sweep_points().len(), 19);
    }

    #[test]
    fn stderr_conventions() {
        assert_eq!(mean_stderr(&[0.4]), (0.4, 0.0));
        let (m, s) = mean_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn link_seeds_vary_by_trial_and_plan() {
        let a = link_seeds(1, SplitPlan::new(1, 3), 0);
        assert_ne!(a, link_seeds(1, SplitPlan::new(1, 3), 1));
        assert_ne!(a, link_seeds(1, SplitPlan::new(1, 4), 0));
        assert_ne!(a[0], a[1]);
    }
}
