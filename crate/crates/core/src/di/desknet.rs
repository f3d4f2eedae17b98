use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::images::ImageSet;
use crate::error::{Error, Result};
use crate::nn::{activation::log_softmax_in_place, Activation};
use crate::nn::{
    AdamConfig, AdamState, Checkpoint, Conv2d, Dense, Dropout, Layer, MaxPool2, Mode, Param,
    Parameterized, Sequential, Tensor,
};

pub const CHECKPOINT_KIND: &str = "desknet";

/// Five convolution blocks and one fully connected block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeskNetConfig {
    pub image_size: usize,
    pub in_channels: usize,
    pub channels: Vec<usize>,
    /// Leading conv blocks that end in 2×2 max-pooling.
    pub pooled_blocks: usize,
    pub kernel: usize,
    pub fc_hidden: usize,
    pub classes: usize,
    /// Scale dropout survivors by `1 / (1 - rate)` during training.
    pub inverted_dropout: bool,
}

impl Default for DeskNetConfig {
    fn default() -> Self {
        DeskNetConfig {
            image_size: 16,
            in_channels: 1,
            channels: vec![16, 32, 32, 64, 64],
            pooled_blocks: 4,
            kernel: 3,
            fc_hidden: 64,
            classes: 10,
            inverted_dropout: false,
        }
    }
}

impl DeskNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) || self.kernel.is_multiple_of(2) {
            return Err(Error::Config(
                "DeskNet needs non-empty channels and an odd kernel".into(),
            ));
        }
        if self.pooled_blocks > self.channels.len() || self.image_size >> self.pooled_blocks == 0 {
            return Err(Error::Config(format!(
                "{} poolings do not fit a {}-pixel image",
                self.pooled_blocks, self.image_size
            )));
        }
        Ok(())
    }

    /// Conv blocks plus the classifier block.
    pub fn block_count(&self) -> usize {
        self.channels.len() + 1
    }
}

#[derive(Debug, Clone)]
pub struct DeskNet {
    pub config: DeskNetConfig,
    pub blocks: Vec<Sequential>,
}

impl DeskNet {
    /// Dropout layers close every conv block; `dropout_rate = 0` makes them
    /// the identity.
    pub fn new(config: DeskNetConfig, dropout_rate: f64, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut blocks = Vec::with_capacity(config.block_count());
        let mut c_in = config.in_channels;
        let mut side = config.image_size;
        for (i, &c) in config.channels.iter().enumerate() {
            let mut layers = vec![
                Layer::Conv(Conv2d::new(c_in, c, config.kernel, rng)),
                Layer::act(Activation::Relu),
            ];
            if i < config.pooled_blocks {
                layers.push(Layer::MaxPool(MaxPool2::new()));
                side /= 2;
            }
            layers.push(Layer::Dropout(Dropout::with_scaling(
                dropout_rate,
                config.inverted_dropout,
            )?));
            blocks.push(Sequential::new(layers)?);
            c_in = c;
        }
        blocks.push(Sequential::new(vec![
            Layer::flatten(),
            Layer::Dense(Dense::new(
                c_in * side * side,
                config.fc_hidden,
                Activation::Relu,
                rng,
            )),
            Layer::Dense(Dense::new(
                config.fc_hidden,
                config.classes,
                Activation::Identity,
                rng,
            )),
        ])?);
        let mut net = DeskNet { config, blocks };
        net.set_mode(Mode::Eval);
        Ok(net)
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn dropout_rate(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| &b.layers)
            .find_map(|l| match l {
                Layer::Dropout(d) => Some(d.rate()),
                _ => None,
            })
            .unwrap_or(0.0)
    }

    /// Replaces every dropout layer's rate, keeping the weights.
    pub fn set_dropout_rate(&mut self, rate: f64) -> Result<()> {
        for b in &mut self.blocks {
            for l in &mut b.layers {
                if let Layer::Dropout(d) = l {
                    let mode = d.mode;
                    *d = Dropout::with_scaling(rate, self.config.inverted_dropout)?;
                    d.mode = mode;
                }
            }
        }
        Ok(())
    }

    pub fn set_mode(&mut self, mode: Mode) {
        for b in &mut self.blocks {
            b.set_mode(mode);
        }
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for b in &self.blocks {
            h = b.infer(&h)?;
        }
        Ok(h)
    }

    pub fn forward(&mut self, x: &Tensor, rng: &mut impl Rng) -> Result<Tensor> {
        let mut h = x.clone();
        for b in &mut self.blocks {
            h = b.forward(&h, rng)?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, dlogits: &Tensor) -> Result<()> {
        let mut g = dlogits.clone();
        for b in self.blocks.iter_mut().rev() {
            g = b.backward(&g)?;
        }
        Ok(())
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        Ok(self.infer(x)?.argmax_rows())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new(
            CHECKPOINT_KIND,
            serde_json::json!({ "config": self.config, "dropout_rate": self.dropout_rate() }),
        );
        c.push_params("", self);
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        c.expect_kind(CHECKPOINT_KIND)?;
        let config: DeskNetConfig = serde_json::from_value(c.config["config"].clone())
            .map_err(|e| Error::Parse(format!("desknet config: {e}")))?;
        let rate = c.config["dropout_rate"].as_f64().unwrap_or(0.0);
        let mut net = DeskNet::new(
            config,
            rate,
            &mut crate::rng::stream(0, crate::rng::streams::DI_TRAIN),
        )?;
        c.load_params("", &mut net)?;
        Ok(net)
    }
}

impl Parameterized for DeskNet {
    fn params(&self) -> Vec<(String, &Param)> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(i, b)| {
                b.params()
                    .into_iter()
                    .map(move |(n, p)| (format!("block{i}.{n}"), p))
            })
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.blocks
            .iter_mut()
            .flat_map(|b| b.params_mut())
            .collect()
    }
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    logits.expect_rank(2, "logits")?;
    let (n, k) = (logits.dim(0), logits.dim(1));
    if labels.len() != n {
        return Err(Error::Dimension(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    let mut grad = logits.clone();
    let mut loss = 0.0;
    for (i, row) in grad.data_mut().chunks_mut(k).enumerate() {
        log_softmax_in_place(row);
        loss -= row[labels[i]];
        for (j, v) in row.iter_mut().enumerate() {
            *v = (v.exp() - if j == labels[i] { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    Ok((loss / n as f64, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

/// Minibatch Adam on cross-entropy; returns the mean loss of each epoch.
pub fn train_classifier(
    net: &mut DeskNet,
    data: &ImageSet,
    schedule: &TrainSchedule,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::InsufficientData("no training images".into()));
    }
    net.set_mode(Mode::Train);
    let mut adam = AdamState::for_params(
        AdamConfig::with_lr(schedule.learning_rate),
        &net.params_mut(),
    );
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(schedule.epochs);
    for _ in 0..schedule.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(schedule.batch_size.max(1)) {
            let batch = data.subset(chunk);
            net.zero_grad();
            let logits = net.forward(&batch.images, rng)?;
            let (loss, grad) = cross_entropy(&logits, &batch.labels)?;
            if !loss.is_finite() {
                net.set_mode(Mode::Eval);
                return Err(Error::Numeric("classifier loss diverged".into()));
            }
            net.backward(&grad)?;
            adam.step(&mut net.params_mut())?;
            total += loss * chunk.len() as f64;
        }
        losses.push(total / data.len() as f64);
    }
    net.set_mode(Mode::Eval);
    Ok(losses)
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count() as f64
        / labels.len() as f64
}

/// Clean accuracy of the unsplit network, evaluated in chunks.
pub fn evaluate(net: &DeskNet, data: &ImageSet) -> Result<f64> {
    let mut preds = Vec::with_capacity(data.len());
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(250) {
        preds.extend(net.predict(&data.images.select_outer(chunk))?);
    }
    Ok(accuracy(&preds, &data.labels))
}

/// One copy of `base` per rate, each fine-tuned with dropout at that rate
/// after every conv block. Each copy draws from its own stream.
pub fn fine_tune_with_dropout(
    base: &DeskNet,
    rates: &[f64],
    data: &ImageSet,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<Vec<(f64, DeskNet)>> {
    rates
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let mut net = base.clone();
            net.set_dropout_rate(r)?;
            let mut rng = crate::rng::indexed(seed, crate::rng::streams::DI_TRAIN, 1 + i as u64);
            train_classifier(&mut net, data, schedule, &mut rng)?;
            Ok((r, net))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn shapes_through_blocks() {
        let net = DeskNet::new(DeskNetConfig::default(), 0.0, &mut stream(0, "n")).unwrap();
        assert_eq!(net.block_count(), 6);
        let out = net.infer(&Tensor::zeros(&[3, 1, 16, 16])).unwrap();
        assert_eq!(out.shape(), &[3, 10]);
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let (loss, grad) = cross_entropy(&Tensor::zeros(&[2, 4]), &[0, 3]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((grad.data()[0] - (0.25 - 1.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_rate_and_geometry() {
        assert!(DeskNet::new(DeskNetConfig::default(), 1.0, &mut stream(0, "n")).is_err());
        let cfg = DeskNetConfig {
            pooled_blocks: 5,
            ..DeskNetConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = DeskNet::new(DeskNetConfig::default(), 0.3, &mut stream(2, "n")).unwrap();
        let back =
            DeskNet::from_checkpoint(&Checkpoint::parse(&net.checkpoint().to_text()).unwrap())
                .unwrap();
        let x = Tensor::from_fn(&[2, 1, 16, 16], |i| (i as f64 * 0.37).sin());
        assert_eq!(net.infer(&x).unwrap(), back.infer(&x).unwrap());
        assert_eq!(back.dropout_rate(), 0.3);
    }
}
