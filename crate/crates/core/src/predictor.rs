//! Per-block crime-count forecaster: one LSTM layer over a window of past
//! cycles followed by a dense ReLU head, trained with Adam on squared error.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    Activation, AdamConfig, AdamState, Checkpoint, Dense, LstmCell, Param, Parameterized, Tensor,
};
use crate::rng::{stream, streams};

pub const CHECKPOINT_KIND: &str = "predictor";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    pub hidden_units: usize,
    pub window_len: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    /// Standardize inputs per block with training statistics.
    pub standardize: bool,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            hidden_units: 100,
            window_len: 4,
            epochs: 100,
            batch_size: 100,
            optimizer: AdamConfig::default(),
            standardize: false,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.hidden_units == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "predictor window_len, hidden_units and batch_size must be ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PredictorModel {
    pub config: PredictorConfig,
    pub block_count: usize,
    pub lstm: LstmCell,
    pub head: Dense,
    /// Per-block `(mean, std)` applied to inputs when standardizing.
    pub input_stats: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: f64,
}

impl PredictorModel {
    pub fn new(config: PredictorConfig, block_count: usize, seed: u64) -> Self {
        let mut rng = stream(seed, streams::PREDICTOR);
        PredictorModel {
            lstm: LstmCell::new(block_count, config.hidden_units, &mut rng),
            head: Dense::new(config.hidden_units, block_count, Activation::Relu, &mut rng),
            config,
            block_count,
            input_stats: None,
        }
    }

    /// Every weight zero: predicts zeros everywhere.
    pub fn zeros(config: PredictorConfig, block_count: usize) -> Self {
        let h = config.hidden_units;
        PredictorModel {
            lstm: LstmCell::zeros(block_count, h),
            head: Dense::from_parts(
                Tensor::zeros(&[h, block_count]),
                Tensor::zeros(&[block_count]),
                Activation::Relu,
            )
            .expect("consistent shapes"),
            config,
            block_count,
            input_stats: None,
        }
    }

    fn prepare(&self, seq: &Tensor) -> Tensor {
        match &self.input_stats {
            None => seq.clone(),
            Some((mean, std)) => {
                let b = self.block_count;
                Tensor::from_fn(seq.shape(), |i| (seq.data()[i] - mean[i % b]) / std[i % b])
            }
        }
    }

    /// Forecast for a batch of windows `[batch, window, blocks]`.
    pub fn predict_batch(&self, windows: &Tensor) -> Result<Tensor> {
        windows.expect_rank(3, "predictor input")?;
        if windows.dim(1) != self.config.window_len || windows.dim(2) != self.block_count {
            return Err(Error::Dimension(format!(
                "predictor expects [_, {}, {}], got {:?}",
                self.config.window_len,
                self.block_count,
                windows.shape()
            )));
        }
        let h = self.lstm.infer(&self.prepare(windows))?;
        self.head.infer(&h)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new(
            CHECKPOINT_KIND,
            serde_json::json!({
                "config": self.config,
                "block_count": self.block_count,
                "input_stats": self.input_stats,
            }),
        );
        c.push_params("lstm.", &self.lstm);
        c.push_params("head.", &self.head);
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        c.expect_kind(CHECKPOINT_KIND)?;
        let config: PredictorConfig = serde_json::from_value(c.config["config"].clone())
            .map_err(|e| Error::Parse(format!("predictor config: {e}")))?;
        let block_count = c.config["block_count"]
            .as_u64()
            .ok_or_else(|| Error::Parse("predictor block_count".into()))?
            as usize;
        let input_stats = serde_json::from_value(c.config["input_stats"].clone())
            .map_err(|e| Error::Parse(format!("predictor input_stats: {e}")))?;
        let mut m = PredictorModel::zeros(config, block_count);
        m.input_stats = input_stats;
        c.load_params("lstm.", &mut m.lstm)?;
        c.load_params("head.", &mut m.head)?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

impl Parameterized for PredictorModel {
    fn params(&self) -> Vec<(String, &Param)> {
        let mut v: Vec<(String, &Param)> = self
            .lstm
            .params()
            .into_iter()
            .map(|(n, p)| (format!("lstm.{n}"), p))
            .collect();
        v.extend(
            self.head
                .params()
                .into_iter()
                .map(|(n, p)| (format!("head.{n}"), p)),
        );
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.lstm.params_mut();
        v.extend(self.head.params_mut());
        v
    }
}

/// Sliding windows over a `[cycles, blocks]` series; each target is the
/// cycle right after its window.
pub fn make_training_set(counts: &Tensor, window_len: usize) -> Result<(Tensor, Tensor)> {
    counts.expect_rank(2, "block counts")?;
    let (t, b) = (counts.dim(0), counts.dim(1));
    if window_len == 0 || t <= window_len {
        return Err(Error::InsufficientData(format!(
            "{t} cycles cannot fill a window of {window_len} plus a target"
        )));
    }
    let n = t - window_len;
    let d = counts.data();
    let mut inputs = Vec::with_capacity(n * window_len * b);
    let mut targets = Vec::with_capacity(n * b);
    for s in 0..n {
        inputs.extend_from_slice(&d[s * b..(s + window_len) * b]);
        targets.extend_from_slice(&d[(s + window_len) * b..(s + window_len + 1) * b]);
    }
    Ok((
        Tensor::new(&[n, window_len, b], inputs)?,
        Tensor::new(&[n, b], targets)?,
    ))
}

/// Mean squared error over all entries.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    pred.expect_shape(target.shape(), "mse")?;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64)
}

/// Trains a fresh model; returns it with the per-epoch training MSE (epoch 0
/// is the untrained model).
pub fn train_predictor(
    inputs: &Tensor,
    targets: &Tensor,
    config: &PredictorConfig,
    seed: u64,
) -> Result<(PredictorModel, Vec<EpochLoss>)> {
    config.validate()?;
    inputs.expect_rank(3, "training inputs")?;
    let n = inputs.dim(0);
    let b = inputs.dim(2);
    targets.expect_shape(&[n, b], "training targets")?;
    if inputs.dim(1) != config.window_len {
        return Err(Error::Dimension(format!(
            "training windows have length {}, config says {}",
            inputs.dim(1),
            config.window_len
        )));
    }
    let mut model = PredictorModel::new(config.clone(), b, seed);
    if config.standardize {
        let mut mean = vec![0.0; b];
        let mut sq = vec![0.0; b];
        let rows = inputs.len() / b;
        for (i, v) in inputs.data().iter().enumerate() {
            mean[i % b] += v / rows as f64;
            sq[i % b] += v * v / rows as f64;
        }
        let std = mean
            .iter()
            .zip(&sq)
            .map(|(m, s)| (s - m * m).max(0.0).sqrt().max(1e-6))
            .collect();
        model.input_stats = Some((mean, std));
    }
    // Start the ReLU head at the mean target so every output unit is live.
    for j in 0..b {
        model.head.bias.value.data_mut()[j] =
            (0..n).map(|i| targets.data()[i * b + j]).sum::<f64>() / n as f64;
    }

    let mut rng = stream(seed, streams::PREDICTOR);
    let mut adam = AdamState::for_params(config.optimizer, &model.params_mut());
    let mut log = vec![EpochLoss {
        epoch: 0,
        loss: mse(&model.predict_batch(inputs)?, targets)?,
    }];
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let x = model.prepare(&inputs.select_outer(chunk));
            let y = targets.select_outer(chunk);
            model.zero_grad();
            let h = model.lstm.forward(&x)?;
            let pred = model.head.forward(&h)?;
            let scale = 2.0 / pred.len() as f64;
            let dy = pred.zip_map(&y, |p, t| scale * (p - t))?;
            let dh = model.head.backward(&dy)?;
            model.lstm.backward(&dh)?;
            let mut params = model.params_mut();
            for p in params.iter() {
                p.grad.check_finite("predictor gradient")?;
            }
            adam.step(&mut params)?;
        }
        let loss = mse(&model.predict_batch(inputs)?, targets)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "predictor loss diverged at epoch {epoch}"
            )));
        }
        log.push(EpochLoss { epoch, loss });
    }
    Ok((model, log))
}

/// Next-cycle forecast from a `[window, blocks]` history.
pub fn predict_counts(model: &PredictorModel, history: &Tensor) -> Result<Vec<f64>> {
    history.expect_shape(
        &[model.config.window_len, model.block_count],
        "predictor history",
    )?;
    let batch = history
        .clone()
        .reshape(&[1, model.config.window_len, model.block_count])?;
    Ok(model.predict_batch(&batch)?.into_data())
}
