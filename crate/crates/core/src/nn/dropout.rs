use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Mode {
    Train,
    #[default]
    Eval,
}

/// Dropout: in training, each element survives with probability
/// `1 - rate`. Inverted dropout scales survivors by `1 / (1 - rate)`; plain
/// dropout leaves them as they are, like a lossy link that zero-fills.
#[derive(Debug, Clone)]
pub struct Dropout {
    rate: f64,
    inverted: bool,
    pub mode: Mode,
    mask: Option<Tensor>,
    frozen: bool,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        Self::with_scaling(rate, true)
    }

    pub fn with_scaling(rate: f64, inverted: bool) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        Ok(Dropout {
            rate,
            inverted,
            mode: Mode::Train,
            mask: None,
            frozen: false,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn is_inverted(&self) -> bool {
        self.inverted
    }

    /// Reuse the current mask on later training passes (gradient checks).
    pub fn freeze_mask(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    pub fn forward(&mut self, x: &Tensor, rng: &mut impl Rng) -> Result<Tensor> {
        if self.mode == Mode::Eval || self.rate == 0.0 {
            self.mask = None;
            return Ok(x.clone());
        }
        let reuse = self.frozen && self.mask.as_ref().is_some_and(|m| m.shape() == x.shape());
        if !reuse {
            let keep = if self.inverted {
                1.0 / (1.0 - self.rate)
            } else {
                1.0
            };
            let rate = self.rate;
            self.mask = Some(Tensor::from_fn(x.shape(), |_| {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    keep
                }
            }));
        }
        let mask = self.mask.as_ref().expect("mask set above");
        x.zip_map(mask, |a, m| a * m)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        match &self.mask {
            Some(mask) => dy.zip_map(mask, |g, m| g * m),
            None => Ok(dy.clone()),
        }
    }
}
