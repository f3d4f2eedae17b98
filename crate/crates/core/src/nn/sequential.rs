use rand::Rng;

use super::activation::Activation;
use super::conv::{Conv2d, MaxPool2};
use super::dense::Dense;
use super::dropout::{Dropout, Mode};
use super::param::{Param, Parameterized};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// One stage of a feed-forward stack.
#[derive(Debug, Clone)]
pub enum Layer {
    Dense(Dense),
    Conv(Conv2d),
    MaxPool(MaxPool2),
    Act(Activation, Option<Tensor>),
    Dropout(Dropout),
    Flatten(Option<Vec<usize>>),
}

impl Layer {
    pub fn act(a: Activation) -> Self {
        Layer::Act(a, None)
    }

    pub fn flatten() -> Self {
        Layer::Flatten(None)
    }

    fn ends_in_softmax(&self) -> bool {
        matches!(
            self,
            Layer::Dense(Dense {
                activation: Activation::Softmax,
                ..
            }) | Layer::Act(Activation::Softmax, _)
        )
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense(d) => d.infer(x),
            Layer::Conv(c) => c.infer(x),
            Layer::MaxPool(p) => p.infer(x),
            Layer::Act(a, _) => Ok(apply_any_rank(*a, x)),
            Layer::Dropout(_) => Ok(x.clone()),
            Layer::Flatten(_) => flatten(x),
        }
    }

    pub fn forward(&mut self, x: &Tensor, rng: &mut impl Rng) -> Result<Tensor> {
        match self {
            Layer::Dense(d) => d.forward(x),
            Layer::Conv(c) => c.forward(x),
            Layer::MaxPool(p) => p.forward(x),
            Layer::Act(a, cache) => {
                let y = apply_any_rank(*a, x);
                *cache = Some(y.clone());
                Ok(y)
            }
            Layer::Dropout(d) => d.forward(x, rng),
            Layer::Flatten(cache) => {
                *cache = Some(x.shape().to_vec());
                flatten(x)
            }
        }
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense(d) => d.backward(dy),
            Layer::Conv(c) => c.backward(dy),
            Layer::MaxPool(p) => p.backward(dy),
            Layer::Act(a, cache) => {
                let y = cache
                    .as_ref()
                    .ok_or_else(|| Error::State("activation backward before forward".into()))?;
                dy.expect_shape(y.shape(), "activation gradient")?;
                if *a == Activation::Softmax {
                    Ok(a.backward(y, dy))
                } else {
                    let flat_y = y.clone().reshape(&[1, y.len()])?;
                    let flat_dy = dy.clone().reshape(&[1, dy.len()])?;
                    a.backward(&flat_y, &flat_dy).reshape(y.shape())
                }
            }
            Layer::Dropout(d) => d.backward(dy),
            Layer::Flatten(cache) => {
                let shape = cache
                    .as_ref()
                    .ok_or_else(|| Error::State("flatten backward before forward".into()))?;
                dy.clone().reshape(shape)
            }
        }
    }

    fn params(&self) -> Vec<(String, &Param)> {
        match self {
            Layer::Dense(d) => d.params(),
            Layer::Conv(c) => c.params(),
            _ => Vec::new(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Dense(d) => d.params_mut(),
            Layer::Conv(c) => c.params_mut(),
            _ => Vec::new(),
        }
    }
}

fn apply_any_rank(a: Activation, x: &Tensor) -> Tensor {
    match a {
        Activation::Softmax => a.apply(x.clone()),
        _ => {
            let f: fn(f64) -> f64 = match a {
                Activation::Relu => |v| v.max(0.0),
                Activation::Tanh => f64::tanh,
                _ => |v| v,
            };
            x.map(f)
        }
    }
}

fn flatten(x: &Tensor) -> Result<Tensor> {
    let n = x.dim(0);
    x.clone().reshape(&[n, x.len() / n])
}

/// A feed-forward stack of [`Layer`]s.
#[derive(Debug, Clone, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let s = Sequential { layers };
        s.validate()?;
        Ok(s)
    }

    /// Softmax may only close a stack.
    pub fn validate(&self) -> Result<()> {
        let n = self.layers.len();
        if self
            .layers
            .iter()
            .enumerate()
            .any(|(i, l)| i + 1 < n && l.ends_in_softmax())
        {
            return Err(Error::Config(
                "softmax is only allowed as the final layer".into(),
            ));
        }
        Ok(())
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for l in &self.layers {
            h = l.infer(&h)?;
        }
        Ok(h)
    }

    pub fn forward(&mut self, x: &Tensor, rng: &mut impl Rng) -> Result<Tensor> {
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(&h, rng)?;
        }
        h.check_finite("forward output")?;
        Ok(h)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let mut g = dy.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        g.check_finite("input gradient")?;
        Ok(g)
    }

    pub fn set_mode(&mut self, mode: Mode) {
        for l in &mut self.layers {
            if let Layer::Dropout(d) = l {
                d.mode = mode;
            }
        }
    }

    pub fn freeze_dropout(&mut self, frozen: bool) {
        for l in &mut self.layers {
            if let Layer::Dropout(d) = l {
                d.freeze_mask(frozen);
            }
        }
    }
}

impl Parameterized for Sequential {
    fn params(&self) -> Vec<(String, &Param)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                l.params()
                    .into_iter()
                    .map(move |(n, p)| (format!("{i}.{n}"), p))
            })
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn softmax_must_be_last() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let bad = Sequential::new(vec![
            Layer::Dense(Dense::new(2, 2, Activation::Softmax, &mut rng)),
            Layer::Dense(Dense::new(2, 2, Activation::Identity, &mut rng)),
        ]);
        assert!(matches!(bad, Err(Error::Config(_))));
    }

    #[test]
    fn eval_forward_is_bit_identical() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut net = Sequential::new(vec![
            Layer::Dense(Dense::new(4, 8, Activation::Relu, &mut rng)),
            Layer::Dropout(Dropout::new(0.5).unwrap()),
            Layer::Dense(Dense::new(8, 3, Activation::Softmax, &mut rng)),
        ])
        .unwrap();
        net.set_mode(Mode::Eval);
        let x = Tensor::from_fn(&[5, 4], |i| (i as f64).sin());
        let a = net.forward(&x, &mut rng).unwrap();
        let b = net.forward(&x, &mut rng).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, net.infer(&x).unwrap());
    }
}
