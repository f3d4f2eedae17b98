use rand::Rng;

use super::activation::Activation;
use super::param::{Param, Parameterized};
use super::tensor::{gemm_into, matmul_t, Tensor};
use crate::error::{Error, Result};

/// Fully connected layer `y = act(x·W + b)` with `W: [in, out]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
    pub activation: Activation,
    cache: Option<(Tensor, Tensor)>,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        Dense {
            weight: Param::glorot(&[inputs, outputs], inputs, outputs, rng),
            bias: Param::zeros(&[outputs]),
            activation,
            cache: None,
        }
    }

    pub fn from_parts(weight: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        weight.expect_rank(2, "dense weight")?;
        bias.expect_shape(&[weight.dim(1)], "dense bias")?;
        Ok(Dense {
            weight: Param::new(weight),
            bias: Param::new(bias),
            activation,
            cache: None,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.dim(0)
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.dim(1)
    }

    fn affine(&self, x: &Tensor) -> Result<Tensor> {
        x.expect_rank(2, "dense input")?;
        if x.dim(1) != self.inputs() {
            return Err(Error::Dimension(format!(
                "dense layer expects {} features, got {:?}",
                self.inputs(),
                x.shape()
            )));
        }
        let batch = x.dim(0);
        let out = self.outputs();
        let mut y = Tensor::zeros(&[batch, out]);
        for row in y.data_mut().chunks_mut(out) {
            row.copy_from_slice(self.bias.value.data());
        }
        gemm_into(x, false, &self.weight.value, false, 1.0, &mut y);
        Ok(y)
    }

    /// Pure forward pass; nothing is cached.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.activation.apply(self.affine(x)?))
    }

    /// Training forward pass; caches what backward needs.
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = self.infer(x)?;
        self.cache = Some((x.clone(), y.clone()));
        Ok(y)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let (x, y) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("dense backward called before forward".into()))?;
        dy.expect_shape(y.shape(), "dense output gradient")?;
        let dpre = self.activation.backward(y, dy);
        gemm_into(x, true, &dpre, false, 1.0, &mut self.weight.grad);
        let out = self.outputs();
        let bg = self.bias.grad.data_mut();
        for row in dpre.data().chunks(out) {
            for (g, d) in bg.iter_mut().zip(row) {
                *g += d;
            }
        }
        matmul_t(&dpre, false, &self.weight.value, true)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

impl Parameterized for Dense {
    fn params(&self) -> Vec<(String, &Param)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn layer(w: Vec<Vec<f64>>, b: Vec<f64>, act: Activation) -> Dense {
        let n = b.len();
        Dense::from_parts(
            Tensor::from_rows(&w).unwrap(),
            Tensor::new(&[n], b).unwrap(),
            act,
        )
        .unwrap()
    }

    #[test]
    fn identity_weights() {
        let d = layer(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.0, 0.0],
            Activation::Identity,
        );
        let y = d
            .infer(&Tensor::from_rows(&[vec![3.0, 4.0]]).unwrap())
            .unwrap();
        assert_eq!(y.data(), &[3.0, 4.0]);
    }

    #[test]
    fn relu_clips_negative_sum() {
        let d = layer(vec![vec![1.0], vec![1.0]], vec![-10.0], Activation::Relu);
        let y = d
            .infer(&Tensor::from_rows(&[vec![2.0, 3.0]]).unwrap())
            .unwrap();
        assert_eq!(y.data(), &[0.0]);
    }

    #[test]
    fn matches_scalar_loop_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let d = Dense::new(6, 4, Activation::Identity, &mut rng);
        let mut d = d;
        d.bias.value = Tensor::from_fn(&[4], |_| rng.random_range(-1.0..1.0));
        let x = Tensor::from_fn(&[3, 6], |_| rng.random_range(-1.0..1.0));
        let y = d.infer(&x).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let mut s = d.bias.value.data()[j];
                for k in 0..6 {
                    s += x.data()[i * 6 + k] * d.weight.value.data()[k * 4 + j];
                }
                assert!((y.data()[i * 4 + j] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wrong_width_is_dimension_error() {
        let d = layer(vec![vec![1.0], vec![1.0]], vec![0.0], Activation::Identity);
        let err = d.infer(&Tensor::zeros(&[1, 3])).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn backward_before_forward_is_state_error() {
        let mut d = layer(vec![vec![1.0]], vec![0.0], Activation::Identity);
        assert!(matches!(
            d.backward(&Tensor::zeros(&[1, 1])),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn linear_squared_loss_closed_form() {
        // L = sum((xW - y)^2) / batch  =>  dL/dW = 2 xᵀ(xW - y) / batch
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut d = Dense::new(3, 2, Activation::Identity, &mut rng);
        let x = Tensor::from_fn(&[5, 3], |_| rng.random_range(-1.0..1.0));
        let target = Tensor::from_fn(&[5, 2], |_| rng.random_range(-1.0..1.0));
        let pred = d.forward(&x).unwrap();
        let resid = pred.zip_map(&target, |p, t| p - t).unwrap();
        let mut dy = resid.clone();
        dy.scale(2.0 / 5.0);
        d.backward(&dy).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut s = 0.0;
                for b in 0..5 {
                    s += x.data()[b * 3 + i] * resid.data()[b * 2 + j];
                }
                let want = 2.0 * s / 5.0;
                assert!((d.weight.grad.data()[i * 2 + j] - want).abs() < 1e-12);
            }
        }
    }
}
