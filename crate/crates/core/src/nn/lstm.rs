//! Single-layer LSTM over `[batch, time, features]` sequences, returning the
//! final hidden state. Backward is full backpropagation through time.

use rand::Rng;

use super::activation::sigmoid;
use super::param::{Param, Parameterized};
use super::tensor::{gemm_into, matmul_t, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LstmCell {
    input_size: usize,
    hidden_size: usize,
    /// Gate weights, each `[input + hidden, hidden]`, applied to `[x_t, h_{t-1}]`.
    pub w_input: Param,
    pub w_forget: Param,
    pub w_output: Param,
    pub w_cell: Param,
    pub b_input: Param,
    pub b_forget: Param,
    pub b_output: Param,
    pub b_cell: Param,
    cache: Option<Vec<StepCache>>,
}

#[derive(Debug, Clone)]
struct StepCache {
    z: Tensor,
    i: Tensor,
    f: Tensor,
    o: Tensor,
    g: Tensor,
    c_prev: Tensor,
    tanh_c: Tensor,
}

impl LstmCell {
    /// Glorot-initialized gates with forget-gate bias 1.
    pub fn new(input_size: usize, hidden_size: usize, rng: &mut impl Rng) -> Self {
        let fan_in = input_size + hidden_size;
        let shape = [fan_in, hidden_size];
        let mut cell = LstmCell {
            input_size,
            hidden_size,
            w_input: Param::glorot(&shape, fan_in, hidden_size, rng),
            w_forget: Param::glorot(&shape, fan_in, hidden_size, rng),
            w_output: Param::glorot(&shape, fan_in, hidden_size, rng),
            w_cell: Param::glorot(&shape, fan_in, hidden_size, rng),
            b_input: Param::zeros(&[hidden_size]),
            b_forget: Param::zeros(&[hidden_size]),
            b_output: Param::zeros(&[hidden_size]),
            b_cell: Param::zeros(&[hidden_size]),
            cache: None,
        };
        cell.b_forget.value.fill(1.0);
        cell
    }

    /// All weights and biases zero.
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let shape = [input_size + hidden_size, hidden_size];
        LstmCell {
            input_size,
            hidden_size,
            w_input: Param::zeros(&shape),
            w_forget: Param::zeros(&shape),
            w_output: Param::zeros(&shape),
            w_cell: Param::zeros(&shape),
            b_input: Param::zeros(&[hidden_size]),
            b_forget: Param::zeros(&[hidden_size]),
            b_output: Param::zeros(&[hidden_size]),
            b_cell: Param::zeros(&[hidden_size]),
            cache: None,
        }
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    fn check(&self, seq: &Tensor) -> Result<(usize, usize)> {
        seq.expect_rank(3, "lstm sequence")?;
        if seq.dim(2) != self.input_size {
            return Err(Error::Dimension(format!(
                "lstm expects {} features per step, got {:?}",
                self.input_size,
                seq.shape()
            )));
        }
        Ok((seq.dim(0), seq.dim(1)))
    }

    fn gate(&self, z: &Tensor, w: &Param, b: &Param, f: fn(f64) -> f64) -> Tensor {
        let h = self.hidden_size;
        let mut pre = Tensor::zeros(&[z.dim(0), h]);
        for row in pre.data_mut().chunks_mut(h) {
            row.copy_from_slice(b.value.data());
        }
        gemm_into(z, false, &w.value, false, 1.0, &mut pre);
        for v in pre.data_mut() {
            *v = f(*v);
        }
        pre
    }

    fn run(&self, seq: &Tensor, mut record: Option<&mut Vec<StepCache>>) -> Result<Tensor> {
        let (batch, steps) = self.check(seq)?;
        let (n_in, n_h) = (self.input_size, self.hidden_size);
        let mut h = Tensor::zeros(&[batch, n_h]);
        let mut c = Tensor::zeros(&[batch, n_h]);
        for t in 0..steps {
            let mut z = Tensor::zeros(&[batch, n_in + n_h]);
            for b in 0..batch {
                let src = &seq.data()[(b * steps + t) * n_in..(b * steps + t + 1) * n_in];
                let row = z.row_mut(b);
                row[..n_in].copy_from_slice(src);
                row[n_in..].copy_from_slice(h.row(b));
            }
            let i = self.gate(&z, &self.w_input, &self.b_input, sigmoid);
            let f = self.gate(&z, &self.w_forget, &self.b_forget, sigmoid);
            let o = self.gate(&z, &self.w_output, &self.b_output, sigmoid);
            let g = self.gate(&z, &self.w_cell, &self.b_cell, f64::tanh);
            let c_prev = c;
            let mut c_next = Tensor::zeros(&[batch, n_h]);
            let mut tanh_c = Tensor::zeros(&[batch, n_h]);
            let mut h_next = Tensor::zeros(&[batch, n_h]);
            for k in 0..batch * n_h {
                let cv = f.data()[k] * c_prev.data()[k] + i.data()[k] * g.data()[k];
                c_next.data_mut()[k] = cv;
                let tc = cv.tanh();
                tanh_c.data_mut()[k] = tc;
                h_next.data_mut()[k] = o.data()[k] * tc;
            }
            if let Some(cache) = record.as_deref_mut() {
                cache.push(StepCache {
                    z,
                    i,
                    f,
                    o,
                    g,
                    c_prev,
                    tanh_c,
                });
            }
            c = c_next;
            h = h_next;
        }
        h.check_finite("lstm hidden state")?;
        Ok(h)
    }

    /// Final hidden state `[batch, hidden]`; nothing cached.
    pub fn infer(&self, seq: &Tensor) -> Result<Tensor> {
        self.run(seq, None)
    }

    pub fn forward(&mut self, seq: &Tensor) -> Result<Tensor> {
        let mut cache = Vec::with_capacity(seq.dim(1).max(1));
        let h = self.run(seq, Some(&mut cache))?;
        self.cache = Some(cache);
        Ok(h)
    }

    /// Backpropagates `dL/dh_T`; returns `dL/dsequence`.
    pub fn backward(&mut self, dh_last: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("lstm backward called before forward".into()))?;
        let (n_in, n_h) = (self.input_size, self.hidden_size);
        let batch = cache[0].z.dim(0);
        let steps = cache.len();
        dh_last.expect_shape(&[batch, n_h], "lstm hidden gradient")?;
        let mut dseq = Tensor::zeros(&[batch, steps, n_in]);
        let mut dh = dh_last.clone();
        let mut dc = Tensor::zeros(&[batch, n_h]);
        for (t, s) in cache.iter().enumerate().rev() {
            let mut da_i = Tensor::zeros(&[batch, n_h]);
            let mut da_f = Tensor::zeros(&[batch, n_h]);
            let mut da_o = Tensor::zeros(&[batch, n_h]);
            let mut da_g = Tensor::zeros(&[batch, n_h]);
            for k in 0..batch * n_h {
                let (i, f, o, g) = (s.i.data()[k], s.f.data()[k], s.o.data()[k], s.g.data()[k]);
                let tc = s.tanh_c.data()[k];
                let dhk = dh.data()[k];
                let dck = dc.data()[k] + dhk * o * (1.0 - tc * tc);
                da_o.data_mut()[k] = dhk * tc * o * (1.0 - o);
                da_i.data_mut()[k] = dck * g * i * (1.0 - i);
                da_f.data_mut()[k] = dck * s.c_prev.data()[k] * f * (1.0 - f);
                da_g.data_mut()[k] = dck * i * (1.0 - g * g);
                dc.data_mut()[k] = dck * f;
            }
            let mut dz = Tensor::zeros(&[batch, n_in + n_h]);
            for (da, w, b) in [
                (&da_i, &mut self.w_input, &mut self.b_input),
                (&da_f, &mut self.w_forget, &mut self.b_forget),
                (&da_o, &mut self.w_output, &mut self.b_output),
                (&da_g, &mut self.w_cell, &mut self.b_cell),
            ] {
                gemm_into(&s.z, true, da, false, 1.0, &mut w.grad);
                for row in da.data().chunks(n_h) {
                    for (gb, d) in b.grad.data_mut().iter_mut().zip(row) {
                        *gb += d;
                    }
                }
                dz.add_assign(&matmul_t(da, false, &w.value, true)?)?;
            }
            let mut next_dh = Tensor::zeros(&[batch, n_h]);
            for b in 0..batch {
                let row = dz.row(b);
                dseq.data_mut()[(b * steps + t) * n_in..(b * steps + t + 1) * n_in]
                    .copy_from_slice(&row[..n_in]);
                next_dh.row_mut(b).copy_from_slice(&row[n_in..]);
            }
            dh = next_dh;
        }
        Ok(dseq)
    }
}

impl Parameterized for LstmCell {
    fn params(&self) -> Vec<(String, &Param)> {
        vec![
            ("w_input".into(), &self.w_input),
            ("w_forget".into(), &self.w_forget),
            ("w_output".into(), &self.w_output),
            ("w_cell".into(), &self.w_cell),
            ("b_input".into(), &self.b_input),
            ("b_forget".into(), &self.b_forget),
            ("b_output".into(), &self.b_output),
            ("b_cell".into(), &self.b_cell),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.w_input,
            &mut self.w_forget,
            &mut self.w_output,
            &mut self.w_cell,
            &mut self.b_input,
            &mut self.b_forget,
            &mut self.b_output,
            &mut self.b_cell,
        ]
    }
}
