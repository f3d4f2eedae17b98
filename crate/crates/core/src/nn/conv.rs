//! "Conv-lite": square-kernel 2-D convolution (stride 1, same padding) and
//! 2×2 max pooling over `[batch, channels, height, width]` tensors.

use rand::Rng;

use super::param::{Param, Parameterized};
use super::tensor::{gemm_into, matmul_t, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Conv2d {
    /// `[out_channels, in_channels, k, k]`
    pub weight: Param,
    pub bias: Param,
    cache: Option<ConvCache>,
}

#[derive(Debug, Clone)]
struct ConvCache {
    cols: Tensor,
    input_shape: [usize; 4],
}

impl Conv2d {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut impl Rng) -> Self {
        assert!(kernel % 2 == 1, "same padding needs an odd kernel");
        let fan = kernel * kernel;
        Conv2d {
            weight: Param::glorot(
                &[out_channels, in_channels, kernel, kernel],
                in_channels * fan,
                out_channels * fan,
                rng,
            ),
            bias: Param::zeros(&[out_channels]),
            cache: None,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.dim(1)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.dim(0)
    }

    pub fn kernel(&self) -> usize {
        self.weight.value.dim(2)
    }

    fn check_input(&self, x: &Tensor) -> Result<[usize; 4]> {
        x.expect_rank(4, "conv input")?;
        let s = x.shape();
        if s[1] != self.in_channels() {
            return Err(Error::Dimension(format!(
                "conv expects {} channels, got {:?}",
                self.in_channels(),
                s
            )));
        }
        Ok([s[0], s[1], s[2], s[3]])
    }

    /// Unfolds every output position's receptive field into a row:
    /// `[batch*h*w, c*k*k]`.
    fn im2col(&self, x: &Tensor, [n, c, h, w]: [usize; 4]) -> Tensor {
        let k = self.kernel();
        let pad = (k / 2) as isize;
        let width = c * k * k;
        let mut cols = Tensor::zeros(&[n * h * w, width]);
        let xd = x.data();
        let cd = cols.data_mut();
        for b in 0..n {
            for i in 0..h {
                for j in 0..w {
                    let row = ((b * h + i) * w + j) * width;
                    for ch in 0..c {
                        let plane = (b * c + ch) * h * w;
                        for di in 0..k {
                            let ii = i as isize + di as isize - pad;
                            if ii < 0 || ii >= h as isize {
                                continue;
                            }
                            for dj in 0..k {
                                let jj = j as isize + dj as isize - pad;
                                if jj < 0 || jj >= w as isize {
                                    continue;
                                }
                                cd[row + (ch * k + di) * k + dj] =
                                    xd[plane + ii as usize * w + jj as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &Tensor, [n, c, h, w]: [usize; 4]) -> Tensor {
        let k = self.kernel();
        let pad = (k / 2) as isize;
        let width = c * k * k;
        let mut dx = Tensor::zeros(&[n, c, h, w]);
        let cd = dcols.data();
        let xd = dx.data_mut();
        for b in 0..n {
            for i in 0..h {
                for j in 0..w {
                    let row = ((b * h + i) * w + j) * width;
                    for ch in 0..c {
                        let plane = (b * c + ch) * h * w;
                        for di in 0..k {
                            let ii = i as isize + di as isize - pad;
                            if ii < 0 || ii >= h as isize {
                                continue;
                            }
                            for dj in 0..k {
                                let jj = j as isize + dj as isize - pad;
                                if jj < 0 || jj >= w as isize {
                                    continue;
                                }
                                xd[plane + ii as usize * w + jj as usize] +=
                                    cd[row + (ch * k + di) * k + dj];
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    fn kernel_matrix(&self) -> Tensor {
        let o = self.out_channels();
        self.weight
            .value
            .clone()
            .reshape(&[o, self.weight.value.len() / o])
            .expect("weight is rank 4")
    }

    fn forward_cols(&self, cols: &Tensor, [n, _, h, w]: [usize; 4]) -> Tensor {
        let o = self.out_channels();
        // [n*h*w, o]
        let mut rows = Tensor::zeros(&[n * h * w, o]);
        for r in rows.data_mut().chunks_mut(o) {
            r.copy_from_slice(self.bias.value.data());
        }
        gemm_into(cols, false, &self.kernel_matrix(), true, 1.0, &mut rows);
        let mut y = Tensor::zeros(&[n, o, h, w]);
        let rd = rows.data();
        let yd = y.data_mut();
        let hw = h * w;
        for b in 0..n {
            for p in 0..hw {
                for ch in 0..o {
                    yd[(b * o + ch) * hw + p] = rd[(b * hw + p) * o + ch];
                }
            }
        }
        y
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let dims = self.check_input(x)?;
        let cols = self.im2col(x, dims);
        Ok(self.forward_cols(&cols, dims))
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let dims = self.check_input(x)?;
        let cols = self.im2col(x, dims);
        let y = self.forward_cols(&cols, dims);
        self.cache = Some(ConvCache {
            cols,
            input_shape: dims,
        });
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("conv backward called before forward".into()))?;
        let [n, c, h, w] = cache.input_shape;
        let o = self.out_channels();
        dy.expect_shape(&[n, o, h, w], "conv output gradient")?;
        let hw = h * w;
        let mut drows = Tensor::zeros(&[n * hw, o]);
        {
            let dd = dy.data();
            let rd = drows.data_mut();
            for b in 0..n {
                for p in 0..hw {
                    for ch in 0..o {
                        rd[(b * hw + p) * o + ch] = dd[(b * o + ch) * hw + p];
                    }
                }
            }
        }
        let mut dk = Tensor::zeros(&[o, c * self.kernel() * self.kernel()]);
        gemm_into(&drows, true, &cache.cols, false, 0.0, &mut dk);
        for (g, d) in self.weight.grad.data_mut().iter_mut().zip(dk.data()) {
            *g += d;
        }
        let bg = self.bias.grad.data_mut();
        for r in drows.data().chunks(o) {
            for (g, d) in bg.iter_mut().zip(r) {
                *g += d;
            }
        }
        let dcols = matmul_t(&drows, false, &self.kernel_matrix(), false)?;
        Ok(self.col2im(&dcols, cache.input_shape))
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

impl Parameterized for Conv2d {
    fn params(&self) -> Vec<(String, &Param)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// 2×2 max pooling with stride 2. Odd trailing rows/columns are dropped.
#[derive(Debug, Clone, Default)]
pub struct MaxPool2 {
    cache: Option<(Vec<usize>, [usize; 4])>,
}

impl MaxPool2 {
    pub fn new() -> Self {
        Self::default()
    }

    fn pool(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
        x.expect_rank(4, "max-pool input")?;
        let s = x.shape();
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        if h < 2 || w < 2 {
            return Err(Error::Dimension(format!(
                "max-pool needs at least 2×2, got {s:?}"
            )));
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut y = Tensor::zeros(&[n, c, oh, ow]);
        let mut arg = vec![0usize; n * c * oh * ow];
        let xd = x.data();
        for (plane, (ys, args)) in y
            .data_mut()
            .chunks_mut(oh * ow)
            .zip(arg.chunks_mut(oh * ow))
            .enumerate()
        {
            let base = plane * h * w;
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = base + 2 * i * w + 2 * j;
                    for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * i + di) * w + 2 * j + dj;
                        if xd[idx] > xd[best] {
                            best = idx;
                        }
                    }
                    ys[i * ow + j] = xd[best];
                    args[i * ow + j] = best;
                }
            }
        }
        Ok((y, arg))
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        Ok(Self::pool(x)?.0)
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (y, arg) = Self::pool(x)?;
        let s = x.shape();
        self.cache = Some((arg, [s[0], s[1], s[2], s[3]]));
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let (arg, shape) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("max-pool backward called before forward".into()))?;
        if dy.len() != arg.len() {
            return Err(Error::Dimension("max-pool output gradient size".into()));
        }
        let mut dx = Tensor::zeros(shape);
        let xd = dx.data_mut();
        for (&i, &g) in arg.iter().zip(dy.data()) {
            xd[i] += g;
        }
        Ok(dx)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
