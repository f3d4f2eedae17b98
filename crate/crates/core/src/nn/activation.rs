use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Softmax,
}

/// Logistic function, split by sign so `exp` never overflows.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax of a rank-2 tensor with max subtraction.
pub fn softmax(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    let cols = x.dim(1);
    for row in y.data_mut().chunks_mut(cols) {
        softmax_in_place(row);
    }
    y
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// `log softmax` of one row, stable for large logits.
pub fn log_softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    for v in row.iter_mut() {
        *v -= lse;
    }
}

impl Activation {
    pub fn apply(self, pre: Tensor) -> Tensor {
        match self {
            Activation::Identity => pre,
            Activation::Relu => pre.map(|v| v.max(0.0)),
            Activation::Tanh => pre.map(f64::tanh),
            Activation::Softmax => softmax(&pre),
        }
    }

    /// Gradient wrt the pre-activation, given the activation output `y`.
    pub fn backward(self, y: &Tensor, dy: &Tensor) -> Tensor {
        match self {
            Activation::Identity => dy.clone(),
            Activation::Relu => y
                .zip_map(dy, |y, g| if y > 0.0 { g } else { 0.0 })
                .expect("shapes checked by caller"),
            Activation::Tanh => y
                .zip_map(dy, |y, g| g * (1.0 - y * y))
                .expect("shapes checked by caller"),
            Activation::Softmax => {
                let cols = y.dim(1);
                let mut dx = dy.clone();
                for (yr, gr) in y.data().chunks(cols).zip(dx.data_mut().chunks_mut(cols)) {
                    let dot: f64 = yr.iter().zip(gr.iter()).map(|(a, b)| a * b).sum();
                    for (g, &p) in gr.iter_mut().zip(yr) {
                        *g = p * (*g - dot);
                    }
                }
                dx
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn softmax_examples() {
        let y = softmax(&Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap());
        assert_eq!(y.data(), &[0.5, 0.5]);

        let y = softmax(&Tensor::from_rows(&[vec![1000.0, 0.0]]).unwrap());
        assert_eq!(y.data()[0], 1.0);
        assert!(y.data()[1] >= 0.0 && y.data()[1] < 1e-300);

        // e^i / (e + e^2 + e^3), 40-digit reference values
        let y = softmax(&Tensor::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap());
        let want = [
            0.090_030_573_170_380_46,
            0.244_728_471_054_797_64,
            0.665_240_955_774_821_9,
        ];
        for (a, b) in y.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn log_softmax_matches_softmax() {
        let mut a = vec![3.0, -1.0, 0.5, 700.0];
        let mut b = a.clone();
        softmax_in_place(&mut a);
        log_softmax_in_place(&mut b);
        for (p, lp) in a.iter().zip(&b) {
            assert!((p.ln().max(-745.0) - lp.max(-745.0)).abs() < 1e-9);
        }
    }
}
