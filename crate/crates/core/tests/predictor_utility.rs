//! The forecaster against the per-block mean predictor on series whose
//! next value is an exact function of the recent past.

use proptest::prelude::*;
use skywatch::nn::{AdamConfig, Tensor};
use skywatch::predictor::{
    make_training_set, mse, train_predictor, PredictorConfig, PredictorModel,
};

fn config(epochs: usize) -> PredictorConfig {
    PredictorConfig {
        hidden_units: 32,
        window_len: 4,
        epochs,
        batch_size: 32,
        optimizer: AdamConfig::with_lr(0.01),
        standardize: false,
    }
}

/// Per-block mean of the training targets, broadcast over the test rows.
fn mean_predictor_mse(train_y: &Tensor, test_y: &Tensor) -> f64 {
    let b = train_y.dim(1);
    let n = train_y.dim(0);
    let means: Vec<f64> = (0..b)
        .map(|j| (0..n).map(|i| train_y.data()[i * b + j]).sum::<f64>() / n as f64)
        .collect();
    let pred = Tensor::from_fn(test_y.shape(), |i| means[i % b]);
    mse(&pred, test_y).unwrap()
}

/// Trains on the first 75% of windows and scores both predictors on the rest.
fn compare(counts: &Tensor, epochs: usize, seed: u64) -> (f64, f64) {
    let cfg = config(epochs);
    let (x, y) = make_training_set(counts, cfg.window_len).unwrap();
    let n = x.dim(0);
    let cut = n * 3 / 4;
    let (train_x, test_x) = (x.slice_outer(0, cut), x.slice_outer(cut, n));
    let (train_y, test_y) = (y.slice_outer(0, cut), y.slice_outer(cut, n));
    let (model, _) = train_predictor(&train_x, &train_y, &cfg, seed).unwrap();
    let lstm = mse(&model.predict_batch(&test_x).unwrap(), &test_y).unwrap();
    (lstm, mean_predictor_mse(&train_y, &test_y))
}

#[test]
fn periodic_counts_beat_the_mean_twofold() {
    // Period-6 seasonal pattern per block with distinct phases.
    let blocks = 6;
    let counts = Tensor::from_fn(&[240, blocks], |i| {
        let (t, b) = ((i / blocks) as f64, (i % blocks) as f64);
        4.0 + 3.0 * (std::f64::consts::TAU * t / 6.0 + b).sin()
    });
    let (lstm, mean) = compare(&counts, 120, 3);
    assert!(lstm * 2.0 <= mean, "forecaster {lstm} vs mean {mean}");
}

#[test]
fn linear_dynamics_beat_half_the_mean() {
    // x_{t+1} = m + R (x_t - m) with R a slow rotation per block pair.
    let (c, s) = (0.3f64.cos(), 0.3f64.sin());
    let steps = 240;
    let mut series = vec![[5.0, 2.0, 7.0, 4.0]];
    for _ in 1..steps {
        let p = series.last().unwrap();
        let d = [p[0] - 5.0, p[1] - 5.0, p[2] - 5.0, p[3] - 5.0];
        series.push([
            5.0 + c * d[0] - s * d[1],
            5.0 + s * d[0] + c * d[1],
            5.0 + c * d[2] - s * d[3],
            5.0 + s * d[2] + c * d[3],
        ]);
    }
    let counts = Tensor::new(&[steps, 4], series.concat()).unwrap();
    let (lstm, mean) = compare(&counts, 120, 5);
    assert!(lstm < 0.5 * mean, "forecaster {lstm} vs mean {mean}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forecasts_are_non_negative(seed in 0u64..10_000, scale in 1.0f64..1e3) {
        let model = PredictorModel::new(config(1), 5, seed);
        let x = Tensor::from_fn(&[3, 4, 5], |i| ((i as f64 * 0.77 + seed as f64).sin()) * scale);
        let out = model.predict_batch(&x).unwrap();
        prop_assert!(out.data().iter().all(|&v| v >= 0.0));
    }
}
