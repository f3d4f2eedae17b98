//! Central finite-difference gradient checking.

use rand::Rng;

use super::param::Parameterized;
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Perturbation size.
    pub step: f64,
    pub samples: usize,
    /// Gradients smaller than this are compared absolutely.
    pub magnitude_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            samples: 100,
            magnitude_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    /// `(param index, element, analytic, numeric)` of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error <= tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares analytic gradients with central differences on randomly sampled
/// parameter entries.
///
/// `analytic` must zero the gradients, run a forward and backward pass and
/// leave the gradients in place. `loss` must evaluate the same loss without
/// touching stochastic state (freeze dropout masks first).
pub fn check_gradients<M, A, L>(
    model: &mut M,
    config: GradCheckConfig,
    rng: &mut impl Rng,
    mut analytic: A,
    mut loss: L,
) -> Result<GradCheckReport>
where
    M: Parameterized,
    A: FnMut(&mut M) -> Result<()>,
    L: FnMut(&mut M) -> Result<f64>,
{
    analytic(model)?;
    let sizes: Vec<usize> = model.params_mut().iter().map(|p| p.value.len()).collect();
    let total: usize = sizes.iter().sum();
    let grads: Vec<Vec<f64>> = model
        .params_mut()
        .iter()
        .map(|p| p.grad.data().to_vec())
        .collect();
    let mut report = GradCheckReport {
        checked: 0,
        max_relative_error: 0.0,
        worst: None,
    };
    for _ in 0..config.samples.min(total) {
        let mut flat = rng.random_range(0..total);
        let mut pi = 0;
        while flat >= sizes[pi] {
            flat -= sizes[pi];
            pi += 1;
        }
        let original = model.params_mut()[pi].value.data()[flat];
        model.params_mut()[pi].value.data_mut()[flat] = original + config.step;
        let up = loss(model)?;
        model.params_mut()[pi].value.data_mut()[flat] = original - config.step;
        let down = loss(model)?;
        model.params_mut()[pi].value.data_mut()[flat] = original;
        let numeric = (up - down) / (2.0 * config.step);
        let a = grads[pi][flat];
        let err = relative_error(a, numeric, config.magnitude_floor);
        report.checked += 1;
        if err > report.max_relative_error || report.worst.is_none() {
            report.max_relative_error = report.max_relative_error.max(err);
            report.worst = Some((pi, flat, a, numeric));
        }
    }
    Ok(report)
}
