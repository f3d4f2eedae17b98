//! Synthetic 10-class image set: oriented sinusoidal gratings at two
//! spatial frequencies with random phase, contrast and pixel noise.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageConfig {
    pub size: usize,
    pub classes: usize,
    pub noise_std: f64,
    /// Cycles across the image for the low and high frequency classes.
    pub frequencies: [f64; 2],
}

impl Default for ImageConfig {
    fn default() -> Self {
        ImageConfig {
            size: 16,
            classes: 10,
            noise_std: 0.8,
            frequencies: [1.5, 3.0],
        }
    }
}

impl ImageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 2 || self.classes < 2 || self.noise_std < 0.0 {
            return Err(Error::Config(
                "images need size ≥ 2, classes ≥ 2, noise_std ≥ 0".into(),
            ));
        }
        Ok(())
    }

    fn orientations(&self) -> usize {
        self.classes.div_ceil(2)
    }
}

/// Images `[n, 1, size, size]` with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub images: Tensor,
    pub labels: Vec<usize>,
}

impl ImageSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> ImageSet {
        ImageSet {
            images: self.images.select_outer(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// `n` images with labels cycling through the classes.
pub fn generate_images(config: &ImageConfig, n: usize, rng: &mut impl Rng) -> ImageSet {
    let s = config.size;
    let noise = Normal::new(0.0, config.noise_std.max(1e-12)).expect("finite std");
    let orientations = config.orientations();
    let mut data = Vec::with_capacity(n * s * s);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % config.classes;
        let theta = PI * (label % orientations) as f64 / orientations as f64;
        let freq = config.frequencies[label / orientations];
        let phase = rng.random_range(0.0..2.0 * PI);
        let contrast = rng.random_range(0.7..1.3);
        let (c, sn) = (theta.cos(), theta.sin());
        for y in 0..s {
            for x in 0..s {
                let u = (x as f64 * c + y as f64 * sn) / s as f64;
                let v = contrast * (2.0 * PI * freq * u + phase).sin();
                data.push(
                    v + if config.noise_std > 0.0 {
                        noise.sample(rng)
                    } else {
                        0.0
                    },
                );
            }
        }
        labels.push(label);
    }
    ImageSet {
        images: Tensor::new(&[n, 1, s, s], data).expect("sized"),
        labels,
    }
}
