//! Additive white Gaussian noise.

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

use super::image::Image;

/// Upper end of the blind training range on the 0–255 scale.
pub const BLIND_MAX: f64 = 55.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    /// One noise level for every sample.
    Fixed(f64),
    /// Per-sample level drawn uniformly from `[0, max]`.
    Blind { max: f64 },
}

impl SigmaMode {
    pub fn draw(&self, rng: &mut impl RngCore) -> f64 {
        match *self {
            SigmaMode::Fixed(s) => s,
            SigmaMode::Blind { max } => rng::uniform_range(rng, 0.0, max),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = match *self {
            SigmaMode::Fixed(s) => s,
            SigmaMode::Blind { max } => max,
        };
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise level {s} must be finite and non-negative")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub clean: Image,
    pub noisy: Image,
    /// Realized noise; `clean + noise` reproduces `noisy` exactly.
    pub noise: Vec<f32>,
    /// Noise standard deviation on the 0–255 scale.
    pub sigma_255: f64,
}

/// `noisy = clean + n`, `n ~ N(0, (sigma_255 / 255)^2)` per pixel. The noisy
/// image is not clamped.
pub fn add_gaussian_noise(clean: &Image, sigma_255: f64, rng: &mut impl RngCore) -> Result<SamplePair> {
    SigmaMode::Fixed(sigma_255).validate()?;
    let std = sigma_255 / 255.0;
    let mut z = vec![0.0f64; clean.pixels().len()];
    rng::fill_gaussian(rng, &mut z);
    let mut noisy = clean.clone();
    let mut noise = Vec::with_capacity(z.len());
    for (p, z) in noisy.pixels_mut().iter_mut().zip(z) {
        let n = (z * std) as f32;
        *p += n;
        noise.push(n);
    }
    Ok(SamplePair {
        clean: clean.clone(),
        noisy,
        noise,
        sigma_255,
    })
}
