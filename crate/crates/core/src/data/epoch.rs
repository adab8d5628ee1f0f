//! Per-epoch sampling: every source image contributes four randomly scaled,
//! manipulated and cropped patches, each with fresh noise.

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::tensor::{Shape, Tensor};

use super::augment::AugmentOp;
use super::image::Image;
use super::noise::{add_gaussian_noise, SamplePair, SigmaMode};
use super::patch::crop;
use super::resize::bicubic_resize;

/// Downscale factors applied before cropping.
pub const SCALES: [f64; 4] = [0.7, 0.8, 0.9, 1.0];
/// Patches drawn per image per epoch.
pub const SAMPLES_PER_IMAGE: usize = 4;
pub const DEFAULT_BATCH: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochConfig {
    pub patch_size: usize,
    pub batch_size: usize,
    pub sigma: SigmaMode,
}

/// Training images with their rescaled copies computed once.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    /// `scaled[i]` holds image `i` at every scale large enough for a patch.
    scaled: Vec<Vec<Image>>,
    patch_size: usize,
}

impl TrainingSet {
    pub fn new(images: &[Image], patch_size: usize) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Data("no training images".into()));
        }
        let mut scaled = Vec::with_capacity(images.len());
        for (i, img) in images.iter().enumerate() {
            let mut versions = Vec::new();
            for &s in &SCALES {
                if let Ok(r) = bicubic_resize(img, s) {
                    if r.height() >= patch_size && r.width() >= patch_size {
                        versions.push(r);
                    }
                }
            }
            if versions.is_empty() {
                return Err(Error::Data(format!(
                    "training image {i} ({}x{}) is smaller than a {patch_size}x{patch_size} patch",
                    img.height(),
                    img.width()
                )));
            }
            scaled.push(versions);
        }
        Ok(Self { scaled, patch_size })
    }

    pub fn len(&self) -> usize {
        self.scaled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scaled.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.scaled[0][0].channels()
    }
}

/// One mini-batch, `(n, c, size, size)` each.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub noisy: Tensor<f32>,
    pub clean: Tensor<f32>,
    pub sigmas: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Epoch {
    pub samples: Vec<SamplePair>,
    batch_size: usize,
}

impl Epoch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_batches(&self) -> usize {
        self.samples.len().div_ceil(self.batch_size)
    }

    /// Consecutive batches; the last one may be partial.
    pub fn batches(&self) -> impl Iterator<Item = Batch> + '_ {
        self.samples.chunks(self.batch_size).map(stack)
    }
}

fn stack(samples: &[SamplePair]) -> Batch {
    let first = &samples[0].clean;
    let shape = Shape::new(samples.len(), first.channels(), first.height(), first.width());
    let gather = |f: fn(&SamplePair) -> &Image| {
        let data: Vec<f32> = samples.iter().flat_map(|s| f(s).pixels().iter().copied()).collect();
        Tensor::from_vec(shape, data).expect("patches share a shape")
    };
    Batch {
        noisy: gather(|s| &s.noisy),
        clean: gather(|s| &s.clean),
        sigmas: samples.iter().map(|s| s.sigma_255).collect(),
    }
}

/// Draws the samples for epoch `epoch` (1-based) from streams derived from `seed`.
///
/// The augmentation stream picks, per sample, a scale, a manipulation and a
/// crop position, then shuffles; the noise stream then draws each sample's
/// noise level and noise in shuffled order.
pub fn build_epoch(set: &TrainingSet, cfg: &EpochConfig, seed: u64, epoch: u64) -> Result<Epoch> {
    cfg.sigma.validate()?;
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    if cfg.patch_size != set.patch_size {
        return Err(Error::InvalidArgument(format!(
            "training set was prepared for {}-pixel patches, config asks for {}",
            set.patch_size, cfg.patch_size
        )));
    }
    let size = cfg.patch_size;
    let mut aug = rng::stream(seed, Purpose::Augment, epoch);
    let mut clean = Vec::with_capacity(set.len() * SAMPLES_PER_IMAGE);
    for versions in &set.scaled {
        for _ in 0..SAMPLES_PER_IMAGE {
            let img = &versions[rng::uniform_index(&mut aug, versions.len())];
            let op = AugmentOp::new(rng::uniform_index(&mut aug, AugmentOp::COUNT)).expect("index in range");
            let r = rng::uniform_index(&mut aug, img.height() - size + 1);
            let x = rng::uniform_index(&mut aug, img.width() - size + 1);
            clean.push(op.apply(&crop(img, r, x, size)));
        }
    }
    rng::shuffle(&mut aug, &mut clean);
    let mut noise = rng::stream(seed, Purpose::Noise, epoch);
    let samples = clean
        .iter()
        .map(|c| {
            let sigma = cfg.sigma.draw(&mut noise);
            add_gaussian_noise(c, sigma, &mut noise)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Epoch {
        samples,
        batch_size: cfg.batch_size,
    })
}
