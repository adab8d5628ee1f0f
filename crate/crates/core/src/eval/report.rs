use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use log::warn;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::data::{add_gaussian_noise, list_images, load_image, Image};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, from_seed, Purpose};
use crate::train::Checkpoint;

use super::denoise::Denoiser;
use super::psnr::{format_db, psnr};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub sigmas: Vec<f64>,
    pub seed: u64,
    /// Round noisy and denoised images to 8 bits before measuring.
    pub quantize: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            sigmas: vec![15.0, 25.0, 50.0],
            seed: 0,
            quantize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub name: String,
    pub sigma: f64,
    pub noisy_psnr: f64,
    pub denoised_psnr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaMean {
    pub sigma: f64,
    pub images: usize,
    pub noisy_psnr: f64,
    pub denoised_psnr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub variant: String,
    /// [`Checkpoint::fingerprint`] of the evaluated model.
    pub checkpoint_id: u64,
    pub dataset_hash: u64,
    /// Seconds since the Unix epoch when the report was made.
    pub timestamp: u64,
    pub seed: u64,
    pub quantize: bool,
    /// Sorted by image name, then in the order the noise levels were given.
    pub rows: Vec<EvalRow>,
    pub means: Vec<SigmaMean>,
    /// Files that could not be read, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// Seed for the noise added to image `name` at level `sigma`.
pub fn eval_noise_seed(seed: u64, name: &str, sigma: f64) -> u64 {
    derive_seed(derive_seed(seed, Purpose::Eval, name_hash(name)), Purpose::Eval, sigma.to_bits())
}

fn name_hash(name: &str) -> u64 {
    let d = Sha256::digest(name.as_bytes());
    u64::from_be_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

/// Hash over image names, shapes and pixels, in the given order.
pub fn dataset_hash(images: &[(String, Image)]) -> u64 {
    let mut h = Sha256::new();
    for (name, img) in images {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        for d in [img.channels(), img.height(), img.width()] {
            h.update((d as u64).to_le_bytes());
        }
        for p in img.pixels() {
            h.update(p.to_le_bytes());
        }
    }
    let d = h.finalize();
    u64::from_be_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Noise, denoise and measure every image at every level.
pub fn evaluate_images(
    denoiser: &Denoiser,
    images: &[(String, Image)],
    opts: &EvalOptions,
) -> Result<Vec<EvalRow>> {
    for &s in &opts.sigmas {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise level {s} must be finite and non-negative")));
        }
    }
    let mut order: Vec<usize> = (0..images.len()).collect();
    order.sort_by(|&a, &b| images[a].0.cmp(&images[b].0));
    let jobs: Vec<(usize, f64)> = order
        .iter()
        .flat_map(|&i| opts.sigmas.iter().map(move |&s| (i, s)))
        .collect();
    jobs.par_iter()
        .map(|&(i, sigma)| {
            let (name, clean) = &images[i];
            let mut rng = from_seed(eval_noise_seed(opts.seed, name, sigma));
            let noisy = add_gaussian_noise(clean, sigma, &mut rng)?.noisy;
            let out = denoiser.denoise(&noisy)?.clamped;
            let mut noisy = noisy.map(|v| v.clamp(0.0, 1.0));
            let mut out = out;
            if opts.quantize {
                noisy = noisy.quantize();
                out = out.quantize();
            }
            Ok(EvalRow {
                name: name.clone(),
                sigma,
                noisy_psnr: psnr(clean, &noisy)?,
                denoised_psnr: psnr(clean, &out)?,
            })
        })
        .collect()
}

/// Per-level means over `rows`, in the order the levels were given.
pub fn sigma_means(rows: &[EvalRow], sigmas: &[f64]) -> Vec<SigmaMean> {
    sigmas
        .iter()
        .map(|&sigma| {
            let sel: Vec<&EvalRow> = rows.iter().filter(|r| r.sigma == sigma).collect();
            SigmaMean {
                sigma,
                images: sel.len(),
                noisy_psnr: mean(sel.iter().map(|r| r.noisy_psnr)),
                denoised_psnr: mean(sel.iter().map(|r| r.denoised_psnr)),
            }
        })
        .collect()
}

/// Evaluates the checkpoint on every image in `dir`. Unreadable images are
/// skipped with a warning and listed in the report.
pub fn evaluate_dataset(ckpt: &Checkpoint, dir: impl AsRef<Path>, opts: &EvalOptions) -> Result<EvalReport> {
    let denoiser = Denoiser::from_checkpoint(ckpt)?;
    let mut images = Vec::new();
    let mut skipped = Vec::new();
    for path in list_images(&dir)? {
        let name = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        match load_image(&path) {
            Ok(img) => images.push((name, img)),
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                skipped.push((name, e.to_string()));
            }
        }
    }
    if images.is_empty() {
        return Err(Error::Data(format!("no readable images in {}", dir.as_ref().display())));
    }
    let rows = evaluate_images(&denoiser, &images, opts)?;
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    Ok(EvalReport {
        variant: ckpt.config.variant.clone(),
        checkpoint_id: ckpt.fingerprint(),
        dataset_hash: dataset_hash(&images),
        timestamp,
        seed: opts.seed,
        quantize: opts.quantize,
        means: sigma_means(&rows, &opts.sigmas),
        rows,
        skipped,
    })
}

fn tsv_db(v: f64) -> (String, bool) {
    if v.is_infinite() {
        ("null".into(), true)
    } else {
        (format!("{v:.6}"), false)
    }
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "variant {}  checkpoint {:016x}  dataset {:016x}", self.variant, self.checkpoint_id, self.dataset_hash);
        let _ = writeln!(
            s,
            "seed {}  timestamp {}  psnr on {} pixels",
            self.seed,
            self.timestamp,
            if self.quantize { "8-bit quantized" } else { "clamped, unquantized" }
        );
        let _ = writeln!(s, "{:<24} {:>6} {:>10} {:>10}", "image", "sigma", "noisy", "denoised");
        for r in &self.rows {
            let _ = writeln!(s, "{:<24} {:>6} {:>10} {:>10}", r.name, r.sigma, format_db(r.noisy_psnr), format_db(r.denoised_psnr));
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<24} {:>6} {:>10} {:>10}", "average", "sigma", "noisy", "denoised");
        for m in &self.means {
            let label = format!("{} images", m.images);
            let _ = writeln!(s, "{:<24} {:>6} {:>10} {:>10}", label, m.sigma, format_db(m.noisy_psnr), format_db(m.denoised_psnr));
        }
        if !self.skipped.is_empty() {
            let _ = writeln!(s, "\nskipped {} unreadable image(s):", self.skipped.len());
            for (name, why) in &self.skipped {
                let _ = writeln!(s, "  {name}: {why}");
            }
        }
        s
    }

    /// Header line, then one row per image and level. Infinite PSNR is
    /// written as `null` with the matching `*_inf` column set to 1.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("name\tsigma\tnoisy_psnr\tdenoised_psnr\tnoisy_inf\tdenoised_inf\n");
        for r in &self.rows {
            let (n, ni) = tsv_db(r.noisy_psnr);
            let (d, di) = tsv_db(r.denoised_psnr);
            let _ = writeln!(s, "{}\t{}\t{n}\t{d}\t{}\t{}", r.name, r.sigma, ni as u8, di as u8);
        }
        s
    }
}
