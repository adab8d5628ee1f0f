//! Separable bicubic resampling (Catmull-Rom, a = -0.5) with clamped edges.

use crate::error::{Error, Result};

use super::image::Image;

/// Smallest side a resized image may have.
pub const MIN_RESIZED: usize = 8;

const A: f64 = -0.5;

fn cubic(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Source taps and weights for each output position along one axis.
fn taps(n_in: usize, n_out: usize) -> Vec<([usize; 4], [f64; 4])> {
    let ratio = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|i| {
            let src = (i as f64 + 0.5) * ratio - 0.5;
            let base = src.floor();
            let frac = src - base;
            let mut idx = [0usize; 4];
            let mut w = [0.0; 4];
            for k in 0..4 {
                let off = k as f64 - 1.0;
                idx[k] = (base + off).clamp(0.0, (n_in - 1) as f64) as usize;
                w[k] = cubic(frac - off);
            }
            (idx, w)
        })
        .collect()
}

/// Resizes to exactly `out_h`×`out_w`.
pub fn resize_to(img: &Image, out_h: usize, out_w: usize) -> Result<Image> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Data("resize to an empty image".into()));
    }
    let (h, w) = (img.height(), img.width());
    let th = taps(h, out_h);
    let tw = taps(w, out_w);
    let mut pixels = Vec::with_capacity(img.channels() * out_h * out_w);
    let mut rows = vec![0.0f64; h * out_w];
    for c in 0..img.channels() {
        let plane = img.plane(c);
        for r in 0..h {
            let src = &plane[r * w..(r + 1) * w];
            for (x, (idx, wt)) in tw.iter().enumerate() {
                rows[r * out_w + x] = (0..4).map(|k| wt[k] * src[idx[k]] as f64).sum();
            }
        }
        for (idx, wt) in &th {
            for x in 0..out_w {
                let v: f64 = (0..4).map(|k| wt[k] * rows[idx[k] * out_w + x]).sum();
                pixels.push(v as f32);
            }
        }
    }
    Image::new(img.channels(), out_h, out_w, pixels)
}

/// Downscales by `scale` in `(0, 1]`; each side becomes `floor(scale * side)`.
/// A scale of exactly 1 returns the input unchanged.
pub fn bicubic_resize(img: &Image, scale: f64) -> Result<Image> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::InvalidArgument(format!("resize scale {scale} is outside (0, 1]")));
    }
    if scale == 1.0 {
        return Ok(img.clone());
    }
    let oh = (scale * img.height() as f64).floor() as usize;
    let ow = (scale * img.width() as f64).floor() as usize;
    if oh < MIN_RESIZED || ow < MIN_RESIZED {
        return Err(Error::Data(format!(
            "scaling {}x{} by {scale} gives {oh}x{ow}, below the {MIN_RESIZED}-pixel minimum",
            img.height(),
            img.width()
        )));
    }
    resize_to(img, oh, ow)
}
