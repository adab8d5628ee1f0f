use crate::data::Image;
use crate::error::{Error, Result};
use crate::tensor::Shape;

/// Peak signal-to-noise ratio in dB with pixels on the 0–255 scale.
/// Identical images give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    psnr_max(a, b, 255.0)
}

/// PSNR after mapping `[0, 1]` pixels onto `[0, max_val]`.
pub fn psnr_max(a: &Image, b: &Image, max_val: f64) -> Result<f64> {
    let (sa, sb) = (shape_of(a), shape_of(b));
    if sa != sb {
        return Err(Error::ShapeMismatch {
            op: "psnr",
            left: sa,
            right: sb,
        });
    }
    let n = a.pixels().len();
    if n == 0 {
        return Err(Error::InvalidArgument("psnr of empty images".into()));
    }
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| {
            let d = (x as f64 - y as f64) * max_val;
            d * d
        })
        .sum();
    let mse = sum / n as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (max_val * max_val / mse).log10())
}

fn shape_of(img: &Image) -> Shape {
    Shape::new(1, img.channels(), img.height(), img.width())
}

/// `"inf"` for the identical-image sentinel, two decimals otherwise.
pub fn format_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.2}")
    }
}
