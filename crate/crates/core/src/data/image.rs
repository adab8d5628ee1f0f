//! Planar images in `[0, 1]` and binary PGM/PPM I/O.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Channel-major (planar) image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Data(format!("images have 1 or 3 channels, got {channels}")));
        }
        if height == 0 || width == 0 {
            return Err(Error::Data(format!("image dimension is zero ({height}x{width})")));
        }
        if pixels.len() != channels * height * width {
            return Err(Error::Data(format!(
                "{} pixel values for a {channels}x{height}x{width} image",
                pixels.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            pixels,
        })
    }

    pub fn from_fn(channels: usize, height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Result<Self> {
        let mut pixels = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for r in 0..height {
                for x in 0..width {
                    pixels.push(f(c, r, x));
                }
            }
        }
        Self::new(channels, height, width, pixels)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f32] {
        &mut self.pixels
    }

    pub fn at(&self, c: usize, r: usize, x: usize) -> f32 {
        self.pixels[(c * self.height + r) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.pixels[c * n..(c + 1) * n]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            pixels: self.pixels.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// Rounds every pixel to the nearest 8-bit level.
    pub fn quantize(&self) -> Self {
        self.map(|v| to_u8(v) as f32 / 255.0)
    }

    /// `(1, c, h, w)`
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec(Shape::new(1, self.channels, self.height, self.width), self.pixels.clone())
            .expect("image and tensor sizes agree")
    }

    /// Takes sample `n` of a batch.
    pub fn from_tensor(t: &Tensor<f32>, n: usize) -> Result<Self> {
        let s = t.shape();
        Self::new(s.c, s.h, s.w, t.sample(n).to_vec())
    }
}

fn to_u8(v: f32) -> u8 {
    // f32::round rounds half away from zero
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::ImageFormat {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Parses a binary PGM (P5) or PPM (P6) with maxval 255.
pub fn decode_pnm(bytes: &[u8], path: &Path) -> Result<Image> {
    let mut pos = 0;
    let token = |pos: &mut usize| -> Result<String> {
        loop {
            match bytes.get(*pos) {
                Some(b'#') => {
                    while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                        *pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => *pos += 1,
                Some(_) => break,
                None => return Err(format_err(path, "truncated header")),
            }
        }
        let start = *pos;
        while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            *pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = token(&mut pos)?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(format_err(path, format!("unsupported format `{other}` (only binary P5/P6)"))),
    };
    let number = |what: &str, pos: &mut usize| -> Result<usize> {
        let t = token(pos)?;
        t.parse().map_err(|_| format_err(path, format!("bad {what} `{t}`")))
    };
    let width = number("width", &mut pos)?;
    let height = number("height", &mut pos)?;
    let maxval = number("maxval", &mut pos)?;
    if maxval != 255 {
        return Err(format_err(path, format!("maxval {maxval} is not supported (only 255)")));
    }
    if width == 0 || height == 0 {
        return Err(format_err(path, "dimension zero"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = width * height * channels;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| format_err(path, format!("raster has {} bytes, expected {n}", bytes.len().saturating_sub(pos))))?;
    let mut pixels = vec![0.0f32; n];
    let plane = width * height;
    for (i, &b) in raster.iter().enumerate() {
        let (p, c) = (i / channels, i % channels);
        pixels[c * plane + p] = b as f32 / 255.0;
    }
    Image::new(channels, height, width, pixels)
}

pub fn encode_pnm(img: &Image) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    let plane = img.width * img.height;
    out.reserve(plane * img.channels);
    for p in 0..plane {
        for c in 0..img.channels {
            out.push(to_u8(img.pixels[c * plane + p]));
        }
    }
    out
}

/// Loads a PGM/PPM. Pixels map to `[0, 1]` by `/255`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    decode_pnm(&bytes, path)
}

/// Writes an 8-bit PGM (1 channel) or PPM (3 channels), clamping to `[0, 1]`.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_pnm(img))?;
    Ok(())
}

fn is_pnm(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "ppm"))
}

/// Every `.pgm`/`.ppm` file in `dir`, sorted by file name.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| Error::Data(format!("cannot read {}: {e}", dir.display())))?;
    let mut paths = Vec::new();
    for e in entries {
        let p = e?.path();
        if p.is_file() && is_pnm(&p) {
            paths.push(p);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Loads every image in `dir` with its file stem.
pub fn load_dir(dir: impl AsRef<Path>) -> Result<Vec<(String, Image)>> {
    list_images(&dir)?
        .into_iter()
        .map(|p| {
            let name = p.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            Ok((name, load_image(&p)?))
        })
        .collect()
}
