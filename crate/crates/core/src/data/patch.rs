use crate::error::{Error, Result};

use super::image::Image;

/// Side length of training patches.
pub const PATCH_SIZE: usize = 41;

/// Top-left offsets along one axis: multiples of `stride`, plus a final offset
/// at `dim - size` so the last patch touches the border.
pub fn patch_origins(dim: usize, size: usize, stride: usize) -> Vec<usize> {
    assert!(stride > 0 && size <= dim);
    let last = dim - size;
    let mut out: Vec<usize> = (0..=last).step_by(stride).collect();
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

/// The `size`×`size` window with top-left corner `(r, x)`.
pub fn crop(img: &Image, r: usize, x: usize, size: usize) -> Image {
    Image::from_fn(img.channels(), size, size, |c, i, j| img.at(c, r + i, x + j)).expect("crop inside image")
}

/// Row-major grid of patches; see [`patch_origins`].
pub fn extract_patches(img: &Image, size: usize, stride: usize) -> Result<Vec<Image>> {
    if size == 0 || stride == 0 {
        return Err(Error::InvalidArgument("patch size and stride must be positive".into()));
    }
    if img.height() < size || img.width() < size {
        return Err(Error::Data(format!(
            "{}x{} image is smaller than a {size}x{size} patch",
            img.height(),
            img.width()
        )));
    }
    let rows = patch_origins(img.height(), size, stride);
    let cols = patch_origins(img.width(), size, stride);
    Ok(rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&x| (r, x)))
        .map(|(r, x)| crop(img, r, x, size))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Image {
        Image::from_fn(1, h, w, |_, r, x| (r * w + x) as f32).unwrap()
    }

    #[test]
    fn exact_fit_is_one_patch() {
        let p = extract_patches(&ramp(41, 41), 41, 41).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0], ramp(41, 41));
    }

    #[test]
    fn two_patches_tile() {
        let img = ramp(41, 82);
        let p = extract_patches(&img, 41, 41).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[1].at(0, 0, 0), img.at(0, 0, 41));
        assert_eq!(p[1].at(0, 40, 40), img.at(0, 40, 81));
    }

    #[test]
    fn border_patch_is_shifted() {
        assert_eq!(patch_origins(100, 41, 41), vec![0, 41, 59]);
        let img = ramp(100, 100);
        let p = extract_patches(&img, 41, 41).unwrap();
        assert_eq!(p.len(), 9);
        assert_eq!(p[8].at(0, 0, 0), img.at(0, 59, 59));
    }

    #[test]
    fn too_small_image_fails() {
        assert!(extract_patches(&ramp(40, 80), 41, 10).is_err());
    }
}
