//! The eight rotation/flip manipulations.

use super::image::Image;

/// Rotation by `rot90 * 90°` counterclockwise, optionally followed by a horizontal flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AugmentOp {
    index: u8,
}

impl AugmentOp {
    pub const COUNT: usize = 8;
    pub const IDENTITY: Self = Self { index: 0 };

    /// 0 identity, 1–3 rot90/180/270, 4 hflip, 5–7 rot90/180/270 then hflip.
    pub fn new(index: usize) -> Option<Self> {
        (index < Self::COUNT).then_some(Self { index: index as u8 })
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (0..Self::COUNT).map(|i| Self { index: i as u8 })
    }

    pub fn index(self) -> usize {
        self.index as usize
    }

    fn rotations(self) -> usize {
        self.index() % 4
    }

    fn flipped(self) -> bool {
        self.index >= 4
    }

    pub fn inverse(self) -> Self {
        if self.flipped() {
            // (F R^k)^-1 = R^-k F = F R^k
            self
        } else {
            Self {
                index: ((4 - self.rotations()) % 4) as u8,
            }
        }
    }

    pub fn apply(self, img: &Image) -> Image {
        let mut out = img.clone();
        for _ in 0..self.rotations() {
            out = rot90(&out);
        }
        if self.flipped() {
            out = hflip(&out);
        }
        out
    }
}

/// 90° counterclockwise: `out(r, x) = in(x, W - 1 - r)`.
pub fn rot90(img: &Image) -> Image {
    let (h, w) = (img.height(), img.width());
    Image::from_fn(img.channels(), w, h, |c, r, x| img.at(c, x, w - 1 - r)).expect("same pixel count")
}

pub fn hflip(img: &Image) -> Image {
    let w = img.width();
    Image::from_fn(img.channels(), img.height(), w, |c, r, x| img.at(c, r, w - 1 - x)).expect("same pixel count")
}

pub fn vflip(img: &Image) -> Image {
    let h = img.height();
    Image::from_fn(img.channels(), h, img.width(), |c, r, x| img.at(c, h - 1 - r, x)).expect("same pixel count")
}
