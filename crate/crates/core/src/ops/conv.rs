//! Stride-1 dilated 2-D convolution via banded im2col + GEMM.
//!
//! Every sample in a batch is processed independently; weight and bias gradients
//! are accumulated per sample and reduced in sample order, so results do not
//! depend on how many worker threads run.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{gemm, MatRef, Real, Shape, Tensor};

/// Upper bound on im2col buffer elements per band.
const BAND_ELEMS: usize = 1 << 22;

/// Zero padding that keeps the spatial size for an odd kernel.
pub fn same_padding(kernel: usize, dilation: usize) -> usize {
    dilation * (kernel - 1) / 2
}

#[derive(Debug, Clone)]
pub struct ConvParams<T> {
    /// `(out_ch, in_ch, k, k)`
    pub weight: Tensor<T>,
    /// `(1, out_ch, 1, 1)`
    pub bias: Option<Tensor<T>>,
    pub dilation: usize,
    pub padding: usize,
}

impl<T: Real> ConvParams<T> {
    /// Parameters with shape-preserving padding.
    pub fn new(weight: Tensor<T>, bias: Option<Tensor<T>>, dilation: usize) -> Result<Self> {
        let k = weight.shape().h;
        if k % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "same-size convolution needs an odd kernel, got {k}"
            )));
        }
        let p = Self {
            weight,
            bias,
            dilation,
            padding: same_padding(k, dilation),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape().h
    }

    fn validate(&self) -> Result<()> {
        let ws = self.weight.shape();
        if ws.h != ws.w || ws.h == 0 {
            return Err(Error::InvalidArgument(format!(
                "conv kernel must be square, got weight {ws}"
            )));
        }
        if self.dilation == 0 {
            return Err(Error::InvalidArgument("dilation must be positive".into()));
        }
        if let Some(b) = &self.bias {
            b.expect_shape(Shape::vector(ws.n), "conv2d bias")?;
        }
        Ok(())
    }
}

/// Forward convolution with the parameters' padding and dilation.
pub fn conv2d<T: Real>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    p.validate()?;
    conv2d_forward(x, &p.weight, p.bias.as_ref(), p.dilation, p.padding)
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    in_c: usize,
    out_c: usize,
    k: usize,
    dil: usize,
    pad: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn new(x: Shape, w: Shape, dil: usize, pad: usize) -> Result<Self> {
        if x.c != w.c || w.h != w.w {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                left: x,
                right: w,
            });
        }
        let reach = dil * (w.h - 1);
        if x.h + 2 * pad <= reach || x.w + 2 * pad <= reach {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                left: x,
                right: w,
            });
        }
        Ok(Self {
            in_c: x.c,
            out_c: w.n,
            k: w.h,
            dil,
            pad,
            h: x.h,
            w: x.w,
            oh: x.h + 2 * pad - reach,
            ow: x.w + 2 * pad - reach,
        })
    }

    fn pointwise(&self) -> bool {
        self.k == 1 && self.pad == 0
    }

    fn patch_len(&self) -> usize {
        self.in_c * self.k * self.k
    }

    fn rows_per_band(&self) -> usize {
        (BAND_ELEMS / (self.patch_len() * self.ow).max(1)).clamp(1, self.oh)
    }

    fn bands(&self) -> impl Iterator<Item = (usize, usize)> {
        let step = self.rows_per_band();
        let oh = self.oh;
        (0..oh).step_by(step).map(move |r0| (r0, (r0 + step).min(oh)))
    }

    /// Output columns `[lo, hi)` whose tap `kx` lands inside the input row.
    fn valid_cols(&self, kx: usize) -> (usize, usize) {
        let off = kx * self.dil;
        let lo = self.pad.saturating_sub(off).min(self.ow);
        let hi = (self.w + self.pad).saturating_sub(off).min(self.ow);
        (lo, hi.max(lo))
    }

    fn input_row(&self, oy: usize, ky: usize) -> Option<usize> {
        let iy = (oy + ky * self.dil).checked_sub(self.pad)?;
        (iy < self.h).then_some(iy)
    }
}

fn im2col<T: Real>(x: &[T], g: &Geometry, r0: usize, r1: usize, col: &mut [T]) {
    let band = (r1 - r0) * g.ow;
    let plane = g.h * g.w;
    for ci in 0..g.in_c {
        let src = &x[ci * plane..(ci + 1) * plane];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let dst = &mut col[row * band..(row + 1) * band];
                let (lo, hi) = g.valid_cols(kx);
                for (j, oy) in (r0..r1).enumerate() {
                    let out = &mut dst[j * g.ow..(j + 1) * g.ow];
                    match g.input_row(oy, ky) {
                        Some(iy) if hi > lo => {
                            out[..lo].fill(T::zero());
                            out[hi..].fill(T::zero());
                            let ix0 = lo + kx * g.dil - g.pad;
                            out[lo..hi].copy_from_slice(&src[iy * g.w + ix0..iy * g.w + ix0 + hi - lo]);
                        }
                        _ => out.fill(T::zero()),
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(col: &[T], g: &Geometry, r0: usize, r1: usize, dx: &mut [T]) {
    let band = (r1 - r0) * g.ow;
    let plane = g.h * g.w;
    for ci in 0..g.in_c {
        let dst = &mut dx[ci * plane..(ci + 1) * plane];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let src = &col[row * band..(row + 1) * band];
                let (lo, hi) = g.valid_cols(kx);
                if hi <= lo {
                    continue;
                }
                for (j, oy) in (r0..r1).enumerate() {
                    if let Some(iy) = g.input_row(oy, ky) {
                        let ix0 = lo + kx * g.dil - g.pad;
                        let d = &mut dst[iy * g.w + ix0..iy * g.w + ix0 + hi - lo];
                        for (a, &b) in d.iter_mut().zip(&src[j * g.ow + lo..j * g.ow + hi]) {
                            *a = *a + b;
                        }
                    }
                }
            }
        }
    }
}

/// Row-major `rows × cols` into `cols × rows`, in cache-sized tiles.
fn transpose<T: Copy>(src: &[T], rows: usize, cols: usize, dst: &mut [T]) {
    const TILE: usize = 32;
    for r0 in (0..rows).step_by(TILE) {
        let r1 = (r0 + TILE).min(rows);
        for c0 in (0..cols).step_by(TILE) {
            let c1 = (c0 + TILE).min(cols);
            for r in r0..r1 {
                let row = &src[r * cols..(r + 1) * cols];
                for c in c0..c1 {
                    dst[c * rows + r] = row[c];
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    dilation: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let g = Geometry::new(x.shape(), weight.shape(), dilation, padding)?;
    if let Some(b) = bias {
        b.expect_shape(Shape::vector(g.out_c), "conv2d bias")?;
    }
    let xs = x.shape();
    let out_shape = Shape::new(xs.n, g.out_c, g.oh, g.ow);
    let mut out = Tensor::zeros(out_shape);
    let out_plane = g.oh * g.ow;
    let wmat = MatRef::row_major(weight.data(), g.out_c, g.patch_len());

    out.data_mut()
        .par_chunks_mut(out_shape.sample_len().max(1))
        .enumerate()
        .for_each(|(n, y)| {
            let xsample = x.sample(n);
            if g.pointwise() {
                let xmat = MatRef::strided(xsample, g.in_c, out_plane, out_plane);
                gemm(wmat, xmat, T::zero(), y, out_plane);
            } else {
                let mut col = Vec::new();
                for (r0, r1) in g.bands() {
                    let band = (r1 - r0) * g.ow;
                    col.resize(g.patch_len() * band, T::zero());
                    im2col(xsample, &g, r0, r1, &mut col);
                    let cmat = MatRef::row_major(&col, g.patch_len(), band);
                    gemm(wmat, cmat, T::zero(), &mut y[r0 * g.ow..], out_plane);
                }
            }
            if let Some(b) = bias {
                for (o, plane) in y.chunks_mut(out_plane).enumerate() {
                    let bo = b.data()[o];
                    plane.iter_mut().for_each(|v| *v = *v + bo);
                }
            }
        });
    out.check_finite("conv2d")
}

pub(crate) struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dweight: Tensor<T>,
    pub dbias: Tensor<T>,
}

pub(crate) fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    dilation: usize,
    padding: usize,
    grad_out: &Tensor<T>,
    need_dx: bool,
) -> Result<ConvGrads<T>> {
    let g = Geometry::new(x.shape(), weight.shape(), dilation, padding)?;
    let xs = x.shape();
    grad_out.expect_shape(Shape::new(xs.n, g.out_c, g.oh, g.ow), "conv2d backward")?;
    let out_plane = g.oh * g.ow;
    let plen = g.patch_len();
    let wmat = MatRef::row_major(weight.data(), g.out_c, plen);

    let per_sample: Vec<(Option<Vec<T>>, Vec<T>, Vec<T>)> = (0..xs.n)
        .into_par_iter()
        .map(|n| {
            let xsample = x.sample(n);
            let gsample = grad_out.sample(n);
            let mut dw = vec![T::zero(); g.out_c * plen];
            let db: Vec<T> = gsample.chunks(out_plane).map(|p| p.iter().copied().sum()).collect();
            let mut dx = need_dx.then(|| vec![T::zero(); xs.sample_len()]);
            if g.pointwise() {
                let gmat = MatRef::strided(gsample, g.out_c, out_plane, out_plane);
                let xmat = MatRef::strided(xsample, g.in_c, out_plane, out_plane);
                gemm(gmat, xmat.t(), T::zero(), &mut dw, plen);
                if let Some(dx) = dx.as_mut() {
                    gemm(wmat.t(), gmat, T::zero(), dx, out_plane);
                }
            } else {
                let mut col = Vec::new();
                let mut ct = Vec::new();
                let mut dcol = Vec::new();
                for (r0, r1) in g.bands() {
                    let band = (r1 - r0) * g.ow;
                    col.resize(plen * band, T::zero());
                    ct.resize(plen * band, T::zero());
                    im2col(xsample, &g, r0, r1, &mut col);
                    // gemm packs a transposed right operand slowly; transpose it up front
                    transpose(&col, plen, band, &mut ct);
                    let gmat = MatRef::strided(&gsample[r0 * g.ow..], g.out_c, band, out_plane);
                    gemm(gmat, MatRef::row_major(&ct, band, plen), T::one(), &mut dw, plen);
                    if let Some(dx) = dx.as_mut() {
                        dcol.resize(plen * band, T::zero());
                        gemm(wmat.t(), gmat, T::zero(), &mut dcol, band);
                        col2im(&dcol, &g, r0, r1, dx);
                    }
                }
            }
            (dx, dw, db)
        })
        .collect();

    let mut dweight = Tensor::zeros(weight.shape());
    let mut dbias = Tensor::zeros(Shape::vector(g.out_c));
    let mut dx_all = need_dx.then(|| Vec::with_capacity(xs.numel()));
    for (dx, dw, db) in per_sample {
        for (a, b) in dweight.data_mut().iter_mut().zip(dw) {
            *a = *a + b;
        }
        for (a, b) in dbias.data_mut().iter_mut().zip(db) {
            *a = *a + b;
        }
        if let (Some(all), Some(dx)) = (dx_all.as_mut(), dx) {
            all.extend(dx);
        }
    }
    let dx = match dx_all {
        Some(v) => Some(Tensor::from_vec(xs, v)?.check_finite("conv2d backward")?),
        None => None,
    };
    Ok(ConvGrads {
        dx,
        dweight: dweight.check_finite("conv2d backward")?,
        dbias,
    })
}
