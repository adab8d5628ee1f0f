//! Per-channel batch normalization.

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Running mean and variance, each `(1, c, 1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
}

impl<T: Real> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: Tensor::zeros(Shape::vector(channels)),
            var: Tensor::full(Shape::vector(channels), T::one()),
        }
    }

    /// `new = (1 - momentum) * old + momentum * batch`, with the unbiased batch variance.
    pub fn update(&mut self, batch: &BatchStats, momentum: f64) {
        let keep = 1.0 - momentum;
        for (r, &m) in self.mean.data_mut().iter_mut().zip(&batch.mean) {
            *r = T::from_f64(keep * r.to_f64().unwrap_or(0.0) + momentum * m);
        }
        for (r, &v) in self.var.data_mut().iter_mut().zip(&batch.unbiased_var) {
            *r = T::from_f64(keep * r.to_f64().unwrap_or(1.0) + momentum * v);
        }
    }
}

/// Statistics of one training batch, per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub unbiased_var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchNormState<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running: RunningStats<T>,
    pub momentum: f64,
    pub epsilon: f64,
    pub mode: BnMode,
}

impl<T: Real> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::full(Shape::vector(channels), T::one()),
            beta: Tensor::zeros(Shape::vector(channels)),
            running: RunningStats::new(channels),
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
            mode: BnMode::Train,
        }
    }
}

/// Normalizes `x`; in train mode the running statistics are updated in place.
pub fn batchnorm<T: Real>(x: &Tensor<T>, s: &mut BatchNormState<T>) -> Result<Tensor<T>> {
    let fwd = match s.mode {
        BnMode::Train => {
            let f = bn_train_forward(x, &s.gamma, &s.beta, s.epsilon)?;
            s.running.update(f.stats.as_ref().expect("train stats"), s.momentum);
            f
        }
        BnMode::Eval => bn_eval_forward(x, &s.gamma, &s.beta, &s.running, s.epsilon)?,
    };
    Ok(fwd.out)
}

pub(crate) struct BnForward<T> {
    pub out: Tensor<T>,
    pub xhat: Tensor<T>,
    pub inv_std: Vec<f64>,
    pub stats: Option<BatchStats>,
}

fn check_params<T: Real>(x: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<()> {
    let c = Shape::vector(x.shape().c);
    gamma.expect_shape(c, "batchnorm gamma")?;
    beta.expect_shape(c, "batchnorm beta")
}

/// Visits every element of channel `c` in (n, h, w) order.
fn for_channel<T: Copy>(data: &[T], s: Shape, c: usize, mut f: impl FnMut(usize, T)) {
    let plane = s.plane();
    for n in 0..s.n {
        let base = (n * s.c + c) * plane;
        for (i, &v) in data[base..base + plane].iter().enumerate() {
            f(base + i, v);
        }
    }
}

pub(crate) fn bn_train_forward<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<BnForward<T>> {
    check_params(x, gamma, beta)?;
    let s = x.shape();
    let count = s.n * s.plane();
    if count < 2 {
        return Err(Error::InvalidArgument(format!(
            "batchnorm in train mode needs at least two values per channel, input is {s}"
        )));
    }
    let mut out = Tensor::zeros(s);
    let mut xhat = Tensor::zeros(s);
    let mut inv_std = Vec::with_capacity(s.c);
    let mut mean_v = Vec::with_capacity(s.c);
    let mut var_u = Vec::with_capacity(s.c);
    for c in 0..s.c {
        let mut sum = 0.0;
        for_channel(x.data(), s, c, |_, v| sum += v.to_f64().unwrap_or(f64::NAN));
        let mean = sum / count as f64;
        let mut sq = 0.0;
        for_channel(x.data(), s, c, |_, v| {
            let d = v.to_f64().unwrap_or(f64::NAN) - mean;
            sq += d * d;
        });
        let var = sq / count as f64;
        let istd = 1.0 / (var + eps).sqrt();
        let (g, b) = (gamma.data()[c].to_f64().unwrap_or(f64::NAN), beta.data()[c].to_f64().unwrap_or(f64::NAN));
        let (xh, o) = (xhat.data_mut(), out.data_mut());
        for_channel(x.data(), s, c, |i, v| {
            let n = (v.to_f64().unwrap_or(f64::NAN) - mean) * istd;
            xh[i] = T::from_f64(n);
            o[i] = T::from_f64(g * n + b);
        });
        inv_std.push(istd);
        mean_v.push(mean);
        var_u.push(sq / (count - 1) as f64);
    }
    Ok(BnForward {
        out: out.check_finite("batchnorm")?,
        xhat,
        inv_std,
        stats: Some(BatchStats {
            mean: mean_v,
            unbiased_var: var_u,
        }),
    })
}

pub(crate) fn bn_eval_forward<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running: &RunningStats<T>,
    eps: f64,
) -> Result<BnForward<T>> {
    check_params(x, gamma, beta)?;
    let s = x.shape();
    running.mean.expect_shape(Shape::vector(s.c), "batchnorm running_mean")?;
    let mut out = Tensor::zeros(s);
    let mut xhat = Tensor::zeros(s);
    let mut inv_std = Vec::with_capacity(s.c);
    for c in 0..s.c {
        let mean = running.mean.data()[c].to_f64().unwrap_or(f64::NAN);
        let var = running.var.data()[c].to_f64().unwrap_or(f64::NAN);
        let istd = 1.0 / (var + eps).sqrt();
        let (g, b) = (gamma.data()[c].to_f64().unwrap_or(f64::NAN), beta.data()[c].to_f64().unwrap_or(f64::NAN));
        let (xh, o) = (xhat.data_mut(), out.data_mut());
        for_channel(x.data(), s, c, |i, v| {
            let n = (v.to_f64().unwrap_or(f64::NAN) - mean) * istd;
            xh[i] = T::from_f64(n);
            o[i] = T::from_f64(g * n + b);
        });
        inv_std.push(istd);
    }
    Ok(BnForward {
        out: out.check_finite("batchnorm")?,
        xhat,
        inv_std,
        stats: None,
    })
}

pub(crate) struct BnGrads<T> {
    pub dx: Tensor<T>,
    pub dgamma: Tensor<T>,
    pub dbeta: Tensor<T>,
}

/// Gradients of the batch-statistics graph, or of the fixed affine map when `train` is false.
pub(crate) fn bn_backward<T: Real>(
    grad_out: &Tensor<T>,
    xhat: &Tensor<T>,
    gamma: &Tensor<T>,
    inv_std: &[f64],
    train: bool,
) -> Result<BnGrads<T>> {
    let s = xhat.shape();
    grad_out.expect_shape(s, "batchnorm backward")?;
    let m = (s.n * s.plane()) as f64;
    let mut dx = Tensor::zeros(s);
    let mut dgamma = Tensor::zeros(Shape::vector(s.c));
    let mut dbeta = Tensor::zeros(Shape::vector(s.c));
    let g = grad_out.data();
    let xh = xhat.data();
    for c in 0..s.c {
        let (mut sum_g, mut sum_gx) = (0.0, 0.0);
        for_channel(g, s, c, |i, gv| {
            let gv = gv.to_f64().unwrap_or(f64::NAN);
            sum_g += gv;
            sum_gx += gv * xh[i].to_f64().unwrap_or(f64::NAN);
        });
        dgamma.data_mut()[c] = T::from_f64(sum_gx);
        dbeta.data_mut()[c] = T::from_f64(sum_g);
        let scale = gamma.data()[c].to_f64().unwrap_or(f64::NAN) * inv_std[c];
        let d = dx.data_mut();
        if train {
            for_channel(g, s, c, |i, gv| {
                let gv = gv.to_f64().unwrap_or(f64::NAN);
                let xv = xh[i].to_f64().unwrap_or(f64::NAN);
                d[i] = T::from_f64(scale / m * (m * gv - sum_g - xv * sum_gx));
            });
        } else {
            for_channel(g, s, c, |i, gv| {
                d[i] = T::from_f64(scale * gv.to_f64().unwrap_or(f64::NAN));
            });
        }
    }
    Ok(BnGrads {
        dx: dx.check_finite("batchnorm backward")?,
        dgamma,
        dbeta,
    })
}
