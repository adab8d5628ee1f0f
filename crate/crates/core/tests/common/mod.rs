#![allow(dead_code)]

use std::collections::BTreeMap;

use dudenet::autodiff::Tape;
use dudenet::data::Image;
use dudenet::gradcheck::Evaluation;
use dudenet::graph::{forward_tape, ArchGraph, Mode};
use dudenet::ops::loss::mse_residual_loss;
use dudenet::rng::{self, Purpose};
use dudenet::store::ParameterStore;
use dudenet::{Result, Shape, Tensor};

pub fn random(shape: Shape, seed: u64) -> Tensor<f64> {
    let mut r = rng::stream(seed, Purpose::Test, 0);
    let mut v = vec![0.0; shape.numel()];
    rng::fill_gaussian(&mut r, &mut v);
    Tensor::from_vec(shape, v).unwrap()
}

/// Direct zero-padded cross-correlation.
pub fn loop_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: Option<&Tensor<f64>>, dil: usize, pad: usize) -> Tensor<f64> {
    let (xs, ws) = (x.shape(), w.shape());
    let k = ws.h;
    let oh = xs.h + 2 * pad - dil * (k - 1);
    let ow = xs.w + 2 * pad - dil * (k - 1);
    let mut out = Tensor::zeros(Shape::new(xs.n, ws.n, oh, ow));
    for n in 0..xs.n {
        for o in 0..ws.n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.map_or(0.0, |b| b.data()[o]);
                    for ci in 0..xs.c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy + ky * dil) as isize - pad as isize;
                                let ix = (ox + kx * dil) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= xs.h as isize || ix >= xs.w as isize {
                                    continue;
                                }
                                acc += x.at(n, ci, iy as usize, ix as usize) * w.at(o, ci, ky, kx);
                            }
                        }
                    }
                    let i = out.index(n, o, oy, ox);
                    out.data_mut()[i] = acc;
                }
            }
        }
    }
    out
}

/// Piecewise-smooth test picture: a shaded background with a few discs,
/// bars and a soft texture, quantized to 8 bits.
pub fn synthetic_image(seed: u64, h: usize, w: usize) -> Image {
    let mut r = rng::stream(seed, Purpose::Test, 1);
    let mut u = || rng::uniform01(&mut r) as f32;
    let (gx, gy, base) = (u() - 0.5, u() - 0.5, 0.3 + 0.4 * u());
    let discs: Vec<(f32, f32, f32, f32)> = (0..4).map(|_| (u() * h as f32, u() * w as f32, 6.0 + 20.0 * u(), u() - 0.5)).collect();
    let bars: Vec<(f32, f32, f32)> = (0..2).map(|_| (u() * w as f32, 3.0 + 8.0 * u(), u() - 0.5)).collect();
    let (fx, fy) = (0.2 + 0.5 * u(), 0.2 + 0.5 * u());
    Image::from_fn(1, h, w, |_, y, x| {
        let (yf, xf) = (y as f32, x as f32);
        let mut v = base + 0.3 * (gx * xf / w as f32 + gy * yf / h as f32);
        for &(cy, cx, rad, a) in &discs {
            if (yf - cy).powi(2) + (xf - cx).powi(2) < rad * rad {
                v += 0.5 * a;
            }
        }
        for &(bx, bw, a) in &bars {
            if (xf - bx).abs() < bw {
                v += 0.3 * a;
            }
        }
        v += 0.03 * (fx * xf).sin() * (fy * yf).cos();
        v
    })
    .unwrap()
    .quantize()
}

/// The training objective on `(y, clean)` as a gradient-check evaluation.
pub fn graph_objective<'a>(
    graph: &'a ArchGraph,
    y: &'a Tensor<f64>,
    clean: &'a Tensor<f64>,
) -> impl FnMut(&ParameterStore<f64>, &mut Tape<f64>) -> Result<Evaluation> + 'a {
    move |store, tape| {
        let yv = tape.constant(y.clone());
        let f = forward_tape(graph, store, tape, &yv, Mode::Train)?;
        let l = mse_residual_loss(f.residual.value(), y, clean)?;
        Ok(Evaluation {
            loss: l.loss,
            output: f.residual,
            seed: l.grad,
            params: f.params,
        })
    }
}

/// `sum(out * proj)` over tensors built from store parameters.
pub fn projected<F>(proj: Tensor<f64>, mut build: F) -> impl FnMut(&ParameterStore<f64>, &mut Tape<f64>) -> Result<Evaluation>
where
    F: FnMut(&ParameterStore<f64>, &mut Tape<f64>, &mut BTreeMap<String, dudenet::autodiff::Var<f64>>) -> Result<dudenet::autodiff::Var<f64>>,
{
    move |store, tape| {
        let mut params = BTreeMap::new();
        let out = build(store, tape, &mut params)?;
        let loss = out.value().data().iter().zip(proj.data()).map(|(a, b)| a * b).sum();
        Ok(Evaluation {
            loss,
            output: out,
            seed: proj.clone(),
            params,
        })
    }
}

/// Binds store parameter `name` as a tape variable.
pub fn bind(
    store: &ParameterStore<f64>,
    tape: &mut Tape<f64>,
    params: &mut BTreeMap<String, dudenet::autodiff::Var<f64>>,
    name: &str,
) -> Result<dudenet::autodiff::Var<f64>> {
    let v = if tape.is_recording() {
        tape.variable(store.param(name)?.clone())
    } else {
        tape.constant(store.param(name)?.clone())
    };
    params.insert(name.to_string(), v.clone());
    Ok(v)
}
