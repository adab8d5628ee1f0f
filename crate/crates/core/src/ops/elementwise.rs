use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes the gradient where the forward output was positive. The subgradient at 0 is 0.
pub(crate) fn relu_backward<T: Real>(out: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    out.zip_with(grad_out, "relu backward", |y, g| if y > T::zero() { g } else { T::zero() })
}

/// Concatenates along channels, `a` first.
pub fn concat_channels<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.n != sb.n || sa.h != sb.h || sa.w != sb.w {
        return Err(Error::ShapeMismatch {
            op: "concat_channels",
            left: sa,
            right: sb,
        });
    }
    let shape = Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w);
    let mut data = Vec::with_capacity(shape.numel());
    for n in 0..sa.n {
        data.extend_from_slice(a.sample(n));
        data.extend_from_slice(b.sample(n));
    }
    Tensor::from_vec(shape, data)
}

/// Inverse of [`concat_channels`]: the first `c_first` channels and the rest.
pub fn split_channels<T: Real>(x: &Tensor<T>, c_first: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let s = x.shape();
    if c_first > s.c {
        return Err(Error::InvalidArgument(format!(
            "cannot split {c_first} channels from {s}"
        )));
    }
    let cut = c_first * s.plane();
    let mut a = Vec::with_capacity(s.n * cut);
    let mut b = Vec::with_capacity(s.numel() - s.n * cut);
    for n in 0..s.n {
        let sample = x.sample(n);
        a.extend_from_slice(&sample[..cut]);
        b.extend_from_slice(&sample[cut..]);
    }
    Ok((
        Tensor::from_vec(Shape::new(s.n, c_first, s.h, s.w), a)?,
        Tensor::from_vec(Shape::new(s.n, s.c - c_first, s.h, s.w), b)?,
    ))
}

/// `y - r`, the reconstruction step of residual learning.
pub fn residual_subtract<T: Real>(y: &Tensor<T>, r: &Tensor<T>) -> Result<Tensor<T>> {
    y.zip_with(r, "residual_subtract", |a, b| a - b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::conv::tests::random_tensor;

    #[test]
    fn relu_small_vector() {
        let x = Tensor::<f32>::from_vec(Shape::new(1, 1, 1, 3), vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn relu_of_negative_tensor_blocks_gradient() {
        let x = Tensor::<f64>::full(Shape::new(1, 2, 2, 2), -0.5);
        let y = relu(&x);
        assert!(y.data().iter().all(|&v| v == 0.0));
        let g = relu_backward(&y, &Tensor::full(y.shape(), 1.0)).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relu_pair_gives_absolute_value() {
        let x = random_tensor(Shape::new(2, 3, 4, 4), 21);
        let s = relu(&x).add(&relu(&x.scale(-1.0))).unwrap();
        assert_eq!(s, x.map(f64::abs));
    }

    #[test]
    fn concat_shapes() {
        let a = Tensor::<f32>::zeros(Shape::new(1, 64, 4, 4));
        assert_eq!(concat_channels(&a, &a).unwrap().shape(), Shape::new(1, 128, 4, 4));
        let g = Tensor::<f32>::zeros(Shape::new(1, 1, 4, 4));
        assert_eq!(concat_channels(&g, &g).unwrap().shape(), Shape::new(1, 2, 4, 4));
    }

    #[test]
    fn concat_then_split_round_trips() {
        let a = random_tensor(Shape::new(3, 2, 4, 5), 22);
        let b = random_tensor(Shape::new(3, 5, 4, 5), 23);
        let (a2, b2) = split_channels(&concat_channels(&a, &b).unwrap(), 2).unwrap();
        assert_eq!((a2, b2), (a, b));
    }

    #[test]
    fn concat_rejects_spatial_mismatch() {
        let a = Tensor::<f32>::zeros(Shape::new(1, 1, 4, 4));
        let b = Tensor::<f32>::zeros(Shape::new(1, 1, 4, 5));
        assert!(concat_channels(&a, &b).is_err());
    }

    #[test]
    fn residual_subtract_cases() {
        let y = random_tensor(Shape::new(1, 1, 3, 3), 24);
        assert_eq!(residual_subtract(&y, &Tensor::zeros(y.shape())).unwrap(), y);
        assert!(residual_subtract(&y, &y).unwrap().data().iter().all(|&v| v == 0.0));
        let clean = random_tensor(Shape::new(1, 1, 3, 3), 25);
        let noise = random_tensor(Shape::new(1, 1, 3, 3), 26);
        let noisy = clean.add(&noise).unwrap();
        assert!(residual_subtract(&noisy, &noise).unwrap().max_abs_diff(&clean) < 1e-15);
        assert!(residual_subtract(&y, &Tensor::zeros(Shape::new(1, 1, 3, 4))).is_err());
    }
}
