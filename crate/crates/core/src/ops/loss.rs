use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Loss value plus the gradient with respect to the predicted residual.
#[derive(Debug, Clone)]
pub struct LossOutput<T> {
    pub loss: f64,
    pub grad: Tensor<T>,
}

/// `L = 1/(2N) * sum_j ||R(Y_j) - (Y_j - X_j)||^2`, summed over every element of each sample.
///
/// The gradient is `(pred - target) / N`.
pub fn mse_residual_loss<T: Real>(
    pred_residual: &Tensor<T>,
    noisy: &Tensor<T>,
    clean: &Tensor<T>,
) -> Result<LossOutput<T>> {
    let shape = pred_residual.shape();
    noisy.expect_shape(shape, "mse_residual_loss")?;
    clean.expect_shape(shape, "mse_residual_loss")?;
    if shape.n == 0 {
        return Err(Error::InvalidArgument("loss over an empty batch".into()));
    }
    let inv_n = 1.0 / shape.n as f64;
    let mut sum = 0.0;
    let mut grad = Vec::with_capacity(shape.numel());
    for ((&p, &y), &x) in pred_residual.data().iter().zip(noisy.data()).zip(clean.data()) {
        let diff = p - (y - x);
        let d = diff.to_f64().unwrap_or(f64::NAN);
        sum += d * d;
        grad.push(T::from_f64(d * inv_n));
    }
    Ok(LossOutput {
        loss: 0.5 * sum * inv_n,
        grad: Tensor::from_vec(shape, grad)?,
    })
}
