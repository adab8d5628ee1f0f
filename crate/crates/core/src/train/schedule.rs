use crate::config::TrainConfig;
use crate::error::{Error, Result};

/// Log-linear decay from `lr_start` at epoch 1 to `lr_end` at epoch `epochs`.
pub fn lr_schedule(epoch: usize, epochs: usize, lr_start: f64, lr_end: f64) -> Result<f64> {
    if epoch == 0 || epoch > epochs {
        return Err(Error::InvalidArgument(format!("epoch {epoch} is outside 1..={epochs}")));
    }
    if epochs == 1 {
        return Ok(lr_start);
    }
    if epoch == epochs {
        return Ok(lr_end);
    }
    let t = (epoch - 1) as f64 / (epochs - 1) as f64;
    Ok(lr_start * (lr_end / lr_start).powf(t))
}

/// The learning rate for `epoch` (1-based), honouring `lr_override`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> Result<f64> {
    let lr = lr_schedule(epoch, cfg.epochs, cfg.lr_start, cfg.lr_end)?;
    Ok(cfg.lr_override.unwrap_or(lr))
}
