use alloc::format;

use crate::error::{Error, Result};

/// Mean over samples of the squared Euclidean error; `width` values per sample.
pub fn mse_loss(predictions: &[f64], targets: &[f64], width: usize) -> Result<f64> {
    if predictions.len() != targets.len() || width == 0 || predictions.is_empty() || !predictions.len().is_multiple_of(width) {
        return Err(Error::Shape(format!(
            "mse_loss: {} predictions, {} targets, width {}",
            predictions.len(),
            targets.len(),
            width
        )));
    }
    let n = predictions.len() / width;
    let sum: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / n as f64)
}
