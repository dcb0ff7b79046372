//! Reconstruction metrics.

use super::GridTensor;
use crate::error::{Error, Result};

/// Mean squared error over all channels and lattice points.
pub fn mse(a: &GridTensor, b: &GridTensor) -> Result<f64> {
    if !a.same_layout(b) {
        return Err(Error::invalid(format!(
            "shape mismatch: {}x{:?} vs {}x{:?}",
            a.channels(),
            a.shape(),
            b.channels(),
            b.shape()
        )));
    }
    let n = a.len() as f64;
    let sum: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / n)
}

/// Peak signal-to-noise ratio in dB: `10 log10(peak^2 / mse)`.
/// Identical grids report `f64::INFINITY`.
pub fn psnr(a: &GridTensor, b: &GridTensor, peak: f64) -> Result<f64> {
    let e = mse(a, b)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / e).log10())
}
