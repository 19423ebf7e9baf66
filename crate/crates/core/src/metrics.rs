//! Image-difference metrics.

use crate::error::{Error, Result};
use crate::imgio::ImageRGB;

/// Conventional floor for an acceptable approximation, in dB.
pub const ACCEPTABLE_PSNR_DB: f64 = 20.0;

/// Mean squared error over all pixels and channels jointly.
pub fn mse(a: &ImageRGB, b: &ImageRGB) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "cannot compare {}x{} with {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(p, q)| (0..3).map(|c| (p[c] - q[c]) * (p[c] - q[c])).sum::<f64>())
        .sum();
    Ok(sum / (3 * a.len()) as f64)
}

/// `10·log₁₀(1/MSE)` with peak 1.0. Identical images give `+∞`.
pub fn psnr(a: &ImageRGB, b: &ImageRGB) -> Result<f64> {
    let mse = mse(a, b)?;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

/// Two decimals, or `inf`.
pub fn format_psnr(db: f64) -> String {
    if db.is_infinite() && db > 0.0 {
        "inf".to_string()
    } else {
        format!("{db:.2}")
    }
}
