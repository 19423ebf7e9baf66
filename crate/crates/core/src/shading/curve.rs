//! Monotone piecewise cubic Hermite interpolation (PCHIP).
//!
//! Interior tangents use the Fritsch–Carlson weighted harmonic mean, zeroed
//! at local extrema; endpoint tangents use the shape-preserving three-point
//! formula. On monotone data every cubic piece is monotone, so the curve
//! never overshoots its knots.

use crate::error::{Error, Result};

/// Brightness → shading factor curve. Evaluation clamps outside the knot
/// range to the endpoint values.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadingCurve {
    knots: Vec<f64>,
    values: Vec<f64>,
    derivatives: Vec<f64>,
}

impl ShadingCurve {
    /// PCHIP interpolant through `(knots[i], values[i])`.
    pub fn pchip(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        validate_knots(&knots, &values)?;
        let derivatives = pchip_derivatives(&knots, &values);
        Ok(Self {
            knots,
            values,
            derivatives,
        })
    }

    /// Rebuilds a curve from stored tangents (e.g. a deserialized profile).
    pub fn from_parts(knots: Vec<f64>, values: Vec<f64>, derivatives: Vec<f64>) -> Result<Self> {
        validate_knots(&knots, &values)?;
        if derivatives.len() != knots.len() {
            return Err(Error::Shape(format!(
                "curve has {} knots but {} derivatives",
                knots.len(),
                derivatives.len()
            )));
        }
        if derivatives.iter().any(|d| !d.is_finite()) {
            return Err(Error::Domain("curve derivatives must be finite".into()));
        }
        Ok(Self {
            knots,
            values,
            derivatives,
        })
    }

    /// Flat curve at `value` over [0, 1].
    pub fn constant(value: f64) -> Self {
        Self {
            knots: vec![0.0, 1.0],
            values: vec![value, value],
            derivatives: vec![0.0, 0.0],
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn derivatives(&self) -> &[f64] {
        &self.derivatives
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn eval(&self, b: f64) -> f64 {
        let last = self.knots.len() - 1;
        if b.is_nan() || b <= self.knots[0] {
            return self.values[0];
        }
        if b >= self.knots[last] {
            return self.values[last];
        }
        // knots[i] <= b < knots[i + 1]
        let i = self.knots.partition_point(|&k| k <= b) - 1;
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.derivatives[i], self.derivatives[i + 1]);
        let h = x1 - x0;
        let t = (b - x0) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h01 = 3.0 * t2 - 2.0 * t3;
        let h10 = t3 - 2.0 * t2 + t;
        let h11 = t3 - t2;
        y0 + (y1 - y0) * h01 + h * (m0 * h10 + m1 * h11)
    }
}

fn validate_knots(knots: &[f64], values: &[f64]) -> Result<()> {
    if knots.len() < 2 {
        return Err(Error::Degenerate(format!(
            "curve needs at least 2 knots, got {}",
            knots.len()
        )));
    }
    if knots.len() != values.len() {
        return Err(Error::Shape(format!(
            "curve has {} knots but {} values",
            knots.len(),
            values.len()
        )));
    }
    if knots.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::Domain("curve knots and values must be finite".into()));
    }
    if knots.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("curve knots must be strictly ascending".into()));
    }
    Ok(())
}

fn same_sign(a: f64, b: f64) -> bool {
    (a > 0.0 && b > 0.0) || (a < 0.0 && b < 0.0)
}

fn endpoint_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if !same_sign(d, del0) {
        0.0
    } else if !same_sign(del0, del1) && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

pub(crate) fn pchip_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if same_sign(delta[k - 1], delta[k]) {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    d[0] = endpoint_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = endpoint_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}
