//! Laplacian-regularized shading smoothing.
//!
//! Solves `(I + λ·LᵀL)·d = d_mapped` with conjugate gradients, where `L` is
//! the 4-neighbor 3×3 Laplacian stencil with clamp-to-edge boundaries.

use super::ShadingMap;

pub const CG_RELATIVE_TOLERANCE: f64 = 1e-8;

/// `L·v` on a `width × height` grid.
pub fn laplacian(v: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for y in 0..height {
        let up = y.saturating_sub(1) * width;
        let down = (y + 1).min(height - 1) * width;
        let row = y * width;
        for x in 0..width {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(width - 1);
            out[row + x] = v[up + x] + v[down + x] + v[row + left] + v[row + right] - 4.0 * v[row + x];
        }
    }
    out
}

/// `Lᵀ·v`. With clamped borders the stencil is not symmetric, so the
/// transpose scatters each value back to the neighbors it was read from.
pub fn laplacian_transpose(v: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for y in 0..height {
        let up = y.saturating_sub(1) * width;
        let down = (y + 1).min(height - 1) * width;
        let row = y * width;
        for x in 0..width {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(width - 1);
            let u = v[row + x];
            out[up + x] += u;
            out[down + x] += u;
            out[row + left] += u;
            out[row + right] += u;
            out[row + x] -= 4.0 * u;
        }
    }
    out
}

/// `‖L·d‖²`.
pub fn laplacian_energy(map: &ShadingMap) -> f64 {
    laplacian(map.factors(), map.width(), map.height())
        .iter()
        .map(|v| v * v)
        .sum()
}

/// `‖d − d_mapped‖² + λ‖L·d‖²`.
pub fn smoothing_objective(d: &ShadingMap, d_mapped: &ShadingMap, lambda: f64) -> f64 {
    let fidelity: f64 = d
        .factors()
        .iter()
        .zip(d_mapped.factors())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    fidelity + lambda * laplacian_energy(d)
}

/// `(I + λ·LᵀL)·v`.
pub fn normal_operator(v: &[f64], width: usize, height: usize, lambda: f64) -> Vec<f64> {
    let ltl = laplacian_transpose(&laplacian(v, width, height), width, height);
    v.iter().zip(ltl).map(|(a, b)| a + lambda * b).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizer of [`smoothing_objective`]. `λ = 0` returns the input.
pub fn smooth_shading(d_mapped: &ShadingMap, lambda: f64) -> ShadingMap {
    assert!(lambda >= 0.0 && lambda.is_finite(), "lambda must be ≥ 0, got {lambda}");
    if lambda == 0.0 || d_mapped.is_empty() {
        return d_mapped.clone();
    }
    let (w, h) = (d_mapped.width(), d_mapped.height());
    let b = d_mapped.factors();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return d_mapped.clone();
    }
    let tol = CG_RELATIVE_TOLERANCE * b_norm;

    // The data term dominates for small λ, so d_mapped is a good start.
    let mut x = b.to_vec();
    let ax = normal_operator(&x, w, h, lambda);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    // I + λLᵀL has spectrum in [1, 1 + 64λ]; this cap is far above what CG needs.
    let max_iter = 10 * b.len() + 100;
    for _ in 0..max_iter {
        if rr.sqrt() <= tol {
            break;
        }
        let ap = normal_operator(&p, w, h, lambda);
        let alpha = rr / dot(&p, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
    }
    ShadingMap::from_raw(w, h, x)
}
