//! Chromaticity homography estimation by alternating least squares.
//!
//! The fit runs on homogeneous rg rows `h(A·C)` / `h(B·C)` and alternates a
//! 3×3 least-squares solve for the homography with a per-row scalar solve
//! for the shading factors. The RGB-space homography is `C·H_rg·C⁻¹`.

use nalgebra::DMatrix;

use crate::colorspace::{
    is_full_rank, mul_row, rgi_matrix, rgi_matrix_inverse, to_homogeneous_chromaticity, Matrix3, PixelMask,
};
use crate::error::{Error, Result};
use crate::imgio::ImageRGB;
use crate::shading::ShadingMap;

/// Termination controls for [`estimate_homography_als`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlsSettings {
    /// Threshold on `‖Aⁱ − Aⁱ⁻¹‖_F`. `None` means `1e-6 × rows`.
    pub epsilon: Option<f64>,
    pub max_iterations: usize,
    /// Anderson-accelerate the sweep sequence. A proposal is kept only if it
    /// lowers the residual, so the residual history stays non-increasing.
    /// `false` runs the plain alternation.
    pub accelerate: bool,
    /// Start from the linear (DLT) estimate instead of `H = I`. Without it
    /// strongly mixing homographies can stall ALS in a flat valley.
    pub warm_start: bool,
}

impl Default for AlsSettings {
    fn default() -> Self {
        Self {
            epsilon: None,
            max_iterations: 50,
            accelerate: true,
            warm_start: true,
        }
    }
}

impl AlsSettings {
    pub const DEFAULT_EPSILON_PER_ROW: f64 = 1e-6;

    pub fn validate(&self) -> Result<()> {
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::Domain(format!("ALS epsilon must be > 0, got {eps}")));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::Domain("ALS max_iterations must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn epsilon_for(&self, rows: usize) -> f64 {
        self.epsilon.unwrap_or(Self::DEFAULT_EPSILON_PER_ROW * rows as f64)
    }
}

#[derive(Debug, Clone)]
pub struct AlsResult {
    /// rg-space homography, scaled so entry (3,3) is ±1 with the sign that
    /// keeps the shading factors positive.
    pub h_rg: Matrix3,
    /// RGB-space homography `C·h_rg·C⁻¹`.
    pub h: Matrix3,
    /// Accumulated per-pixel shading over the mask; 1.0 elsewhere.
    pub shading: ShadingMap,
    pub iterations: usize,
    pub final_residual: f64,
    /// `‖Aⁱ − B'‖_F` for i = 0 (after the initial D solve), 1, 2, …
    pub residuals: Vec<f64>,
    pub converged: bool,
}

/// `argmin_M ‖X·M − Y‖_F` through a Householder QR of `X`.
///
/// Fails when `X` is numerically rank deficient (σ_min < 1e-10 σ_max).
pub fn least_squares_solve(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Matrix3> {
    if x.ncols() != 3 || y.ncols() != 3 || x.nrows() != y.nrows() {
        return Err(Error::Shape(format!(
            "least squares needs n×3 inputs, got {}×{} and {}×{}",
            x.nrows(),
            x.ncols(),
            y.nrows(),
            y.ncols()
        )));
    }
    let n = x.nrows();
    if n < 3 {
        return Err(Error::Degenerate(format!(
            "least squares needs at least 3 rows, got {n}"
        )));
    }
    let qr = x.clone().qr();
    let r: Matrix3 = qr.r().fixed_view::<3, 3>(0, 0).into_owned();

    let sv = r.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smax > 0.0) || smin < 1e-10 * smax {
        return Err(Error::Degenerate(format!(
            "design matrix is rank deficient (singular values {:.3e}, {:.3e}, {:.3e})",
            sv[0], sv[1], sv[2]
        )));
    }

    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let rhs: Matrix3 = qty.fixed_view::<3, 3>(0, 0).into_owned();
    r.solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::Degenerate("triangular factor is singular".into()))
}

/// Scalar `d` minimizing `‖d·x − y‖²` for one row; 1 when `x = 0`.
#[inline]
fn row_scale(x: &[f64; 3], y: &[f64; 3]) -> f64 {
    let xx = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    if xx > 0.0 {
        (x[0] * y[0] + x[1] * y[1] + x[2] * y[2]) / xx
    } else {
        1.0
    }
}

fn row(m: &DMatrix<f64>, i: usize) -> [f64; 3] {
    [m[(i, 0)], m[(i, 1)], m[(i, 2)]]
}

fn frobenius_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Centers homogeneous rg rows on the origin with mean distance √2.
///
/// Returns the rows and the row-vector transform `T` with `normalized = rows·T`.
/// The raw rows cluster around the gray point, which nearly couples the
/// shading factors with the homography's third row and stalls ALS.
fn normalize_rows(rows: &DMatrix<f64>) -> (DMatrix<f64>, Matrix3) {
    let n = rows.nrows() as f64;
    let cx = rows.column(0).sum() / n;
    let cy = rows.column(1).sum() / n;
    let mean_dist = (0..rows.nrows())
        .map(|i| ((rows[(i, 0)] - cx).powi(2) + (rows[(i, 1)] - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    let s = if mean_dist > 0.0 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    let t = Matrix3::new(s, 0.0, 0.0, 0.0, s, 0.0, -s * cx, -s * cy, 1.0);
    let out = DMatrix::from_fn(rows.nrows(), 3, |i, j| match j {
        0 => s * (rows[(i, 0)] - cx),
        1 => s * (rows[(i, 1)] - cy),
        _ => rows[(i, 2)],
    });
    (out, t)
}

/// Optimal per-row factors for `h` and the shaded rows `D·A·h`.
fn shade(a: &DMatrix<f64>, b: &DMatrix<f64>, h: &Matrix3) -> (DMatrix<f64>, Vec<f64>) {
    let n = a.nrows();
    let mut rows = DMatrix::from_fn(n, 3, |i, j| {
        a[(i, 0)] * h[(0, j)] + a[(i, 1)] * h[(1, j)] + a[(i, 2)] * h[(2, j)]
    });
    let mut d = Vec::with_capacity(n);
    for i in 0..n {
        let s = row_scale(&row(&rows, i), &row(b, i));
        rows.row_mut(i).scale_mut(s);
        d.push(s);
    }
    (rows, d)
}

fn scale_rows(a: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), 3, |i, j| d[i] * a[(i, j)])
}

/// Unit Frobenius norm, sign agreeing with `reference`. `D·A·H` is invariant
/// under `H → sH, D → D/s`, so this only picks a representative.
fn unit_gauge(m: &Matrix3, reference: &Matrix3) -> Matrix3 {
    let sign = if m.dot(reference) < 0.0 { -1.0 } else { 1.0 };
    m * (sign / m.norm())
}

/// Linear estimate from `(a·H) × b = 0`: the eigenvector of the 9×9 Gram
/// matrix with the smallest eigenvalue. Exact on noise-free data.
fn dlt_estimate(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<Matrix3> {
    let mut gram = nalgebra::SMatrix::<f64, 9, 9>::zeros();
    for i in 0..a.nrows() {
        let (ar, br) = (row(a, i), row(b, i));
        // cross product component c = x_p·b_q − x_q·b_p, x_j = Σ_k a_k H_kj
        for (p, q) in [(1, 2), (2, 0), (0, 1)] {
            let mut eq = nalgebra::SVector::<f64, 9>::zeros();
            for k in 0..3 {
                eq[3 * k + p] += ar[k] * br[q];
                eq[3 * k + q] -= ar[k] * br[p];
            }
            gram += eq * eq.transpose();
        }
    }
    let eig = gram.symmetric_eigen();
    let (idx, _) = eig.eigenvalues.argmin();
    let v = eig.eigenvectors.column(idx);
    let h = Matrix3::from_fn(|k, j| v[3 * k + j]);
    (is_full_rank(&h) && h.iter().all(|x| x.is_finite())).then_some(h)
}

const ANDERSON_DEPTH: usize = 5;

/// Anderson mixing for the fixed-point map `H ↦ ALS sweep(H)`.
struct Anderson {
    depth: usize,
    inputs: Vec<Matrix3>,
    outputs: Vec<Matrix3>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Self {
            depth,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn reset(&mut self) {
        self.inputs.clear();
        self.outputs.clear();
    }

    /// Records `input ↦ output` and extrapolates from the history.
    fn propose(&mut self, input: &Matrix3, output: &Matrix3) -> Option<Matrix3> {
        self.inputs.push(*input);
        self.outputs.push(*output);
        if self.inputs.len() > self.depth + 1 {
            self.inputs.remove(0);
            self.outputs.remove(0);
        }
        let m = self.inputs.len() - 1;
        if m == 0 {
            return None;
        }
        let f: Vec<Matrix3> = self.inputs.iter().zip(&self.outputs).map(|(x, g)| g - x).collect();
        let df = DMatrix::from_fn(9, m, |r, c| (f[c + 1] - f[c])[r]);
        let rhs = DMatrix::from_fn(9, 1, |r, _| f[m][r]);
        let gamma = df.svd(true, true).solve(&rhs, 1e-12).ok()?;
        let mut out = self.outputs[m];
        for c in 0..m {
            out -= (self.outputs[c + 1] - self.outputs[c]) * gamma[c];
        }
        out.iter().all(|v| v.is_finite()).then_some(out)
    }
}

/// Estimates the color homography relating `src` to `tgt` pixel by pixel.
pub fn estimate_homography_als(
    src: &ImageRGB,
    tgt: &ImageRGB,
    mask: &PixelMask,
    settings: &AlsSettings,
) -> Result<AlsResult> {
    settings.validate()?;
    src.ensure_same_shape(tgt)?;
    let n = mask.count();
    if n < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 valid pixels for a homography, found {n}"
        )));
    }
    let a = to_homogeneous_chromaticity(src, mask)?;
    let b = to_homogeneous_chromaticity(tgt, mask)?;
    let (a, t_a) = normalize_rows(&a);
    let (b, t_b) = normalize_rows(&b);
    let epsilon = settings.epsilon_for(n);

    // D⁰ = D*(H⁰), A⁰ = D⁰·A·H⁰ with H⁰ = I unless warm-started
    let mut h_n = Matrix3::identity() / 3f64.sqrt();
    if settings.warm_start {
        if let Some(h0) = dlt_estimate(&a, &b) {
            h_n = unit_gauge(&h0, &h_n);
        }
    }
    let (mut current, mut d_acc) = shade(&a, &b, &h_n);
    let mut residuals = vec![frobenius_diff(&current, &b)];
    let mut accel = settings.accelerate.then(|| Anderson::new(ANDERSON_DEPTH));
    let mut converged = false;
    let mut iterations = 0;

    while iterations < settings.max_iterations {
        iterations += 1;
        // H-solve on Aⁱ⁻¹ composed onto the running product, then D-solve.
        let plain = unit_gauge(&least_squares_solve(&scale_rows(&a, &d_acc), &b)?, &h_n);
        let (mut next, mut next_d) = shade(&a, &b, &plain);
        let mut next_h = plain;
        if let Some(acc) = accel.as_mut() {
            if let Some(candidate) = acc.propose(&h_n, &plain) {
                let candidate = unit_gauge(&candidate, &plain);
                let (rows, d) = shade(&a, &b, &candidate);
                if is_full_rank(&candidate) && frobenius_diff(&rows, &b) < frobenius_diff(&next, &b) {
                    next = rows;
                    next_d = d;
                    next_h = candidate;
                } else {
                    acc.reset();
                }
            }
        }
        let step = frobenius_diff(&next, &current);
        residuals.push(frobenius_diff(&next, &b));
        current = next;
        d_acc = next_d;
        h_n = next_h;
        if step < epsilon {
            converged = true;
            break;
        }
    }
    let h_acc = h_n;

    // Back to plain rg coordinates: d·(a·T_a)·H_n ≈ b·T_b.
    let t_b_inv = t_b
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("target chromaticities are coincident".into()))?;
    let h_acc = t_a * h_acc * t_b_inv;

    // Fix the scale gauge: |h_rg(3,3)| = 1, folded into D so D·A·H is
    // unchanged. The sign is chosen so shading is mostly positive; forcing
    // +1 would send every color to negative intensity when the best fit has a
    // negative corner.
    let corner = h_acc[(2, 2)];
    let magnitude = if corner.abs() > 1e-12 * h_acc.amax() {
        corner.abs()
    } else {
        h_acc.norm()
    };
    let positive = d_acc.iter().filter(|&&d| d > 0.0).count();
    let scale = if 2 * positive >= d_acc.len() {
        magnitude
    } else {
        -magnitude
    };
    let h_rg = h_acc / scale;
    for d in &mut d_acc {
        *d *= scale;
    }
    if !is_full_rank(&h_rg) {
        return Err(Error::Degenerate("estimated homography is singular".into()));
    }
    let h = rgi_matrix() * h_rg * rgi_matrix_inverse();

    let mut factors = vec![1.0; src.len()];
    let valid = mask.flags().iter().enumerate().filter(|(_, &v)| v);
    for ((i, _), d) in valid.zip(d_acc) {
        factors[i] = d;
    }
    let shading = ShadingMap::new(src.width(), src.height(), factors)?;

    Ok(AlsResult {
        h_rg,
        h,
        shading,
        iterations,
        final_residual: *residuals.last().expect("residual history is non-empty"),
        residuals,
        converged,
    })
}

/// Per-pixel `ρᵀ·h`, unclamped.
pub fn apply_homography(img: &ImageRGB, h: &Matrix3) -> ImageRGB {
    img.map(|p| mul_row(p, h))
}

/// `min_s ‖s·estimate − reference‖_F / ‖reference‖_F`: relative error after
/// resolving the free overall scale of a homography.
pub fn relative_error_up_to_scale(estimate: &Matrix3, reference: &Matrix3) -> f64 {
    let denom = estimate.dot(estimate);
    if denom == 0.0 {
        return 1.0;
    }
    let s = estimate.dot(reference) / denom;
    (estimate * s - reference).norm() / reference.norm()
}
