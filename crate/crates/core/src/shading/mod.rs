//! Per-pixel shading recovery, the brightness-to-shading curve, and the
//! smoothed re-mapping used when a profile is applied to a new image.

mod curve;
mod smooth;

pub use curve::ShadingCurve;
pub use smooth::{
    laplacian, laplacian_energy, laplacian_transpose, normal_operator, smooth_shading, smoothing_objective,
    CG_RELATIVE_TOLERANCE,
};

use crate::colorspace::{pixel_brightness, PixelMask};
use crate::error::{Error, Result};
use crate::imgio::ImageRGB;

pub const DEFAULT_SLOTS: usize = 50;
pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const SHADING_FLOOR: f64 = 1e-6;

/// Per-pixel scalar multiplier (the diagonal of `D`).
#[derive(Debug, Clone, PartialEq)]
pub struct ShadingMap {
    width: usize,
    height: usize,
    factors: Vec<f64>,
}

impl ShadingMap {
    pub fn new(width: usize, height: usize, factors: Vec<f64>) -> Result<Self> {
        if factors.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} shading map needs {} factors, got {}",
                width * height,
                factors.len()
            )));
        }
        if let Some(i) = factors.iter().position(|f| !f.is_finite()) {
            return Err(Error::Domain(format!("shading factor {i} is not finite")));
        }
        Ok(Self::from_raw(width, height, factors))
    }

    pub(crate) fn from_raw(width: usize, height: usize, factors: Vec<f64>) -> Self {
        debug_assert_eq!(factors.len(), width * height);
        Self { width, height, factors }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Self::from_raw(width, height, vec![1.0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    /// Scales each pixel of `img` by its factor.
    pub fn apply(&self, img: &ImageRGB) -> Result<ImageRGB> {
        if img.width() != self.width || img.height() != self.height {
            return Err(Error::Shape(format!(
                "shading map is {}x{}, image is {}x{}",
                self.width,
                self.height,
                img.width(),
                img.height()
            )));
        }
        let data = img
            .pixels()
            .iter()
            .zip(&self.factors)
            .map(|(p, &d)| p.map(|c| c * d))
            .collect();
        ImageRGB::new(img.width(), img.height(), data)
    }
}

/// Result of the per-pixel shading least-squares solve.
#[derive(Debug, Clone)]
pub struct ShadingSolve {
    pub map: ShadingMap,
    /// Valid pixels whose simple-homography color was exactly zero.
    pub zero_pixels: usize,
}

/// Per-pixel `d = (p·q)/(p·p)`, the minimizer of `‖d·p − q‖²` for
/// `p ∈ b_simple`, `q ∈ b_target`. Factors are floored at
/// [`SHADING_FLOOR`]; masked-out pixels get 1.
pub fn solve_shading_lsq(b_simple: &ImageRGB, b_target: &ImageRGB, mask: &PixelMask) -> Result<ShadingSolve> {
    b_simple.ensure_same_shape(b_target)?;
    mask.ensure_matches(b_simple.width(), b_simple.height())?;
    let mut zero_pixels = 0;
    let factors = b_simple
        .pixels()
        .iter()
        .zip(b_target.pixels())
        .zip(mask.flags())
        .map(|((p, q), &valid)| {
            if !valid {
                return 1.0;
            }
            let pp = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
            if pp == 0.0 {
                zero_pixels += 1;
                return 1.0;
            }
            let pq = p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
            (pq / pp).max(SHADING_FLOOR)
        })
        .collect();
    Ok(ShadingSolve {
        map: ShadingMap::new(b_simple.width(), b_simple.height(), factors)?,
        zero_pixels,
    })
}

/// Bins valid pixels into `n_slots` uniform brightness slots over the
/// observed [min, max], averages brightness and shading per non-empty slot,
/// and fits a PCHIP curve through the slot centers.
pub fn fit_shading_curve(
    brightness: &[f64],
    shading: &ShadingMap,
    mask: &PixelMask,
    n_slots: usize,
) -> Result<ShadingCurve> {
    if brightness.len() != shading.len() {
        return Err(Error::Shape(format!(
            "{} brightness samples for {} shading factors",
            brightness.len(),
            shading.len()
        )));
    }
    mask.ensure_matches(shading.width(), shading.height())?;
    if n_slots == 0 {
        return Err(Error::Domain("slot count must be ≥ 1".into()));
    }
    let samples = || {
        brightness
            .iter()
            .zip(shading.factors())
            .zip(mask.flags())
            .filter(|&((b, d), &v)| v && b.is_finite() && d.is_finite())
            .map(|((&b, &d), _)| (b, d))
    };
    let (lo, hi) = samples().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (b, _)| {
        (lo.min(b), hi.max(b))
    });
    let degenerate = |found: usize| {
        Error::Degenerate(format!(
            "shading curve needs at least 2 non-empty brightness slots, found {found}; \
             use a constant curve instead"
        ))
    };
    if !(hi > lo) {
        return Err(degenerate(usize::from(lo.is_finite())));
    }

    let mut sum_b = vec![0.0; n_slots];
    let mut sum_d = vec![0.0; n_slots];
    let mut count = vec![0usize; n_slots];
    let width = hi - lo;
    for (b, d) in samples() {
        let slot = (((b - lo) / width * n_slots as f64) as usize).min(n_slots - 1);
        sum_b[slot] += b;
        sum_d[slot] += d;
        count[slot] += 1;
    }

    let mut knots: Vec<f64> = Vec::with_capacity(n_slots);
    let mut values: Vec<f64> = Vec::with_capacity(n_slots);
    for s in 0..n_slots {
        if count[s] == 0 {
            continue;
        }
        let kb = sum_b[s] / count[s] as f64;
        let kd = sum_d[s] / count[s] as f64;
        // Slot means are ordered; equal ones can only arise from rounding at
        // a shared boundary, so merge them.
        if let Some(&last) = knots.last() {
            if kb <= last {
                let v = values.last_mut().expect("values track knots");
                *v = 0.5 * (*v + kd);
                continue;
            }
        }
        knots.push(kb);
        values.push(kd);
    }
    if knots.len() < 2 {
        return Err(degenerate(knots.len()));
    }
    ShadingCurve::pchip(knots, values)
}

pub fn eval_curve(curve: &ShadingCurve, b: f64) -> f64 {
    curve.eval(b)
}

/// `d_mapped = f(brightness(b_simple))` per pixel, before smoothing.
pub fn curve_shading(curve: &ShadingCurve, b_simple: &ImageRGB) -> ShadingMap {
    let factors = b_simple
        .pixels()
        .iter()
        .map(|&p| curve.eval(pixel_brightness(p)))
        .collect();
    ShadingMap::from_raw(b_simple.width(), b_simple.height(), factors)
}

/// Curve-mapped shading followed by Laplacian smoothing with weight `lambda`.
pub fn mapped_shading(curve: &ShadingCurve, b_simple: &ImageRGB, lambda: f64) -> ShadingMap {
    smooth_shading(&curve_shading(curve, b_simple), lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colorspace::{brightness, valid_mask};

    fn one_pixel(p: [f64; 3]) -> ImageRGB {
        ImageRGB::filled(1, 1, p)
    }

    #[test]
    fn lsq_exact_multiple() {
        let s = solve_shading_lsq(&one_pixel([1.0; 3]), &one_pixel([2.0; 3]), &PixelMask::all(1, 1)).unwrap();
        assert_eq!(s.map.factors(), &[2.0]);
    }

    #[test]
    fn lsq_identity() {
        let img = crate::oracle::natural_scene(10, 10, 1);
        let s = solve_shading_lsq(&img, &img, &valid_mask(&img, 0.0)).unwrap();
        assert!(s.map.factors().iter().all(|d| (d - 1.0).abs() < 1e-15));
    }

    #[test]
    fn lsq_projection_matches_scalar_minimizer() {
        let p = [1.0, 0.0, 0.0];
        let q = [0.5, 0.1, 0.0];
        let s = solve_shading_lsq(&one_pixel(p), &one_pixel(q), &PixelMask::all(1, 1)).unwrap();
        // oracle: golden-section search on φ(d) = ‖d·p − q‖²
        let phi = |d: f64| (0..3).map(|c| (d * p[c] - q[c]).powi(2)).sum::<f64>();
        let (mut a, mut b) = (-10.0f64, 10.0f64);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if phi(c) < phi(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let oracle = 0.5 * (a + b);
        assert!((s.map.factors()[0] - oracle).abs() < 1e-8);
        assert!((s.map.factors()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lsq_zero_pixel_counted_and_floor_applied() {
        let simple = ImageRGB::new(3, 1, vec![[0.0; 3], [0.2; 3], [0.4; 3]]).unwrap();
        let target = ImageRGB::new(3, 1, vec![[0.3; 3], [-0.1; 3], [0.2; 3]]).unwrap();
        let mask = PixelMask::new(3, 1, vec![true, true, false]).unwrap();
        let s = solve_shading_lsq(&simple, &target, &mask).unwrap();
        assert_eq!(s.zero_pixels, 1);
        assert_eq!(s.map.factors(), &[1.0, SHADING_FLOOR, 1.0]);
    }

    #[test]
    fn lsq_recovers_known_factors() {
        let img = crate::oracle::natural_scene(16, 16, 5);
        let truth: Vec<f64> = (0..img.len()).map(|i| 0.3 + (i % 13) as f64 * 0.1).collect();
        let tgt = ShadingMap::new(16, 16, truth.clone()).unwrap().apply(&img).unwrap();
        let s = solve_shading_lsq(&img, &tgt, &valid_mask(&img, 0.0)).unwrap();
        for (d, t) in s.map.factors().iter().zip(truth) {
            assert!((d - t).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_shading_gives_constant_curve() {
        let img = crate::oracle::natural_scene(30, 20, 2);
        let b = brightness(&img);
        let d = ShadingMap::new(30, 20, vec![1.3; 600]).unwrap();
        let curve = fit_shading_curve(&b, &d, &PixelMask::all(30, 20), DEFAULT_SLOTS).unwrap();
        for i in 0..=100 {
            assert!((curve.eval(i as f64 / 100.0) - 1.3).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_shading_gives_identity_line() {
        let n = 1000;
        let b: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let d = ShadingMap::new(n, 1, b.clone()).unwrap();
        let curve = fit_shading_curve(&b, &d, &PixelMask::all(n, 1), DEFAULT_SLOTS).unwrap();
        let (lo, hi) = curve.domain();
        for i in 0..=200 {
            let x = lo + (hi - lo) * i as f64 / 200.0;
            assert!((curve.eval(x) - x).abs() < 1e-6);
        }
        assert_eq!(curve.knots().len(), DEFAULT_SLOTS);
    }

    #[test]
    fn two_slot_curve_interpolates_centers() {
        let b = [0.2, 0.3, 0.7, 0.8];
        let d = ShadingMap::new(4, 1, vec![1.0, 1.0, 2.0, 2.0]).unwrap();
        let curve = fit_shading_curve(&b, &d, &PixelMask::all(4, 1), 2).unwrap();
        assert_eq!(curve.knots(), &[0.25, 0.75]);
        assert_eq!(curve.eval(0.25), 1.0);
        assert_eq!(curve.eval(0.75), 2.0);
    }

    #[test]
    fn empty_slots_are_skipped() {
        let b = [0.0, 0.01, 0.99, 1.0];
        let d = ShadingMap::new(4, 1, vec![1.0, 1.0, 3.0, 3.0]).unwrap();
        let curve = fit_shading_curve(&b, &d, &PixelMask::all(4, 1), 50).unwrap();
        assert_eq!(curve.knots().len(), 2);
    }

    #[test]
    fn masked_pixels_do_not_contribute() {
        let b = [0.1, 0.9, 0.5];
        let d = ShadingMap::new(3, 1, vec![1.0, 2.0, 100.0]).unwrap();
        let mask = PixelMask::new(3, 1, vec![true, true, false]).unwrap();
        let curve = fit_shading_curve(&b, &d, &mask, 10).unwrap();
        assert_eq!(curve.values(), &[1.0, 2.0]);
    }

    #[test]
    fn single_brightness_is_degenerate() {
        let d = ShadingMap::ones(3, 1);
        let err = fit_shading_curve(&[0.4; 3], &d, &PixelMask::all(3, 1), 50).unwrap_err();
        assert!(err.to_string().contains("constant curve"), "{err}");
        let err = fit_shading_curve(&[0.4; 3], &d, &PixelMask::new(3, 1, vec![false; 3]).unwrap(), 50).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn mapped_shading_cases() {
        let img = crate::oracle::natural_scene(12, 9, 4);
        let ones = mapped_shading(&ShadingCurve::constant(1.0), &img, 0.3);
        assert!(ones.factors().iter().all(|d| (d - 1.0).abs() < 1e-12));

        let flat = ImageRGB::filled(5, 5, [0.2, 0.4, 0.6]);
        let line = ShadingCurve::pchip(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        let m = mapped_shading(&line, &flat, 0.5);
        assert!(m.factors().iter().all(|d| (d - 0.4).abs() < 1e-12));

        let curve = ShadingCurve::pchip(vec![0.1, 0.5, 0.9], vec![0.8, 1.1, 1.6]).unwrap();
        let m = mapped_shading(&curve, &img, 0.0);
        for (d, p) in m.factors().iter().zip(img.pixels()) {
            assert_eq!(*d, eval_curve(&curve, pixel_brightness(*p)));
        }
    }

    #[test]
    fn apply_shape_mismatch() {
        let m = ShadingMap::ones(2, 2);
        assert!(m.apply(&ImageRGB::filled(3, 2, [0.0; 3])).is_err());
        assert!(ShadingMap::new(2, 2, vec![1.0; 3]).is_err());
        assert!(ShadingMap::new(1, 1, vec![f64::NAN]).is_err());
    }
}
