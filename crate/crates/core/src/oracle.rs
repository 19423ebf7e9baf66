//! Ground-truth generators for tests, benchmarks and the acceptance suite.
//!
//! [`synth_pair`] builds targets that satisfy the `D·A·H` model exactly, and
//! [`statistic_transfer`] is a per-channel mean/variance matcher used as a
//! stand-in for third-party global color transfer methods.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::colorspace::{mul_row, pixel_brightness, Matrix3};
use crate::imgio::{ImageRGB, Rgb};

/// Per pixel `b = f(brightness(ρᵀH))·(ρᵀH)`, unclamped.
pub fn synth_pair(src: &ImageRGB, h_true: &Matrix3, shading_fn: impl Fn(f64) -> f64) -> ImageRGB {
    src.map(|p| {
        let q = mul_row(p, h_true);
        let d = shading_fn(pixel_brightness(q));
        q.map(|c| c * d)
    })
}

fn channel_stats(img: &ImageRGB, ch: usize) -> (f64, f64) {
    let n = img.len() as f64;
    let mean = img.pixels().iter().map(|p| p[ch]).sum::<f64>() / n;
    let var = img
        .pixels()
        .iter()
        .map(|p| (p[ch] - mean) * (p[ch] - mean))
        .sum::<f64>()
        / n;
    (mean, var.sqrt())
}

/// Per-channel statistic matching before the final clamp.
pub fn statistic_transfer_unclamped(src: &ImageRGB, reference: &ImageRGB) -> ImageRGB {
    let mut src_mean = [0.0; 3];
    let mut ref_mean = [0.0; 3];
    let mut ratio = [1.0; 3];
    for ch in 0..3 {
        let (ms, ss) = channel_stats(src, ch);
        let (mr, sr) = channel_stats(reference, ch);
        src_mean[ch] = ms;
        ref_mean[ch] = mr;
        if ss > 0.0 {
            ratio[ch] = sr / ss;
        }
    }
    src.map(|p| [0, 1, 2].map(|ch| (p[ch] - src_mean[ch]) * ratio[ch] + ref_mean[ch]))
}

/// `(src_c − mean(src_c))·std(ref_c)/std(src_c) + mean(ref_c)`, clamped.
/// A source channel with zero spread is shifted by the mean difference.
pub fn statistic_transfer(src: &ImageRGB, reference: &ImageRGB) -> ImageRGB {
    statistic_transfer_unclamped(src, reference).clamped()
}

/// Random matrix with entries in `[lo, hi]`, condition number below
/// `max_condition`, rescaled to `|det| = 1`.
pub fn random_homography(rng: &mut impl Rng, lo: f64, hi: f64, max_condition: f64) -> Matrix3 {
    loop {
        let m = Matrix3::from_fn(|_, _| rng.gen_range(lo..=hi));
        let sv = m.singular_values();
        if sv.min() > 0.0 && sv.max() / sv.min() <= max_condition {
            let det = m.determinant();
            return m / det.abs().cbrt();
        }
    }
}

/// Deterministic photo-like test scene.
///
/// A sky gradient over textured ground, with a handful of shaded colored
/// spheres. Geometry is in normalized coordinates, so the same seed renders
/// the same scene at any resolution. Channels stay within [0.02, 0.98].
pub fn natural_scene(width: usize, height: usize, seed: u64) -> ImageRGB {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = rng.gen_range(0.35..0.6);
    let sky_top: Rgb = [
        rng.gen_range(0.15..0.45),
        rng.gen_range(0.3..0.6),
        rng.gen_range(0.6..0.95),
    ];
    let sky_low: Rgb = [
        rng.gen_range(0.6..0.95),
        rng.gen_range(0.6..0.9),
        rng.gen_range(0.55..0.9),
    ];
    let ground_near: Rgb = [
        rng.gen_range(0.1..0.35),
        rng.gen_range(0.2..0.45),
        rng.gen_range(0.05..0.2),
    ];
    let ground_far: Rgb = [
        rng.gen_range(0.35..0.6),
        rng.gen_range(0.3..0.55),
        rng.gen_range(0.15..0.35),
    ];

    struct Wave {
        fx: f64,
        fy: f64,
        phase: f64,
        amp: f64,
    }
    let waves: Vec<Wave> = (0..6)
        .map(|i| Wave {
            fx: rng.gen_range(1.0..6.0) * (1 + i / 2) as f64,
            fy: rng.gen_range(1.0..6.0) * (1 + i / 2) as f64,
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
            amp: rng.gen_range(0.02..0.06),
        })
        .collect();

    struct Sphere {
        cx: f64,
        cy: f64,
        r: f64,
        albedo: Rgb,
    }
    let light = {
        let (lx, ly) = (rng.gen_range(-0.6..0.6), rng.gen_range(-0.8..-0.2));
        let lz = (1.0f64 - lx * lx - ly * ly).max(0.1).sqrt();
        [lx, ly, lz]
    };
    let spheres: Vec<Sphere> = (0..rng.gen_range(4..8))
        .map(|_| Sphere {
            cx: rng.gen_range(0.1..0.9),
            cy: rng.gen_range(0.25..0.9),
            r: rng.gen_range(0.06..0.2),
            albedo: {
                // saturated but not pure hues
                let hue = rng.gen_range(0.0..6.0f64);
                let sat = rng.gen_range(0.3..0.85);
                let val = rng.gen_range(0.55..0.95);
                hsv(hue, sat, val)
            },
        })
        .collect();

    let aspect = width as f64 / height.max(1) as f64;
    ImageRGB::from_fn(width, height, |x, y| {
        let u = (x as f64 + 0.5) / width as f64;
        let v = (y as f64 + 0.5) / height as f64;
        let texture: f64 = waves
            .iter()
            .map(|w| w.amp * (w.fx * u * std::f64::consts::TAU + w.fy * v * std::f64::consts::TAU + w.phase).sin())
            .sum();
        let mut color = if v < horizon {
            let t = v / horizon;
            lerp(sky_top, sky_low, t).map(|c| c * (1.0 + 0.3 * texture))
        } else {
            let t = (v - horizon) / (1.0 - horizon);
            lerp(ground_far, ground_near, t).map(|c| c * (1.0 + 2.0 * texture) * (1.0 - 0.35 * t))
        };
        for s in &spheres {
            let dx = (u - s.cx) * aspect;
            let dy = v - s.cy;
            let rr = (dx * dx + dy * dy) / (s.r * s.r);
            if rr < 1.0 {
                let nz = (1.0 - rr).sqrt();
                let (nx, ny) = (dx / s.r, dy / s.r);
                let lambert = (nx * light[0] + ny * light[1] + nz * light[2]).max(0.0);
                let shade = 0.25 + 0.75 * lambert;
                color = s.albedo.map(|c| c * shade * (1.0 + texture));
            }
        }
        color.map(|c| c.clamp(0.02, 0.98))
    })
}

fn lerp(a: Rgb, b: Rgb, t: f64) -> Rgb {
    [0, 1, 2].map(|i| a[i] + (b[i] - a[i]) * t)
}

fn hsv(h: f64, s: f64, v: f64) -> Rgb {
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r + m, g + m, b + m]
}
