//! RGB ↔ RGI algebra, rg chromaticity, brightness and valid-pixel masks.
//!
//! Colors are row vectors: a pixel ρ maps through a matrix `M` as `ρᵀM`.

use nalgebra::{DMatrix, RowVector3};

use crate::error::{Error, Result};
use crate::imgio::{ImageRGB, Rgb};

pub type Matrix3 = nalgebra::Matrix3<f64>;

/// Builds a matrix from nine row-major entries.
pub fn matrix_from_row_major(e: &[f64; 9]) -> Matrix3 {
    Matrix3::new(e[0], e[1], e[2], e[3], e[4], e[5], e[6], e[7], e[8])
}

pub fn matrix_to_row_major(m: &Matrix3) -> [f64; 9] {
    [
        m[(0, 0)],
        m[(0, 1)],
        m[(0, 2)],
        m[(1, 0)],
        m[(1, 1)],
        m[(1, 2)],
        m[(2, 0)],
        m[(2, 1)],
        m[(2, 2)],
    ]
}

/// Full-rank test on the matrix rescaled so its largest |entry| is 1.
pub fn is_full_rank(m: &Matrix3) -> bool {
    if m.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let scale = m.amax();
    scale > 0.0 && (m / scale).determinant().abs() > 1e-12
}

/// Row-vector product `ρᵀM`.
#[inline]
pub fn mul_row(p: Rgb, m: &Matrix3) -> Rgb {
    [
        p[0] * m[(0, 0)] + p[1] * m[(1, 0)] + p[2] * m[(2, 0)],
        p[0] * m[(0, 1)] + p[1] * m[(1, 1)] + p[2] * m[(2, 1)],
        p[0] * m[(0, 2)] + p[1] * m[(1, 2)] + p[2] * m[(2, 2)],
    ]
}

/// RGB → RGI conversion `C`, with `ρᵀC = (R, G, R+G+B)`.
pub fn rgi_matrix() -> Matrix3 {
    Matrix3::new(1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0)
}

/// Closed-form inverse of [`rgi_matrix`].
pub fn rgi_matrix_inverse() -> Matrix3 {
    Matrix3::new(1.0, 0.0, -1.0, 0.0, 1.0, -1.0, 0.0, 0.0, 1.0)
}

/// Per-pixel validity flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    width: usize,
    height: usize,
    valid: Vec<bool>,
}

impl PixelMask {
    pub fn new(width: usize, height: usize, valid: Vec<bool>) -> Result<Self> {
        if valid.len() != width * height {
            return Err(Error::Shape(format!(
                "mask for {width}x{height} needs {} flags, got {}",
                width * height,
                valid.len()
            )));
        }
        Ok(Self { width, height, valid })
    }

    pub fn all(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            valid: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn flags(&self) -> &[bool] {
        &self.valid
    }

    pub fn is_valid(&self, index: usize) -> bool {
        self.valid[index]
    }

    pub fn count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn and(&self, other: &PixelMask) -> Result<PixelMask> {
        self.ensure_matches(other.width, other.height)?;
        Ok(PixelMask {
            width: self.width,
            height: self.height,
            valid: self.valid.iter().zip(&other.valid).map(|(&a, &b)| a && b).collect(),
        })
    }

    pub(crate) fn ensure_matches(&self, width: usize, height: usize) -> Result<()> {
        if self.width == width && self.height == height {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "mask is {}x{}, image is {width}x{height}",
                self.width, self.height
            )))
        }
    }
}

/// A pixel is valid iff `R+G+B > threshold`.
pub fn valid_mask(img: &ImageRGB, threshold: f64) -> PixelMask {
    PixelMask {
        width: img.width(),
        height: img.height(),
        valid: img.pixels().iter().map(|p| p[0] + p[1] + p[2] > threshold).collect(),
    }
}

/// Homogeneous rg coordinates `(r, g, 1)` of one pixel.
#[inline]
pub fn homogeneous_rg(p: Rgb) -> Option<RowVector3<f64>> {
    let c = mul_row(p, &rgi_matrix());
    (c[2] != 0.0 && c[2].is_finite()).then(|| RowVector3::new(c[0] / c[2], c[1] / c[2], 1.0))
}

/// Stacks `(r, g, 1)` rows for every unmasked pixel, in raster order.
pub fn to_homogeneous_chromaticity(img: &ImageRGB, mask: &PixelMask) -> Result<DMatrix<f64>> {
    mask.ensure_matches(img.width(), img.height())?;
    let rows: Vec<RowVector3<f64>> = img
        .pixels()
        .iter()
        .enumerate()
        .filter(|&(i, _)| mask.is_valid(i))
        .map(|(i, &p)| {
            homogeneous_rg(p)
                .ok_or_else(|| Error::Domain(format!("pixel {i} has zero intensity (R+G+B = 0) but is not masked")))
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        3,
        rows.iter().flat_map(|r| r.iter().copied()),
    ))
}

#[inline]
pub fn pixel_brightness(p: Rgb) -> f64 {
    (p[0] + p[1] + p[2]) / 3.0
}

/// Channel mean `(R+G+B)/3` per pixel.
pub fn brightness(img: &ImageRGB) -> Vec<f64> {
    img.pixels().iter().map(|&p| pixel_brightness(p)).collect()
}
