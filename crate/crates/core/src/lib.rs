//! Color transfer decomposition.
//!
//! A global color transfer (source image → recolored image) is modeled as a
//! 3×3 chromaticity homography followed by a per-pixel shading adjustment.
//! The shading is summarized as a monotone brightness-to-shading curve, so
//! the pair `(H, curve)` forms a [`TransferProfile`] that can be re-applied
//! to other images or video frames.

pub mod batch;
pub mod colorspace;
pub mod error;
pub mod homography;
pub mod imgio;
pub mod metrics;
pub mod oracle;
pub mod profile;
pub mod shading;

pub use colorspace::{brightness, rgi_matrix, to_homogeneous_chromaticity, valid_mask, Matrix3, PixelMask};
pub use error::{Error, Result, Stage};
pub use homography::{apply_homography, estimate_homography_als, least_squares_solve, AlsResult, AlsSettings};
pub use imgio::{downsample, load_image, save_image, ImageRGB};
pub use metrics::{format_psnr, psnr};
pub use profile::{
    apply_profile, approximate_transfer, decompose, deserialize_profile, extract_profile, serialize_profile, ApplyMode,
    Decomposition, ExtractOptions, TransferProfile, Variant,
};
pub use shading::{
    eval_curve, fit_shading_curve, mapped_shading, smooth_shading, solve_shading_lsq, ShadingCurve, ShadingMap,
};
