//! Transfer profiles: extraction from an exemplar pair, application to new
//! images, and the on-disk document format.
//!
//! Extraction runs in two steps. The chromaticity homography is estimated on
//! a (possibly heavily) downsampled copy of the pair; the shading stage then
//! works at full resolution on the homography-mapped source, and is
//! summarized as a brightness-to-shading curve so it can be reused on images
//! other than the exemplar.

use serde::{Deserialize, Serialize};

use crate::colorspace::{brightness, is_full_rank, matrix_from_row_major, matrix_to_row_major, valid_mask, Matrix3};
use crate::error::{Error, Result, Stage};
use crate::homography::{apply_homography, estimate_homography_als, AlsResult, AlsSettings};
use crate::imgio::{auto_downsample_level, downsample, ImageRGB};
use crate::shading::{
    fit_shading_curve, mapped_shading, solve_shading_lsq, ShadingCurve, ShadingSolve, DEFAULT_LAMBDA, DEFAULT_SLOTS,
};

pub const PROFILE_VERSION: i64 = 1;
pub const BRIGHTNESS_MEAN_RGB: &str = "mean_rgb";
/// Automatic downsampling keeps the estimation image at or below this size.
pub const AUTO_DOWNSAMPLE_MAX_DIM: usize = 256;

/// A reusable global color transfer: RGB-space homography plus shading curve.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferProfile {
    h: Matrix3,
    curve: ShadingCurve,
    lambda: f64,
    provenance: Option<String>,
}

impl TransferProfile {
    pub fn new(h: Matrix3, curve: ShadingCurve, lambda: f64) -> Result<Self> {
        if !is_full_rank(&h) {
            return Err(Error::Degenerate("profile homography is not full rank".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!("lambda must be ≥ 0, got {lambda}")));
        }
        Ok(Self {
            h,
            curve,
            lambda,
            provenance: None,
        })
    }

    pub fn identity() -> Self {
        Self {
            h: Matrix3::identity(),
            curve: ShadingCurve::constant(1.0),
            lambda: DEFAULT_LAMBDA,
            provenance: None,
        }
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = Some(provenance.into());
        self
    }

    pub fn h(&self) -> &Matrix3 {
        &self.h
    }

    pub fn curve(&self) -> &ShadingCurve {
        &self.curve
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn provenance(&self) -> Option<&str> {
        self.provenance.as_deref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyMode {
    /// Homography only; keeps the input's shading.
    Simple,
    /// Homography followed by the curve-mapped, smoothed shading.
    Shading,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Simple,
    /// Exact per-pixel shading; only meaningful for the exemplar itself.
    ShadingExact,
    ShadingMapped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    /// Downsampling level for homography estimation; `None` picks the
    /// smallest level with max dimension ≤ [`AUTO_DOWNSAMPLE_MAX_DIM`].
    pub downsample: Option<u32>,
    pub lambda: f64,
    pub n_slots: usize,
    pub als: AlsSettings,
    /// Pixels with `R+G+B ≤ mask_threshold` carry no chromaticity.
    pub mask_threshold: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            downsample: None,
            lambda: DEFAULT_LAMBDA,
            n_slots: DEFAULT_SLOTS,
            als: AlsSettings::default(),
            mask_threshold: 0.0,
        }
    }
}

/// Everything computed while decomposing an exemplar pair.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub profile: TransferProfile,
    /// ALS run on the downsampled pair.
    pub als: AlsResult,
    pub downsample: u32,
    /// Full-resolution `src·h`, unclamped.
    pub simple: ImageRGB,
    pub exact_shading: ShadingSolve,
}

impl Decomposition {
    pub fn approximation(&self, src: &ImageRGB, variant: Variant) -> ImageRGB {
        match variant {
            Variant::Simple => self.simple.clamped(),
            Variant::ShadingExact => self
                .exact_shading
                .map
                .apply(&self.simple)
                .expect("exact shading is computed on the simple result")
                .clamped(),
            Variant::ShadingMapped => apply_profile(src, &self.profile, ApplyMode::Shading),
        }
    }
}

/// Runs both decomposition stages on an exemplar pair.
pub fn decompose(src: &ImageRGB, tgt: &ImageRGB, opts: &ExtractOptions) -> Result<Decomposition> {
    src.ensure_same_shape(tgt)?;
    if opts.n_slots == 0 {
        return Err(Error::Domain("slot count must be ≥ 1".into()));
    }
    if !(opts.lambda >= 0.0 && opts.lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be ≥ 0, got {}", opts.lambda)));
    }
    let k = opts
        .downsample
        .unwrap_or_else(|| auto_downsample_level(src.width(), src.height(), AUTO_DOWNSAMPLE_MAX_DIM));

    let (src_k, tgt_k) = (downsample(src, k), downsample(tgt, k));
    let mask_k = valid_mask(&src_k, opts.mask_threshold).and(&valid_mask(&tgt_k, opts.mask_threshold))?;
    let als = estimate_homography_als(&src_k, &tgt_k, &mask_k, &opts.als).map_err(|e| e.at(Stage::Homography))?;

    let simple = apply_homography(src, &als.h);
    let mask = valid_mask(src, opts.mask_threshold);
    let exact_shading = solve_shading_lsq(&simple, tgt, &mask).map_err(|e| e.at(Stage::Shading))?;
    let curve = fit_shading_curve(&brightness(&simple), &exact_shading.map, &mask, opts.n_slots)
        .map_err(|e| e.at(Stage::Curve))?;
    let profile = TransferProfile::new(als.h, curve, opts.lambda).map_err(|e| e.at(Stage::Homography))?;

    Ok(Decomposition {
        profile,
        als,
        downsample: k,
        simple,
        exact_shading,
    })
}

pub fn extract_profile(src: &ImageRGB, tgt: &ImageRGB, opts: &ExtractOptions) -> Result<TransferProfile> {
    decompose(src, tgt, opts).map(|d| d.profile)
}

/// Applies a profile to an image of any size; output is clamped to [0, 1].
pub fn apply_profile(img: &ImageRGB, prof: &TransferProfile, mode: ApplyMode) -> ImageRGB {
    let simple = apply_homography(img, &prof.h);
    match mode {
        ApplyMode::Simple => simple.clamped(),
        ApplyMode::Shading => {
            let d = mapped_shading(&prof.curve, &simple, prof.lambda);
            d.apply(&simple)
                .expect("shading map matches its source image")
                .clamped()
        }
    }
}

/// One-shot approximation of `src → tgt` with the chosen variant.
pub fn approximate_transfer(
    src: &ImageRGB,
    tgt: &ImageRGB,
    variant: Variant,
    opts: &ExtractOptions,
) -> Result<ImageRGB> {
    Ok(decompose(src, tgt, opts)?.approximation(src, variant))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveDoc {
    knots: Vec<f64>,
    values: Vec<f64>,
    derivatives: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileDoc {
    version: i64,
    h: [f64; 9],
    curve: CurveDoc,
    lambda: f64,
    brightness_definition: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<String>,
}

/// Pretty-printed JSON. Numbers use the shortest representation that parses
/// back to the same `f64`.
pub fn serialize_profile(prof: &TransferProfile) -> Vec<u8> {
    let doc = ProfileDoc {
        version: PROFILE_VERSION,
        h: matrix_to_row_major(&prof.h),
        curve: CurveDoc {
            knots: prof.curve.knots().to_vec(),
            values: prof.curve.values().to_vec(),
            derivatives: prof.curve.derivatives().to_vec(),
        },
        lambda: prof.lambda,
        brightness_definition: BRIGHTNESS_MEAN_RGB.to_string(),
        provenance: prof.provenance.clone(),
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("profile fields are always serializable");
    out.push(b'\n');
    out
}

fn parse_error(path: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        message: message.into(),
    }
}

pub fn deserialize_profile(bytes: &[u8]) -> Result<TransferProfile> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| parse_error("", e.to_string()))?;
    // Check the version first so newer documents fail with a clear message.
    match value.get("version") {
        None => return Err(parse_error("version", "missing field")),
        Some(v) => match v.as_i64() {
            Some(PROFILE_VERSION) => {}
            Some(found) => {
                return Err(Error::UnsupportedVersion {
                    found,
                    expected: PROFILE_VERSION,
                })
            }
            None => return Err(parse_error("version", format!("expected an integer, got {v}"))),
        },
    }
    let doc: ProfileDoc = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        parse_error(if path == "." { "" } else { &path }, inner)
    })?;

    if doc.brightness_definition != BRIGHTNESS_MEAN_RGB {
        return Err(parse_error(
            "brightness_definition",
            format!("expected {BRIGHTNESS_MEAN_RGB:?}, got {:?}", doc.brightness_definition),
        ));
    }
    if doc.h.iter().any(|v| !v.is_finite()) {
        return Err(parse_error("h", "entries must be finite"));
    }
    let curve = ShadingCurve::from_parts(doc.curve.knots, doc.curve.values, doc.curve.derivatives)
        .map_err(|e| parse_error("curve", e.to_string()))?;
    let mut prof = TransferProfile::new(matrix_from_row_major(&doc.h), curve, doc.lambda).map_err(|e| {
        let field = if matches!(e, Error::Degenerate(_)) {
            "h"
        } else {
            "lambda"
        };
        parse_error(field, e.to_string())
    })?;
    prof.provenance = doc.provenance;
    Ok(prof)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr;
    use crate::oracle::{natural_scene, statistic_transfer, synth_pair};
    use proptest::prelude::*;

    #[test]
    fn identity_profile_document() {
        let text = String::from_utf8(serialize_profile(&TransferProfile::identity())).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(
            doc["h"],
            serde_json::json!([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
        );
        assert_eq!(doc["version"], 1);
        assert_eq!(doc["brightness_definition"], "mean_rgb");
        assert!(doc.get("provenance").is_none());
    }

    fn reparse_with(edit: impl FnOnce(&mut serde_json::Value)) -> Result<TransferProfile> {
        let mut doc: serde_json::Value =
            serde_json::from_slice(&serialize_profile(&TransferProfile::identity())).unwrap();
        edit(&mut doc);
        deserialize_profile(&serde_json::to_vec(&doc).unwrap())
    }

    #[test]
    fn short_h_names_field() {
        let err = reparse_with(|d| d["h"] = serde_json::json!([1, 0, 0, 0, 1, 0, 0, 0])).unwrap_err();
        assert!(matches!(err, Error::Parse { ref path, .. } if path == "h"), "{err}");
    }

    #[test]
    fn version_mismatch() {
        let err = reparse_with(|d| d["version"] = serde_json::json!(2)).unwrap_err();
        assert!(matches!(err, Error::UnsupportedVersion { found: 2, expected: 1 }));
    }

    #[test]
    fn unknown_and_missing_fields() {
        let err = reparse_with(|d| d["extra"] = serde_json::json!(1)).unwrap_err();
        assert!(err.to_string().contains("extra"), "{err}");
        let err = reparse_with(|d| {
            d.as_object_mut().unwrap().remove("lambda");
        })
        .unwrap_err();
        assert!(err.to_string().contains("lambda"), "{err}");
        let err = reparse_with(|d| d["curve"]["knots"] = serde_json::json!([0.0, "x"])).unwrap_err();
        assert!(
            matches!(err, Error::Parse { ref path, .. } if path.starts_with("curve.knots")),
            "{err}"
        );
    }

    #[test]
    fn invalid_semantics_rejected() {
        assert!(reparse_with(|d| d["h"] = serde_json::json!([0, 0, 0, 0, 1, 0, 0, 0, 1])).is_err());
        assert!(reparse_with(|d| d["curve"]["knots"] = serde_json::json!([1.0, 0.0])).is_err());
        assert!(reparse_with(|d| d["lambda"] = serde_json::json!(-1.0)).is_err());
        assert!(reparse_with(|d| d["brightness_definition"] = serde_json::json!("luma")).is_err());
        assert!(deserialize_profile(b"not json").is_err());
    }

    #[test]
    fn provenance_round_trips() {
        let p = TransferProfile::identity().with_provenance("a.ppm -> b.ppm");
        let back = deserialize_profile(&serialize_profile(&p)).unwrap();
        assert_eq!(back.provenance(), Some("a.ppm -> b.ppm"));
    }

    #[test]
    fn identity_extraction() {
        let src = natural_scene(64, 48, 1);
        let d = decompose(&src, &src, &ExtractOptions::default()).unwrap();
        let h = d.profile.h();
        assert!((h / h[(2, 2)] - Matrix3::identity()).amax() < 1e-8);
        let (lo, hi) = d.profile.curve().domain();
        for i in 0..=100 {
            let b = lo + (hi - lo) * i as f64 / 100.0;
            assert!((d.profile.curve().eval(b) - 1.0).abs() < 1e-3);
        }
        for v in [Variant::Simple, Variant::ShadingExact, Variant::ShadingMapped] {
            assert!(psnr(&d.approximation(&src, v), &src).unwrap() > 50.0, "{v:?}");
        }
    }

    #[test]
    fn identity_profile_leaves_image() {
        let img = natural_scene(20, 20, 2);
        for mode in [ApplyMode::Simple, ApplyMode::Shading] {
            let out = apply_profile(&img, &TransferProfile::identity(), mode);
            for (a, b) in out.pixels().iter().zip(img.pixels()) {
                for c in 0..3 {
                    assert!((a[c] - b[c]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn simple_mode_ignores_curve() {
        let img = natural_scene(16, 16, 3);
        let h = Matrix3::new(0.9, 0.1, 0.0, 0.0, 1.0, 0.1, 0.1, 0.0, 1.1);
        let a = TransferProfile::new(h, ShadingCurve::constant(1.0), 0.1).unwrap();
        let b = TransferProfile::new(h, ShadingCurve::pchip(vec![0.0, 1.0], vec![0.5, 2.0]).unwrap(), 3.0).unwrap();
        assert_eq!(
            apply_profile(&img, &a, ApplyMode::Simple),
            apply_profile(&img, &b, ApplyMode::Simple)
        );
        assert_ne!(
            apply_profile(&img, &a, ApplyMode::Shading),
            apply_profile(&img, &b, ApplyMode::Shading)
        );
    }

    #[test]
    fn recovers_synthetic_model() {
        let src = natural_scene(96, 64, 4);
        let h_true = Matrix3::new(0.85, 0.1, 0.05, 0.1, 0.95, 0.0, 0.0, 0.1, 0.9);
        let shading = |b: f64| 0.6 + 0.8 * b;
        let tgt = synth_pair(&src, &h_true, shading);
        let d = decompose(
            &src,
            &tgt,
            &ExtractOptions {
                downsample: Some(0),
                ..Default::default()
            },
        )
        .unwrap();
        let err = crate::homography::relative_error_up_to_scale(d.profile.h(), &h_true);
        assert!(err < 1e-2, "{err}");
        // h ≈ H*/s, so the exact shading on src·h is s·f(s·b).
        let h = d.profile.h();
        let s = h.dot(&h_true) / h.dot(h);
        let (lo, hi) = d.profile.curve().domain();
        for i in 0..=50 {
            let b = lo + (hi - lo) * i as f64 / 50.0;
            let expect = s * shading(s * b);
            let got = d.profile.curve().eval(b);
            assert!((got - expect).abs() / expect < 0.02, "b={b}: {got} vs {expect}");
        }
    }

    #[test]
    fn shading_mode_not_worse_than_simple_on_exemplar() {
        let src = natural_scene(80, 60, 5);
        let tgt = statistic_transfer(&src, &natural_scene(80, 60, 6));
        let d = decompose(&src, &tgt, &ExtractOptions::default()).unwrap();
        let simple = psnr(&d.approximation(&src, Variant::Simple), &tgt).unwrap();
        let mapped = psnr(&d.approximation(&src, Variant::ShadingMapped), &tgt).unwrap();
        let exact = psnr(&d.approximation(&src, Variant::ShadingExact), &tgt).unwrap();
        assert!(mapped >= simple, "mapped {mapped} simple {simple}");
        assert!(exact >= simple);
    }

    #[test]
    fn extraction_errors_name_stage() {
        let src = ImageRGB::filled(8, 8, [0.2, 0.3, 0.4]);
        let err = extract_profile(&src, &src, &ExtractOptions::default()).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Stage {
                    stage: Stage::Homography,
                    ..
                }
            ),
            "{err}"
        );
        let other = ImageRGB::filled(8, 7, [0.2; 3]);
        assert!(matches!(
            extract_profile(&src, &other, &ExtractOptions::default()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn extraction_is_deterministic() {
        let src = natural_scene(50, 40, 7);
        let tgt = statistic_transfer(&src, &natural_scene(50, 40, 8));
        let a = serialize_profile(&extract_profile(&src, &tgt, &ExtractOptions::default()).unwrap());
        let b = serialize_profile(&extract_profile(&src, &tgt, &ExtractOptions::default()).unwrap());
        assert_eq!(a, b);
    }

    fn profile_strategy() -> impl Strategy<Value = TransferProfile> {
        let h = proptest::array::uniform9(-2.0f64..2.0);
        let knots = proptest::collection::vec((1e-6f64..0.3, 0.01f64..3.0, -5.0f64..5.0), 2..50);
        (h, knots, 0.0f64..10.0, proptest::option::of("[a-z ./>-]{0,20}")).prop_filter_map(
            "singular h",
            |(h, knots, lambda, prov)| {
                let mut x = 0.0;
                let mut k = Vec::new();
                let mut v = Vec::new();
                let mut dv = Vec::new();
                for (dx, val, der) in knots {
                    x += dx;
                    k.push(x);
                    v.push(val);
                    dv.push(der);
                }
                let curve = ShadingCurve::from_parts(k, v, dv).ok()?;
                let p = TransferProfile::new(matrix_from_row_major(&h), curve, lambda).ok()?;
                Some(match prov {
                    Some(s) => p.with_provenance(s),
                    None => p,
                })
            },
        )
    }

    proptest! {
        #[test]
        fn serialization_round_trip(p in profile_strategy()) {
            let bytes = serialize_profile(&p);
            let back = deserialize_profile(&bytes).unwrap();
            prop_assert_eq!(&back, &p);
            prop_assert_eq!(serialize_profile(&back), bytes);
        }
    }
}
