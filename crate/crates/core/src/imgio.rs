//! Image container, PPM/PNG codecs and box-filter downsampling.
//!
//! Channel values are stored as `f64` in display-referred [0, 1]. Pipeline
//! intermediates may leave that range; only the encoders clamp.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub type Rgb = [f64; 3];

/// Row-major grid of RGB triples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRGB {
    width: usize,
    height: usize,
    data: Vec<Rgb>,
}

impl ImageRGB {
    pub fn new(width: usize, height: usize, data: Vec<Rgb>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "{}x{} image needs {} pixels, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: Rgb) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [Rgb] {
        &mut self.data
    }

    pub fn into_pixels(self) -> Vec<Rgb> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.data[y * self.width + x]
    }

    pub fn same_shape(&self, other: &ImageRGB) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn ensure_same_shape(&self, other: &ImageRGB) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    /// Applies `f` to every pixel, keeping dimensions.
    pub fn map(&self, f: impl Fn(Rgb) -> Rgb) -> ImageRGB {
        ImageRGB {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&p| f(p)).collect(),
        }
    }

    /// Copy with every channel clamped to [0, 1]. NaN becomes 0.
    pub fn clamped(&self) -> ImageRGB {
        self.map(|p| p.map(clamp_unit))
    }

    /// Quantizes to 8 bits and back, matching what `save_image` would store.
    pub fn quantized(&self) -> ImageRGB {
        self.map(|p| p.map(|c| f64::from(quantize(c)) / 255.0))
    }
}

fn clamp_unit(c: f64) -> f64 {
    if c.is_nan() {
        0.0
    } else {
        c.clamp(0.0, 1.0)
    }
}

/// Half-up rounding of the clamped channel onto 0..=255.
pub fn quantize(c: f64) -> u8 {
    (clamp_unit(c) * 255.0 + 0.5).floor() as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Ppm,
    Png,
}

impl ImageFormat {
    /// Picks a format from the file extension (case-insensitive).
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "ppm" => Some(ImageFormat::Ppm),
            "png" => Some(ImageFormat::Png),
            _ => None,
        }
    }
}

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageRGB> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes, path)
}

/// Decodes PPM (P6) or PNG bytes; `path` is only used for error messages.
pub fn decode_image(bytes: &[u8], path: &Path) -> Result<ImageRGB> {
    if bytes.starts_with(b"P6") {
        decode_ppm(bytes, path)
    } else if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes, path)
    } else {
        let head: String = bytes
            .iter()
            .take(16)
            .map(|&b| {
                if b.is_ascii_graphic() || b == b' ' {
                    b as char
                } else {
                    '.'
                }
            })
            .collect();
        Err(Error::Format {
            path: path.to_path_buf(),
            detail: format!("unrecognized header {head:?}"),
        })
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&'a str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .filter(|s| !s.is_empty())
    }
}

fn decode_ppm(bytes: &[u8], path: &Path) -> Result<ImageRGB> {
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let header_err = |detail: String| Error::Format {
        path: path.to_path_buf(),
        detail,
    };
    let mut fields = [0usize; 3];
    for (slot, name) in fields.iter_mut().zip(["width", "height", "maxval"]) {
        let tok = cur.token().ok_or_else(|| {
            Error::io(
                path,
                io::Error::new(io::ErrorKind::UnexpectedEof, format!("P6 header ends before {name}")),
            )
        })?;
        *slot = tok
            .parse()
            .map_err(|_| header_err(format!("P6 {name} {tok:?} is not an integer")))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(header_err(format!(
            "P6 {width} {height} {maxval}: only maxval 255 is supported"
        )));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let start = cur.pos + 1;
    let need = width * height * 3;
    let raster = bytes.get(start..start + need).ok_or_else(|| {
        Error::io(
            path,
            io::Error::new(
                io::ErrorKind::UnexpectedEof,
                format!(
                    "P6 {width} {height} 255: payload has {} of {need} bytes",
                    bytes.len().saturating_sub(start)
                ),
            ),
        )
    })?;
    let data = raster
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]].map(|b| f64::from(b) / 255.0))
        .collect();
    ImageRGB::new(width, height, data)
}

fn decode_png(bytes: &[u8], path: &Path) -> Result<ImageRGB> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    })?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let data: Vec<Rgb> = match img {
        image::DynamicImage::ImageRgb8(buf) => buf.pixels().map(|p| p.0.map(|b| f64::from(b) / 255.0)).collect(),
        image::DynamicImage::ImageRgba8(buf) => buf
            .pixels()
            .map(|p| [p.0[0], p.0[1], p.0[2]].map(|b| f64::from(b) / 255.0))
            .collect(),
        other => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: format!("PNG color type {:?}; only 8-bit RGB/RGBA", other.color()),
            })
        }
    };
    ImageRGB::new(width, height, data)
}

pub fn encode_ppm(img: &ImageRGB) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.reserve(img.len() * 3);
    for p in &img.data {
        out.extend(p.map(quantize));
    }
    out
}

pub fn encode_png(img: &ImageRGB) -> Result<Vec<u8>> {
    let raw: Vec<u8> = img.data.iter().flat_map(|p| p.map(quantize)).collect();
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, raw)
        .ok_or_else(|| Error::Shape("image dimensions overflow PNG limits".into()))?;
    let mut out = io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::Domain(format!("PNG encode failed: {e}")))?;
    Ok(out.into_inner())
}

pub fn encode_image(img: &ImageRGB, format: ImageFormat) -> Result<Vec<u8>> {
    match format {
        ImageFormat::Ppm => Ok(encode_ppm(img)),
        ImageFormat::Png => encode_png(img),
    }
}

/// Writes `img` with the format implied by the extension of `path`.
pub fn save_image(img: &ImageRGB, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = ImageFormat::from_path(path).ok_or_else(|| Error::Format {
        path: path.to_path_buf(),
        detail: "output extension must be .ppm or .png".into(),
    })?;
    let bytes = encode_image(img, format)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes through a sibling temp file and renames it into place, so readers
/// never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let write = || -> io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Box-filter downsampling by `2^k` per axis. Partial edge blocks average
/// whatever pixels they cover.
pub fn downsample(img: &ImageRGB, k: u32) -> ImageRGB {
    if k == 0 {
        return img.clone();
    }
    let block = 1usize.checked_shl(k).unwrap_or(usize::MAX);
    let out_w = (img.width / block).max(1);
    let out_h = (img.height / block).max(1);
    let mut data = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        let y0 = oy * block;
        let y1 = if oy + 1 == out_h { img.height } else { y0 + block };
        for ox in 0..out_w {
            let x0 = ox * block;
            let x1 = if ox + 1 == out_w { img.width } else { x0 + block };
            let mut sum = [0.0; 3];
            for y in y0..y1 {
                for p in &img.data[y * img.width + x0..y * img.width + x1] {
                    sum[0] += p[0];
                    sum[1] += p[1];
                    sum[2] += p[2];
                }
            }
            let count = ((y1 - y0) * (x1 - x0)) as f64;
            data.push(sum.map(|s| s / count));
        }
    }
    ImageRGB {
        width: out_w,
        height: out_h,
        data,
    }
}

/// Smallest `k` such that `downsample(img, k)` has max dimension ≤ `limit`.
pub fn auto_downsample_level(width: usize, height: usize, limit: usize) -> u32 {
    let limit = limit.max(1);
    let mut k = 0;
    while (width.max(height) >> k) > limit {
        k += 1;
    }
    k
}
