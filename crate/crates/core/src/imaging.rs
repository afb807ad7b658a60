//! Image ingestion: decoding, luma conversion, bilinear resizing, histogram
//! equalization and row-major vectorization.
//!
//! Every stage keeps intensities in `[0, 1]`. The fixed pipeline order is
//! load, normalize, resize, equalize, vectorize.

use std::path::Path;

use image::{DynamicImage, ImageError, ImageReader};

use crate::error::{Error, Result};

/// Number of quantization levels used by [`equalize`].
pub const LEVELS: usize = 256;

/// Rec.601 luma weights for (R, G, B).
const LUMA_601: [f64; 3] = [0.299, 0.587, 0.114];

/// A grayscale image with row-major intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::argument("image dimensions must be positive"));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                found: pixels.len(),
            });
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::argument(format!(
                "intensity {bad} outside [0, 1]"
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    /// Constant image.
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image from 8-bit intensities, dividing each by 255.
    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(
            width,
            height,
            bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Intensities rounded to the nearest of 256 levels.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| quantize(v) as u8).collect()
    }

    /// Copies the `w × h` block whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::argument(format!(
                "crop {w}x{h}+{x}+{y} outside {}x{} image",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(w * h);
        for row in y..y + h {
            let start = row * self.width + x;
            pixels.extend_from_slice(&self.pixels[start..start + w]);
        }
        Ok(GrayImage {
            width: w,
            height: h,
            pixels,
        })
    }

    /// Writes the image as an 8-bit grayscale PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.to_bytes())
            .expect("buffer length matches dimensions");
        buf.save(path).map_err(|e| map_image_error(path, e))
    }
}

/// 8-bit RGB pixels kept alongside the grayscale copy for skin prescreening.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColorImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                found: pixels.len(),
            });
        }
        Ok(ColorImage {
            width,
            height,
            pixels,
        })
    }

    /// Rec.601 luma of every pixel, normalized to `[0, 1]`.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| luma(p)).collect(),
        }
    }
}

/// A decoded picture: the grayscale intensities and, for color inputs, the
/// original RGB values.
#[derive(Clone, Debug)]
pub struct Picture {
    pub gray: GrayImage,
    pub color: Option<ColorImage>,
}

/// Flattened image, indexed `p = row × width + col`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageVector {
    values: Vec<f64>,
    source_width: usize,
    source_height: usize,
}

impl ImageVector {
    pub fn new(values: Vec<f64>, source_width: usize, source_height: usize) -> Result<Self> {
        if values.len() != source_width * source_height {
            return Err(Error::DimensionMismatch {
                expected: source_width * source_height,
                found: values.len(),
            });
        }
        Ok(ImageVector {
            values,
            source_width,
            source_height,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn source_width(&self) -> usize {
        self.source_width
    }

    pub fn source_height(&self) -> usize {
        self.source_height
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

fn luma([r, g, b]: [u8; 3]) -> f64 {
    let y = LUMA_601[0] * f64::from(r) + LUMA_601[1] * f64::from(g) + LUMA_601[2] * f64::from(b);
    (y / 255.0).clamp(0.0, 1.0)
}

fn quantize(v: f64) -> usize {
    ((v * (LEVELS - 1) as f64).round() as usize).min(LEVELS - 1)
}

fn map_image_error(path: &Path, err: ImageError) -> Error {
    match err {
        ImageError::IoError(source) => Error::io(path, source),
        other => Error::Format {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    }
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| map_image_error(path, e))
}

/// Decodes a PNG, PGM or JPEG file into normalized grayscale.
///
/// Color inputs are converted with Rec.601 luma weights before the division
/// by 255.
pub fn load_gray(path: &Path) -> Result<GrayImage> {
    Ok(load_picture(path)?.gray)
}

/// Like [`load_gray`] but keeps the RGB values of color inputs.
pub fn load_picture(path: &Path) -> Result<Picture> {
    let img = decode(path)?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let rgb = img.to_rgb8();
        let color = ColorImage::new(width, height, rgb.pixels().map(|p| p.0).collect())?;
        Ok(Picture {
            gray: color.to_gray(),
            color: Some(color),
        })
    } else {
        let luma = img.to_luma8();
        Ok(Picture {
            gray: GrayImage::from_bytes(width, height, luma.as_raw())?,
            color: None,
        })
    }
}

/// Histogram equalization over 256 levels.
///
/// Each pixel is quantized to a level `q` and mapped to
/// `(cdf(q) - cdf_min) / (total - cdf_min)`. A constant image has a zero
/// denominator and is returned unchanged.
pub fn equalize(img: &GrayImage) -> GrayImage {
    let levels: Vec<usize> = img.pixels.iter().map(|&v| quantize(v)).collect();
    let mut hist = [0usize; LEVELS];
    for &q in &levels {
        hist[q] += 1;
    }
    let mut cdf = [0usize; LEVELS];
    let mut acc = 0;
    for (c, h) in cdf.iter_mut().zip(hist.iter()) {
        acc += h;
        *c = acc;
    }
    let total = levels.len();
    let cdf_min = cdf[hist.iter().position(|&h| h > 0).unwrap_or(0)];
    if total == cdf_min {
        return img.clone();
    }
    let denom = (total - cdf_min) as f64;
    GrayImage {
        width: img.width,
        height: img.height,
        pixels: levels
            .iter()
            .map(|&q| (cdf[q] - cdf_min) as f64 / denom)
            .collect(),
    }
}

/// Corner-aligned source coordinate for output sample `i` of `dst` samples.
fn source_coord(i: usize, src: usize, dst: usize) -> f64 {
    if dst == 1 {
        (src - 1) as f64 / 2.0
    } else {
        i as f64 * ((src - 1) as f64 / (dst - 1) as f64)
    }
}

/// Bilinear resampling with corner-aligned coordinates: the first and last
/// output samples sit exactly on the first and last input samples.
pub fn resize(img: &GrayImage, w: usize, h: usize) -> Result<GrayImage> {
    if w == 0 || h == 0 {
        return Err(Error::argument("resize target dimensions must be positive"));
    }
    if w == img.width && h == img.height {
        return Ok(img.clone());
    }
    let cols: Vec<(usize, usize, f64)> = (0..w)
        .map(|i| split_coord(source_coord(i, img.width, w), img.width))
        .collect();
    let mut pixels = Vec::with_capacity(w * h);
    for j in 0..h {
        let (r0, r1, ty) = split_coord(source_coord(j, img.height, h), img.height);
        for &(c0, c1, tx) in &cols {
            let top = lerp(img.get(c0, r0), img.get(c1, r0), tx);
            let bottom = lerp(img.get(c0, r1), img.get(c1, r1), tx);
            pixels.push(lerp(top, bottom, ty).clamp(0.0, 1.0));
        }
    }
    Ok(GrayImage {
        width: w,
        height: h,
        pixels,
    })
}

fn split_coord(s: f64, n: usize) -> (usize, usize, f64) {
    let lo = (s.floor() as usize).min(n - 1);
    let hi = (lo + 1).min(n - 1);
    (lo, hi, s - lo as f64)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

pub fn vectorize(img: &GrayImage) -> ImageVector {
    ImageVector {
        values: img.pixels.clone(),
        source_width: img.width,
        source_height: img.height,
    }
}

pub fn devectorize(v: &ImageVector) -> Result<GrayImage> {
    GrayImage::new(v.source_width, v.source_height, v.values.clone())
}

/// The fixed preprocessing chain applied to every training, test and
/// detection window: resize to the canvas, optionally equalize, vectorize.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Preprocessor {
    pub width: usize,
    pub height: usize,
    pub equalize: bool,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Preprocessor {
            width: 64,
            height: 64,
            equalize: true,
        }
    }
}

impl Preprocessor {
    pub fn prepare(&self, img: &GrayImage) -> Result<ImageVector> {
        let resized = resize(img, self.width, self.height)?;
        let out = if self.equalize {
            equalize(&resized)
        } else {
            resized
        };
        Ok(vectorize(&out))
    }

    pub fn load(&self, path: &Path) -> Result<ImageVector> {
        self.prepare(&load_gray(path)?)
    }
}
