//! Grayscale to normalized binary glyph conversion.
//!
//! Foreground convention throughout the crate: dark ink is `1`.

use crate::{Error, Result};

/// Default side length of the normalized square glyph.
pub const DEFAULT_SIDE: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::TooSmall {
                width,
                height,
                min: 1,
            });
        }
        if pixels.len() != width * height {
            return Err(Error::ShapeMismatch {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Intensity-inverted copy (`255 - v`).
    pub fn inverted(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&v| 255 - v).collect(),
        }
    }
}

/// Unnormalized `{0,1}` raster, `1` = ink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryRaster {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl BinaryRaster {
    /// Builds a raster; any nonzero input value counts as foreground.
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::TooSmall {
                width,
                height,
                min: 1,
            });
        }
        if pixels.len() != width * height {
            return Err(Error::ShapeMismatch {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels: pixels.into_iter().map(|v| u8::from(v != 0)).collect(),
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(u8::from(f(x, y)));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn is_ink(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.width + x] == 1
    }

    pub fn foreground_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p == 1).count()
    }
}

/// Square binary glyph with a side divisible by 5 and at least one ink pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryGlyph {
    side: usize,
    pixels: Vec<u8>,
}

impl BinaryGlyph {
    pub fn new(side: usize, pixels: Vec<u8>) -> Result<Self> {
        check_side(side)?;
        if pixels.len() != side * side {
            return Err(Error::ShapeMismatch {
                expected: side * side,
                actual: pixels.len(),
            });
        }
        let pixels: Vec<u8> = pixels.into_iter().map(|v| u8::from(v != 0)).collect();
        if !pixels.contains(&1) {
            return Err(Error::EmptyForeground);
        }
        Ok(Self { side, pixels })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn is_ink(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.side + x] == 1
    }

    /// Ink test with out-of-bounds coordinates treated as background.
    fn ink_at(&self, x: isize, y: isize) -> bool {
        let n = self.side as isize;
        x >= 0 && y >= 0 && x < n && y < n && self.pixels[(y * n + x) as usize] == 1
    }

    pub fn foreground_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p == 1).count()
    }

    /// Glyph pixels as reals in `{0.0, 1.0}`.
    pub fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| f64::from(p)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContourMask {
    side: usize,
    pixels: Vec<u8>,
}

impl ContourMask {
    /// Wraps a raw mask. The glyph relationship is not checked here.
    pub fn from_pixels(side: usize, pixels: Vec<u8>) -> Result<Self> {
        check_side(side)?;
        if pixels.len() != side * side {
            return Err(Error::ShapeMismatch {
                expected: side * side,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            side,
            pixels: pixels.into_iter().map(|v| u8::from(v != 0)).collect(),
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn is_contour(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.side + x] == 1
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p == 1).count()
    }
}

fn check_side(side: usize) -> Result<()> {
    if side == 0 || !side.is_multiple_of(5) {
        Err(Error::BadSide(side))
    } else {
        Ok(())
    }
}

/// Otsu threshold: the smallest `t` maximizing between-class variance for
/// the split `{v <= t}` / `{v > t}`. `None` when the image has one level.
pub fn otsu_level(img: &GrayImage) -> Option<u8> {
    let mut hist = [0u64; 256];
    for &v in img.pixels() {
        hist[v as usize] += 1;
    }
    let total = img.pixels().len() as f64;
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(v, &c)| v as f64 * c as f64)
        .sum();

    let mut best: Option<(u8, f64)> = None;
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    for t in 0..255usize {
        w0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if best.is_none_or(|(_, b)| between > b) {
            best = Some((t as u8, between));
        }
    }
    best.map(|(t, _)| t)
}

/// Otsu binarization. Pixels strictly below the threshold `otsu_level + 1`
/// become ink.
pub fn binarize(img: &GrayImage) -> Result<BinaryRaster> {
    let level = otsu_level(img).ok_or(Error::EmptyForeground)?;
    let pixels: Vec<u8> = img.pixels().iter().map(|&v| u8::from(v <= level)).collect();
    if !pixels.contains(&1) {
        return Err(Error::EmptyForeground);
    }
    Ok(BinaryRaster {
        width: img.width(),
        height: img.height(),
        pixels,
    })
}

/// Inclusive bounding box `(x0, y0, x1, y1)` of the foreground.
pub fn foreground_bbox(r: &BinaryRaster) -> Option<(usize, usize, usize, usize)> {
    let mut bbox: Option<(usize, usize, usize, usize)> = None;
    for y in 0..r.height {
        for x in 0..r.width {
            if r.is_ink(x, y) {
                bbox = Some(match bbox {
                    None => (x, y, x, y),
                    Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                });
            }
        }
    }
    bbox
}

pub fn crop_to_bbox(r: &BinaryRaster) -> Result<BinaryRaster> {
    let (x0, y0, x1, y1) = foreground_bbox(r).ok_or(Error::EmptyForeground)?;
    let width = x1 - x0 + 1;
    let height = y1 - y0 + 1;
    let mut pixels = Vec::with_capacity(width * height);
    for y in y0..=y1 {
        let row = y * r.width;
        pixels.extend_from_slice(&r.pixels[row + x0..=row + x1]);
    }
    Ok(BinaryRaster {
        width,
        height,
        pixels,
    })
}

/// Nearest-neighbour resampling onto a `side x side` square, ignoring the
/// aspect ratio. Destination `(x, y)` reads source
/// `(x * width / side, y * height / side)`.
pub fn scale(r: &BinaryRaster, side: usize) -> Result<BinaryGlyph> {
    check_side(side)?;
    let mut pixels = Vec::with_capacity(side * side);
    for y in 0..side {
        let sy = y * r.height / side;
        for x in 0..side {
            let sx = x * r.width / side;
            pixels.push(r.pixels[sy * r.width + sx]);
        }
    }
    if !pixels.contains(&1) {
        return Err(Error::EmptyForeground);
    }
    Ok(BinaryGlyph { side, pixels })
}

/// Foreground pixels with at least one background 4-neighbour; the area
/// outside the raster counts as background.
pub fn extract_contour(g: &BinaryGlyph) -> ContourMask {
    let n = g.side;
    let mut pixels = vec![0u8; n * n];
    for y in 0..n {
        for x in 0..n {
            if !g.is_ink(x, y) {
                continue;
            }
            let (xi, yi) = (x as isize, y as isize);
            let interior = g.ink_at(xi + 1, yi)
                && g.ink_at(xi - 1, yi)
                && g.ink_at(xi, yi + 1)
                && g.ink_at(xi, yi - 1);
            if !interior {
                pixels[y * n + x] = 1;
            }
        }
    }
    ContourMask { side: n, pixels }
}

/// binarize, crop and scale in one go.
pub fn normalize(img: &GrayImage, side: usize) -> Result<BinaryGlyph> {
    let raster = binarize(img)?;
    let cropped = crop_to_bbox(&raster)?;
    scale(&cropped, side)
}
