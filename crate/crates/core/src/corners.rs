//! Harris-style corner detection with an additional downward-diagonal
//! variation term, and the 5x5 corner-count string built from it.
//!
//! The local autocorrelation matrix is
//! `M = [[A, C + D], [C + D, B]]` with `A = Ix^2 * W`, `B = Iy^2 * W`,
//! `C = Ix*Iy * W`, `D = Iu*Iv * W`, where `*` is convolution with a fixed
//! 5x5 Gaussian window `W` and `Iu`, `Iv` are central differences along the
//! up- and down-going diagonals. Cornerness is `det(M) - k * trace(M)^2`.

use serde::{Deserialize, Serialize};

use crate::features::GRID;
use crate::preprocess::BinaryGlyph;
use crate::{Error, Result};

/// The 5x5 Gaussian window, row-major.
pub const GAUSSIAN_5X5: [f64; 25] = [
    0.004, 0.015, 0.026, 0.015, 0.004, //
    0.015, 0.059, 0.095, 0.059, 0.015, //
    0.026, 0.095, 0.150, 0.095, 0.026, //
    0.015, 0.059, 0.095, 0.059, 0.015, //
    0.004, 0.015, 0.026, 0.015, 0.004,
];

/// Width of the border band where the cornerness is forced to zero.
pub const BORDER: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerConfig {
    pub k: f64,
    pub gaussian: [f64; 25],
    /// Threshold as a fraction of the map maximum.
    pub t_rel: f64,
    pub nms_radius: usize,
}

impl Default for CornerConfig {
    fn default() -> Self {
        Self {
            k: 0.04,
            gaussian: GAUSSIAN_5X5,
            t_rel: 0.01,
            nms_radius: 1,
        }
    }
}

/// Real-valued raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch {
                expected: width * height,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_glyph(g: &BinaryGlyph) -> Self {
        Self {
            width: g.side(),
            height: g.side(),
            data: g.to_f64(),
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Zero outside the raster.
    fn at(&self, x: isize, y: isize) -> f64 {
        if x < 0 || y < 0 || x >= self.width as isize || y >= self.height as isize {
            0.0
        } else {
            self.data[y as usize * self.width + x as usize]
        }
    }

    fn map(&self, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in 0..self.width {
                data.push(f(x, y));
            }
        }
        Self {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalGradients {
    pub ix: Plane,
    pub iy: Plane,
    /// Up-going diagonal (towards north-east).
    pub iu: Plane,
    /// Down-going diagonal (towards south-east).
    pub iv: Plane,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureTerms {
    pub a: Plane,
    pub b: Plane,
    pub c: Plane,
    pub d: Plane,
}

pub type CornernessMap = Plane;

/// Central differences along E, S, NE and SE; y grows downwards and the
/// area outside the raster is 0.
pub fn gradients(img: &Plane) -> Result<DirectionalGradients> {
    if img.width < 5 || img.height < 5 {
        return Err(Error::TooSmall {
            width: img.width,
            height: img.height,
            min: 5,
        });
    }
    let d = |dx1: isize, dy1: isize, dx0: isize, dy0: isize| {
        img.map(|x, y| {
            let (x, y) = (x as isize, y as isize);
            (img.at(x + dx1, y + dy1) - img.at(x + dx0, y + dy0)) / 2.0
        })
    };
    Ok(DirectionalGradients {
        ix: d(1, 0, -1, 0),
        iy: d(0, 1, 0, -1),
        iu: d(1, -1, -1, 1),
        iv: d(1, 1, -1, -1),
    })
}

/// 5x5 convolution with zero padding.
pub fn convolve5(p: &Plane, kernel: &[f64; 25]) -> Plane {
    p.map(|x, y| {
        let mut acc = 0.0;
        for ky in 0..5 {
            for kx in 0..5 {
                // flipped kernel: true convolution (the Gaussian is symmetric anyway)
                let sx = x as isize + 2 - kx as isize;
                let sy = y as isize + 2 - ky as isize;
                acc += kernel[ky * 5 + kx] * p.at(sx, sy);
            }
        }
        acc
    })
}

fn product(a: &Plane, b: &Plane) -> Plane {
    Plane {
        width: a.width,
        height: a.height,
        data: a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
    }
}

pub fn structure_terms(g: &DirectionalGradients, window: &[f64; 25]) -> StructureTerms {
    StructureTerms {
        a: convolve5(&product(&g.ix, &g.ix), window),
        b: convolve5(&product(&g.iy, &g.iy), window),
        c: convolve5(&product(&g.ix, &g.iy), window),
        d: convolve5(&product(&g.iu, &g.iv), window),
    }
}

/// `A*B - (C+D)^2 - k*(A+B)^2`, zero on the border band.
pub fn cornerness(t: &StructureTerms, k: f64) -> CornernessMap {
    let (w, h) = (t.a.width, t.a.height);
    t.a.map(|x, y| {
        if x < BORDER || y < BORDER || x + BORDER >= w || y + BORDER >= h {
            return 0.0;
        }
        let i = y * w + x;
        let (a, b, c, d) = (t.a.data[i], t.b.data[i], t.c.data[i], t.d.data[i]);
        let off = c + d;
        a * b - off * off - k * (a + b) * (a + b)
    })
}

pub fn cornerness_of(img: &Plane, cfg: &CornerConfig) -> Result<CornernessMap> {
    let g = gradients(img)?;
    Ok(cornerness(&structure_terms(&g, &cfg.gaussian), cfg.k))
}

/// Pixels at or above `t_rel * max` that beat every neighbour within
/// `nms_radius`. On exactly equal plateaus the first pixel in raster order
/// survives. Returns `(x, y)` in raster order.
pub fn detect_corners(map: &CornernessMap, cfg: &CornerConfig) -> Vec<(usize, usize)> {
    let max = map.max();
    if !(max > 0.0) {
        return Vec::new();
    }
    let threshold = cfg.t_rel * max;
    let r = cfg.nms_radius as isize;
    let mut corners = Vec::new();
    for y in 0..map.height {
        for x in 0..map.width {
            let v = map.get(x, y);
            if v < threshold || v <= 0.0 {
                continue;
            }
            let mut keep = true;
            'nbhd: for dy in -r..=r {
                for dx in -r..=r {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= map.width as isize || ny >= map.height as isize {
                        continue;
                    }
                    let nv = map.get(nx as usize, ny as usize);
                    let earlier = (dy, dx) < (0, 0);
                    if nv > v || (earlier && nv == v) {
                        keep = false;
                        break 'nbhd;
                    }
                }
            }
            if keep {
                corners.push((x, y));
            }
        }
    }
    corners
}

/// Corner counts over a 5x5 grid, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CornerString(pub [u32; 25]);

impl CornerString {
    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }
}

/// Cell of a corner is `(floor(y*5/side), floor(x*5/side))`.
pub fn corner_string(corners: &[(usize, usize)], side: usize) -> Result<CornerString> {
    let mut counts = [0u32; 25];
    for &(x, y) in corners {
        if x >= side || y >= side {
            return Err(Error::OutOfBounds { x, y, side });
        }
        counts[(y * GRID / side) * GRID + x * GRID / side] += 1;
    }
    Ok(CornerString(counts))
}

/// Cornerness map, corner list and corner string of a normalized glyph.
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphCorners {
    pub map: CornernessMap,
    pub corners: Vec<(usize, usize)>,
    pub string: CornerString,
}

pub fn glyph_corners(g: &BinaryGlyph, cfg: &CornerConfig) -> Result<GlyphCorners> {
    let map = cornerness_of(&Plane::from_glyph(g), cfg)?;
    let corners = detect_corners(&map, cfg);
    let string = corner_string(&corners, g.side())?;
    Ok(GlyphCorners {
        map,
        corners,
        string,
    })
}

/// Linear rescale of the map to `0..=255` (constant maps become all zero).
pub fn map_to_gray(map: &CornernessMap) -> crate::preprocess::GrayImage {
    let lo = map.data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = map.max();
    let span = hi - lo;
    let pixels = map
        .data
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - lo) / span * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect();
    crate::preprocess::GrayImage::new(map.width, map.height, pixels)
        .expect("map dimensions are nonzero")
}
