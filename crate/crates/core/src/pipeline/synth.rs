//! Seeded synthetic glyph corpus used in place of real handwriting data.
//!
//! Each class is a fixed combination of three stroke primitives (bars,
//! verticals, diagonals, circles, arcs) drawn on a 100×100 canvas. Any two
//! classes share at most one primitive. Instances are shifted by up to ten
//! pixels; with `noise > 0` they also get stroke-thickness jitter, boundary
//! pixel flips at rate `noise` and grey-level jitter.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Sample};
use crate::pgm;
use crate::preprocess::GrayImage;
use crate::{Error, Result};

pub const CANVAS: usize = 100;
const MAX_SHIFT: i32 = 10;
const HALF_WIDTH: f64 = 3.5;
const INK: i32 = 30;
const BACKGROUND: i32 = 225;
const GREY_JITTER: i32 = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Primitive {
    Segment {
        a: (f64, f64),
        b: (f64, f64),
    },
    /// Angles in radians, y pointing down, `from < to`.
    Arc {
        c: (f64, f64),
        r: f64,
        from: f64,
        to: f64,
    },
}

const fn seg(ax: f64, ay: f64, bx: f64, by: f64) -> Primitive {
    Primitive::Segment {
        a: (ax, ay),
        b: (bx, by),
    }
}

const fn arc(cx: f64, cy: f64, r: f64, from: f64, to: f64) -> Primitive {
    Primitive::Arc {
        c: (cx, cy),
        r,
        from,
        to,
    }
}

const PRIMITIVES: [Primitive; 13] = [
    seg(25.0, 25.0, 75.0, 25.0),
    seg(25.0, 50.0, 75.0, 50.0),
    seg(25.0, 75.0, 75.0, 75.0),
    seg(25.0, 25.0, 25.0, 75.0),
    seg(50.0, 25.0, 50.0, 75.0),
    seg(75.0, 25.0, 75.0, 75.0),
    seg(25.0, 25.0, 75.0, 75.0),
    seg(75.0, 25.0, 25.0, 75.0),
    arc(50.0, 50.0, 22.0, -PI, PI),
    arc(50.0, 36.0, 11.0, -PI, PI),
    arc(50.0, 64.0, 11.0, -PI, PI),
    arc(50.0, 52.0, 22.0, 0.0, PI),
    arc(48.0, 50.0, 24.0, -PI / 2.0, PI / 2.0),
];

fn dist(p: (f64, f64), q: (f64, f64)) -> f64 {
    (p.0 - q.0).hypot(p.1 - q.1)
}

impl Primitive {
    fn distance(&self, p: (f64, f64)) -> f64 {
        match *self {
            Primitive::Segment { a, b } => {
                let (dx, dy) = (b.0 - a.0, b.1 - a.1);
                let t =
                    (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
                dist(p, (a.0 + t * dx, a.1 + t * dy))
            }
            Primitive::Arc { c, r, from, to } => {
                let angle = (p.1 - c.1).atan2(p.0 - c.0);
                if (from..=to).contains(&angle) {
                    (dist(p, c) - r).abs()
                } else {
                    let end = |t: f64| (c.0 + r * t.cos(), c.1 + r * t.sin());
                    dist(p, end(from)).min(dist(p, end(to)))
                }
            }
        }
    }
}

fn shares_at_most_one(a: &[usize], b: &[usize]) -> bool {
    a.iter().filter(|x| b.contains(x)).count() <= 1
}

/// Primitive sets of the first `n` classes. Triples are taken greedily in
/// lexicographic order; if more classes are requested than such triples
/// exist, further classes use the remaining subsets by increasing size.
fn class_shapes(n: usize) -> Vec<Vec<usize>> {
    let m = PRIMITIVES.len();
    let mut shapes: Vec<Vec<usize>> = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            for c in b + 1..m {
                let t = vec![a, b, c];
                if shapes.len() < n && shapes.iter().all(|s| shares_at_most_one(s, &t)) {
                    shapes.push(t);
                }
            }
        }
    }
    let mut masks: Vec<u32> = (1u32..1 << m).filter(|x| x.count_ones() >= 2).collect();
    masks.sort_by_key(|x| (x.count_ones(), *x));
    for mask in masks {
        if shapes.len() >= n {
            break;
        }
        let s: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
        if !shapes.contains(&s) {
            shapes.push(s);
        }
    }
    shapes
}

/// Renders one instance of a primitive set.
fn render(shape: &[usize], noise: f64, rng: &mut ChaCha8Rng) -> GrayImage {
    let dx = rng.gen_range(-MAX_SHIFT..=MAX_SHIFT) as f64;
    let dy = rng.gen_range(-MAX_SHIFT..=MAX_SHIFT) as f64;
    let noisy = noise > 0.0;
    let widths: Vec<f64> = shape
        .iter()
        .map(|_| {
            if noisy {
                HALF_WIDTH + rng.gen_range(-1.0..=1.0)
            } else {
                HALF_WIDTH
            }
        })
        .collect();

    let mut ink = vec![false; CANVAS * CANVAS];
    for y in 0..CANVAS {
        for x in 0..CANVAS {
            let p = (x as f64 + 0.5 - dx, y as f64 + 0.5 - dy);
            ink[y * CANVAS + x] = shape
                .iter()
                .zip(&widths)
                .any(|(&k, &w)| PRIMITIVES[k].distance(p) <= w);
        }
    }

    if noisy {
        let snapshot = ink.clone();
        let at = |x: i64, y: i64| {
            (0..CANVAS as i64).contains(&x)
                && (0..CANVAS as i64).contains(&y)
                && snapshot[y as usize * CANVAS + x as usize]
        };
        for y in 0..CANVAS as i64 {
            for x in 0..CANVAS as i64 {
                let here = at(x, y);
                let boundary = [(1, 0), (-1, 0), (0, 1), (0, -1)]
                    .iter()
                    .any(|(ox, oy)| at(x + ox, y + oy) != here);
                if boundary && rng.gen_bool(noise.min(1.0)) {
                    ink[y as usize * CANVAS + x as usize] = !here;
                }
            }
        }
    }

    let pixels = ink
        .iter()
        .map(|&i| {
            let base = if i { INK } else { BACKGROUND };
            let jitter = if noisy {
                rng.gen_range(-GREY_JITTER..=GREY_JITTER)
            } else {
                0
            };
            (base + jitter).clamp(0, 255) as u8
        })
        .collect();
    GrayImage::new(CANVAS, CANVAS, pixels).expect("canvas dimensions are valid")
}

fn label_name(class: usize, n_classes: usize) -> String {
    let digits = n_classes.saturating_sub(1).to_string().len().max(2);
    format!("c{class:0digits$}")
}

/// In-memory corpus; sample `i` of class `c` draws from its own RNG stream,
/// so every image depends only on `(seed, c, i, noise)`.
pub fn render_corpus(n_classes: usize, n_per_class: usize, noise: f64, seed: u64) -> Dataset {
    let shapes = class_shapes(n_classes);
    let labels: Vec<String> = (0..n_classes).map(|c| label_name(c, n_classes)).collect();
    let mut samples = Vec::with_capacity(n_classes * n_per_class);
    for (c, shape) in shapes.iter().enumerate() {
        for i in 0..n_per_class {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((c as u64) << 32) | i as u64);
            samples.push(Sample {
                label: c,
                image: render(shape, noise, &mut rng),
                source: None,
            });
        }
    }
    Dataset {
        labels,
        samples,
        warnings: Vec::new(),
    }
}

pub fn sample_path(root: &Path, label: &str, i: usize) -> PathBuf {
    root.join(label).join(format!("{label}_{i:04}.pgm"))
}

/// Writes the corpus as binary PGMs, one directory per class, and returns
/// it with the file paths filled in.
pub fn generate_synthetic_corpus(
    out: impl AsRef<Path>,
    n_classes: usize,
    n_per_class: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    let out = out.as_ref();
    let mut ds = render_corpus(n_classes, n_per_class, noise, seed);
    for label in &ds.labels {
        let dir = out.join(label);
        fs::create_dir_all(&dir).map_err(|e| Error::from(e).in_file(&dir))?;
    }
    for (k, s) in ds.samples.iter_mut().enumerate() {
        let path = sample_path(out, &ds.labels[s.label], k % n_per_class);
        pgm::write_binary(&s.image, &path).map_err(|e| e.in_file(&path))?;
        s.source = Some(path);
    }
    Ok(ds)
}
