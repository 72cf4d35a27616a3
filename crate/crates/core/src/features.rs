//! Stage-one feature extraction: octant shadow projections and the
//! zoned Freeman chain-code histogram.

use serde::{Deserialize, Serialize};

use crate::preprocess::{BinaryGlyph, ContourMask};

pub const SHADOW_LEN: usize = 24;
pub const CHAIN_LEN: usize = 200;
/// Zoning grid used by the chain-code histogram and the corner string.
pub const GRID: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Shadow24,
    ChainCode200,
}

impl FeatureKind {
    pub fn len(self) -> usize {
        match self {
            FeatureKind::Shadow24 => SHADOW_LEN,
            FeatureKind::ChainCode200 => CHAIN_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub kind: FeatureKind,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Freeman step `(dx, dy)` in image coordinates (y grows downwards),
/// indexed by code: 0=E 1=NE 2=N 3=NW 4=W 5=SW 6=S 7=SE.
pub const FREEMAN: [(isize, isize); 8] = [
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

// ---------------------------------------------------------------------------
// Shadow features
// ---------------------------------------------------------------------------

/// Octant boundary rays in centred, y-up coordinates, counterclockwise from east.
const RAYS: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

type Pt = (f64, f64);

fn cross(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

/// Keeps the part of `poly` where `f(p) >= 0`, `f` linear.
fn clip(poly: &[Pt], f: impl Fn(Pt) -> f64) -> Vec<Pt> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let (fp, fq) = (f(p), f(q));
        if fp >= 0.0 {
            out.push(p);
        }
        if (fp >= 0.0) != (fq >= 0.0) {
            let t = fp / (fp - fq);
            out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
        }
    }
    out
}

fn area(poly: &[Pt]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| cross(poly[i], poly[(i + 1) % n]))
        .sum::<f64>()
        .abs()
        / 2.0
}

/// Octants whose triangle shares positive area with pixel `(x, y)`.
fn pixel_octants(x: usize, y: usize, side: usize) -> impl Iterator<Item = usize> {
    // doubled coordinates centred on the square, y up: corners are integers
    let n = side as f64;
    let (x0, x1) = (2.0 * x as f64 - n, 2.0 * x as f64 - n + 2.0);
    let (y0, y1) = (n - 2.0 * y as f64 - 2.0, n - 2.0 * y as f64);
    let square = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)];
    (0..8).filter(move |&k| {
        let a = (RAYS[k].0 as f64, RAYS[k].1 as f64);
        let b = (RAYS[(k + 1) % 8].0 as f64, RAYS[(k + 1) % 8].1 as f64);
        let part = clip(&square, |p| cross(a, p));
        let part = clip(&part, |p| cross(p, b));
        part.len() >= 3 && area(&part) > 1e-6
    })
}

/// The three sides of octant `k`'s triangle in emission order: the side on
/// the square's boundary, then the remaining two walking clockwise.
fn octant_sides(k: usize, side: usize) -> [(Pt, Pt); 3] {
    let h = side as f64 / 2.0;
    let at = |r: (i64, i64)| (h + h * r.0 as f64, h - h * r.1 as f64);
    let o = (h, h);
    let pa = at(RAYS[k]);
    let pb = at(RAYS[(k + 1) % 8]);
    [(pb, pa), (pa, o), (o, pb)]
}

fn union_length(intervals: &mut [(f64, f64)]) -> f64 {
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut current: Option<(f64, f64)> = None;
    for &(s, e) in intervals.iter() {
        current = match current {
            Some((cs, ce)) if s <= ce => Some((cs, ce.max(e))),
            Some((cs, ce)) => {
                total += ce - cs;
                Some((s, e))
            }
            None => Some((s, e)),
        };
    }
    if let Some((cs, ce)) = current {
        total += ce - cs;
    }
    total
}

/// 24 shadow features: for each of the 8 octant triangles (counterclockwise
/// from the east-up one), the fraction of each triangle side covered by the
/// orthogonal projection of the ink pixels overlapping that octant.
pub fn shadow_features(g: &BinaryGlyph) -> FeatureVector {
    let side = g.side();
    let mut members: [Vec<(usize, usize)>; 8] = Default::default();
    for y in 0..side {
        for x in 0..side {
            if g.is_ink(x, y) {
                for k in pixel_octants(x, y, side) {
                    members[k].push((x, y));
                }
            }
        }
    }

    let mut values = Vec::with_capacity(SHADOW_LEN);
    for (k, pixels) in members.iter().enumerate() {
        for (p, q) in octant_sides(k, side) {
            let len = ((q.0 - p.0).powi(2) + (q.1 - p.1).powi(2)).sqrt();
            let u = ((q.0 - p.0) / len, (q.1 - p.1) / len);
            let mut intervals: Vec<(f64, f64)> = pixels
                .iter()
                .filter_map(|&(x, y)| {
                    let (x, y) = (x as f64, y as f64);
                    let ts = [(x, y), (x + 1.0, y), (x, y + 1.0), (x + 1.0, y + 1.0)]
                        .map(|c| (c.0 - p.0) * u.0 + (c.1 - p.1) * u.1);
                    let lo = ts.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
                    let hi = ts
                        .iter()
                        .copied()
                        .fold(f64::NEG_INFINITY, f64::max)
                        .min(len);
                    (hi > lo).then_some((lo, hi))
                })
                .collect();
            values.push((union_length(&mut intervals) / len).clamp(0.0, 1.0));
        }
    }
    FeatureVector {
        kind: FeatureKind::Shadow24,
        values,
    }
}

// ---------------------------------------------------------------------------
// Chain codes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainCode {
    /// `(row, col)` of the first pixel.
    pub start: (usize, usize),
    pub codes: Vec<u8>,
}

impl ChainCode {
    /// Pixel positions `(row, col)` visited by replaying the codes, start included.
    pub fn positions(&self) -> Vec<(isize, isize)> {
        let mut pos = (self.start.0 as isize, self.start.1 as isize);
        let mut out = vec![pos];
        for &c in &self.codes {
            let (dx, dy) = FREEMAN[c as usize];
            pos = (pos.0 + dy, pos.1 + dx);
            out.push(pos);
        }
        out
    }

    pub fn is_closed(&self) -> bool {
        self.codes.len() >= 3
            && self.positions().last() == Some(&(self.start.0 as isize, self.start.1 as isize))
    }
}

/// Traces the contour clockwise (ink kept on the right-hand side).
///
/// Pixels are scanned in raster order and every unvisited contour pixel
/// starts a new chain, so each 8-connected component is entered at its
/// topmost-leftmost pixel. From each pixel the candidate steps are tried
/// starting three codes counterclockwise of the previous heading and
/// proceeding clockwise; the first unvisited contour neighbour wins. A step
/// back onto the chain's start closes it once two moves have been made.
/// Pixels a single pass cannot reach (spurs, junction branches) get their
/// own chains.
pub fn trace_chain(c: &ContourMask) -> Vec<ChainCode> {
    let n = c.side();
    let mut visited = vec![false; n * n];
    let is_contour = |r: isize, col: isize| {
        r >= 0
            && col >= 0
            && r < n as isize
            && col < n as isize
            && c.is_contour(col as usize, r as usize)
    };

    let mut chains = Vec::new();
    for r0 in 0..n {
        for c0 in 0..n {
            if !c.is_contour(c0, r0) || visited[r0 * n + c0] {
                continue;
            }
            visited[r0 * n + c0] = true;
            let start = (r0 as isize, c0 as isize);
            let mut cur = start;
            let mut heading = 0usize;
            let mut codes = Vec::new();
            'walk: loop {
                for i in 0..8 {
                    let d = (heading + 3 + 8 - i) % 8;
                    let (dx, dy) = FREEMAN[d];
                    let next = (cur.0 + dy, cur.1 + dx);
                    if !is_contour(next.0, next.1) {
                        continue;
                    }
                    if next == start && codes.len() >= 2 {
                        codes.push(d as u8);
                        break 'walk;
                    }
                    let idx = next.0 as usize * n + next.1 as usize;
                    if !visited[idx] {
                        visited[idx] = true;
                        codes.push(d as u8);
                        cur = next;
                        heading = d;
                        continue 'walk;
                    }
                }
                break;
            }
            chains.push(ChainCode {
                start: (r0, c0),
                codes,
            });
        }
    }
    chains
}

/// 5x5 zoned histogram of chain moves, 8 direction bins per zone, each move
/// attributed to the zone of its origin pixel and normalized by the total
/// number of moves.
pub fn chain_histogram_features(c: &ContourMask, chains: &[ChainCode]) -> FeatureVector {
    let side = c.side();
    let mut counts = vec![0u64; CHAIN_LEN];
    let mut total = 0u64;
    for chain in chains {
        let positions = chain.positions();
        for (&code, &(row, col)) in chain.codes.iter().zip(&positions) {
            let by = row as usize * GRID / side;
            let bx = col as usize * GRID / side;
            counts[(by * GRID + bx) * 8 + code as usize] += 1;
            total += 1;
        }
    }
    let values = if total == 0 {
        vec![0.0; CHAIN_LEN]
    } else {
        counts.iter().map(|&k| k as f64 / total as f64).collect()
    };
    FeatureVector {
        kind: FeatureKind::ChainCode200,
        values,
    }
}

/// Contour extraction, tracing and histogram in one call.
pub fn chain_features(g: &BinaryGlyph) -> FeatureVector {
    let contour = crate::preprocess::extract_contour(g);
    let chains = trace_chain(&contour);
    chain_histogram_features(&contour, &chains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{extract_contour, BinaryRaster};
    use std::collections::HashSet;

    fn glyph(side: usize, f: impl Fn(usize, usize) -> bool) -> BinaryGlyph {
        BinaryGlyph::new(side, BinaryRaster::from_fn(side, side, f).pixels().to_vec()).unwrap()
    }

    fn rect(side: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> BinaryGlyph {
        glyph(side, |x, y| x >= x0 && x <= x1 && y >= y0 && y <= y1)
    }

    #[test]
    fn full_glyph_shadows_every_side() {
        for side in [10, 25, 100] {
            let f = shadow_features(&glyph(side, |_, _| true));
            assert_eq!(f.len(), 24);
            for v in &f.values {
                assert!((v - 1.0).abs() < 1e-12, "side {side}: {v}");
            }
        }
    }

    #[test]
    fn empty_octants_are_zero() {
        // ink confined to the lower-left quadrant well away from the centre lines
        let f = shadow_features(&rect(100, 5, 70, 20, 90));
        for k in [0, 1, 2, 3, 6, 7] {
            assert_eq!(&f.values[k * 3..k * 3 + 3], &[0.0; 3]);
        }
        assert!(f.values[12..18].iter().any(|&v| v > 0.0));
    }

    #[test]
    fn single_pixel_in_octant_zero() {
        // pixel (80, 40): doubled coords X = 61, Y = 19, strictly inside the east-up octant
        let g = glyph(100, |x, y| (x, y) == (80, 40));
        let f = shadow_features(&g);
        let h = 50.0;
        // boundary and centre-line sides see a unit extent; the diagonal sees sqrt(2)
        // over a side of length h*sqrt(2)
        let expected = [1.0 / h, 1.0 / h, 2f64.sqrt() / (h * 2f64.sqrt())];
        for (v, e) in f.values[..3].iter().zip(expected) {
            assert!((v - e).abs() < 1e-12);
        }
        assert!(f.values[3..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn octant_membership_follows_the_partition() {
        let side = 10;
        // upper-right region above the diagonal belongs to octant 1 only
        assert_eq!(pixel_octants(6, 1, side).collect::<Vec<_>>(), vec![1]);
        assert_eq!(pixel_octants(8, 3, side).collect::<Vec<_>>(), vec![0]);
        // pixel straddling the main anti-diagonal touches both neighbours
        assert_eq!(pixel_octants(7, 2, side).collect::<Vec<_>>(), vec![0, 1]);
        // pixel at the centre touches two octants of its quadrant
        assert_eq!(pixel_octants(5, 4, side).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(pixel_octants(4, 5, side).collect::<Vec<_>>(), vec![4, 5]);
    }

    #[test]
    fn isolated_pixel_yields_empty_chain() {
        let c = extract_contour(&rect(10, 3, 4, 3, 4));
        let chains = trace_chain(&c);
        assert_eq!(
            chains,
            vec![ChainCode {
                start: (4, 3),
                codes: vec![]
            }]
        );
    }

    #[test]
    fn two_by_two_block_is_traced_clockwise() {
        let c = extract_contour(&rect(10, 2, 2, 3, 3));
        let chains = trace_chain(&c);
        assert_eq!(
            chains,
            vec![ChainCode {
                start: (2, 2),
                codes: vec![0, 6, 4, 2]
            }]
        );
    }

    #[test]
    fn disjoint_pixels_in_raster_order() {
        let g = glyph(10, |x, y| (x, y) == (7, 1) || (x, y) == (2, 6));
        let chains = trace_chain(&extract_contour(&g));
        assert_eq!(chains.len(), 2);
        assert_eq!(chains[0].start, (1, 7));
        assert_eq!(chains[1].start, (6, 2));
    }

    #[test]
    fn empty_histogram_is_all_zero() {
        let g = glyph(10, |x, y| (x, y) == (7, 1));
        let c = extract_contour(&g);
        let f = chain_histogram_features(&c, &trace_chain(&c));
        assert_eq!(f.values, vec![0.0; 200]);
    }

    #[test]
    fn two_by_two_histogram_fills_four_bins() {
        let c = extract_contour(&rect(10, 2, 2, 3, 3));
        let f = chain_histogram_features(&c, &trace_chain(&c));
        // whole block lies in grid zone (row 1, col 1) of a 10px raster
        let zone = GRID + 1;
        for (i, &v) in f.values.iter().enumerate() {
            let expected = if i / 8 == zone && i % 2 == 0 {
                0.25
            } else {
                0.0
            };
            assert_eq!(v, expected, "bin {i}");
        }
    }

    fn assert_valid_chain(c: &ContourMask, chain: &ChainCode) {
        let pos = chain.positions();
        let body = if chain.is_closed() {
            &pos[..pos.len() - 1]
        } else {
            &pos[..]
        };
        let mut seen = HashSet::new();
        for &(r, col) in body {
            assert!(c.is_contour(col as usize, r as usize));
            assert!(seen.insert((r, col)), "pixel revisited");
        }
    }

    #[test]
    fn rectangle_rings_are_closed_and_complete() {
        for (x0, y0, x1, y1) in [(1, 1, 8, 8), (2, 5, 17, 9), (0, 0, 19, 19), (3, 3, 4, 12)] {
            let g = rect(20, x0, y0, x1, y1);
            let c = extract_contour(&g);
            let chains = trace_chain(&c);
            assert_eq!(chains.len(), 1);
            let chain = &chains[0];
            assert_valid_chain(&c, chain);
            assert!(chain.is_closed());
            assert_eq!(chain.codes.len(), c.count());

            // reversing the walk with opposite codes is a valid traversal
            let pos = chain.positions();
            let rev: Vec<u8> = chain.codes.iter().rev().map(|&d| (d + 4) % 8).collect();
            let reversed = ChainCode {
                start: chain.start,
                codes: rev,
            };
            let rpos = reversed.positions();
            let a: HashSet<_> = pos.iter().collect();
            let b: HashSet<_> = rpos.iter().collect();
            assert_eq!(a, b);
            assert_valid_chain(&c, &reversed);
        }
    }

    #[test]
    fn chains_on_irregular_shapes_are_valid() {
        let shapes: Vec<BinaryGlyph> = vec![
            glyph(30, |x, y| {
                ((x as i32 - 15).pow(2) + (y as i32 - 15).pow(2)) < 100
            }),
            glyph(30, |x, y| x == y || x + y == 29),
            glyph(30, |x, y| (x / 3 + y / 4) % 3 == 0),
            glyph(30, |x, y| {
                let d = (x as i32 - 15).pow(2) + (y as i32 - 15).pow(2);
                (36..144).contains(&d)
            }),
        ];
        for g in &shapes {
            let c = extract_contour(g);
            let chains = trace_chain(&c);
            let mut covered = 0;
            for chain in &chains {
                assert_valid_chain(&c, chain);
                covered += chain.codes.len() + 1 - usize::from(chain.is_closed());
            }
            assert_eq!(
                covered,
                c.count(),
                "every contour pixel starts or joins exactly one chain"
            );
            let f = chain_histogram_features(&c, &chains);
            let s: f64 = f.values.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
