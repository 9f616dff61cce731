use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
// Float math for no_std builds; inherent methods win when std is linked.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::image::GtMask;
use crate::rng::{stream, Purpose};

/// 8-connected polyline of pixel coordinates `(row, col)`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CrackCurve {
    points: Vec<(i64, i64)>,
}

impl CrackCurve {
    /// Validates 8-connectivity and minimum length. Bounds are checked by consumers.
    pub fn new(points: Vec<(i64, i64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("a crack curve needs at least two points"));
        }
        for (i, w) in points.windows(2).enumerate() {
            if !adjacent8(w[0], w[1]) {
                return Err(Error::invalid(alloc::format!(
                    "points {i} and {} are not 8-adjacent: {:?} -> {:?}",
                    i + 1,
                    w[0],
                    w[1]
                )));
            }
        }
        Ok(CrackCurve { points })
    }

    pub fn points(&self) -> &[(i64, i64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn check_bounds(&self, height: usize, width: usize) -> Result<()> {
        for &(row, col) in &self.points {
            if row < 0 || col < 0 || row >= height as i64 || col >= width as i64 {
                return Err(Error::OutOfBounds {
                    row,
                    col,
                    height,
                    width,
                });
            }
        }
        Ok(())
    }
}

/// Distinct and within one step in both axes.
pub fn adjacent8(a: (i64, i64), b: (i64, i64)) -> bool {
    a != b && (a.0 - b.0).abs() <= 1 && (a.1 - b.1).abs() <= 1
}

/// Largest per-step heading change, radians.
const MAX_TURN: f64 = 0.06;
const ATTEMPTS: u64 = 200;

/// Random-walk crack with bounded curvature and `length_range.0..=length_range.1` points.
pub fn generate_crack_curve(
    height: usize,
    width: usize,
    seed: u64,
    length_range: (usize, usize),
) -> Result<CrackCurve> {
    let (lo, hi) = length_range;
    let diagonal = ((height * height + width * width) as f64).sqrt().floor() as usize;
    if lo < 2 || lo > hi {
        return Err(Error::invalid(alloc::format!(
            "invalid length range [{lo}, {hi}]"
        )));
    }
    if hi > diagonal {
        return Err(Error::invalid(alloc::format!(
            "length {hi} exceeds the {height}x{width} image diagonal ({diagonal})"
        )));
    }
    let mut rng = stream(seed, Purpose::Curve, &[]);
    let target = rng.random_range(lo..=hi);
    let mut visited = vec![false; height * width];
    for attempt in 0..ATTEMPTS {
        let mut rng = stream(seed, Purpose::Curve, &[attempt + 1]);
        if let Some(points) = walk(&mut rng, height, width, target, &mut visited) {
            return CrackCurve::new(points);
        }
    }
    Err(Error::invalid(alloc::format!(
        "could not fit a {target}-point crack in a {height}x{width} image"
    )))
}

fn walk(
    rng: &mut impl Rng,
    height: usize,
    width: usize,
    target: usize,
    visited: &mut [bool],
) -> Option<Vec<(i64, i64)>> {
    visited.iter_mut().for_each(|v| *v = false);
    let (hf, wf) = (height as f64, width as f64);
    let mut y = rng.random_range(0.15 * hf..0.85 * hf);
    let mut x = rng.random_range(0.15 * wf..0.85 * wf);
    let mut heading = rng.random_range(0.0..2.0 * PI);
    // Curvature drifts slowly so cracks meander rather than jitter.
    let mut turn = 0.0f64;
    let to_pixel = |y: f64, x: f64| (y.floor() as i64, x.floor() as i64);
    let start = to_pixel(y, x);
    visited[start.0 as usize * width + start.1 as usize] = true;
    let mut points = vec![start];
    let mut steps = 0;
    while points.len() < target {
        steps += 1;
        if steps > target * 4 {
            return None;
        }
        turn = (0.95 * turn + rng.random_range(-0.015..0.015)).clamp(-MAX_TURN, MAX_TURN);
        heading += turn;
        y += heading.sin();
        x += heading.cos();
        if y < 0.0 || x < 0.0 || y >= height as f64 || x >= width as f64 {
            return None;
        }
        let p = to_pixel(y, x);
        let last = *points.last().expect("non-empty");
        if p == last {
            continue;
        }
        let idx = p.0 as usize * width + p.1 as usize;
        if visited[idx] {
            return None;
        }
        visited[idx] = true;
        points.push(p);
    }
    Some(points)
}

/// Simulates a labor-light annotation: a slowly drifting offset, bounded by
/// `max_offset` in Chebyshev distance, applied along the curve.
///
/// Each output point is either `p_i + d_i` or the bridge `p_i + d_{i+1}`, so
/// every output point stays within `max_offset` (Chebyshev) of some input point
/// and consecutive outputs remain 8-adjacent.
pub fn jitter_curve(
    curve: &CrackCurve,
    max_offset: usize,
    seed: u64,
    height: usize,
    width: usize,
) -> CrackCurve {
    if max_offset == 0 {
        return curve.clone();
    }
    let m = max_offset as i64;
    let mut rng = stream(seed, Purpose::Jitter, &[]);
    let mut offsets = Vec::with_capacity(curve.len());
    let mut d = (rng.random_range(-m..=m), rng.random_range(-m..=m));
    for _ in 0..curve.len() {
        offsets.push(d);
        if rng.random_bool(0.08) {
            d.0 = (d.0 + rng.random_range(-1..=1)).clamp(-m, m);
        }
        if rng.random_bool(0.08) {
            d.1 = (d.1 + rng.random_range(-1..=1)).clamp(-m, m);
        }
    }
    let clamp = |p: (i64, i64)| {
        (
            p.0.clamp(0, height as i64 - 1),
            p.1.clamp(0, width as i64 - 1),
        )
    };
    let pts = curve.points();
    let mut out: Vec<(i64, i64)> = Vec::with_capacity(pts.len() * 2);
    let push = |p: (i64, i64), out: &mut Vec<(i64, i64)>| {
        if out.last() != Some(&p) {
            out.push(p);
        }
    };
    for i in 0..pts.len() {
        let (p, d) = (pts[i], offsets[i]);
        push(clamp((p.0 + d.0, p.1 + d.1)), &mut out);
        if i + 1 < pts.len() {
            let dn = offsets[i + 1];
            push(clamp((p.0 + dn.0, p.1 + dn.1)), &mut out);
        }
    }
    if out.len() < 2 {
        // Collapsed onto a single pixel near a corner; fall back to the original.
        return curve.clone();
    }
    CrackCurve::new(out).expect("bridged offsets keep 8-connectivity")
}

/// One-pixel-wide raster of the curve.
pub fn rasterize(curve: &CrackCurve, height: usize, width: usize) -> Result<GtMask> {
    curve.check_bounds(height, width)?;
    let mut mask = GtMask::empty(height, width);
    for &(r, c) in curve.points() {
        mask.set(r as usize, c as usize, true);
    }
    Ok(mask)
}
