//! Saturated Hausdorff score and region-based precision / recall / F1.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

// Float math for no_std builds; inherent methods win when std is linked.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::image::GtMask;

/// Saturation distance of the Hausdorff penalty, in pixels.
pub const DEFAULT_SATURATION: f64 = 50.0;
/// Side of a region cell, in pixels.
pub const DEFAULT_CELL: usize = 50;

/// Deduplicated pixel coordinates inside a `height x width` frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointSet {
    height: usize,
    width: usize,
    points: Vec<(usize, usize)>,
}

impl PointSet {
    /// Frame is the tightest one containing every point.
    pub fn new(mut points: Vec<(usize, usize)>) -> Self {
        points.sort_unstable();
        points.dedup();
        let height = points.iter().map(|p| p.0 + 1).max().unwrap_or(0);
        let width = points.iter().map(|p| p.1 + 1).max().unwrap_or(0);
        PointSet {
            height,
            width,
            points,
        }
    }

    pub fn from_mask(mask: &GtMask) -> Self {
        PointSet {
            height: mask.height(),
            width: mask.width(),
            points: mask.points(),
        }
    }

    pub fn points(&self) -> &[(usize, usize)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

const FAR: f64 = 1e30;

/// Squared Euclidean distance from every pixel of a `h x w` frame to the nearest
/// site (exact, separable lower-envelope transform).
fn squared_distance_field(h: usize, w: usize, sites: &[(usize, usize)]) -> Vec<f64> {
    let mut f = vec![FAR; h * w];
    for &(r, c) in sites {
        f[r * w + c] = 0.0;
    }
    let mut line = Vec::new();
    let mut out = Vec::new();
    for c in 0..w {
        line.clear();
        line.extend((0..h).map(|r| f[r * w + c]));
        lower_envelope(&line, &mut out);
        for r in 0..h {
            f[r * w + c] = out[r];
        }
    }
    for r in 0..h {
        line.clear();
        line.extend_from_slice(&f[r * w..(r + 1) * w]);
        lower_envelope(&line, &mut out);
        f[r * w..(r + 1) * w].copy_from_slice(&out);
    }
    f
}

/// 1-D transform `out[q] = min_p (q - p)^2 + f[p]`.
fn lower_envelope(f: &[f64], out: &mut Vec<f64>) {
    let n = f.len();
    out.clear();
    out.resize(n, FAR);
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    let mut started = false;
    for q in 0..n {
        if f[q] >= FAR {
            continue;
        }
        if !started {
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
            z[1] = f64::INFINITY;
            started = true;
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * q as f64 - 2.0 * p as f64);
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0: the new parabola dominates everywhere.
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    if !started {
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

/// Distance from each point of `a` to the nearest point of `b`.
fn nearest_distances(a: &PointSet, b: &PointSet) -> Vec<f64> {
    let h = a.height.max(b.height);
    let w = a.width.max(b.width);
    if b.is_empty() || h == 0 || w == 0 {
        return vec![f64::INFINITY; a.len()];
    }
    let field = squared_distance_field(h, w, &b.points);
    a.points.iter().map(|&(r, c)| field[r * w + c].sqrt()).collect()
}

/// `max_{a in A} min_{b in B} |a - b|`.
pub fn directed_hausdorff(a: &PointSet, b: &PointSet) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("directed Hausdorff distance of an empty set"));
    }
    Ok(nearest_distances(a, b).into_iter().fold(0.0, f64::max))
}

/// Mean over `a` of the nearest distance to `b`, saturated at `u`.
/// An empty `b` saturates every term.
pub fn penalty_hp(a: &PointSet, b: &PointSet, u: f64) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::invalid("penalty of an empty detection set"));
    }
    let sum: f64 = nearest_distances(a, b).into_iter().map(|d| d.min(u)).sum();
    Ok(sum / a.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HdScore {
    /// `100 - BH / u * 100`, in `[0, 100]`.
    pub score: f64,
    /// Detection empty while the ground truth is not (the collapsed output).
    pub all_black: bool,
}

/// Symmetric saturated score. Empty detection with non-empty GT scores 0 and is
/// flagged; two empty sets score 100.
pub fn score_bh(a: &PointSet, b: &PointSet, u: f64) -> Result<HdScore> {
    if !(u > 0.0) {
        return Err(Error::invalid("saturation distance must be positive"));
    }
    let (score, all_black) = match (a.is_empty(), b.is_empty()) {
        (true, true) => (100.0, false),
        (true, false) => (0.0, true),
        // Nothing to find: every detection is a false positive at saturation.
        (false, true) => (0.0, false),
        (false, false) => {
            let bh = penalty_hp(a, b, u)?.max(penalty_hp(b, a, u)?);
            (100.0 - bh / u * 100.0, false)
        }
    };
    Ok(HdScore { score, all_black })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Counts grid cells (trailing partial cells included) by whether any predicted
/// and any ground-truth pixel falls inside.
pub fn region_counts(pred: &GtMask, gt: &GtMask, cell: usize) -> Result<RegionCounts> {
    if !pred.same_shape(gt) {
        return Err(Error::shape(
            alloc::format!("{}x{}", gt.height(), gt.width()),
            alloc::format!("{}x{}", pred.height(), pred.width()),
        ));
    }
    if cell == 0 {
        return Err(Error::invalid("cell size must be positive"));
    }
    let rows = pred.height().div_ceil(cell);
    let cols = pred.width().div_ceil(cell);
    let mut p = vec![false; rows * cols];
    let mut g = vec![false; rows * cols];
    for (r, c) in pred.points() {
        p[(r / cell) * cols + c / cell] = true;
    }
    for (r, c) in gt.points() {
        g[(r / cell) * cols + c / cell] = true;
    }
    let mut counts = RegionCounts { tp: 0, fp: 0, fn_: 0 };
    for (&pp, &gg) in p.iter().zip(&g) {
        match (pp, gg) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fp += 1,
            (false, true) => counts.fn_ += 1,
            _ => {}
        }
    }
    Ok(counts)
}

/// Number of cells covering a `height x width` frame.
pub fn cell_count(height: usize, width: usize, cell: usize) -> usize {
    height.div_ceil(cell) * width.div_ceil(cell)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when a denominator was zero and the value was reported as 0.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

pub fn region_prf(c: RegionCounts) -> RegionPrf {
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            (0.0, true)
        } else {
            (num as f64 / den as f64, false)
        }
    };
    let (precision, pu) = ratio(c.tp, c.tp + c.fp);
    let (recall, ru) = ratio(c.tp, c.tp + c.fn_);
    let (f1, fu) = f1_of(precision, recall);
    RegionPrf {
        precision,
        recall,
        f1,
        precision_undefined: pu,
        recall_undefined: ru,
        f1_undefined: fu,
    }
}

fn f1_of(p: f64, r: f64) -> (f64, bool) {
    if p + r == 0.0 {
        (0.0, true)
    } else {
        (2.0 * p * r / (p + r), false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub saturation: f64,
    pub cell: usize,
    /// Also report pixel IoU (diagnostic only).
    pub iou: bool,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            saturation: DEFAULT_SATURATION,
            cell: DEFAULT_CELL,
            iou: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub name: String,
    pub hd_score: f64,
    pub all_black: bool,
    pub p_region: f64,
    pub r_region: f64,
    pub f1_region: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub iou: Option<f64>,
}

/// Scores one detection mask against its 1-pixel ground truth.
pub fn evaluate_pair(name: &str, pred: &GtMask, gt: &GtMask, params: &EvalParams) -> Result<ImageMetrics> {
    let counts = region_counts(pred, gt, params.cell)?;
    let prf = region_prf(counts);
    let hd = score_bh(&PointSet::from_mask(pred), &PointSet::from_mask(gt), params.saturation)?;
    let iou = params.iou.then(|| {
        let inter = pred.bits().iter().zip(gt.bits()).filter(|(a, b)| **a && **b).count();
        let union = pred.bits().iter().zip(gt.bits()).filter(|(a, b)| **a || **b).count();
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    });
    Ok(ImageMetrics {
        name: String::from(name),
        hd_score: hd.score,
        all_black: hd.all_black,
        p_region: prf.precision,
        r_region: prf.recall,
        f1_region: prf.f1,
        tp: counts.tp,
        fp: counts.fp,
        fn_: counts.fn_,
        iou,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub hd_score: f64,
    pub p_region: f64,
    pub r_region: f64,
    /// Harmonic mean of the aggregated precision and recall.
    pub f1_region: f64,
    pub all_black_images: usize,
    pub images: usize,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub params: EvalParams,
    pub images: Vec<ImageMetrics>,
    pub aggregate: Aggregate,
    /// Inputs that could not be paired and were skipped.
    pub skipped: Vec<String>,
}

impl EvalReport {
    pub fn new(params: EvalParams, images: Vec<ImageMetrics>, skipped: Vec<String>) -> Self {
        let n = images.len();
        let mean = |f: &dyn Fn(&ImageMetrics) -> f64| {
            if n == 0 {
                0.0
            } else {
                images.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let p = mean(&|m| m.p_region);
        let r = mean(&|m| m.r_region);
        let aggregate = Aggregate {
            hd_score: mean(&|m| m.hd_score),
            p_region: p,
            r_region: r,
            f1_region: f1_of(p, r).0,
            all_black_images: images.iter().filter(|m| m.all_black).count(),
            images: n,
        };
        EvalReport {
            schema_version: REPORT_SCHEMA_VERSION,
            params,
            images,
            aggregate,
            skipped,
        }
    }
}
