//! Thresholding and connected-component cleanup of detection maps.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GtMask;
use crate::real::Real;

/// `bit = value > threshold` over a row-major `height x width` map.
pub fn binarize<T: Real>(map: &[T], height: usize, width: usize, threshold: f64) -> Result<GtMask> {
    if map.len() != height * width {
        return Err(Error::shape(
            alloc::format!("{height}x{width} map"),
            alloc::format!("{} values", map.len()),
        ));
    }
    let t = T::lit(threshold);
    GtMask::from_bits(height, width, map.iter().map(|&v| v > t).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub label: usize,
    pub area: usize,
    /// Inclusive pixel bounds.
    pub bbox: BoundingBox,
}

/// Labels connected foreground regions (labels start at 1; 0 is background).
pub fn label_components(mask: &GtMask, connectivity: u8) -> Result<(Vec<usize>, Vec<Component>)> {
    let neighbours: &[(i64, i64)] = match connectivity {
        4 => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
        8 => &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)],
        _ => return Err(Error::invalid("connectivity must be 4 or 8")),
    };
    let (h, w) = (mask.height(), mask.width());
    let mut labels = vec![0usize; h * w];
    let mut comps = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !mask.bits()[start] || labels[start] != 0 {
            continue;
        }
        let label = comps.len() + 1;
        let mut c = Component {
            label,
            area: 0,
            bbox: BoundingBox {
                top: usize::MAX,
                left: usize::MAX,
                bottom: 0,
                right: 0,
            },
        };
        labels[start] = label;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (r, col) = (i / w, i % w);
            c.area += 1;
            c.bbox.top = c.bbox.top.min(r);
            c.bbox.left = c.bbox.left.min(col);
            c.bbox.bottom = c.bbox.bottom.max(r);
            c.bbox.right = c.bbox.right.max(col);
            for &(dr, dc) in neighbours {
                let (rr, cc) = (r as i64 + dr, col as i64 + dc);
                if rr < 0 || cc < 0 || rr >= h as i64 || cc >= w as i64 {
                    continue;
                }
                let j = rr as usize * w + cc as usize;
                if mask.bits()[j] && labels[j] == 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            }
        }
        comps.push(c);
    }
    Ok((labels, comps))
}

/// Removes connected components smaller than `min_area` pixels.
pub fn remove_isolated(mask: &GtMask, min_area: usize, connectivity: u8) -> Result<GtMask> {
    if min_area == 0 {
        return Ok(mask.clone());
    }
    let (labels, comps) = label_components(mask, connectivity)?;
    let bits = labels
        .iter()
        .map(|&l| l != 0 && comps[l - 1].area >= min_area)
        .collect();
    GtMask::from_bits(mask.height(), mask.width(), bits)
}
