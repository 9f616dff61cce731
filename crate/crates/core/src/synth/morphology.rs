use alloc::vec::Vec;

use crate::image::GtMask;

/// Offsets of the discrete Euclidean disk `dx^2 + dy^2 <= radius^2`.
pub fn disk_offsets(radius: usize) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dy, dx));
            }
        }
    }
    out
}

/// Dilates `mask` `times` times with a Euclidean disk of `radius`.
pub fn dilate_mask(mask: &GtMask, radius: usize, times: usize) -> GtMask {
    let offsets = disk_offsets(radius);
    let (h, w) = (mask.height() as i64, mask.width() as i64);
    let mut cur = mask.clone();
    for _ in 0..times {
        let mut next = cur.clone();
        for (r, c) in cur.points() {
            for &(dy, dx) in &offsets {
                let (rr, cc) = (r as i64 + dy, c as i64 + dx);
                if rr >= 0 && cc >= 0 && rr < h && cc < w {
                    next.set(rr as usize, cc as usize, true);
                }
            }
        }
        cur = next;
    }
    cur
}
