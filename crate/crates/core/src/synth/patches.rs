use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::{GrayImage, GtMask};

/// One training example: an image window and its half-resolution crack target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchPair {
    pub image: GrayImage,
    pub gt: GtMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CpoSampling {
    /// Side of the square input window.
    pub patch: usize,
    /// Side of the target window; must equal `patch / 2`.
    pub gt_patch: usize,
    pub stride: usize,
    /// Minimum raw (undilated) crack pixels inside a window for it to be kept.
    pub min_crack_px: usize,
}

impl Default for CpoSampling {
    fn default() -> Self {
        CpoSampling {
            patch: 256,
            gt_patch: 128,
            stride: 128,
            min_crack_px: 20,
        }
    }
}

/// A window of an image with its raw-GT pixel count.
#[derive(Clone, Debug)]
pub struct Window {
    pub top: usize,
    pub left: usize,
    pub image: GrayImage,
    pub raw_count: usize,
}

/// Top-left corners of all `patch`-sized windows on a `stride` grid.
fn corners(extent: usize, patch: usize, stride: usize) -> impl Iterator<Item = usize> {
    (0..)
        .map(move |i| i * stride)
        .take_while(move |&p| p + patch <= extent)
}

/// Every window on the stride grid, crack or not.
pub fn sample_windows(
    image: &GrayImage,
    gt_raw: &GtMask,
    patch: usize,
    stride: usize,
) -> Result<Vec<Window>> {
    if stride == 0 || patch == 0 {
        return Err(Error::invalid("patch and stride must be positive"));
    }
    if gt_raw.height() != image.height() || gt_raw.width() != image.width() {
        return Err(Error::shape(
            alloc::format!("{}x{}", image.height(), image.width()),
            alloc::format!("{}x{}", gt_raw.height(), gt_raw.width()),
        ));
    }
    let mut out = Vec::new();
    for top in corners(image.height(), patch, stride) {
        for left in corners(image.width(), patch, stride) {
            let raw_count = (top..top + patch)
                .map(|r| (left..left + patch).filter(|&c| gt_raw.get(r, c)).count())
                .sum();
            out.push(Window {
                top,
                left,
                image: image.crop(top, left, patch, patch)?,
                raw_count,
            });
        }
    }
    Ok(out)
}

/// Crack-patch-only sampling: windows with fewer than `min_crack_px` raw crack
/// pixels are dropped. Targets are the 2x max-pooled dilated GT of the window.
pub fn sample_cpo_patches(
    image: &GrayImage,
    gt_dilated: &GtMask,
    gt_raw: &GtMask,
    sampling: &CpoSampling,
) -> Result<Vec<PatchPair>> {
    let CpoSampling {
        patch,
        gt_patch,
        stride,
        min_crack_px,
    } = *sampling;
    if patch % 2 != 0 || gt_patch * 2 != patch {
        return Err(Error::invalid(alloc::format!(
            "target window {gt_patch} must be half of the even input window {patch}"
        )));
    }
    if image.height() < patch || image.width() < patch {
        return Err(Error::invalid(alloc::format!(
            "image {}x{} smaller than the {patch}x{patch} window",
            image.height(),
            image.width()
        )));
    }
    if !gt_dilated.same_shape(gt_raw) {
        return Err(Error::shape("dilated GT shaped like raw GT", "different shape"));
    }
    let mut out = Vec::new();
    for win in sample_windows(image, gt_raw, patch, stride)? {
        if win.raw_count == 0 || win.raw_count < min_crack_px {
            continue;
        }
        let gt = gt_dilated
            .crop(win.top, win.left, patch, patch)?
            .downsample_max2();
        out.push(PatchPair {
            image: win.image,
            gt,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Transform {
    FlipH,
    FlipV,
    Rot90,
    Rot180,
    Rot270,
}

const TRANSFORMS: [Transform; 5] = [
    Transform::FlipH,
    Transform::FlipV,
    Transform::Rot90,
    Transform::Rot180,
    Transform::Rot270,
];

/// Applies `t` to a row-major grid, returning the new grid and its (h, w).
fn transform_grid<P: Copy>(src: &[P], h: usize, w: usize, t: Transform) -> (Vec<P>, usize, usize) {
    let (oh, ow) = match t {
        Transform::Rot90 | Transform::Rot270 => (w, h),
        _ => (h, w),
    };
    let mut out = Vec::with_capacity(src.len());
    for r in 0..oh {
        for c in 0..ow {
            let (sr, sc) = match t {
                Transform::FlipH => (r, w - 1 - c),
                Transform::FlipV => (h - 1 - r, c),
                // Counter-clockwise quarter turn.
                Transform::Rot90 => (c, w - 1 - r),
                Transform::Rot180 => (h - 1 - r, w - 1 - c),
                Transform::Rot270 => (h - 1 - c, r),
            };
            out.push(src[sr * w + sc]);
        }
    }
    (out, oh, ow)
}

fn transform_pair(p: &PatchPair, t: Transform) -> PatchPair {
    let (px, h, w) = transform_grid(p.image.pixels(), p.image.height(), p.image.width(), t);
    let (bits, gh, gw) = transform_grid(p.gt.bits(), p.gt.height(), p.gt.width(), t);
    PatchPair {
        image: GrayImage::new(h, w, px).expect("transform preserves size"),
        gt: GtMask::from_bits(gh, gw, bits).expect("transform preserves size"),
    }
}

/// Each pair followed by its horizontal flip, vertical flip and three rotations.
pub fn augment(pairs: &[PatchPair]) -> Vec<PatchPair> {
    let mut out = Vec::with_capacity(pairs.len() * 6);
    for p in pairs {
        out.push(p.clone());
        for t in TRANSFORMS {
            out.push(transform_pair(p, t));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{dilate_mask, generate_background, generate_crack_curve, rasterize};

    fn scene(size: usize, seed: u64) -> (GrayImage, GtMask) {
        let bg = generate_background(size, size, seed, 0.5).unwrap();
        let curve = generate_crack_curve(size, size, seed, (size / 2, size - 32)).unwrap();
        (bg, rasterize(&curve, size, size).unwrap())
    }

    #[test]
    fn background_only_image_yields_nothing() {
        let bg = generate_background(512, 512, 1, 0.5).unwrap();
        let empty = GtMask::empty(512, 512);
        let pairs = sample_cpo_patches(&bg, &empty, &empty, &CpoSampling::default()).unwrap();
        assert!(pairs.is_empty());
    }

    #[test]
    fn every_emitted_target_carries_crack() {
        for seed in 0..5 {
            let (img, raw) = scene(512, seed);
            let dil = dilate_mask(&raw, 3, 3);
            let pairs = sample_cpo_patches(&img, &dil, &raw, &CpoSampling::default()).unwrap();
            for p in &pairs {
                assert_eq!((p.image.height(), p.gt.height()), (256, 128));
                assert!(p.gt.popcount() >= 20);
            }
        }
    }

    #[test]
    fn stride_grid_has_nine_windows_on_512() {
        let (img, raw) = scene(512, 3);
        assert_eq!(sample_windows(&img, &raw, 256, 128).unwrap().len(), 9);
    }

    #[test]
    fn mismatched_target_size_is_rejected() {
        let (img, raw) = scene(512, 3);
        let s = CpoSampling {
            gt_patch: 100,
            ..CpoSampling::default()
        };
        assert!(sample_cpo_patches(&img, &raw, &raw, &s).is_err());
    }

    fn pair(seed: u64) -> PatchPair {
        let (img, raw) = scene(256, seed);
        PatchPair {
            image: img.crop(0, 0, 64, 48).unwrap(),
            gt: raw.crop(0, 0, 32, 24).unwrap(),
        }
    }

    #[test]
    fn augmentation_counts_and_involutions() {
        let p = pair(4);
        let out = augment(core::slice::from_ref(&p));
        assert_eq!(out.len(), 6);
        assert_eq!(out[0], p);
        for t in [Transform::FlipH, Transform::FlipV, Transform::Rot180] {
            assert_eq!(transform_pair(&transform_pair(&p, t), t), p);
        }
        let back = transform_pair(&transform_pair(&p, Transform::Rot90), Transform::Rot270);
        assert_eq!(back, p);
        for q in &out {
            assert_eq!(q.gt.popcount(), p.gt.popcount());
        }
        assert_eq!(out[3].image.height(), 48);
    }
}
