//! Full-image crack detection and the sliding-window reference it replaces.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GrayImage, GtMask};
use crate::networks::{reflect_pad, AsymmetricUNet};
use crate::postprocess::{binarize, label_components, remove_isolated, Component};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectParams {
    /// Map values strictly above this become crack pixels.
    pub threshold: f64,
    /// Components smaller than this are dropped (0 keeps everything).
    pub min_area: usize,
    pub connectivity: u8,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams {
            threshold: 0.0,
            min_area: 50,
            connectivity: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult<T> {
    /// Generator output in `[-1, 1]`, shape `[1, 1, H / f, W / f]` for output factor `f`.
    pub map: Tensor<T>,
    /// Full-resolution binary crack mask.
    pub mask: GtMask,
    pub components: Vec<Component>,
}

/// Thresholds a half-resolution map, upsamples it to full resolution and
/// removes isolated blobs.
pub fn postprocess_map<T: Real>(map: &Tensor<T>, params: &DetectParams) -> Result<(GtMask, Vec<Component>)> {
    postprocess_scaled(map, 2, params)
}

/// As [`postprocess_map`] for a map at `1 / factor` of the input resolution
/// (`factor` 1 or 2).
pub fn postprocess_scaled<T: Real>(map: &Tensor<T>, factor: usize, params: &DetectParams) -> Result<(GtMask, Vec<Component>)> {
    let (h, w) = (map.height(), map.width());
    let mut mask = binarize(map.item(0), h, w, params.threshold)?;
    match factor {
        1 => {}
        2 => mask = mask.upsample2(),
        _ => return Err(Error::invalid(alloc::format!("unsupported output factor {factor}"))),
    }
    let full = remove_isolated(&mask, params.min_area, params.connectivity)?;
    let (_, components) = label_components(&full, params.connectivity)?;
    Ok((full, components))
}

/// One forward pass over the whole image. Works for the asymmetric detector and
/// for the full-resolution baseline alike.
pub fn detect<T: Real>(generator: &AsymmetricUNet<T>, image: &GrayImage, params: &DetectParams) -> Result<DetectionResult<T>> {
    let map = generator.translate(image)?;
    let (mask, components) = postprocess_scaled(&map, generator.output_factor(), params)?;
    Ok(DetectionResult { map, mask, components })
}

/// Window origins along one axis: a regular grid plus an end-aligned window.
pub fn window_starts(len: usize, window: usize, stride: usize) -> Vec<usize> {
    if len <= window {
        return vec![0];
    }
    let mut starts: Vec<usize> = (0..).map(|i| i * stride).take_while(|&s| s + window <= len).collect();
    if starts.last().map(|&s| s + window) != Some(len) {
        starts.push(len - window);
    }
    starts
}

/// Patch-wise reference: overlapping windows, each contributing the output
/// pixels nearest its centre. `window` and `stride` must be multiples of the
/// encoder downsampling so that windows share the full-image sampling grid.
pub fn sliding_window_reference<T: Real>(
    generator: &AsymmetricUNet<T>,
    image: &GrayImage,
    window: usize,
    stride: usize,
) -> Result<Tensor<T>> {
    let m = generator.encoder_downsample();
    let f = generator.output_factor();
    if window == 0 || stride == 0 || window % m != 0 || stride % m != 0 {
        return Err(Error::invalid(alloc::format!(
            "window and stride must be positive multiples of {m}"
        )));
    }
    let (h, w) = (image.height(), image.width());
    if h < 64 || w < 64 || h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape("even image sides of at least 64 pixels", alloc::format!("{h}x{w}")));
    }
    let (ph, pw) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
    let x = reflect_pad(&image.to_tensor::<T>(), ph, pw);
    let rows = window_starts(ph, window, stride);
    let cols = window_starts(pw, window, stride);
    let (oh, ow) = (ph / f, pw / f);
    let mut out = Tensor::zeros([1, 1, oh, ow]);
    let owner = |starts: &[usize], len: usize, win: usize, o: usize| -> usize {
        let centre = |s: usize| (s + win.min(len) / 2) as i64;
        let p = (o * f) as i64;
        let mut best = 0;
        for (i, &s) in starts.iter().enumerate() {
            if (p - centre(s)).abs() < (p - centre(starts[best])).abs() {
                best = i;
            }
        }
        best
    };
    let row_owner: Vec<usize> = (0..oh).map(|o| owner(&rows, ph, window, o)).collect();
    let col_owner: Vec<usize> = (0..ow).map(|o| owner(&cols, pw, window, o)).collect();
    for (ri, &top) in rows.iter().enumerate() {
        for (ci, &left) in cols.iter().enumerate() {
            let (wh, ww) = (window.min(ph), window.min(pw));
            let y = generator.forward(&x.crop(top, left, wh, ww)?)?;
            let (yh, yw) = (y.height(), y.width());
            let dst = out.data_mut();
            for r in 0..yh {
                let orow = top / f + r;
                if row_owner[orow] != ri {
                    continue;
                }
                for c in 0..yw {
                    let ocol = left / f + c;
                    if col_owner[ocol] == ci {
                        dst[orow * ow + ocol] = y.data()[r * yw + c];
                    }
                }
            }
        }
    }
    if (ph, pw) == (h, w) {
        Ok(out)
    } else {
        out.crop(0, 0, h / f, w / f)
    }
}

/// Output pixels (half resolution) at least `margin` input pixels away from the
/// borders of the window that produced them. Only these are expected to match a
/// full-image pass exactly.
pub fn window_interior(height: usize, width: usize, window: usize, stride: usize, factor: usize, margin: usize) -> Vec<(usize, usize)> {
    let (oh, ow) = (height / factor, width / factor);
    let axis = |len: usize, olen: usize| -> Vec<bool> {
        let starts = window_starts(len, window, stride);
        let win = window.min(len);
        (0..olen)
            .map(|o| {
                let p = o * factor;
                let s = starts
                    .iter()
                    .copied()
                    .min_by_key(|&s| (p as i64 - (s + win / 2) as i64).abs())
                    .unwrap_or(0);
                let lo_ok = s == 0 || p >= s + margin;
                let hi_ok = s + win == len || p + factor + margin <= s + win;
                lo_ok && hi_ok
            })
            .collect()
    };
    let r_ok = axis(height, oh);
    let c_ok = axis(width, ow);
    let mut pts = Vec::new();
    for (r, &ro) in r_ok.iter().enumerate() {
        for (c, &co) in c_ok.iter().enumerate() {
            if ro && co {
                pts.push((r, c));
            }
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::ArchConfig;
    use crate::rng::{stream, Purpose};

    fn tiny() -> AsymmetricUNet<f32> {
        let arch = ArchConfig {
            base_width: 2,
            patch: 64,
            z_dim: 8,
        };
        AsymmetricUNet::new(&arch, &mut stream(3, Purpose::Init, &[])).unwrap()
    }

    fn noise_image(h: usize, w: usize, seed: u64) -> GrayImage {
        use rand::Rng;
        let mut rng = stream(seed, Purpose::Noise, &[]);
        GrayImage::new(h, w, (0..h * w).map(|_| rng.random::<u8>()).collect()).unwrap()
    }

    #[test]
    fn window_starts_cover_axis() {
        assert_eq!(window_starts(512, 256, 128), vec![0, 128, 256]);
        assert_eq!(window_starts(480, 256, 128), vec![0, 128, 224]);
        assert_eq!(window_starts(200, 256, 128), vec![0]);
    }

    #[test]
    fn single_window_reference_equals_detect() {
        let g = tiny();
        let img = noise_image(128, 192, 1);
        let full = detect(&g, &img, &DetectParams::default()).unwrap();
        let reference = sliding_window_reference(&g, &img, 256, 128).unwrap();
        assert_eq!(full.map, reference);
        assert_eq!(full.mask.height(), 128);
        assert_eq!(full.map.shape(), [1, 1, 64, 96]);
    }

    #[test]
    fn threshold_extremes() {
        let map = Tensor::filled([1, 1, 32, 32], 1.0f32);
        let (mask, comps) = postprocess_map(&map, &DetectParams::default()).unwrap();
        assert_eq!(mask.popcount(), 64 * 64);
        assert_eq!(comps.len(), 1);
        let map = Tensor::filled([1, 1, 32, 32], -1.0f32);
        assert_eq!(postprocess_map(&map, &DetectParams::default()).unwrap().0.popcount(), 0);
    }
}
