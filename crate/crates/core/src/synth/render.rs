use alloc::vec;
use alloc::vec::Vec;
// Float math for no_std builds; inherent methods win when std is linked.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::synth::curve::CrackCurve;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderParams {
    /// Fraction of the background intensity removed on the crack centerline.
    pub darkness: f64,
    /// Stroke width in pixels, 1 to 3.
    pub width_px: usize,
    /// Gaussian blur of the stroke; 0 disables it.
    pub blur_sigma: f64,
}

/// Darkens `bg` along `curve`: `out = bg * (1 - darkness * stroke)`, where
/// `stroke` is the (optionally blurred) crack footprint in `[0, 1]`.
pub fn render_crack(bg: &GrayImage, curve: &CrackCurve, params: &RenderParams) -> Result<GrayImage> {
    let RenderParams {
        darkness,
        width_px,
        blur_sigma,
    } = *params;
    if !(darkness > 0.0 && darkness <= 1.0) {
        return Err(Error::invalid("darkness must lie in (0, 1]"));
    }
    if !(1..=3).contains(&width_px) {
        return Err(Error::invalid("crack width must be 1, 2 or 3 pixels"));
    }
    if !(blur_sigma >= 0.0) {
        return Err(Error::invalid("blur sigma must be non-negative"));
    }
    let (h, w) = (bg.height(), bg.width());
    curve.check_bounds(h, w)?;

    let mut stroke = vec![0.0f64; h * w];
    // Width 2 thickens towards +row/+col, width 3 is symmetric.
    let span: &[i64] = match width_px {
        1 => &[0],
        2 => &[0, 1],
        _ => &[-1, 0, 1],
    };
    for &(r, c) in curve.points() {
        for &dr in span {
            for &dc in span {
                if width_px > 1 && dr != 0 && dc != 0 {
                    continue;
                }
                let (rr, cc) = (r + dr, c + dc);
                if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w {
                    stroke[rr as usize * w + cc as usize] = 1.0;
                }
            }
        }
    }
    if blur_sigma > 0.0 {
        stroke = gaussian_blur(&stroke, h, w, blur_sigma);
    }
    let pixels = bg
        .pixels()
        .iter()
        .zip(&stroke)
        .map(|(&p, &s)| {
            if s == 0.0 {
                p
            } else {
                (p as f64 * (1.0 - darkness * s)).round().clamp(0.0, 255.0) as u8
            }
        })
        .collect();
    GrayImage::new(h, w, pixels)
}

/// Separable Gaussian, kernel truncated at `ceil(3 sigma)`, zero outside the image.
fn gaussian_blur(src: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum::<f64>();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / total).collect();
    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let cc = c as i64 + i as i64 - radius;
                if cc >= 0 && (cc as usize) < w {
                    acc += k * src[r * w + cc as usize];
                }
            }
            tmp[r * w + c] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let rr = r as i64 + i as i64 - radius;
                if rr >= 0 && (rr as usize) < h {
                    acc += k * tmp[rr as usize * w + c];
                }
            }
            out[r * w + c] = acc.min(1.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_background, generate_crack_curve, rasterize};

    fn params(darkness: f64, width_px: usize, blur_sigma: f64) -> RenderParams {
        RenderParams {
            darkness,
            width_px,
            blur_sigma,
        }
    }

    #[test]
    fn full_darkness_blacks_out_the_centerline() {
        let bg = generate_background(128, 128, 3, 0.5).unwrap();
        let curve = generate_crack_curve(128, 128, 3, (40, 100)).unwrap();
        let out = render_crack(&bg, &curve, &params(1.0, 1, 0.0)).unwrap();
        for &(r, c) in curve.points() {
            assert_eq!(out.get(r as usize, c as usize), 0);
        }
        let mask = rasterize(&curve, 128, 128).unwrap();
        for (i, (&a, &b)) in out.pixels().iter().zip(bg.pixels()).enumerate() {
            if !mask.bits()[i] {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn cracks_are_darker_than_surroundings() {
        for seed in 0..20 {
            let bg = generate_background(128, 128, seed, 0.5).unwrap();
            let curve = generate_crack_curve(128, 128, seed, (60, 120)).unwrap();
            let out = render_crack(&bg, &curve, &params(0.4, 1, 0.0)).unwrap();
            let mask = rasterize(&curve, 128, 128).unwrap();
            let (mut on, mut non, mut off, mut noff) = (0.0, 0.0, 0.0, 0.0);
            for (i, &p) in out.pixels().iter().enumerate() {
                if mask.bits()[i] {
                    on += p as f64;
                    non += 1.0;
                } else {
                    off += p as f64;
                    noff += 1.0;
                }
            }
            let ratio = (on / non) / (off / noff);
            assert!(ratio < 0.8, "seed {seed}: {ratio}");
        }
    }

    #[test]
    fn blur_spreads_the_gradient_footprint() {
        let bg = GrayImage::filled(96, 96, 150).unwrap();
        let curve = generate_crack_curve(96, 96, 5, (30, 60)).unwrap();
        let sharp = render_crack(&bg, &curve, &params(0.5, 1, 0.0)).unwrap();
        let soft = render_crack(&bg, &curve, &params(0.5, 1, 1.0)).unwrap();
        let grad_pixels = |img: &GrayImage| {
            let mut n = 0;
            for r in 0..95 {
                for c in 0..95 {
                    if img.get(r, c) != img.get(r + 1, c) || img.get(r, c) != img.get(r, c + 1) {
                        n += 1;
                    }
                }
            }
            n
        };
        assert!(grad_pixels(&soft) > grad_pixels(&sharp));
    }

    #[test]
    fn background_untouched_beyond_blur_radius() {
        let bg = generate_background(96, 96, 2, 0.7).unwrap();
        let curve = generate_crack_curve(96, 96, 2, (30, 60)).unwrap();
        let out = render_crack(&bg, &curve, &params(0.6, 2, 1.0)).unwrap();
        let reach = 3 + 1;
        for r in 0..96i64 {
            for c in 0..96i64 {
                let near = curve
                    .points()
                    .iter()
                    .any(|&(pr, pc)| (pr - r).abs() <= reach && (pc - c).abs() <= reach);
                if !near {
                    assert_eq!(out.get(r as usize, c as usize), bg.get(r as usize, c as usize));
                }
            }
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let bg = GrayImage::filled(64, 64, 100).unwrap();
        let curve = CrackCurve::new(alloc::vec![(1, 1), (2, 2)]).unwrap();
        assert!(render_crack(&bg, &curve, &params(0.0, 1, 0.0)).is_err());
        assert!(render_crack(&bg, &curve, &params(0.5, 4, 0.0)).is_err());
        let outside = CrackCurve::new(alloc::vec![(70, 1), (71, 2)]).unwrap();
        assert!(render_crack(&bg, &outside, &params(0.5, 1, 0.0)).is_err());
    }
}
