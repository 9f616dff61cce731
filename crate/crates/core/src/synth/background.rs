use alloc::vec::Vec;
// Float math for no_std builds; inherent methods win when std is linked.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::rng::{derive_seed, stream, Purpose};

/// Knobs of the value-noise pavement texture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundParams {
    /// Lattice spacing of the coarsest octave, in pixels.
    pub base_cell: usize,
    pub octaves: usize,
    /// Peak texture deviation (gray levels) at `texture_strength = 1`.
    pub amplitude: f64,
    /// Standard deviation of per-pixel sensor noise.
    pub sensor_sigma: f64,
}

impl Default for BackgroundParams {
    fn default() -> Self {
        BackgroundParams {
            base_cell: 32,
            octaves: 5,
            amplitude: 45.0,
            sensor_sigma: 3.0,
        }
    }
}

/// Uniform value in `[-1, 1)` attached to a lattice node.
fn lattice(seed: u64, octave: usize, iy: i64, ix: i64) -> f64 {
    let h = derive_seed(seed, Purpose::Background, &[octave as u64, iy as u64, ix as u64]);
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Multi-octave value noise normalized to roughly `[-1, 1]`.
fn value_noise(seed: u64, height: usize, width: usize, p: &BackgroundParams) -> Vec<f64> {
    let mut out = alloc::vec![0.0; height * width];
    let mut cell = p.base_cell.max(2) as f64;
    let mut amp = 1.0;
    let mut norm = 0.0;
    for octave in 0..p.octaves {
        for r in 0..height {
            let fy = r as f64 / cell;
            let iy = fy.floor() as i64;
            let ty = smooth(fy - iy as f64);
            for c in 0..width {
                let fx = c as f64 / cell;
                let ix = fx.floor() as i64;
                let tx = smooth(fx - ix as f64);
                let v00 = lattice(seed, octave, iy, ix);
                let v01 = lattice(seed, octave, iy, ix + 1);
                let v10 = lattice(seed, octave, iy + 1, ix);
                let v11 = lattice(seed, octave, iy + 1, ix + 1);
                let top = v00 + (v01 - v00) * tx;
                let bottom = v10 + (v11 - v10) * tx;
                out[r * width + c] += amp * (top + (bottom - top) * ty);
            }
        }
        norm += amp;
        amp *= 0.55;
        cell = (cell / 2.0).max(1.0);
    }
    for v in &mut out {
        *v /= norm;
    }
    out
}

/// Crack-free pavement texture with mean gray level in `[100, 180]`.
pub fn generate_background(
    height: usize,
    width: usize,
    seed: u64,
    texture_strength: f64,
) -> Result<GrayImage> {
    generate_background_with(height, width, seed, texture_strength, &BackgroundParams::default())
}

pub fn generate_background_with(
    height: usize,
    width: usize,
    seed: u64,
    texture_strength: f64,
    params: &BackgroundParams,
) -> Result<GrayImage> {
    if height < 64 || width < 64 {
        return Err(Error::invalid(alloc::format!(
            "background must be at least 64x64, got {height}x{width}"
        )));
    }
    if !(0.0..=1.0).contains(&texture_strength) {
        return Err(Error::invalid("texture_strength must lie in [0, 1]"));
    }
    let mut rng = stream(seed, Purpose::Background, &[]);
    let level: f64 = rng.random_range(125.0..155.0);
    let noise = value_noise(seed, height, width, params);
    let amp = params.amplitude * texture_strength;
    let pixels = noise
        .iter()
        .map(|&n| {
            let sensor: f64 = StandardNormal.sample(&mut rng);
            (level + amp * n + params.sensor_sigma * sensor)
                .round()
                .clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage::new(height, width, pixels)
}
