//! Raster types: 8-bit grayscale images and binary crack masks.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Single-channel 8-bit image. Network I/O maps `[0, 255]` linearly onto `[-1, 1]`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image dimensions must be at least 1x1"));
        }
        if pixels.len() != height * width {
            return Err(Error::shape(
                alloc::format!("{} pixels", height * width),
                alloc::format!("{}", pixels.len()),
            ));
        }
        Ok(GrayImage {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: u8) {
        self.pixels[row * self.width + col] = v;
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len() as f64
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::invalid(alloc::format!(
                "crop {height}x{width} at ({top}, {left}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut px = Vec::with_capacity(height * width);
        for r in top..top + height {
            px.extend_from_slice(&self.pixels[r * self.width + left..r * self.width + left + width]);
        }
        Self::new(height, width, px)
    }

    /// `[1, 1, H, W]` tensor in `[-1, 1]`.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let data = self
            .pixels
            .iter()
            .map(|&p| T::lit(p as f64 / 127.5 - 1.0))
            .collect();
        Tensor::from_vec([1, 1, self.height, self.width], data).expect("consistent shape")
    }

    /// Linear remap of a single-channel map from `[-1, 1]` back to 8 bits (clamped).
    pub fn from_unit_range<T: Real>(height: usize, width: usize, values: &[T]) -> Result<Self> {
        let px = values
            .iter()
            .map(|v| {
                let s = (v.as_f64() + 1.0) * 127.5;
                libm_round(s.clamp(0.0, 255.0)) as u8
            })
            .collect();
        Self::new(height, width, px)
    }
}

fn libm_round(v: f64) -> f64 {
    num_traits::Float::round(v)
}

/// Binary crack raster, `true` = crack.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GtMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl GtMask {
    pub fn empty(height: usize, width: usize) -> Self {
        GtMask {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::shape(
                alloc::format!("{} bits", height * width),
                alloc::format!("{}", bits.len()),
            ));
        }
        Ok(GtMask {
            height,
            width,
            bits,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.bits[row * self.width + col] = v;
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn same_shape(&self, other: &GtMask) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Set positions in row-major order.
    pub fn points(&self) -> Vec<(usize, usize)> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| (i / self.width, i % self.width))
            .collect()
    }

    pub fn from_points(height: usize, width: usize, points: &[(usize, usize)]) -> Result<Self> {
        let mut m = Self::empty(height, width);
        for &(r, c) in points {
            if r >= height || c >= width {
                return Err(Error::OutOfBounds {
                    row: r as i64,
                    col: c as i64,
                    height,
                    width,
                });
            }
            m.set(r, c, true);
        }
        Ok(m)
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::invalid(alloc::format!(
                "crop {height}x{width} at ({top}, {left}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut bits = Vec::with_capacity(height * width);
        for r in top..top + height {
            bits.extend_from_slice(&self.bits[r * self.width + left..r * self.width + left + width]);
        }
        Ok(GtMask {
            height,
            width,
            bits,
        })
    }

    /// 2x max-pool: an output bit is set when any of its four sources is set.
    /// Odd trailing rows/columns are folded into the last output cell.
    pub fn downsample_max2(&self) -> GtMask {
        let h = self.height.div_ceil(2);
        let w = self.width.div_ceil(2);
        let mut out = GtMask::empty(h, w);
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                let (r, c) = (i / self.width, i % self.width);
                out.set(r / 2, c / 2, true);
            }
        }
        out
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample2(&self) -> GtMask {
        let mut out = GtMask::empty(self.height * 2, self.width * 2);
        for r in 0..out.height {
            for c in 0..out.width {
                out.bits[r * out.width + c] = self.get(r / 2, c / 2);
            }
        }
        out
    }

    /// `[1, 1, H, W]` tensor with crack = +1 and background = -1.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let data = self
            .bits
            .iter()
            .map(|&b| if b { T::one() } else { -T::one() })
            .collect();
        Tensor::from_vec([1, 1, self.height, self.width], data).expect("consistent shape")
    }

    /// 0/255 grayscale rendering.
    pub fn to_image(&self) -> GrayImage {
        let px = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        GrayImage::new(self.height.max(1), self.width.max(1), px).expect("non-empty mask")
    }

    /// Any nonzero pixel counts as crack.
    pub fn from_image(img: &GrayImage) -> GtMask {
        GtMask {
            height: img.height(),
            width: img.width(),
            bits: img.pixels().iter().map(|&p| p > 0).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_range_round_trip_is_exact_for_all_levels() {
        let px: Vec<u8> = (0..=255).collect();
        let img = GrayImage::new(16, 16, px).unwrap();
        let t = img.to_tensor::<f32>();
        assert!(t.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        let back = GrayImage::from_unit_range(16, 16, t.data()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn zero_sized_image_is_rejected() {
        assert!(GrayImage::new(0, 4, vec![]).is_err());
    }

    #[test]
    fn max_pool_keeps_single_pixel() {
        let m = GtMask::from_points(8, 8, &[(5, 3)]).unwrap();
        let d = m.downsample_max2();
        assert_eq!(d.popcount(), 1);
        assert!(d.get(2, 1));
        assert_eq!(d.upsample2().popcount(), 4);
    }
}
