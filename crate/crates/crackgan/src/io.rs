//! PNG images and masks, curve text files, JSON helpers.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crackgan_core::synth::CrackCurve;
use crackgan_core::{GrayImage, GtMask, Real, Tensor};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Reads a PNG as 8-bit gray. Colour images are converted with Rec. 601 luma,
/// 16-bit samples are reduced to their high byte, and alpha is dropped.
pub fn read_gray_png(path: &Path) -> Result<GrayImage> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let decode_err = |source| Error::PngDecode {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = decoder.read_info().map_err(decode_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(decode_err)?;
    let (w, h) = (info.width as usize, info.height as usize);
    if w == 0 || h == 0 {
        return Err(Error::format(path, "zero-size image"));
    }
    let channels = info.color_type.samples();
    let luma = |px: &[u8]| -> u8 {
        match px.len() {
            1 | 2 => px[0],
            _ => ((299 * px[0] as u32 + 587 * px[1] as u32 + 114 * px[2] as u32 + 500) / 1000) as u8,
        }
    };
    let pixels = buf[..info.buffer_size()]
        .chunks_exact(info.line_size)
        .flat_map(|line| line.chunks_exact(channels).take(w).map(luma))
        .collect();
    Ok(GrayImage::new(h, w, pixels)?)
}

pub fn write_gray_png(path: &Path, image: &GrayImage) -> Result<()> {
    write_png(path, image.width(), image.height(), image.pixels())
}

/// Crack pixels are any non-zero value.
pub fn read_mask_png(path: &Path) -> Result<GtMask> {
    Ok(GtMask::from_image(&read_gray_png(path)?))
}

/// 0 for background, 255 for crack.
pub fn write_mask_png(path: &Path, mask: &GtMask) -> Result<()> {
    write_gray_png(path, &mask.to_image())
}

/// Linear remap of a single-channel map from `[-1, 1]` to `[0, 255]`.
pub fn write_map_png<T: Real>(path: &Path, map: &Tensor<T>) -> Result<()> {
    let [_, _, h, w] = map.shape();
    let pixels: Vec<u8> = map.data()[..h * w]
        .iter()
        .map(|v| ((v.as_f64().clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8)
        .collect();
    write_png(path, w, h, &pixels)
}

fn write_png(path: &Path, width: usize, height: usize, gray: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let encode_err = |source| Error::PngEncode {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = encoder.write_header().map_err(encode_err)?;
    writer.write_image_data(gray).map_err(encode_err)?;
    writer.finish().map_err(encode_err)
}

/// One `row col` line per point, in curve order.
pub fn write_curve(path: &Path, curve: &CrackCurve) -> Result<()> {
    let mut text = String::with_capacity(curve.len() * 8);
    for &(r, c) in curve.points() {
        text.push_str(&format!("{r} {c}\n"));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_curve(path: &Path) -> Result<CrackCurve> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace().map(str::parse::<i64>);
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(r)), Some(Ok(c)), None) => points.push((r, c)),
            _ => return Err(Error::format(path, format!("line {}: expected `row col`", i + 1))),
        }
    }
    Ok(CrackCurve::new(points)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}
