use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{generate_background, CrackCurve, generate_crack_curve, jitter_curve, rasterize, render_crack, RenderParams};
use crate::error::{Error, Result};
use crate::image::{GrayImage, GtMask};
use crate::rng::{derive_seed, stream, Purpose};

/// Knobs for one synthetic pavement scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub height: usize,
    pub width: usize,
    pub texture_strength: f64,
    /// Number of cracks; 0 gives a crack-free image.
    pub cracks: usize,
    pub length: (usize, usize),
    pub darkness: (f64, f64),
    pub width_px: (usize, usize),
    pub blur_sigma: f64,
    /// Largest offset of the drawn annotation from the true centreline.
    pub annotation_offset: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            height: 256,
            width: 256,
            texture_strength: 0.6,
            cracks: 1,
            length: (128, 224),
            darkness: (0.45, 0.7),
            width_px: (1, 3),
            blur_sigma: 0.7,
            annotation_offset: 2,
        }
    }
}

/// A rendered image with its exact centreline and the (imprecise) annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: GrayImage,
    pub truth: GtMask,
    pub annotation: GtMask,
    /// The drawn annotation curves, one per crack, in drawing order.
    pub curves: Vec<CrackCurve>,
}

pub fn generate_scene(params: &SceneParams, seed: u64) -> Result<Scene> {
    let SceneParams { height, width, .. } = *params;
    if params.darkness.0 > params.darkness.1 || params.width_px.0 > params.width_px.1 || params.width_px.0 == 0 {
        return Err(Error::invalid("empty darkness or width range"));
    }
    let mut image = generate_background(height, width, derive_seed(seed, Purpose::Background, &[]), params.texture_strength)?;
    let mut truth = GtMask::empty(height, width);
    let mut annotation = GtMask::empty(height, width);
    let mut curves = Vec::with_capacity(params.cracks);
    let mut rng = stream(seed, Purpose::Render, &[]);
    for k in 0..params.cracks as u64 {
        let curve = generate_crack_curve(height, width, derive_seed(seed, Purpose::Curve, &[k]), params.length)?;
        let render = RenderParams {
            darkness: rng.random_range(params.darkness.0..=params.darkness.1),
            width_px: rng.random_range(params.width_px.0..=params.width_px.1),
            blur_sigma: params.blur_sigma,
        };
        image = render_crack(&image, &curve, &render)?;
        let drawn = jitter_curve(&curve, params.annotation_offset, derive_seed(seed, Purpose::Jitter, &[k]), height, width);
        merge(&mut truth, &rasterize(&curve, height, width)?);
        merge(&mut annotation, &rasterize(&drawn, height, width)?);
        curves.push(drawn);
    }
    Ok(Scene {
        image,
        truth,
        annotation,
        curves,
    })
}

fn merge(into: &mut GtMask, other: &GtMask) {
    let pts: Vec<(usize, usize)> = other.points();
    for (r, c) in pts {
        into.set(r, c, true);
    }
}
