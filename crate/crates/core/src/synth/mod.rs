//! Synthetic pavement imagery with procedural cracks and imprecise annotations.

mod background;
mod curve;
mod morphology;
mod patches;
mod render;
mod scene;

pub use background::{generate_background, BackgroundParams};
pub use curve::{generate_crack_curve, jitter_curve, rasterize, CrackCurve};
pub use morphology::{dilate_mask, disk_offsets};
pub use patches::{augment, sample_cpo_patches, sample_windows, CpoSampling, PatchPair, Window};
pub use render::{render_crack, RenderParams};
pub use scene::{generate_scene, Scene, SceneParams};
