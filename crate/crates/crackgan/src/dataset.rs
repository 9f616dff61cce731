//! Synthetic datasets in memory and on disk.
//!
//! On disk a dataset is a directory holding `manifest.json` plus
//! `images/<name>.png` (pavement), `gt/<name>.png` (drawn 1-pixel annotation),
//! `truth/<name>.png` (exact centreline) and `curves/<name>_<k>.txt` (the drawn
//! annotation curves as `row col` lines).

use std::path::{Path, PathBuf};

use crackgan_core::rng::{derive_seed, Purpose};
use crackgan_core::synth::{generate_scene, Scene, SceneParams};
use crackgan_core::{GrayImage, GtMask};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Independent seed streams for the splits of one experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u64)]
pub enum Split {
    Train = 0,
    Val = 1,
    Test = 2,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Seed of scene `index` in `split`.
pub fn scene_seed(seed: u64, split: Split, index: usize) -> u64 {
    derive_seed(seed, Purpose::Dataset, &[split as u64, index as u64])
}

/// One scene as the training and evaluation code sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub name: String,
    pub image: GrayImage,
    /// The imprecise 1-pixel annotation used for training.
    pub annotation: GtMask,
    /// The exact centreline used for scoring.
    pub truth: GtMask,
}

fn sample_name(index: usize) -> String {
    format!("{index:04}")
}

fn scene_for(scene: &SceneParams, seed: u64, split: Split, index: usize) -> Result<Scene> {
    Ok(generate_scene(scene, scene_seed(seed, split, index))?)
}

/// `count` scenes of `split`, generated in memory.
pub fn synthesize(scene: &SceneParams, seed: u64, split: Split, count: usize) -> Result<Vec<Sample>> {
    (0..count)
        .map(|i| {
            let s = scene_for(scene, seed, split, i)?;
            Ok(Sample {
                name: sample_name(i),
                image: s.image,
                annotation: s.annotation,
                truth: s.truth,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub seed: u64,
    pub image: PathBuf,
    pub gt: PathBuf,
    pub truth: PathBuf,
    pub curves: Vec<PathBuf>,
    pub annotation_pixels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub split: Split,
    pub scene: SceneParams,
    pub entries: Vec<ManifestEntry>,
}

/// Generates `count` scenes of `split` and writes them under `dir`.
pub fn write_dataset(dir: &Path, scene: &SceneParams, seed: u64, split: Split, count: usize) -> Result<Manifest> {
    for sub in ["images", "gt", "truth", "curves"] {
        io::create_dir(&dir.join(sub))?;
    }
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let name = sample_name(i);
        let s = scene_for(scene, seed, split, i)?;
        let image = PathBuf::from("images").join(format!("{name}.png"));
        let gt = PathBuf::from("gt").join(format!("{name}.png"));
        let truth = PathBuf::from("truth").join(format!("{name}.png"));
        io::write_gray_png(&dir.join(&image), &s.image)?;
        io::write_mask_png(&dir.join(&gt), &s.annotation)?;
        io::write_mask_png(&dir.join(&truth), &s.truth)?;
        let mut curves = Vec::new();
        for (k, c) in s.curves.iter().enumerate() {
            let p = PathBuf::from("curves").join(format!("{name}_{k}.txt"));
            io::write_curve(&dir.join(&p), c)?;
            curves.push(p);
        }
        entries.push(ManifestEntry {
            name,
            seed: scene_seed(seed, split, i),
            image,
            gt,
            truth,
            curves,
            annotation_pixels: s.annotation.popcount(),
        });
    }
    let manifest = Manifest {
        schema_version: MANIFEST_VERSION,
        seed,
        split,
        scene: *scene,
        entries,
    };
    io::write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let m: Manifest = io::read_json(&path)?;
    if m.schema_version != MANIFEST_VERSION {
        return Err(Error::format(
            &path,
            format!("manifest version {} is not supported", m.schema_version),
        ));
    }
    Ok(m)
}

/// Loads every scene listed in the manifest of `dir`.
pub fn read_dataset(dir: &Path) -> Result<Vec<Sample>> {
    let m = read_manifest(dir)?;
    let mut out = Vec::with_capacity(m.entries.len());
    for e in &m.entries {
        let image = io::read_gray_png(&dir.join(&e.image))?;
        let annotation = io::read_mask_png(&dir.join(&e.gt))?;
        let truth = io::read_mask_png(&dir.join(&e.truth))?;
        if !annotation.same_shape(&truth) || annotation.height() != image.height() || annotation.width() != image.width() {
            return Err(Error::format(dir.join(&e.image), "image and masks differ in size"));
        }
        out.push(Sample {
            name: e.name.clone(),
            image,
            annotation,
            truth,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SceneParams {
        SceneParams {
            height: 96,
            width: 128,
            length: (40, 80),
            ..SceneParams::default()
        }
    }

    #[test]
    fn disk_dataset_matches_the_in_memory_one() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_dataset(dir.path(), &small(), 5, Split::Train, 3).unwrap();
        assert_eq!(m.entries.len(), 3);
        assert!(m.entries.iter().all(|e| e.annotation_pixels > 0));
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back, synthesize(&small(), 5, Split::Train, 3).unwrap());
        let curve = io::read_curve(&dir.path().join(&m.entries[0].curves[0])).unwrap();
        let drawn = crackgan_core::synth::rasterize(&curve, 96, 128).unwrap();
        assert_eq!(drawn, back[0].annotation);
    }

    #[test]
    fn splits_do_not_share_scenes() {
        let a = synthesize(&small(), 5, Split::Train, 2).unwrap();
        let b = synthesize(&small(), 5, Split::Val, 2).unwrap();
        assert_ne!(a[0].image, b[0].image);
        assert_ne!(a[0].image, a[1].image);
    }
}
