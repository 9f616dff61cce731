//! Run configuration: one nested struct, stored as flat `section.key = value` text.
//!
//! Values are JSON literals (`0.3`, `true`, `[128, 224]`, `"per_image_sum"`);
//! a value that is not valid JSON is taken as a bare string, so paths and enum
//! names can be written without quotes. Unknown keys are rejected.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crackgan_core::inference::DetectParams;
use crackgan_core::losses::PixelReduction;
use crackgan_core::metrics::EvalParams;
use crackgan_core::networks::ArchConfig;
use crackgan_core::synth::SceneParams;
use crackgan_core::training::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Environment variable that relocates relative output paths.
pub const OUTPUT_ROOT_ENV: &str = "CRACKGAN_OUTPUT_ROOT";

/// File name of the resolved-config snapshot written into every output directory.
pub const SNAPSHOT_FILE: &str = "resolved_config.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Scenes written by `gen-data`, or synthesised for training when no
    /// dataset directory is given.
    pub images: usize,
    /// Held-out scenes used to pick the best epoch and to score grid cells.
    pub val_images: usize,
    pub scene: SceneParams,
    /// Stride of the crack-patch-only sampling grid.
    pub stride: usize,
    pub min_crack_px: usize,
    /// Disk radius of one dilation pass over the drawn annotation.
    pub dilation_radius: usize,
    /// Number of dilation passes (the dilation scale).
    pub dilation_times: usize,
    /// Add flipped and rotated copies of the discriminator's real patches.
    pub augment: bool,
    /// Crack-free windows per crack window in the baseline's training set.
    pub background_ratio: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            images: 100,
            val_images: 20,
            scene: SceneParams::default(),
            stride: 32,
            min_crack_px: 20,
            dilation_radius: 3,
            dilation_times: 3,
            augment: false,
            background_ratio: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub lambdas: Vec<f64>,
    pub dilations: Vec<usize>,
    /// End-to-end epochs per cell.
    pub epochs: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            lambdas: vec![0.1, 0.2, 0.3, 0.4],
            dilations: vec![1, 3, 5, 7],
            epochs: 4,
        }
    }
}

/// File-system inputs and outputs of a command.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathsConfig {
    pub out: Option<PathBuf>,
    /// Training dataset written by `gen-data`.
    pub data: Option<PathBuf>,
    /// Validation dataset written by `gen-data`.
    pub val_data: Option<PathBuf>,
    pub discriminator: Option<PathBuf>,
    pub encoder: Option<PathBuf>,
    pub model: Option<PathBuf>,
    /// Checkpoint of an interrupted run of the same stage.
    pub resume: Option<PathBuf>,
    /// An image file or a directory of images.
    pub image: Option<PathBuf>,
    pub pred: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

/// Everything a command reads besides its input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub arch: ArchConfig,
    pub data: DataConfig,
    pub dcgan: TrainConfig,
    pub encoder: TrainConfig,
    pub train: TrainConfig,
    pub baseline: TrainConfig,
    pub grid: GridConfig,
    pub detect: DetectParams,
    pub eval: EvalParams,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    /// Desk-scale preset: a narrow network on 128-pixel patches so that every
    /// stage finishes in minutes on one CPU core.
    fn default() -> Self {
        let train = |batch_size, epochs| TrainConfig {
            batch_size,
            epochs,
            ..TrainConfig::default()
        };
        RunConfig {
            seed: 1,
            arch: ArchConfig {
                base_width: 8,
                patch: 128,
                z_dim: 16,
            },
            data: DataConfig::default(),
            dcgan: train(64, 20),
            encoder: train(32, 5),
            train: train(16, 8),
            baseline: TrainConfig {
                pixel_reduction: PixelReduction::PerPixelMean,
                ..train(16, 2)
            },
            grid: GridConfig::default(),
            detect: DetectParams::default(),
            eval: EvalParams::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    /// Full-width network on 256-pixel patches with the classic DC-GAN
    /// schedule (batch 128, 100 epochs). Meant for machines with a GPU-class budget.
    pub fn full_scale() -> Self {
        let mut c = RunConfig::default();
        c.arch = ArchConfig::default();
        c.dcgan.batch_size = 128;
        c.dcgan.epochs = 100;
        c.data.stride = 128;
        c
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text).map_err(|e| match e {
            Error::Config(msg) => Error::format(path, msg),
            other => other,
        })?;
        Ok(cfg)
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        self.apply(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }

    /// Applies `key=value` overrides such as those from `--set`.
    pub fn apply_overrides(&mut self, items: &[String]) -> Result<()> {
        let mut pairs = Vec::new();
        for item in items {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("`{item}`: expected key=value")))?;
            pairs.push((k.trim(), v.trim()));
        }
        self.apply(pairs)
    }

    /// Sets one key from a typed value.
    pub fn set<V: Serialize>(&mut self, key: &str, value: V) -> Result<()> {
        let v = serde_json::to_value(value).map_err(|e| Error::Config(format!("{key}: {e}")))?;
        self.apply_values(vec![(key.to_string(), v)])
    }

    fn apply<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<()> {
        let values = pairs
            .into_iter()
            .map(|(k, v)| (k.to_string(), parse_value(v)))
            .collect();
        self.apply_values(values)
    }

    fn apply_values(&mut self, values: Vec<(String, Value)>) -> Result<()> {
        let mut tree = serde_json::to_value(&*self).expect("config serialises");
        for (key, value) in values {
            let slot = lookup(&mut tree, &key).ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
            if slot.is_object() {
                return Err(Error::Config(format!("`{key}` is a section; set its keys individually")));
            }
            *slot = value;
        }
        *self = serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Every key with its current value, in a stable order.
    pub fn flatten(&self) -> Vec<(String, String)> {
        let tree = serde_json::to_value(self).expect("config serialises");
        let mut out = Vec::new();
        flatten_into(&tree, String::new(), &mut out);
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.flatten() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Writes the snapshot `resolved_config.txt` into `dir`.
    pub fn write_snapshot(&self, dir: &Path, command: &str) -> Result<PathBuf> {
        crate::io::create_dir(dir)?;
        let path = dir.join(SNAPSHOT_FILE);
        let text = format!("# crackgan {command}\n{}", self.to_text());
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

fn parse_value(v: &str) -> Value {
    serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()))
}

fn lookup<'a>(tree: &'a mut Value, key: &str) -> Option<&'a mut Value> {
    let mut cur = tree;
    for part in key.split('.') {
        cur = cur.as_object_mut()?.get_mut(part)?;
    }
    Some(cur)
}

fn flatten_into(v: &Value, prefix: String, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => flatten_map(map, &prefix, out),
        Value::String(s) if !s.is_empty() && s.trim() == s && serde_json::from_str::<Value>(s).is_err() => {
            out.push((prefix, s.clone()))
        }
        other => out.push((prefix, other.to_string())),
    }
}

fn flatten_map(map: &Map<String, Value>, prefix: &str, out: &mut Vec<(String, String)>) {
    for (k, v) in map {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        flatten_into(v, key, out);
    }
}

/// Resolves a relative output path against the output-root variable, if set.
pub fn output_path(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if path.is_relative() && !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_reproduces_the_config() {
        let mut c = RunConfig::default();
        c.train.lambda = 0.15;
        c.data.scene.length = (100, 150);
        c.paths.out = Some(PathBuf::from("runs/a b"));
        c.train.pixel_reduction = PixelReduction::PerPixelMean;
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn overrides_parse_literals_and_bare_strings() {
        let mut c = RunConfig::default();
        c.apply_overrides(&[
            "train.lambda=0.25".into(),
            "grid.dilations=[1,3]".into(),
            "train.pixel_reduction=per_pixel_mean".into(),
            "paths.model=g.ckpt".into(),
        ])
        .unwrap();
        assert_eq!(c.train.lambda, 0.25);
        assert_eq!(c.grid.dilations, vec![1, 3]);
        assert_eq!(c.train.pixel_reduction, PixelReduction::PerPixelMean);
        assert_eq!(c.paths.model.as_deref(), Some(Path::new("g.ckpt")));
    }

    #[test]
    fn bad_keys_and_values_are_rejected() {
        let mut c = RunConfig::default();
        assert!(c.apply_overrides(&["train.lamda=0.2".into()]).is_err());
        assert!(c.apply_overrides(&["train=1".into()]).is_err());
        assert!(c.apply_overrides(&["train.epochs=many".into()]).is_err());
        assert!(c.apply_text("no equals sign").is_err());
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn every_key_is_settable() {
        let c = RunConfig::default();
        for (k, v) in c.flatten() {
            let mut d = RunConfig::default();
            d.apply_overrides(&[format!("{k}={v}")]).unwrap();
            assert_eq!(d, c, "{k}");
        }
    }
}
