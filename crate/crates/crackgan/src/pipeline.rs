//! The training and evaluation stages over in-memory samples. The CLI wraps
//! these with file IO; the acceptance suite calls them directly.

use std::collections::BTreeMap;

use crackgan_core::inference::{detect, DetectParams};
use crackgan_core::metrics::{evaluate_pair, EvalParams, EvalReport};
use crackgan_core::networks::{AsymmetricUNet, Discriminator, EncoderClassifier};
use crackgan_core::rng::{stream, Purpose};
use crackgan_core::synth::{augment, dilate_mask, sample_cpo_patches, sample_windows, CpoSampling, PatchPair, SceneParams};
use crackgan_core::training::{
    grid_search, init_generator, mean_hd_score, DcganTrainer, EncoderTrainer, GeneratorTrainer, GridBoard, LogRow, TrainConfig,
    LABEL_BACKGROUND, LABEL_CRACK,
};
use crackgan_core::{GrayImage, GtMask, Tensor};
use rand::seq::SliceRandom;

use crate::config::RunConfig;
use crate::dataset::{synthesize, Sample, Split};
use crate::error::{Error, Result};

/// Precision used for all training and inference.
pub type F = f32;

/// Crack-patch-only pairs with the annotation dilated `dilation_times` times.
pub fn cpo_pairs(samples: &[Sample], cfg: &RunConfig, dilation_times: usize) -> Result<Vec<PatchPair>> {
    let sampling = CpoSampling {
        patch: cfg.arch.patch,
        gt_patch: cfg.arch.patch / 2,
        stride: cfg.data.stride,
        min_crack_px: cfg.data.min_crack_px,
    };
    let mut out = Vec::new();
    for s in samples {
        let dilated = dilate_mask(&s.annotation, cfg.data.dilation_radius, dilation_times);
        out.extend(sample_cpo_patches(&s.image, &dilated, &s.annotation, &sampling)?);
    }
    if out.is_empty() {
        return Err(Error::Config(String::from(
            "no crack patches: the images are smaller than the patch or hold too few crack pixels",
        )));
    }
    Ok(out)
}

/// The "real" patches of the one-class discriminator.
pub fn discriminator_patches(pairs: &[PatchPair], augmented: bool) -> Vec<GtMask> {
    if augmented {
        augment(pairs).into_iter().map(|p| p.gt).collect()
    } else {
        pairs.iter().map(|p| p.gt.clone()).collect()
    }
}

/// Labelled windows for encoder pretraining: every window with at least
/// `min_crack_px` annotation pixels is a crack example, windows without any are
/// background examples, and background is capped at the crack count.
pub fn encoder_patches(samples: &[Sample], cfg: &RunConfig) -> Result<(Vec<GrayImage>, Vec<usize>)> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut background = Vec::new();
    for s in samples {
        for w in sample_windows(&s.image, &s.annotation, cfg.arch.patch, cfg.data.stride)? {
            if w.raw_count >= cfg.data.min_crack_px.max(1) {
                images.push(w.image);
                labels.push(LABEL_CRACK);
            } else if w.raw_count == 0 {
                background.push(w.image);
            }
        }
    }
    let keep = background.len().min(images.len());
    labels.extend(std::iter::repeat_n(LABEL_BACKGROUND, keep));
    images.extend(background.into_iter().take(keep));
    Ok((images, labels))
}

/// Scenes without cracks, seeded apart from every cracked split.
pub fn background_scenes(scene: &SceneParams, seed: u64, count: usize) -> Result<Vec<Sample>> {
    let empty = SceneParams { cracks: 0, ..*scene };
    synthesize(&empty, seed ^ 0xB6_0000, Split::Train, count)
}

/// Training pairs for the full-resolution baseline: non-overlapping windows
/// with their raw 1-pixel annotation, crack windows plus `background_ratio`
/// times as many crack-free windows. Crack-free windows come from the cracked
/// scenes first and from extra crack-free scenes after that.
pub fn baseline_pairs(samples: &[Sample], cfg: &RunConfig) -> Result<Vec<PatchPair>> {
    let p = cfg.arch.patch;
    let mut crack = Vec::new();
    let mut background = Vec::new();
    let collect = |s: &Sample, crack: &mut Vec<PatchPair>, background: &mut Vec<PatchPair>| -> Result<()> {
        for w in sample_windows(&s.image, &s.annotation, p, p)? {
            let pair = || -> Result<PatchPair> {
                Ok(PatchPair {
                    gt: s.annotation.crop(w.top, w.left, p, p)?,
                    image: w.image.clone(),
                })
            };
            if w.raw_count >= cfg.data.min_crack_px.max(1) {
                crack.push(pair()?);
            } else if w.raw_count == 0 {
                background.push(pair()?);
            }
        }
        Ok(())
    };
    for s in samples {
        collect(s, &mut crack, &mut background)?;
    }
    let want = crack.len() * cfg.data.background_ratio;
    let per_scene = {
        let s = &cfg.data.scene;
        (s.height / p) * (s.width / p)
    };
    if background.len() < want && per_scene > 0 {
        let extra = (want - background.len()).div_ceil(per_scene);
        for s in background_scenes(&cfg.data.scene, cfg.seed, extra)? {
            collect(&s, &mut crack, &mut background)?;
        }
    }
    background.truncate(want);
    crack.extend(background);
    Ok(crack)
}

/// Crack-pixel share of the targets; the imbalance the baseline faces.
pub fn crack_fraction(pairs: &[PatchPair]) -> f64 {
    let total: usize = pairs.iter().map(|p| p.gt.bits().len()).sum();
    let on: usize = pairs.iter().map(|p| p.gt.popcount()).sum();
    on as f64 / total.max(1) as f64
}

pub fn pretrain_dcgan(cfg: &RunConfig, pairs: &[PatchPair], log: &mut dyn FnMut(&LogRow)) -> Result<DcganTrainer<F>> {
    let patches = discriminator_patches(pairs, cfg.data.augment);
    let mut t = DcganTrainer::new(&cfg.arch, seeded(cfg.dcgan, cfg.seed), &patches)?;
    t.train(log)?;
    Ok(t)
}

pub fn pretrain_encoder(cfg: &RunConfig, samples: &[Sample], log: &mut dyn FnMut(&LogRow)) -> Result<EncoderTrainer<F>> {
    let (images, labels) = encoder_patches(samples, cfg)?;
    let mut t = EncoderTrainer::new(&cfg.arch, seeded(cfg.encoder, cfg.seed), &images, &labels)?;
    t.train(log)?;
    Ok(t)
}

fn seeded(mut c: TrainConfig, seed: u64) -> TrainConfig {
    c.seed = seed;
    c
}

/// Scores a generator on `samples` against their exact centrelines.
pub fn evaluate(
    generator: &AsymmetricUNet<F>,
    samples: &[Sample],
    detect_params: &DetectParams,
    eval: &EvalParams,
) -> Result<EvalReport> {
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        let det = detect(generator, &s.image, detect_params)?;
        rows.push(evaluate_pair(&s.name, &det.mask, &s.truth, eval)?);
    }
    Ok(EvalReport::new(*eval, rows, Vec::new()))
}

fn truth_pairs(samples: &[Sample]) -> Vec<(GrayImage, GtMask)> {
    samples.iter().map(|s| (s.image.clone(), s.truth.clone())).collect()
}

/// End-to-end detector training against a frozen discriminator, keeping the
/// generator with the best validation HD-score.
pub fn train_end_to_end(
    cfg: &RunConfig,
    train: TrainConfig,
    pairs: &[PatchPair],
    discriminator: Discriminator<F>,
    encoder: Option<&EncoderClassifier<F>>,
    val: &[Sample],
    log: &mut dyn FnMut(&LogRow),
    epoch_done: &mut dyn FnMut(&GeneratorTrainer<F>) -> Result<()>,
) -> Result<GeneratorTrainer<F>> {
    let train = seeded(train, cfg.seed);
    let (g, _) = init_generator(&cfg.arch, cfg.seed, encoder)?;
    let mut t = GeneratorTrainer::end_to_end(g, Some(discriminator), train, pairs)?;
    continue_training(&mut t, cfg, val, log, epoch_done)?;
    Ok(t)
}

/// Runs the remaining epochs of `t`, validating after each when `val` is non-empty.
pub fn continue_training(
    t: &mut GeneratorTrainer<F>,
    cfg: &RunConfig,
    val: &[Sample],
    log: &mut dyn FnMut(&LogRow),
    epoch_done: &mut dyn FnMut(&GeneratorTrainer<F>) -> Result<()>,
) -> Result<()> {
    let val = truth_pairs(val);
    while t.state.epoch < t.config.epochs as u64 {
        t.run_epoch(log)?;
        if val.is_empty() {
            t.best = Some(t.generator.clone());
        } else {
            let score = mean_hd_score(&t.generator, &val, &cfg.detect)?;
            if t.state.best_score.is_none_or(|b| score > b) {
                t.state.best_score = Some(score);
                t.state.best_epoch = Some(t.state.epoch);
                t.best = Some(t.generator.clone());
            }
        }
        epoch_done(t)?;
    }
    Ok(())
}

/// Pixel-loss-only training of the symmetric baseline.
pub fn train_baseline(
    cfg: &RunConfig,
    pairs: &[PatchPair],
    log: &mut dyn FnMut(&LogRow),
    epoch_done: &mut dyn FnMut(&GeneratorTrainer<F>) -> Result<()>,
) -> Result<GeneratorTrainer<F>> {
    let g = AsymmetricUNet::symmetric(&cfg.arch, &mut stream(cfg.seed, Purpose::Init, &[4]))?;
    let mut t = GeneratorTrainer::baseline(g, seeded(cfg.baseline, cfg.seed), pairs)?;
    continue_training(&mut t, cfg, &[], log, epoch_done)?;
    Ok(t)
}

/// Mean pixel loss over the last `n` logged iterations: the loss the run has reached.
pub fn final_loss(rows: &[LogRow], n: usize) -> Option<f64> {
    let tail = &rows[rows.len().saturating_sub(n.max(1))..];
    (!tail.is_empty()).then(|| tail.iter().map(|r| r.pixel).sum::<f64>() / tail.len() as f64)
}

/// How well a discriminator tells crack patches from the all-background patch.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Separation {
    pub mean_real: f64,
    pub mean_black: f64,
    /// Share of (real, all-black) pairs ranked the right way round.
    pub ranking_accuracy: f64,
}

impl Separation {
    pub fn gap(&self) -> f64 {
        self.mean_real - self.mean_black
    }
}

pub fn discriminator_separation(d: &Discriminator<F>, real: &[GtMask]) -> Result<Separation> {
    if real.is_empty() {
        return Err(Error::Config(String::from("no held-out patches")));
    }
    let side = d.input_size();
    let mut scores = Vec::with_capacity(real.len());
    for chunk in real.chunks(64) {
        let x = Tensor::stack(&chunk.iter().map(|m| m.to_tensor::<F>()).collect::<Vec<_>>())?;
        scores.extend(d.forward(&x)?.into_iter().map(f64::from));
    }
    let black = f64::from(d.forward(&Tensor::filled([1, 1, side, side], -1.0))?[0]);
    let mean_real = scores.iter().sum::<f64>() / scores.len() as f64;
    let right = scores.iter().filter(|&&s| s > black).count();
    Ok(Separation {
        mean_real,
        mean_black: black,
        ranking_accuracy: right as f64 / scores.len() as f64,
    })
}

/// One progress line of a grid search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub lambda: f64,
    pub dilation: usize,
    pub score: f64,
}

/// Trains one reduced-budget detector per `(lambda, dilation)` cell and scores
/// it on `val`. The discriminator is pretrained once per dilation (its real
/// patches depend on it) and the encoder once for the whole board.
pub fn run_grid(
    cfg: &RunConfig,
    train: &[Sample],
    val: &[Sample],
    encoder: Option<&EncoderClassifier<F>>,
    progress: &mut dyn FnMut(&GridCell),
) -> Result<GridBoard> {
    let mut cache: BTreeMap<usize, (Vec<PatchPair>, Discriminator<F>)> = BTreeMap::new();
    grid_search(&cfg.grid.lambdas, &cfg.grid.dilations, |lambda, dilation| {
        if !cache.contains_key(&dilation) {
            let pairs = cpo_pairs(train, cfg, dilation).map_err(core_error)?;
            let d = pretrain_dcgan(cfg, &pairs, &mut |_| {}).map_err(core_error)?.discriminator;
            cache.insert(dilation, (pairs, d));
        }
        let (pairs, d) = &cache[&dilation];
        let tc = TrainConfig {
            lambda,
            epochs: cfg.grid.epochs,
            ..cfg.train
        };
        let t = train_end_to_end(cfg, tc, pairs, d.clone(), encoder, val, &mut |_| {}, &mut |_| Ok(())).map_err(core_error)?;
        let score = t.state.best_score.unwrap_or(0.0);
        progress(&GridCell { lambda, dilation, score });
        Ok(score)
    })
    .map_err(Error::from)
}

fn core_error(e: Error) -> crackgan_core::Error {
    match e {
        Error::Core(c) => c,
        other => crackgan_core::Error::Dataset(other.to_string()),
    }
}

/// Deterministic subset of `k` items, for quick held-out checks.
pub fn subsample<T: Clone>(items: &[T], k: usize, seed: u64) -> Vec<T> {
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(&mut stream(seed, Purpose::Split, &[]));
    idx.truncate(k);
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        let mut c = RunConfig::default();
        c.arch.base_width = 4;
        c.arch.patch = 64;
        c.data.scene.height = 128;
        c.data.scene.width = 128;
        c.data.scene.length = (60, 100);
        c
    }

    #[test]
    fn cpo_pairs_all_hold_cracks_and_baseline_is_imbalanced() {
        let c = tiny();
        let samples = synthesize(&c.data.scene, 2, Split::Train, 4).unwrap();
        let pairs = cpo_pairs(&samples, &c, 3).unwrap();
        assert!(pairs.iter().all(|p| p.gt.popcount() > 0 && p.gt.height() == 32));
        let base = baseline_pairs(&samples, &c).unwrap();
        let cracked = base.iter().filter(|p| p.gt.popcount() > 0).count();
        assert!(cracked > 0);
        assert_eq!(base.len() - cracked, cracked * c.data.background_ratio);
        assert!(base.iter().all(|p| p.gt.height() == 64));
    }

    #[test]
    fn encoder_set_is_balanced() {
        let c = tiny();
        let samples = synthesize(&c.data.scene, 2, Split::Train, 4).unwrap();
        let (x, y) = encoder_patches(&samples, &c).unwrap();
        assert_eq!(x.len(), y.len());
        let crack = y.iter().filter(|&&l| l == LABEL_CRACK).count();
        assert!(crack >= y.len() - crack);
    }
}
