//! Training loops: DC-GAN pretraining of the discriminator, encoder
//! pretraining, end-to-end detector training, the pixel-loss baseline and the
//! (lambda, dilation) grid search.
//!
//! Every random draw comes from a stream keyed by `(seed, purpose, epoch or
//! iteration)`, so a run resumed from saved weights, optimizer moments and
//! [`TrainState`] continues exactly as the uninterrupted run would have.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
// Float math for no_std builds; inherent methods win when std is linked.
#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GrayImage, GtMask};
use crate::inference::{detect, DetectParams};
use crate::losses::{
    adversarial_loss, cross_entropy, dcgan_d_objective, dcgan_g_objective, pixel_l1_loss_with, total_loss, LossValue,
    PixelReduction,
};
use crate::metrics::{score_bh, PointSet, DEFAULT_SATURATION};
use crate::networks::{ArchConfig, AsymmetricUNet, DcganGenerator, Discriminator, EncoderClassifier};
use crate::nn::{Adam, AdamConfig, Graph, LayerKind, Mode, Tape};
use crate::real::Real;
use crate::rng::{stream, Purpose};
use crate::synth::PatchPair;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Weight of the pixel term against the adversarial term.
    pub lambda: f64,
    /// Reduction of the pixel term; the per-image sum keeps the two loss terms
    /// on comparable gradient scales for lambda around 0.3.
    pub pixel_reduction: PixelReduction,
    pub seed: u64,
    /// Ablation switch: keep training the discriminator during end-to-end training.
    pub update_discriminator: bool,
    /// DC-GAN pretraining only: constant patches (alternately all-background and
    /// all-crack) appended to each fake batch, as a fraction of the batch. 0 is
    /// the plain DC-GAN game.
    pub constant_fakes: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: 16,
            epochs: 100,
            lambda: 0.3,
            pixel_reduction: PixelReduction::PerImageSum,
            seed: 0,
            update_discriminator: false,
            constant_fakes: 0.25,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid("lambda must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.constant_fakes) {
            return Err(Error::invalid("constant_fakes must lie in [0, 1]"));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

/// Progress counters; together with weights and optimizer moments this is all
/// a resumed run needs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epoch: u64,
    pub iteration: u64,
    pub best_score: Option<f64>,
    pub best_epoch: Option<u64>,
}

/// One logged optimisation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: u64,
    pub epoch: u64,
    pub adv: f64,
    pub pixel: f64,
    pub total: f64,
    /// Discriminator objective, when the discriminator was updated.
    pub d_loss: Option<f64>,
}

impl LogRow {
    fn new(state: &TrainState, loss: &LossValue, d_loss: Option<f64>) -> Self {
        LogRow {
            iteration: state.iteration,
            epoch: state.epoch,
            adv: loss.adv,
            pixel: loss.pixel,
            total: loss.total,
            d_loss,
        }
    }
}

/// Index batches for one epoch.
fn epoch_batches(n: usize, batch: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, Purpose::Shuffle, &[epoch]));
    order.chunks(batch).map(<[usize]>::to_vec).collect()
}

fn gather<T: Real>(items: &[Tensor<T>], idx: &[usize]) -> Result<Tensor<T>> {
    let picked: Vec<Tensor<T>> = idx.iter().map(|&i| items[i].clone()).collect();
    Tensor::stack(&picked)
}

fn column<T: Real>(values: Vec<T>) -> Result<Tensor<T>> {
    let n = values.len();
    Tensor::from_vec([n, 1, 1, 1], values)
}

/// Upper bound on the batches used by [`recalibrate_batch_norm`] after each epoch.
pub const RECALIBRATION_BATCHES: usize = 32;

/// Re-estimates batch-norm running statistics for the current weights as the
/// plain average over up to `max_batches` consecutive training-mode passes.
/// Moving averages collected during training lag behind fast weight changes.
pub fn recalibrate_batch_norm<T: Real>(
    graph: &mut Graph<T>,
    data: &[Tensor<T>],
    batch_size: usize,
    max_batches: usize,
) -> Result<()> {
    if !graph.specs().iter().any(|s| s.kind == LayerKind::BatchNorm) {
        return Ok(());
    }
    // Batch k takes every m-th item starting at k, so each batch spans the
    // whole (possibly ordered) data set.
    let m = data.len().div_ceil(batch_size.max(1));
    let idx: Vec<usize> = (0..m).flat_map(|k| (k..data.len()).step_by(m)).collect();
    for (k, chunk) in idx.chunks(batch_size.max(1)).take(max_batches).enumerate() {
        let tape = graph.forward_tape(&gather(data, chunk)?, Mode::Train)?;
        graph.blend_running_stats(&tape, 1.0 / (k as f64 + 1.0));
    }
    Ok(())
}

/// Standard normal noise for one iteration.
pub fn noise<T: Real>(seed: u64, iteration: u64, len: usize) -> Vec<T> {
    let mut rng = stream(seed, Purpose::Noise, &[iteration]);
    (0..len).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect()
}

/// One discriminator update. Real and fake items share one forward pass so that
/// batch-norm statistics during training match the running statistics the
/// frozen discriminator later uses.
fn discriminator_step<T: Real>(
    d: &mut Discriminator<T>,
    opt: &mut Adam<T>,
    real: &Tensor<T>,
    fake: &Tensor<T>,
) -> Result<f64> {
    let nr = real.batch();
    let mut items: Vec<Tensor<T>> = (0..nr).map(|i| real.slice_item(i)).collect();
    items.extend((0..fake.batch()).map(|i| fake.slice_item(i)));
    let tape = d.graph.forward_tape(&Tensor::stack(&items)?, Mode::Train)?;
    let probs = tape.output().data();
    let (loss, mut g, g_fake) = dcgan_d_objective(&probs[..nr], &probs[nr..])?;
    g.extend(g_fake);
    let mut grads = d.graph.zero_grads();
    d.graph.backward(&tape, &column(g)?, Some(&mut grads));
    d.graph.update_running_stats(&tape);
    opt.update(&mut d.graph, &grads);
    Ok(loss.total)
}

/// Alternating DC-GAN training on ground-truth crack patches. The
/// discriminator learns to accept crack patches only.
#[derive(Debug, Clone)]
pub struct DcganTrainer<T> {
    pub generator: DcganGenerator<T>,
    pub discriminator: Discriminator<T>,
    pub opt_g: Adam<T>,
    pub opt_d: Adam<T>,
    pub config: TrainConfig,
    pub state: TrainState,
    data: Vec<Tensor<T>>,
}

impl<T: Real> DcganTrainer<T> {
    pub fn new(arch: &ArchConfig, config: TrainConfig, patches: &[GtMask]) -> Result<Self> {
        let generator = DcganGenerator::new(arch, &mut stream(config.seed, Purpose::Init, &[0]))?;
        let discriminator = Discriminator::new(arch, &mut stream(config.seed, Purpose::Init, &[1]))?;
        Self::resume(generator, discriminator, None, config, TrainState::default(), patches)
    }

    /// Continues from saved networks and (optionally) optimizer moments `(g, d)`.
    pub fn resume(
        generator: DcganGenerator<T>,
        discriminator: Discriminator<T>,
        optimizers: Option<(Adam<T>, Adam<T>)>,
        config: TrainConfig,
        state: TrainState,
        patches: &[GtMask],
    ) -> Result<Self> {
        config.validate()?;
        if patches.is_empty() {
            return Err(Error::Dataset(String::from("no ground-truth patches")));
        }
        let side = discriminator.input_size();
        let mut data = Vec::with_capacity(patches.len());
        for (i, p) in patches.iter().enumerate() {
            if p.height() != side || p.width() != side {
                return Err(Error::shape(
                    alloc::format!("{side}x{side} patch"),
                    alloc::format!("{}x{} at index {i}", p.height(), p.width()),
                ));
            }
            if p.popcount() == 0 {
                return Err(Error::Dataset(alloc::format!(
                    "patch {i} has no crack pixels; the discriminator is trained on crack patches only"
                )));
            }
            data.push(p.to_tensor());
        }
        let (opt_g, opt_d) = optimizers.unwrap_or_else(|| {
            (
                Adam::new(config.adam, &generator.graph),
                Adam::new(config.adam, &discriminator.graph),
            )
        });
        Ok(DcganTrainer {
            generator,
            discriminator,
            opt_g,
            opt_d,
            config,
            state,
            data,
        })
    }

    pub fn run_epoch(&mut self, log: &mut dyn FnMut(&LogRow)) -> Result<()> {
        let batches = epoch_batches(self.data.len(), self.config.batch_size, self.config.seed, self.state.epoch);
        let z_dim = self.generator.z_dim;
        for idx in batches {
            let real = gather(&self.data, &idx)?;
            let n = idx.len();
            let z = Tensor::from_vec([n, z_dim, 1, 1], noise(self.config.seed, self.state.iteration, n * z_dim))?;
            let g_tape = self.generator.graph.forward_tape(&z, Mode::Train)?;
            let fake = g_tape.output().clone();
            let extra = (self.config.constant_fakes * n as f64).ceil() as usize;
            let d_loss = if extra > 0 {
                let [_, c, h, w] = fake.shape();
                let mut items: Vec<Tensor<T>> = (0..n).map(|i| fake.slice_item(i)).collect();
                for k in 0..extra {
                    let level = if (self.state.iteration + k as u64) % 2 == 0 { -T::one() } else { T::one() };
                    items.push(Tensor::filled([1, c, h, w], level));
                }
                discriminator_step(&mut self.discriminator, &mut self.opt_d, &real, &Tensor::stack(&items)?)?
            } else {
                discriminator_step(&mut self.discriminator, &mut self.opt_d, &real, &fake)?
            };

            // The generator plays against the discriminator as it will be used
            // later: with its running batch-norm statistics.
            let d = &self.discriminator.graph;
            let ft = d.forward_tape(&fake, Mode::Eval)?;
            let (g_loss, g_prob) = dcgan_g_objective(ft.output().data())?;
            let g_img = d.backward(&ft, &column(g_prob)?, None);
            let mut grads = self.generator.graph.zero_grads();
            self.generator.graph.backward(&g_tape, &g_img, Some(&mut grads));
            self.generator.graph.update_running_stats(&g_tape);
            self.opt_g.update(&mut self.generator.graph, &grads);

            log(&LogRow::new(&self.state, &g_loss, Some(d_loss)));
            self.state.iteration += 1;
        }
        self.state.epoch += 1;
        Ok(())
    }

    pub fn train(&mut self, log: &mut dyn FnMut(&LogRow)) -> Result<()> {
        while self.state.epoch < self.config.epochs as u64 {
            self.run_epoch(log)?;
        }
        Ok(())
    }
}

/// Crack / non-crack classification of image patches with the generator's
/// encoder, used to initialise the detector.
#[derive(Debug, Clone)]
pub struct EncoderTrainer<T> {
    pub net: EncoderClassifier<T>,
    pub opt: Adam<T>,
    pub config: TrainConfig,
    pub state: TrainState,
    data: Vec<Tensor<T>>,
    labels: Vec<usize>,
}

/// Class index of crack patches; non-crack patches use 1.
pub const LABEL_CRACK: usize = 0;
pub const LABEL_BACKGROUND: usize = 1;

impl<T: Real> EncoderTrainer<T> {
    pub fn new(arch: &ArchConfig, config: TrainConfig, patches: &[GrayImage], labels: &[usize]) -> Result<Self> {
        let net = EncoderClassifier::new(arch, &mut stream(config.seed, Purpose::Init, &[2]))?;
        Self::resume(net, None, config, TrainState::default(), patches, labels)
    }

    pub fn resume(
        net: EncoderClassifier<T>,
        opt: Option<Adam<T>>,
        config: TrainConfig,
        state: TrainState,
        patches: &[GrayImage],
        labels: &[usize],
    ) -> Result<Self> {
        config.validate()?;
        if patches.len() != labels.len() || patches.is_empty() {
            return Err(Error::Dataset(String::from("patches and labels must be non-empty and paired")));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Dataset(String::from("labels must be 0 (crack) or 1 (non-crack)")));
        }
        if !labels.contains(&LABEL_CRACK) || !labels.contains(&LABEL_BACKGROUND) {
            return Err(Error::Dataset(String::from(
                "encoder pretraining needs both crack and non-crack patches",
            )));
        }
        let data: Vec<Tensor<T>> = patches.iter().map(GrayImage::to_tensor).collect();
        for (i, t) in data.iter().enumerate() {
            net.graph.check_input(t.shape()).map_err(|e| Error::Dataset(alloc::format!("patch {i}: {e}")))?;
        }
        let opt = opt.unwrap_or_else(|| Adam::new(config.adam, &net.graph));
        Ok(EncoderTrainer {
            net,
            opt,
            config,
            state,
            data,
            labels: labels.to_vec(),
        })
    }

    pub fn run_epoch(&mut self, log: &mut dyn FnMut(&LogRow)) -> Result<()> {
        let batches = epoch_batches(self.data.len(), self.config.batch_size, self.config.seed, self.state.epoch);
        for idx in batches {
            let x = gather(&self.data, &idx)?;
            let labels: Vec<usize> = idx.iter().map(|&i| self.labels[i]).collect();
            let tape = self.net.graph.forward_tape(&x, Mode::Train)?;
            let (value, g) = cross_entropy(tape.output().data(), &labels, 2)?;
            let mut grads = self.net.graph.zero_grads();
            self.net.graph.backward(&tape, &Tensor::from_vec(tape.output().shape(), g)?, Some(&mut grads));
            self.net.graph.update_running_stats(&tape);
            self.opt.update(&mut self.net.graph, &grads);
            let loss = LossValue {
                total: value,
                adv: 0.0,
                pixel: 0.0,
                lambda: 0.0,
            };
            log(&LogRow::new(&self.state, &loss, None));
            self.state.iteration += 1;
        }
        recalibrate_batch_norm(&mut self.net.graph, &self.data, self.config.batch_size, RECALIBRATION_BATCHES)?;
        self.state.epoch += 1;
        Ok(())
    }

    pub fn train(&mut self, log: &mut dyn FnMut(&LogRow)) -> Result<()> {
        while self.state.epoch < self.config.epochs as u64 {
            self.run_epoch(log)?;
        }
        Ok(())
    }

    /// Fraction of correctly classified patches.
    pub fn accuracy(&self, patches: &[GrayImage], labels: &[usize]) -> Result<f64> {
        classifier_accuracy(&self.net, patches, labels)
    }
}

pub fn classifier_accuracy<T: Real>(net: &EncoderClassifier<T>, patches: &[GrayImage], labels: &[usize]) -> Result<f64> {
    if patches.is_empty() || patches.len() != labels.len() {
        return Err(Error::invalid("accuracy needs paired, non-empty data"));
    }
    let mut correct = 0;
    for chunk in (0..patches.len()).collect::<Vec<_>>().chunks(32) {
        let items: Vec<Tensor<T>> = chunk.iter().map(|&i| patches[i].to_tensor()).collect();
        let logits = net.forward(&Tensor::stack(&items)?)?;
        for (row, &i) in logits.chunks(2).zip(chunk) {
            let pred = if row[0] >= row[1] { LABEL_CRACK } else { LABEL_BACKGROUND };
            correct += usize::from(pred == labels[i]);
        }
    }
    Ok(correct as f64 / patches.len() as f64)
}

/// Validation callback: scores a generator snapshot (higher is better).
pub type Validator<'a, T> = dyn FnMut(&AsymmetricUNet<T>) -> Result<f64> + 'a;

/// Image-to-image training of a U-Net generator: either the end-to-end detector
/// (frozen one-class discriminator plus weighted pixel loss) or the plain
/// pixel-loss baseline.
#[derive(Debug, Clone)]
pub struct GeneratorTrainer<T> {
    pub generator: AsymmetricUNet<T>,
    pub discriminator: Option<Discriminator<T>>,
    pub opt_g: Adam<T>,
    pub opt_d: Option<Adam<T>>,
    pub config: TrainConfig,
    pub state: TrainState,
    /// Best generator by validation score.
    pub best: Option<AsymmetricUNet<T>>,
    d_fingerprint: Option<u64>,
    inputs: Vec<Tensor<T>>,
    targets: Vec<Tensor<T>>,
    require_crack: bool,
}

impl<T: Real> GeneratorTrainer<T> {
    /// End-to-end detector training. `discriminator` must be the pretrained
    /// one-class discriminator; every training pair must contain crack pixels.
    pub fn end_to_end(
        generator: AsymmetricUNet<T>,
        discriminator: Option<Discriminator<T>>,
        config: TrainConfig,
        pairs: &[PatchPair],
    ) -> Result<Self> {
        let d = discriminator.ok_or_else(|| {
            Error::Missing(String::from(
                "end-to-end training needs a pretrained discriminator checkpoint",
            ))
        })?;
        if generator.output_factor() != 2 {
            return Err(Error::invalid("end-to-end training expects the asymmetric generator"));
        }
        let opt_d = config.update_discriminator.then(|| Adam::new(config.adam, &d.graph));
        let mut t = Self::build(generator, Some(d), opt_d, config, pairs, true)?;
        t.d_fingerprint = t.discriminator.as_ref().map(|d| d.graph.fingerprint());
        Ok(t)
    }

    /// Pixel-loss-only training of the symmetric baseline on full-resolution targets.
    pub fn baseline(generator: AsymmetricUNet<T>, config: TrainConfig, pairs: &[PatchPair]) -> Result<Self> {
        Self::build(generator, None, None, config, pairs, false)
    }

    fn build(
        generator: AsymmetricUNet<T>,
        discriminator: Option<Discriminator<T>>,
        opt_d: Option<Adam<T>>,
        config: TrainConfig,
        pairs: &[PatchPair],
        require_crack: bool,
    ) -> Result<Self> {
        config.validate()?;
        if pairs.is_empty() {
            return Err(Error::Dataset(String::from("no training pairs")));
        }
        let f = generator.output_factor();
        let mut inputs = Vec::with_capacity(pairs.len());
        let mut targets = Vec::with_capacity(pairs.len());
        for (i, p) in pairs.iter().enumerate() {
            let (h, w) = (p.image.height(), p.image.width());
            if p.gt.height() * f != h || p.gt.width() * f != w {
                return Err(Error::shape(
                    alloc::format!("{}x{} target", h / f, w / f),
                    alloc::format!("{}x{} at pair {i}", p.gt.height(), p.gt.width()),
                ));
            }
            if let Some(d) = &discriminator {
                if p.gt.height() != d.input_size() || p.gt.width() != d.input_size() {
                    return Err(Error::shape(
                        alloc::format!("{0}x{0} target for the discriminator", d.input_size()),
                        alloc::format!("{}x{}", p.gt.height(), p.gt.width()),
                    ));
                }
            }
            if require_crack && p.gt.popcount() == 0 {
                return Err(Error::Dataset(alloc::format!(
                    "pair {i} has no crack pixels; end-to-end training uses crack patches only"
                )));
            }
            let x = p.image.to_tensor::<T>();
            generator.graph.check_input(x.shape())?;
            inputs.push(x);
            targets.push(p.gt.to_tensor());
        }
        let opt_g = Adam::new(config.adam, &generator.graph);
        Ok(GeneratorTrainer {
            generator,
            discriminator,
            opt_g,
            opt_d,
            config,
            state: TrainState::default(),
            best: None,
            d_fingerprint: None,
            inputs,
            targets,
            require_crack,
        })
    }

    /// Restores progress of an interrupted run.
    pub fn restore(&mut self, opt_g: Adam<T>, opt_d: Option<Adam<T>>, state: TrainState, best: Option<AsymmetricUNet<T>>) {
        self.opt_g = opt_g;
        if opt_d.is_some() {
            self.opt_d = opt_d;
        }
        self.state = state;
        self.best = best;
    }

    fn step(&mut self, idx: &[usize]) -> Result<LogRow> {
        let x = gather(&self.inputs, idx)?;
        let y = gather(&self.targets, idx)?;
        if self.require_crack {
            for n in 0..y.batch() {
                if !y.item(n).iter().any(|&v| v > T::zero()) {
                    return Err(Error::Dataset(String::from("batch item without crack pixels")));
                }
            }
        }
        let tape: Tape<T> = self.generator.graph.forward_tape(&x, Mode::Train)?;
        let out = tape.output();
        let (pixel, g_pix) = pixel_l1_loss_with(out, &y, self.config.pixel_reduction)?;
        let (loss, grad) = match &self.discriminator {
            Some(d) => {
                let dt = d.graph.forward_tape(out, Mode::Eval)?;
                let (adv, g_prob) = adversarial_loss(dt.output().data())?;
                let mut grad = d.graph.backward(&dt, &column(g_prob)?, None);
                let lambda = T::lit(self.config.lambda);
                for (g, &p) in grad.data_mut().iter_mut().zip(g_pix.data()) {
                    *g = *g + lambda * p;
                }
                (total_loss(&adv, &pixel, self.config.lambda)?, grad)
            }
            None => (pixel, g_pix),
        };
        let mut grads = self.generator.graph.zero_grads();
        self.generator.graph.backward(&tape, &grad, Some(&mut grads));
        self.generator.graph.update_running_stats(&tape);
        self.opt_g.update(&mut self.generator.graph, &grads);

        let mut d_loss = None;
        if let (Some(d), Some(opt)) = (self.discriminator.as_mut(), self.opt_d.as_mut()) {
            let fake = tape.output().clone();
            d_loss = Some(discriminator_step(d, opt, &y, &fake)?);
        }
        Ok(LogRow::new(&self.state, &loss, d_loss))
    }

    pub fn run_epoch(&mut self, log: &mut dyn FnMut(&LogRow)) -> Result<()> {
        let batches = epoch_batches(self.inputs.len(), self.config.batch_size, self.config.seed, self.state.epoch);
        for idx in batches {
            let row = self.step(&idx)?;
            log(&row);
            self.state.iteration += 1;
        }
        recalibrate_batch_norm(&mut self.generator.graph, &self.inputs, self.config.batch_size, RECALIBRATION_BATCHES)?;
        if self.opt_d.is_none() {
            let now = self.discriminator.as_ref().map(|d| d.graph.fingerprint());
            if now != self.d_fingerprint {
                return Err(Error::invalid("frozen discriminator changed during training"));
            }
        }
        self.state.epoch += 1;
        Ok(())
    }

    /// Runs the remaining epochs, scoring after each one and keeping the best
    /// generator. Without a validator the last generator is kept.
    pub fn train(&mut self, log: &mut dyn FnMut(&LogRow), mut validate: Option<&mut Validator<'_, T>>) -> Result<()> {
        while self.state.epoch < self.config.epochs as u64 {
            self.run_epoch(log)?;
            match validate.as_deref_mut() {
                Some(v) => {
                    let score = v(&self.generator)?;
                    if self.state.best_score.is_none_or(|b| score > b) {
                        self.state.best_score = Some(score);
                        self.state.best_epoch = Some(self.state.epoch);
                        self.best = Some(self.generator.clone());
                    }
                }
                None => self.best = Some(self.generator.clone()),
            }
        }
        Ok(())
    }

    /// The best generator seen so far (the current one if none was recorded).
    pub fn best_generator(&self) -> &AsymmetricUNet<T> {
        self.best.as_ref().unwrap_or(&self.generator)
    }
}

/// Cold-started or encoder-initialised detector generator.
pub fn init_generator<T: Real>(
    arch: &ArchConfig,
    seed: u64,
    encoder: Option<&EncoderClassifier<T>>,
) -> Result<(AsymmetricUNet<T>, usize)> {
    let mut g = AsymmetricUNet::new(arch, &mut stream(seed, Purpose::Init, &[3]))?;
    let copied = match encoder {
        Some(e) => transfer_encoder(&mut g.graph, &e.graph)?,
        None => 0,
    };
    Ok((g, copied))
}

/// Copies encoder weights into a generator graph; errors when nothing matches.
pub fn transfer_encoder<T: Real>(generator: &mut Graph<T>, encoder: &Graph<T>) -> Result<usize> {
    let n = generator.load_matching(encoder);
    if n == 0 {
        return Err(Error::invalid("encoder checkpoint shares no layers with the generator"));
    }
    Ok(n)
}

/// Mean saturated Hausdorff score of full-image detections against 1-pixel GT.
pub fn mean_hd_score<T: Real>(
    generator: &AsymmetricUNet<T>,
    images: &[(GrayImage, GtMask)],
    params: &DetectParams,
) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::invalid("no validation images"));
    }
    let mut sum = 0.0;
    for (img, gt) in images {
        let det = detect(generator, img, params)?;
        sum += score_bh(&PointSet::from_mask(&det.mask), &PointSet::from_mask(gt), DEFAULT_SATURATION)?.score;
    }
    Ok(sum / images.len() as f64)
}

/// Scores for every `(lambda, dilation scale)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridBoard {
    pub lambdas: Vec<f64>,
    pub dilations: Vec<usize>,
    /// `scores[i][j]` belongs to `lambdas[i]`, `dilations[j]`.
    pub scores: Vec<Vec<f64>>,
}

impl GridBoard {
    /// `(lambda index, dilation index, score)` of the best cell; ties keep the first.
    pub fn best(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, row) in self.scores.iter().enumerate() {
            for (j, &s) in row.iter().enumerate() {
                if best.is_none_or(|b| s > b.2) {
                    best = Some((i, j, s));
                }
            }
        }
        best
    }
}

/// Evaluates `cell(lambda, dilation)` over the whole grid, row by row.
pub fn grid_search(
    lambdas: &[f64],
    dilations: &[usize],
    mut cell: impl FnMut(f64, usize) -> Result<f64>,
) -> Result<GridBoard> {
    if lambdas.is_empty() || dilations.is_empty() {
        return Err(Error::invalid("grid axes must be non-empty"));
    }
    let mut scores = vec![Vec::with_capacity(dilations.len()); lambdas.len()];
    for (i, &l) in lambdas.iter().enumerate() {
        for &d in dilations {
            scores[i].push(cell(l, d)?);
        }
    }
    Ok(GridBoard {
        lambdas: lambdas.to_vec(),
        dilations: dilations.to_vec(),
        scores,
    })
}
