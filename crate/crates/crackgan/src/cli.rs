//! Command-line front end.
//!
//! Every flag maps onto a key of [`RunConfig`]; the value is resolved as
//! defaults, then `--preset`, then `--config FILE`, then `--set key=value`,
//! then the flag itself. The resolved configuration is written into every
//! output directory and reproduces the run when passed back with `--config`.

use std::cell::RefCell;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use crackgan_core::inference::detect;
use crackgan_core::networks::{AsymmetricUNet, Discriminator, DcganGenerator, EncoderClassifier};
use crackgan_core::nn::{receptive_field, spec_names};
use crackgan_core::training::{DcganTrainer, EncoderTrainer, GeneratorTrainer, LogRow};
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::{output_path, RunConfig};
use crate::dataset::{read_dataset, synthesize, write_dataset, Sample, Split};
use crate::error::{Error, Result};
use crate::pipeline::{self, F};
use crate::{gridboard, io, report};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "crackgan", version, about = "Crack detection from partially accurate annotations")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Narrow network on 128-pixel patches (the default).
    Desk,
    /// Full-width network on 256-pixel patches.
    Full,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Starting point before the config file and overrides are applied.
    #[arg(long, global = true, value_enum)]
    pub preset: Option<Preset>,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Experiment seed (`seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (`paths.out`); relative paths honour CRACKGAN_OUTPUT_ROOT.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic pavement images with annotations.
    GenData(GenData),
    /// Pretrain the one-class DC-GAN on dilated annotation patches.
    PretrainDcgan(Stage),
    /// Pretrain the generator encoder as a crack/non-crack classifier.
    PretrainEncoder(Stage),
    /// Train the detector end to end against the frozen discriminator.
    Train(Train),
    /// Train the symmetric pixel-loss baseline on imbalanced data.
    Baseline(Stage),
    /// Train one small detector per (lambda, dilation) cell and plot the scores.
    GridSearch(Grid),
    /// Detect cracks in an image or a directory of images.
    Infer(Infer),
    /// Score predicted masks against ground-truth masks.
    Eval(Eval),
    /// Print layer tables and receptive fields of the generator.
    RfCalc,
}

#[derive(Debug, Args)]
pub struct GenData {
    /// Number of scenes (`data.images`).
    #[arg(long)]
    pub num: Option<usize>,
    /// Scene size as HxW (`data.scene.height`, `data.scene.width`).
    #[arg(long, value_parser = parse_size)]
    pub size: Option<(usize, usize)>,
    /// Seed stream to draw scenes from.
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct Stage {
    /// Training dataset from gen-data (`paths.data`); synthesised when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Epochs of this stage.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Dilation scale of the annotation (`data.dilation_times`).
    #[arg(long)]
    pub dilation: Option<usize>,
    /// Continue an interrupted run from its checkpoint (`paths.resume`).
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Train {
    #[command(flatten)]
    pub stage: Stage,
    /// Validation dataset (`paths.val_data`); synthesised when absent.
    #[arg(long)]
    pub val_data: Option<PathBuf>,
    /// Pretrained DC-GAN checkpoint (`paths.discriminator`).
    #[arg(long)]
    pub discriminator: Option<PathBuf>,
    /// Pretrained encoder checkpoint (`paths.encoder`); cold start when absent.
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    /// Weight of the pixel loss (`train.lambda`).
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct Grid {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub val_data: Option<PathBuf>,
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    /// Comma-separated lambda values (`grid.lambdas`).
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// Comma-separated dilation scales (`grid.dilations`).
    #[arg(long, value_delimiter = ',')]
    pub dilations: Option<Vec<usize>>,
    /// Epochs per cell (`grid.epochs`).
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Infer {
    /// Generator checkpoint (`paths.model`).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Image file or directory of PNG images (`paths.image`).
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Map values above this become crack (`detect.threshold`).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Smallest kept component in pixels (`detect.min_area`).
    #[arg(long)]
    pub min_area: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Eval {
    /// Directory of predicted masks (`paths.pred`).
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Directory of ground-truth masks with matching names (`paths.gt`).
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// JSON report path (`paths.report`); a CSV is written next to it.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Distance saturation in pixels (`eval.saturation`).
    #[arg(long)]
    pub saturation: Option<f64>,
    /// Region cell side in pixels (`eval.cell`).
    #[arg(long)]
    pub cell: Option<usize>,
    /// Also report pixel IoU (`eval.iou`).
    #[arg(long)]
    pub iou: bool,
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("`{s}`: expected HxW"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("`{s}`: expected HxW"));
    Ok((p(h)?, p(w)?))
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => Failure::Usage(msg),
            other => Failure::Runtime(other),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn set<V: Serialize>(cfg: &mut RunConfig, key: &str, v: Option<V>) -> Result<()> {
    match v {
        Some(v) => cfg.set(key, v),
        None => Ok(()),
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match cli.common.preset {
        Some(Preset::Full) => RunConfig::full_scale(),
        _ => RunConfig::default(),
    };
    if let Some(path) = &cli.common.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_text(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    }
    cfg.apply_overrides(&cli.common.set)?;
    set(&mut cfg, "seed", cli.common.seed)?;
    set(&mut cfg, "paths.out", cli.common.out.clone())?;
    match &cli.command {
        Command::GenData(g) => {
            set(&mut cfg, "data.images", g.num)?;
            set(&mut cfg, "data.scene.height", g.size.map(|s| s.0))?;
            set(&mut cfg, "data.scene.width", g.size.map(|s| s.1))?;
        }
        Command::PretrainDcgan(s) => stage_flags(&mut cfg, "dcgan", s)?,
        Command::PretrainEncoder(s) => stage_flags(&mut cfg, "encoder", s)?,
        Command::Baseline(s) => stage_flags(&mut cfg, "baseline", s)?,
        Command::Train(t) => {
            stage_flags(&mut cfg, "train", &t.stage)?;
            set(&mut cfg, "paths.val_data", t.val_data.clone())?;
            set(&mut cfg, "paths.discriminator", t.discriminator.clone())?;
            set(&mut cfg, "paths.encoder", t.encoder.clone())?;
            set(&mut cfg, "train.lambda", t.lambda)?;
        }
        Command::GridSearch(g) => {
            set(&mut cfg, "paths.data", g.data.clone())?;
            set(&mut cfg, "paths.val_data", g.val_data.clone())?;
            set(&mut cfg, "paths.encoder", g.encoder.clone())?;
            set(&mut cfg, "grid.lambdas", g.lambdas.clone())?;
            set(&mut cfg, "grid.dilations", g.dilations.clone())?;
            set(&mut cfg, "grid.epochs", g.epochs)?;
        }
        Command::Infer(i) => {
            set(&mut cfg, "paths.model", i.model.clone())?;
            set(&mut cfg, "paths.image", i.image.clone())?;
            set(&mut cfg, "detect.threshold", i.threshold)?;
            set(&mut cfg, "detect.min_area", i.min_area)?;
        }
        Command::Eval(e) => {
            set(&mut cfg, "paths.pred", e.pred.clone())?;
            set(&mut cfg, "paths.gt", e.gt.clone())?;
            set(&mut cfg, "paths.report", e.report.clone())?;
            set(&mut cfg, "eval.saturation", e.saturation)?;
            set(&mut cfg, "eval.cell", e.cell)?;
            if e.iou {
                cfg.eval.iou = true;
            }
        }
        Command::RfCalc => {}
    }
    Ok(cfg)
}

fn stage_flags(cfg: &mut RunConfig, section: &str, s: &Stage) -> Result<()> {
    set(cfg, "paths.data", s.data.clone())?;
    set(cfg, "paths.resume", s.resume.clone())?;
    set(cfg, &format!("{section}.epochs"), s.epochs)?;
    set(cfg, &format!("{section}.batch_size"), s.batch_size)?;
    set(cfg, &format!("{section}.adam.learning_rate"), s.lr)?;
    set(cfg, "data.dilation_times", s.dilation)
}

fn required<'a>(v: &'a Option<PathBuf>, flag: &str, key: &str) -> std::result::Result<&'a Path, Failure> {
    v.as_deref()
        .ok_or_else(|| Failure::Usage(format!("missing {flag} (config key `{key}`)")))
}

fn execute(cli: Cli) -> Outcome {
    let cfg = resolve(&cli)?;
    match &cli.command {
        Command::GenData(g) => gen_data(&cfg, g.split.into()),
        Command::PretrainDcgan(_) => pretrain_dcgan(&cfg),
        Command::PretrainEncoder(_) => pretrain_encoder(&cfg),
        Command::Train(_) => train(&cfg),
        Command::Baseline(_) => baseline(&cfg),
        Command::GridSearch(_) => grid_search(&cfg),
        Command::Infer(_) => infer(&cfg),
        Command::Eval(_) => eval(&cfg),
        Command::RfCalc => rf_calc(&cfg),
    }
}

fn out_dir(cfg: &RunConfig) -> std::result::Result<PathBuf, Failure> {
    Ok(output_path(required(&cfg.paths.out, "--out", "paths.out")?))
}

/// `<out>/<stage>-<unix seconds>-seed<seed>`, created with the config snapshot.
fn run_dir(cfg: &RunConfig, stage: &str) -> std::result::Result<PathBuf, Failure> {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let base = format!("{stage}-{secs}-seed{}", cfg.seed);
    let root = out_dir(cfg)?;
    let mut dir = root.join(&base);
    let mut n = 1;
    while dir.exists() {
        n += 1;
        dir = root.join(format!("{base}-{n}"));
    }
    cfg.write_snapshot(&dir, stage)?;
    println!("run directory: {}", dir.display());
    Ok(dir)
}

fn gen_data(cfg: &RunConfig, split: Split) -> Outcome {
    let dir = out_dir(cfg)?;
    let m = write_dataset(&dir, &cfg.data.scene, cfg.seed, split, cfg.data.images)?;
    cfg.write_snapshot(&dir, "gen-data")?;
    println!("wrote {} {} scenes to {}", m.entries.len(), split.name(), dir.display());
    Ok(())
}

fn train_samples(cfg: &RunConfig) -> Result<Vec<Sample>> {
    match &cfg.paths.data {
        Some(dir) => read_dataset(dir),
        None => synthesize(&cfg.data.scene, cfg.seed, Split::Train, cfg.data.images),
    }
}

fn val_samples(cfg: &RunConfig) -> Result<Vec<Sample>> {
    match &cfg.paths.val_data {
        Some(dir) => read_dataset(dir),
        None => synthesize(&cfg.data.scene, cfg.seed, Split::Val, cfg.data.val_images),
    }
}

/// Appends training rows to `<dir>/train_log.csv`.
struct TrainLog {
    path: PathBuf,
    writer: csv::Writer<std::fs::File>,
    error: Option<Error>,
}

impl TrainLog {
    fn create(dir: &Path) -> Result<Self> {
        let path = dir.join("train_log.csv");
        let writer = csv::Writer::from_path(&path).map_err(|source| Error::Csv {
            path: path.clone(),
            source,
        })?;
        Ok(TrainLog {
            path,
            writer,
            error: None,
        })
    }

    fn push(&mut self, row: &LogRow) {
        if self.error.is_none() {
            if let Err(source) = self.writer.serialize(row) {
                self.error = Some(Error::Csv {
                    path: self.path.clone(),
                    source,
                });
            }
        }
    }

    fn flush(&mut self) -> Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn progress(stage: &str, epoch: u64, epochs: usize, start: Instant, extra: &str) {
    println!("{stage}: epoch {epoch}/{epochs} {extra}({:.0}s)", start.elapsed().as_secs_f64());
}

fn resume_state(cfg: &RunConfig, stage: &str) -> Result<Option<Checkpoint<F>>> {
    let Some(path) = &cfg.paths.resume else { return Ok(None) };
    let ck = Checkpoint::<F>::load(path)?;
    match &ck.training {
        Some(t) if t.stage == stage => Ok(Some(ck)),
        Some(t) => Err(Error::Config(format!("{} holds a `{}` run, not `{stage}`", path.display(), t.stage))),
        None => Err(Error::Config(format!("{} holds no training state", path.display()))),
    }
}

fn pretrain_dcgan(cfg: &RunConfig) -> Outcome {
    let samples = train_samples(cfg)?;
    let pairs = pipeline::cpo_pairs(&samples, cfg, cfg.data.dilation_times)?;
    let patches = pipeline::discriminator_patches(&pairs, cfg.data.augment);
    let mut tc = cfg.dcgan;
    tc.seed = cfg.seed;
    let mut t = match resume_state(cfg, "dcgan")? {
        Some(ck) => {
            let state = ck.training.as_ref().expect("checked").state;
            let opts = (ck.optimizer("dcgan_generator")?, ck.optimizer("discriminator")?);
            DcganTrainer::resume(
                ck.network::<DcganGenerator<F>>("dcgan_generator")?,
                ck.network::<Discriminator<F>>("discriminator")?,
                Some(opts),
                tc,
                state,
                &patches,
            )
            .map_err(Error::from)?
        }
        None => DcganTrainer::new(&cfg.arch, tc, &patches).map_err(Error::from)?,
    };
    let dir = run_dir(cfg, "dcgan")?;
    println!("{} real patches", patches.len());
    let mut log = TrainLog::create(&dir)?;
    let start = Instant::now();
    let ckpt = dir.join("dcgan.ckpt");
    while t.state.epoch < tc.epochs as u64 {
        t.run_epoch(&mut |r| log.push(r)).map_err(Error::from)?;
        log.flush()?;
        Checkpoint::new()
            .with_network("discriminator", &t.discriminator)
            .with_network("dcgan_generator", &t.generator)
            .with_optimizer("discriminator", &t.opt_d)
            .with_optimizer("dcgan_generator", &t.opt_g)
            .with_training("dcgan", t.config, t.state)
            .save(&ckpt)?;
        progress("dcgan", t.state.epoch, tc.epochs, start, "");
    }
    println!("discriminator checkpoint: {}", ckpt.display());
    Ok(())
}

fn pretrain_encoder(cfg: &RunConfig) -> Outcome {
    let samples = train_samples(cfg)?;
    let (images, labels) = pipeline::encoder_patches(&samples, cfg)?;
    let mut tc = cfg.encoder;
    tc.seed = cfg.seed;
    let mut t = match resume_state(cfg, "encoder")? {
        Some(ck) => EncoderTrainer::resume(
            ck.network::<EncoderClassifier<F>>("encoder")?,
            Some(ck.optimizer("encoder")?),
            tc,
            ck.training.as_ref().expect("checked").state,
            &images,
            &labels,
        )
        .map_err(Error::from)?,
        None => EncoderTrainer::new(&cfg.arch, tc, &images, &labels).map_err(Error::from)?,
    };
    let dir = run_dir(cfg, "encoder")?;
    println!("{} labelled windows", images.len());
    let mut log = TrainLog::create(&dir)?;
    let start = Instant::now();
    let ckpt = dir.join("encoder.ckpt");
    while t.state.epoch < tc.epochs as u64 {
        t.run_epoch(&mut |r| log.push(r)).map_err(Error::from)?;
        log.flush()?;
        Checkpoint::new()
            .with_network("encoder", &t.net)
            .with_optimizer("encoder", &t.opt)
            .with_training("encoder", t.config, t.state)
            .save(&ckpt)?;
        let acc = t.accuracy(&images, &labels).map_err(Error::from)?;
        progress("encoder", t.state.epoch, tc.epochs, start, &format!("train accuracy {acc:.3} "));
    }
    println!("encoder checkpoint: {}", ckpt.display());
    Ok(())
}

fn save_generator_run(dir: &Path, stage: &str, t: &GeneratorTrainer<F>) -> Result<()> {
    let mut ck = Checkpoint::new()
        .with_network("generator", &t.generator)
        .with_optimizer("generator", &t.opt_g)
        .with_training(stage, t.config, t.state);
    if let Some(best) = &t.best {
        ck = ck.with_network("best_generator", best);
    }
    if let Some(d) = &t.discriminator {
        ck = ck.with_network("discriminator", d);
    }
    ck.save(&dir.join("checkpoint.ckpt"))?;
    Checkpoint::new()
        .with_network("generator", t.best_generator())
        .save(&dir.join("generator.ckpt"))
}

fn restore_generator_run(t: &mut GeneratorTrainer<F>, ck: &Checkpoint<F>) -> Result<()> {
    let state = ck.training.as_ref().expect("checked").state;
    let best = if ck.has("best_generator") {
        Some(ck.network("best_generator")?)
    } else {
        None
    };
    t.generator = ck.network("generator")?;
    t.restore(ck.optimizer("generator")?, None, state, best);
    Ok(())
}

fn run_generator_stage(cfg: &RunConfig, stage: &str, mut t: GeneratorTrainer<F>, val: &[Sample]) -> Outcome {
    if let Some(ck) = resume_state(cfg, stage)? {
        restore_generator_run(&mut t, &ck)?;
    }
    let dir = run_dir(cfg, stage)?;
    let log = RefCell::new(TrainLog::create(&dir)?);
    let start = Instant::now();
    let epochs = t.config.epochs;
    pipeline::continue_training(&mut t, cfg, val, &mut |r| log.borrow_mut().push(r), &mut |t| {
        log.borrow_mut().flush()?;
        save_generator_run(&dir, stage, t)?;
        let score = match t.state.best_score {
            Some(s) => format!("best validation HD-score {s:.2} at epoch {} ", t.state.best_epoch.unwrap_or(0)),
            None => String::new(),
        };
        progress(stage, t.state.epoch, epochs, start, &score);
        Ok(())
    })?;
    println!("generator checkpoint: {}", dir.join("generator.ckpt").display());
    Ok(())
}

fn train(cfg: &RunConfig) -> Outcome {
    let d_path = required(&cfg.paths.discriminator, "--discriminator", "paths.discriminator")?;
    let d: Discriminator<F> = Checkpoint::<F>::load(d_path)?.network("discriminator")?;
    let encoder: Option<EncoderClassifier<F>> = match &cfg.paths.encoder {
        Some(p) => Some(Checkpoint::<F>::load(p)?.network("encoder")?),
        None => None,
    };
    let samples = train_samples(cfg)?;
    let val = val_samples(cfg)?;
    let pairs = pipeline::cpo_pairs(&samples, cfg, cfg.data.dilation_times)?;
    println!("{} crack patches, {} validation scenes", pairs.len(), val.len());
    let mut tc = cfg.train;
    tc.seed = cfg.seed;
    let (g, copied) = crackgan_core::training::init_generator(&cfg.arch, cfg.seed, encoder.as_ref()).map_err(Error::from)?;
    if encoder.is_some() {
        println!("initialised {copied} encoder tensors from the pretrained classifier");
    }
    let t = GeneratorTrainer::end_to_end(g, Some(d), tc, &pairs).map_err(Error::from)?;
    run_generator_stage(cfg, "train", t, &val)
}

fn baseline(cfg: &RunConfig) -> Outcome {
    let samples = train_samples(cfg)?;
    let pairs = pipeline::baseline_pairs(&samples, cfg)?;
    println!("{} windows, crack pixel share {:.5}", pairs.len(), pipeline::crack_fraction(&pairs));
    let mut tc = cfg.baseline;
    tc.seed = cfg.seed;
    let g = AsymmetricUNet::symmetric(
        &cfg.arch,
        &mut crackgan_core::rng::stream(cfg.seed, crackgan_core::rng::Purpose::Init, &[4]),
    )
    .map_err(Error::from)?;
    let t = GeneratorTrainer::baseline(g, tc, &pairs).map_err(Error::from)?;
    run_generator_stage(cfg, "baseline", t, &[])
}

fn grid_search(cfg: &RunConfig) -> Outcome {
    let encoder: Option<EncoderClassifier<F>> = match &cfg.paths.encoder {
        Some(p) => Some(Checkpoint::<F>::load(p)?.network("encoder")?),
        None => None,
    };
    let samples = train_samples(cfg)?;
    let val = val_samples(cfg)?;
    let dir = run_dir(cfg, "grid")?;
    let start = Instant::now();
    let board = pipeline::run_grid(cfg, &samples, &val, encoder.as_ref(), &mut |c| {
        println!(
            "lambda {} dilation {}: HD-score {:.2} ({:.0}s)",
            c.lambda,
            c.dilation,
            c.score,
            start.elapsed().as_secs_f64()
        );
    })?;
    gridboard::emit_gridboard(&board, &dir)?;
    if let Some((i, j, s)) = board.best() {
        println!("best cell: lambda {} dilation {} HD-score {s:.2}", board.lambdas[i], board.dilations[j]);
    }
    Ok(())
}

#[derive(Serialize)]
struct ComponentsFile<'a> {
    image: String,
    height: usize,
    width: usize,
    components: &'a [crackgan_core::postprocess::Component],
}

fn infer(cfg: &RunConfig) -> Outcome {
    let model = required(&cfg.paths.model, "--model", "paths.model")?;
    let input = required(&cfg.paths.image, "--image", "paths.image")?;
    let g: AsymmetricUNet<F> = Checkpoint::<F>::load(model)?.network("generator")?;
    let images = if input.is_dir() {
        report::list_pngs(input)?
    } else {
        vec![input.to_path_buf()]
    };
    let dir = out_dir(cfg)?;
    for sub in ["maps", "masks", "components"] {
        io::create_dir(&dir.join(sub))?;
    }
    cfg.write_snapshot(&dir, "infer")?;
    for path in images {
        let start = Instant::now();
        let image = io::read_gray_png(&path)?;
        let det = detect(&g, &image, &cfg.detect).map_err(Error::from)?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        io::write_map_png(&dir.join("maps").join(format!("{stem}.png")), &det.map)?;
        io::write_mask_png(&dir.join("masks").join(format!("{stem}.png")), &det.mask)?;
        io::write_json(
            &dir.join("components").join(format!("{stem}.json")),
            &ComponentsFile {
                image: path.display().to_string(),
                height: image.height(),
                width: image.width(),
                components: &det.components,
            },
        )?;
        println!(
            "{}: {} components, {} crack pixels ({:.2}s)",
            path.display(),
            det.components.len(),
            det.mask.popcount(),
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}

fn eval(cfg: &RunConfig) -> Outcome {
    let pred = required(&cfg.paths.pred, "--pred", "paths.pred")?;
    let gt = required(&cfg.paths.gt, "--gt", "paths.gt")?;
    let report_path = output_path(required(&cfg.paths.report, "--report", "paths.report")?);
    let r = report::evaluate_dataset(pred, gt, &cfg.eval)?;
    let dir = match report_path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    io::create_dir(&dir)?;
    report::write_report_json(&report_path, &r)?;
    report::write_report_csv(&report_path.with_extension("csv"), &r)?;
    cfg.write_snapshot(&dir, "eval")?;
    for s in &r.skipped {
        eprintln!("warning: skipped {s}");
    }
    let label = pred.file_name().map_or_else(|| String::from("prediction"), |n| n.to_string_lossy().into_owned());
    print!("{}", report::summary_table(&[(label.as_str(), &r)]));
    Ok(())
}

fn rf_calc(cfg: &RunConfig) -> Outcome {
    let mut rng = crackgan_core::rng::stream(0, crackgan_core::rng::Purpose::Init, &[]);
    for (name, net) in [
        ("asymmetric", AsymmetricUNet::<F>::new(&cfg.arch, &mut rng).map_err(Error::from)?),
        ("symmetric", AsymmetricUNet::<F>::symmetric(&cfg.arch, &mut rng).map_err(Error::from)?),
    ] {
        let enc = receptive_field(&net.encoder).map_err(Error::from)?;
        let full = net.receptive_field().map_err(Error::from)?;
        println!("{name} generator");
        println!("  encoder: {}", spec_names(&net.encoder));
        println!("  decoder: {}", spec_names(&net.decoder));
        println!("  encoder receptive field {} px, stride {} px", enc.size, enc.stride);
        println!("  output receptive field {} px", full.size);
        println!(
            "  {0}x{0} input -> {1}x{1} output",
            cfg.arch.patch,
            cfg.arch.patch / net.output_factor()
        );
    }
    if let Some(out) = &cfg.paths.out {
        cfg.write_snapshot(&output_path(out), "rf-calc")?;
    }
    Ok(())
}
