//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any fails. Arguments, when given, select criteria by key substring
//! (`cargo test --test acceptance -- grid`).
//!
//! The training criteria run at desk scale on one CPU core and take about an
//! hour together.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::time::{Duration, Instant};

use crackgan::config::RunConfig;
use crackgan::dataset::{synthesize, Sample, Split};
use crackgan::gridboard::emit_gridboard;
use crackgan::pipeline::{self, F};
use crackgan_core::inference::{detect, sliding_window_reference, window_interior};
use crackgan_core::losses::{
    adversarial_loss, cross_entropy, dcgan_d_objective, dcgan_g_objective, pixel_l1_loss_with, PixelReduction,
};
use crackgan_core::metrics::{penalty_hp, region_counts, region_prf, score_bh, PointSet, RegionCounts};
use crackgan_core::networks::{ArchConfig, AsymmetricUNet, DcganGenerator, Discriminator, EncoderClassifier};
use crackgan_core::nn::{Graph, LayerKind, Mode};
use crackgan_core::rng::{stream, Purpose};
use crackgan_core::synth::{dilate_mask, generate_background};
use crackgan_core::{GrayImage, GtMask, Tensor};
use rand::Rng;

// Pinned thresholds.
const METRIC_PAIRS: usize = 1000;
const METRIC_MAX_POINTS: usize = 200;
const METRIC_BUDGET: Duration = Duration::from_secs(60);
const SHAPE_SIZES: usize = 20;
const SHAPE_BUDGET: Duration = Duration::from_secs(60);
const GRAD_STEP: f64 = 1e-3;
const GRAD_TOL: f64 = 1e-3;
const GRAD_MIN_SAMPLES: usize = 20;
const GRAD_BUDGET: Duration = Duration::from_secs(5 * 60);
const MORPH_MASKS: usize = 100;
const SEEDS: [u64; 3] = [1, 2, 3];
const MIN_GAP: f64 = 0.5;
const MIN_RANKING: f64 = 0.95;
const SEPARATION_BUDGET: Duration = Duration::from_secs(2 * 3600);
const BASELINE_MAX_LOSS: f64 = 0.05;
const BASELINE_LOSS_TAIL: usize = 20;
const BASELINE_MAX_RECALL: f64 = 0.05;
const CRACKGAN_MIN_RECALL: f64 = 0.8;
const CRACKGAN_MIN_HD: f64 = 80.0;
const ALL_BLACK_BUDGET: Duration = Duration::from_secs(2 * 3600);
const FCN_IMAGES: usize = 5;
const FCN_SIZE: (usize, usize) = (1024, 2048);
const FCN_WINDOW: usize = 256;
const FCN_STRIDE: usize = 128;
const FCN_TOL: f32 = 1e-4;
const FCN_MIN_SPEEDUP: f64 = 2.0;
const GRID_LOW_DILATION: usize = 1;
const GRID_LOW_MAX: f64 = 40.0;
const GRID_GOOD_LAMBDA: (f64, f64) = (0.15, 0.4);
const GRID_GOOD_DILATION: (usize, usize) = (3, 7);
const GRID_GOOD_MIN: f64 = 80.0;
const GRID_BUDGET: Duration = Duration::from_secs(4 * 3600);
/// The grid scenes draw their annotations up to 6 px off the crack, so that a
/// barely dilated label no longer covers the crack it marks.
const GRID_ANNOTATION_OFFSET: usize = 6;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

fn report(title: &str, v: &Verdict, elapsed: Duration) -> bool {
    let line = format!(
        "{} {title}: {} [{:.1}s]\n",
        if v.pass { "PASS" } else { "FAIL" },
        v.detail,
        elapsed.as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    v.pass
}

fn note(msg: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "  {msg}");
}

fn within(budget: Duration, elapsed: Duration) -> (bool, String) {
    (elapsed <= budget, format!("runtime {:.0}s (budget {:.0}s)", elapsed.as_secs_f64(), budget.as_secs_f64()))
}

// ---------------------------------------------------------------- metrics

fn oracle_hp(a: &BTreeSet<(usize, usize)>, b: &BTreeSet<(usize, usize)>, u: f64) -> f64 {
    let mut sum = 0.0;
    for &(ar, ac) in a {
        let mut best = f64::INFINITY;
        for &(br, bc) in b {
            let (dr, dc) = (ar as f64 - br as f64, ac as f64 - bc as f64);
            best = best.min((dr * dr + dc * dc).sqrt());
        }
        sum += best.min(u);
    }
    sum / a.len() as f64
}

fn oracle_score(a: &BTreeSet<(usize, usize)>, b: &BTreeSet<(usize, usize)>, u: f64) -> (f64, bool) {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => (100.0, false),
        (true, false) => (0.0, true),
        (false, true) => (0.0, false),
        _ => (100.0 - oracle_hp(a, b, u).max(oracle_hp(b, a, u)) / u * 100.0, false),
    }
}

fn random_points(rng: &mut impl Rng, side: usize) -> BTreeSet<(usize, usize)> {
    let n = rng.random_range(0..=METRIC_MAX_POINTS);
    (0..n).map(|_| (rng.random_range(0..side), rng.random_range(0..side))).collect()
}

fn mask_with(h: usize, w: usize, pts: &[(usize, usize)]) -> GtMask {
    GtMask::from_points(h, w, pts).unwrap()
}

fn metric_oracles() -> Verdict {
    let start = Instant::now();
    let mut rng = stream(2024, Purpose::Noise, &[1]);
    let mut mismatches = 0;
    let mut empties = 0;
    for i in 0..METRIC_PAIRS {
        let side = rng.random_range(8..=300usize);
        let a = random_points(&mut rng, side);
        let b = random_points(&mut rng, side);
        let u = if i % 4 == 3 { 20.0 } else { 50.0 };
        let pa = PointSet::new(a.iter().copied().collect());
        let pb = PointSet::new(b.iter().copied().collect());
        if a.is_empty() || b.is_empty() {
            empties += 1;
        }
        if !a.is_empty() && penalty_hp(&pa, &pb, u).unwrap() != oracle_hp(&a, &b, u) {
            mismatches += 1;
        }
        if !b.is_empty() && penalty_hp(&pb, &pa, u).unwrap() != oracle_hp(&b, &a, u) {
            mismatches += 1;
        }
        let got = score_bh(&pa, &pb, u).unwrap();
        if (got.score, got.all_black) != oracle_score(&a, &b, u) {
            mismatches += 1;
        }
    }

    // Region fixtures, counted by hand.
    let mut fixtures = Vec::new();
    // 200x200 frame, 4x4 cells of 50: ten ground-truth cells, nine of them hit,
    // plus one predicted cell without ground truth.
    let gt_cells = [(0, 0), (0, 1), (0, 3), (1, 1), (1, 2), (2, 0), (2, 2), (3, 1), (3, 2), (3, 3)];
    let in_cell = |(r, c): (usize, usize), k: usize| (r * 50 + (7 * k + 3) % 50, c * 50 + (11 * k + 5) % 50);
    let gt: Vec<_> = gt_cells.iter().enumerate().map(|(k, &rc)| in_cell(rc, k)).collect();
    let mut pred: Vec<_> = gt_cells[..9].iter().enumerate().map(|(k, &rc)| in_cell(rc, k + 20)).collect();
    pred.push(in_cell((1, 0), 3));
    let counts = region_counts(&mask_with(200, 200, &pred), &mask_with(200, 200, &gt), 50).unwrap();
    let prf = region_prf(counts);
    fixtures.push(counts == RegionCounts { tp: 9, fp: 1, fn_: 1 });
    fixtures.push(prf.precision == 0.9 && prf.recall == 0.9 && (prf.f1 - 0.9).abs() < 1e-12);
    // 400x400 holds 64 cells: one pixel in every cell, predicted in every other row of cells.
    let every: Vec<_> = (0..8).flat_map(|r| (0..8).map(move |c| (r * 50 + 25, c * 50 + 25))).collect();
    let half: Vec<_> = every.iter().copied().filter(|p| (p.0 / 50) % 2 == 0).collect();
    let c = region_counts(&mask_with(400, 400, &half), &mask_with(400, 400, &every), 50).unwrap();
    fixtures.push(c == RegionCounts { tp: 32, fp: 0, fn_: 32 });
    let p = region_prf(c);
    fixtures.push(p.precision == 1.0 && p.recall == 0.5 && (p.f1 - 2.0 / 3.0).abs() < 1e-12);
    // Trailing partial cells count: 120x120 with cell 50 is 3x3 cells.
    let corner = region_counts(&mask_with(120, 120, &[(119, 119)]), &mask_with(120, 120, &[(101, 118)]), 50).unwrap();
    fixtures.push(corner == RegionCounts { tp: 1, fp: 0, fn_: 0 });
    let edge = region_counts(&mask_with(120, 120, &[(99, 119)]), &mask_with(120, 120, &[(100, 119)]), 50).unwrap();
    fixtures.push(edge == RegionCounts { tp: 0, fp: 1, fn_: 1 });
    // Empty pair: every rate undefined and reported as 0.
    let e = region_prf(RegionCounts { tp: 0, fp: 0, fn_: 0 });
    fixtures.push(e.precision_undefined && e.recall_undefined && e.f1_undefined && e.f1 == 0.0);
    let same = region_prf(region_counts(&mask_with(200, 200, &gt), &mask_with(200, 200, &gt), 50).unwrap());
    fixtures.push(same.precision == 1.0 && same.recall == 1.0 && same.f1 == 1.0);
    let fixtures_ok = fixtures.iter().filter(|&&f| f).count();

    let (fast, time) = within(METRIC_BUDGET, start.elapsed());
    Verdict::new(
        mismatches == 0 && fixtures_ok == fixtures.len() && fast,
        format!(
            "{METRIC_PAIRS} random pairs ({empties} with an empty side), {mismatches} mismatches against the double loop; \
             region fixtures {fixtures_ok}/{}; {time}",
            fixtures.len()
        ),
    )
}

// ---------------------------------------------------------------- shapes

fn shape_laws() -> Verdict {
    let start = Instant::now();
    let arch = RunConfig::default().arch;
    let g = AsymmetricUNet::<F>::new(&arch, &mut stream(5, Purpose::Init, &[])).unwrap();
    let mut failures = Vec::new();
    let y = g.forward(&Tensor::zeros([1, 1, 256, 256])).unwrap();
    if y.shape() != [1, 1, 128, 128] {
        failures.push(format!("256x256 gave {:?}", y.shape()));
    }
    let mut rng = stream(6, Purpose::Noise, &[]);
    let mut sizes = Vec::new();
    for i in 0..SHAPE_SIZES {
        let h = 2 * rng.random_range(32..=200usize);
        let w = 2 * rng.random_range(32..=200usize);
        sizes.push((h, w));
        let img = generate_background(h, w, i as u64, 1.0).unwrap();
        let map = g.translate(&img).unwrap();
        if (map.height(), map.width()) != (h / 2, w / 2) {
            failures.push(format!("{h}x{w} gave map {}x{}", map.height(), map.width()));
        }
        let det = detect(&g, &img, &Default::default()).unwrap();
        if (det.mask.height(), det.mask.width()) != (h, w) {
            failures.push(format!("{h}x{w} gave mask {}x{}", det.mask.height(), det.mask.width()));
        }
    }
    let (fast, time) = within(SHAPE_BUDGET, start.elapsed());
    let detail = if failures.is_empty() {
        format!("256x256 -> 128x128; {SHAPE_SIZES} random even sizes from {:?} to {:?} map to half size and detect keeps the input size; {time}",
            sizes.iter().min().unwrap(), sizes.iter().max().unwrap())
    } else {
        format!("{}; {time}", failures.join("; "))
    };
    Verdict::new(failures.is_empty() && fast, detail)
}

// ---------------------------------------------------------------- gradients

fn random_tensor(shape: [usize; 4], seed: u64) -> Tensor<f64> {
    let mut rng = stream(seed, Purpose::Noise, &[9]);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Probe value `sum(r * f(x))` and the sign pattern of every rectifier input.
fn probe(graph: &Graph<f64>, x: &Tensor<f64>, mode: Mode, r: &[f64]) -> (f64, Vec<bool>) {
    let tape = graph.forward_tape(x, mode).unwrap();
    let mut signs = Vec::new();
    for node in graph.nodes() {
        if matches!(node.spec.kind, LayerKind::Relu | LayerKind::LeakyRelu) {
            signs.extend(tape.activation(node.input).data().iter().map(|&v| v > 0.0));
        }
    }
    (tape.output().data().iter().zip(r).map(|(a, b)| a * b).sum(), signs)
}

#[derive(Default)]
struct GradTally {
    checked: usize,
    skipped: usize,
    worst: f64,
}

/// Central differences of parameters and inputs; samples whose difference
/// straddles a rectifier kink are skipped and counted.
fn check_graph(graph: &mut Graph<f64>, x: &Tensor<f64>, mode: Mode, per_tensor: usize, seed: u64) -> GradTally {
    let tape = graph.forward_tape(x, mode).unwrap();
    let r = random_tensor(tape.output().shape(), seed + 100);
    let (_, base) = probe(graph, x, mode, r.data());
    let mut grads = graph.zero_grads();
    let gx = graph.backward(&tape, &r, Some(&mut grads));
    let mut rng = stream(seed, Purpose::Shuffle, &[]);
    let mut t = GradTally::default();
    let mut compare = |analytic: f64, up: (f64, Vec<bool>), down: (f64, Vec<bool>)| {
        if up.1 != base || down.1 != base {
            t.skipped += 1;
            return;
        }
        let numeric = (up.0 - down.0) / (2.0 * GRAD_STEP);
        let e = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
        t.checked += 1;
        t.worst = t.worst.max(e);
    };
    for pi in 0..graph.params().len() {
        let len = graph.params()[pi].value.len();
        for _ in 0..per_tensor.min(len) {
            let j = rng.random_range(0..len);
            let orig = graph.params()[pi].value[j];
            graph.params_mut()[pi].value[j] = orig + GRAD_STEP;
            let up = probe(graph, x, mode, r.data());
            graph.params_mut()[pi].value[j] = orig - GRAD_STEP;
            let down = probe(graph, x, mode, r.data());
            graph.params_mut()[pi].value[j] = orig;
            compare(grads.values[pi][j], up, down);
        }
    }
    for _ in 0..per_tensor {
        let j = rng.random_range(0..x.len());
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp.data_mut()[j] += GRAD_STEP;
        xm.data_mut()[j] -= GRAD_STEP;
        let (up, down) = (probe(graph, &xp, mode, r.data()), probe(graph, &xm, mode, r.data()));
        compare(gx.data()[j], up, down);
    }
    t
}

fn numeric(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let (mut up, mut down) = (x.to_vec(), x.to_vec());
            up[i] += GRAD_STEP;
            down[i] -= GRAD_STEP;
            (f(&up) - f(&down)) / (2.0 * GRAD_STEP)
        })
        .collect()
}

fn vec_err(a: &[f64], n: &[f64]) -> f64 {
    let diff = a.iter().zip(n).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(n.iter().map(|x| x * x).sum::<f64>().sqrt());
    diff / scale.max(1e-7)
}

fn gradient_checks() -> Verdict {
    let start = Instant::now();
    let mini = ArchConfig { base_width: 8, patch: 64, z_dim: 8 };
    let mut rows: Vec<(String, f64, usize, usize)> = Vec::new();
    let mut net = |name: &str, graph: &mut Graph<f64>, x: Tensor<f64>, mode: Mode, seed: u64| {
        let t = check_graph(graph, &x, mode, 6, seed);
        rows.push((name.to_string(), t.worst, t.checked, t.skipped));
    };
    let mut g = AsymmetricUNet::<f64>::new(&mini, &mut stream(1, Purpose::Init, &[])).unwrap();
    net("detector", &mut g.graph, random_tensor([2, 1, 64, 64], 2), Mode::Train, 3);
    let mut d = Discriminator::<f64>::new(&mini, &mut stream(7, Purpose::Init, &[])).unwrap();
    net("discriminator(train)", &mut d.graph, random_tensor([3, 1, 32, 32], 8), Mode::Train, 9);
    net("discriminator(eval)", &mut d.graph, random_tensor([3, 1, 32, 32], 8), Mode::Eval, 10);
    let mut s = AsymmetricUNet::<f64>::symmetric(&mini, &mut stream(4, Purpose::Init, &[])).unwrap();
    net("symmetric", &mut s.graph, random_tensor([1, 1, 64, 64], 5), Mode::Train, 6);
    let mut dg = DcganGenerator::<f64>::new(&mini, &mut stream(11, Purpose::Init, &[])).unwrap();
    net("dcgan-generator", &mut dg.graph, random_tensor([3, 8, 1, 1], 12), Mode::Train, 13);
    let mut ec = EncoderClassifier::<f64>::new(&mini, &mut stream(14, Purpose::Init, &[])).unwrap();
    net("encoder-classifier", &mut ec.graph, random_tensor([2, 1, 64, 64], 15), Mode::Train, 16);

    let mut losses: Vec<(&str, f64)> = Vec::new();
    let p = [0.05, 0.5, 0.9, 0.3];
    let (_, ga) = adversarial_loss(&p).unwrap();
    losses.push(("adversarial", vec_err(&ga, &numeric(|q| adversarial_loss(q).unwrap().0.total, &p))));
    let y = random_tensor([2, 1, 4, 4], 20);
    let x = random_tensor([2, 1, 4, 4], 21);
    for (name, red) in [("pixel(mean)", PixelReduction::PerPixelMean), ("pixel(sum)", PixelReduction::PerImageSum)] {
        let (_, gp) = pixel_l1_loss_with(&x, &y, red).unwrap();
        let f = |v: &[f64]| pixel_l1_loss_with(&Tensor::from_vec(x.shape(), v.to_vec()).unwrap(), &y, red).unwrap().0.pixel;
        losses.push((name, vec_err(gp.data(), &numeric(f, x.data()))));
    }
    let (real, fake) = ([0.2, 0.7, 0.95], [0.1, 0.4]);
    let (_, gr, gf) = dcgan_d_objective(&real, &fake).unwrap();
    losses.push(("dcgan-d(real)", vec_err(&gr, &numeric(|r| dcgan_d_objective(r, &fake).unwrap().0.total, &real))));
    losses.push(("dcgan-d(fake)", vec_err(&gf, &numeric(|f| dcgan_d_objective(&real, f).unwrap().0.total, &fake))));
    let (_, gg) = dcgan_g_objective(&fake).unwrap();
    losses.push(("dcgan-g", vec_err(&gg, &numeric(|f| dcgan_g_objective(f).unwrap().0.total, &fake))));
    let (logits, labels) = ([0.3, -1.2, 2.0, 0.5, -0.1, 0.0], [0, 1, 0]);
    let (_, gc) = cross_entropy(&logits, &labels, 2).unwrap();
    losses.push(("cross-entropy", vec_err(&gc, &numeric(|l| cross_entropy(l, &labels, 2).unwrap().0, &logits))));

    let nets_ok = rows.iter().all(|r| r.1 < GRAD_TOL && r.2 >= GRAD_MIN_SAMPLES);
    let losses_ok = losses.iter().all(|l| l.1 < GRAD_TOL);
    let (fast, time) = within(GRAD_BUDGET, start.elapsed());
    let worst_net = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let worst_loss = losses.iter().map(|l| l.1).fold(0.0, f64::max);
    let checked: usize = rows.iter().map(|r| r.2).sum();
    let skipped: usize = rows.iter().map(|r| r.3).sum();
    for r in &rows {
        note(&format!("{}: worst {:.2e} over {} samples ({} at kinks)", r.0, r.1, r.2, r.3));
    }
    for l in &losses {
        note(&format!("{}: {:.2e}", l.0, l.1));
    }
    Verdict::new(
        nets_ok && losses_ok && fast,
        format!(
            "{} networks, worst relative error {worst_net:.2e} over {checked} samples ({skipped} skipped at kinks); \
             {} losses, worst {worst_loss:.2e}; tolerance {GRAD_TOL:.0e}; {time}",
            rows.len(),
            losses.len()
        ),
    )
}

// ---------------------------------------------------------------- morphology

/// Pull-style dilation: a pixel is set when any disk offset lands on a set pixel.
fn oracle_dilate(mask: &GtMask, radius: usize, times: usize) -> GtMask {
    let r = radius as i64;
    let mut cur = mask.clone();
    for _ in 0..times {
        let mut next = GtMask::empty(cur.height(), cur.width());
        for row in 0..cur.height() as i64 {
            for col in 0..cur.width() as i64 {
                let mut hit = false;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (y, x) = (row + dy, col + dx);
                        if dy * dy + dx * dx <= r * r
                            && y >= 0
                            && x >= 0
                            && (y as usize) < cur.height()
                            && (x as usize) < cur.width()
                            && cur.get(y as usize, x as usize)
                        {
                            hit = true;
                        }
                    }
                }
                next.set(row as usize, col as usize, hit);
            }
        }
        cur = next;
    }
    cur
}

fn morphology_oracle() -> Verdict {
    let mut rng = stream(77, Purpose::Noise, &[]);
    let mut mismatches = 0;
    for _ in 0..MORPH_MASKS {
        let (h, w) = (rng.random_range(1..=48usize), rng.random_range(1..=48usize));
        let density = rng.random_range(0.0..0.08);
        let mut m = GtMask::empty(h, w);
        for r in 0..h {
            for c in 0..w {
                if rng.random_bool(density) {
                    m.set(r, c, true);
                }
            }
        }
        let radius = rng.random_range(1..=3usize);
        let times = rng.random_range(0..=3usize);
        if dilate_mask(&m, radius, times) != oracle_dilate(&m, radius, times) {
            mismatches += 1;
        }
    }
    let point = dilate_mask(&mask_with(21, 21, &[(10, 10)]), 3, 1).popcount();
    let line: Vec<_> = (5..75).map(|c| (40, c)).collect();
    let thick = dilate_mask(&mask_with(80, 80, &line), 3, 3);
    let width = (0..80).filter(|&r| thick.get(r, 40)).count();
    Verdict::new(
        mismatches == 0 && point == 29 && width == 19,
        format!(
            "{MORPH_MASKS} random masks, {mismatches} mismatches against offset enumeration; \
             single point -> {point} px (want 29); line cross-section {width} px (want 19)"
        ),
    )
}

// ---------------------------------------------------------------- training

struct SeedRun {
    seed: u64,
    patches: usize,
    gap: f64,
    ranking: f64,
    dcgan_time: Duration,
    baseline_loss: f64,
    baseline_recall: f64,
    baseline_black: usize,
    crack_share: f64,
    crackgan_hd: f64,
    crackgan_recall: f64,
    crackgan_precision: f64,
    generator: AsymmetricUNet<F>,
}

fn desk_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = seed;
    cfg
}

fn splits(cfg: &RunConfig) -> (Vec<Sample>, Vec<Sample>, Vec<Sample>) {
    let s = &cfg.data.scene;
    (
        synthesize(s, cfg.seed, Split::Train, cfg.data.images).unwrap(),
        synthesize(s, cfg.seed, Split::Val, cfg.data.val_images).unwrap(),
        synthesize(s, cfg.seed, Split::Test, cfg.data.val_images).unwrap(),
    )
}

fn seed_run(seed: u64, with_detectors: bool) -> SeedRun {
    let cfg = desk_config(seed);
    let (train, val, test) = splits(&cfg);
    let pairs = pipeline::cpo_pairs(&train, &cfg, cfg.data.dilation_times).unwrap();
    let t = Instant::now();
    let d = pipeline::pretrain_dcgan(&cfg, &pairs, &mut |_| {}).unwrap().discriminator;
    let dcgan_time = t.elapsed();
    let held_out = pipeline::cpo_pairs(&test, &cfg, cfg.data.dilation_times).unwrap();
    let sep = pipeline::discriminator_separation(&d, &pipeline::discriminator_patches(&held_out, false)).unwrap();
    note(&format!(
        "seed {seed}: {} real patches, D(real) {:.3} D(black) {:.3} ranking {:.3} ({:.0}s)",
        pairs.len(),
        sep.mean_real,
        sep.mean_black,
        sep.ranking_accuracy,
        dcgan_time.as_secs_f64()
    ));
    let mut run = SeedRun {
        seed,
        patches: pairs.len(),
        gap: sep.gap(),
        ranking: sep.ranking_accuracy,
        dcgan_time,
        baseline_loss: f64::NAN,
        baseline_recall: f64::NAN,
        baseline_black: 0,
        crack_share: f64::NAN,
        crackgan_hd: f64::NAN,
        crackgan_recall: f64::NAN,
        crackgan_precision: f64::NAN,
        generator: AsymmetricUNet::new(&cfg.arch, &mut stream(seed, Purpose::Init, &[])).unwrap(),
    };
    if !with_detectors {
        return run;
    }

    let encoder = pipeline::pretrain_encoder(&cfg, &train, &mut |_| {}).unwrap().net;
    let t = pipeline::train_end_to_end(&cfg, cfg.train, &pairs, d, Some(&encoder), &val, &mut |_| {}, &mut |t| {
        note(&format!(
            "seed {seed}: detector epoch {} validation best {:.2}",
            t.state.epoch,
            t.state.best_score.unwrap_or(0.0)
        ));
        Ok(())
    })
    .unwrap();
    let g = t.best_generator().clone();
    let r = pipeline::evaluate(&g, &test, &cfg.detect, &cfg.eval).unwrap();
    run.crackgan_hd = r.aggregate.hd_score;
    run.crackgan_recall = r.aggregate.r_region;
    run.crackgan_precision = r.aggregate.p_region;
    run.generator = g;

    let bpairs = pipeline::baseline_pairs(&train, &cfg).unwrap();
    run.crack_share = pipeline::crack_fraction(&bpairs);
    let mut rows = Vec::new();
    let b = pipeline::train_baseline(&cfg, &bpairs, &mut |r| rows.push(*r), &mut |_| Ok(())).unwrap();
    run.baseline_loss = pipeline::final_loss(&rows, BASELINE_LOSS_TAIL).unwrap_or(f64::NAN);
    let br = pipeline::evaluate(b.best_generator(), &test, &cfg.detect, &cfg.eval).unwrap();
    run.baseline_recall = br.aggregate.r_region;
    run.baseline_black = br.aggregate.all_black_images;
    note(&format!(
        "seed {seed}: detector HD {:.2} P {:.3} R {:.3}; baseline loss {:.4} R {:.3}, {} of {} images all black",
        run.crackgan_hd,
        run.crackgan_precision,
        run.crackgan_recall,
        run.baseline_loss,
        run.baseline_recall,
        run.baseline_black,
        br.aggregate.images
    ));
    run
}

fn separation_verdict(runs: &[SeedRun]) -> Verdict {
    let slowest = runs.iter().map(|r| r.dcgan_time).max().unwrap_or_default();
    let total: Duration = runs.iter().map(|r| r.dcgan_time).sum();
    let ok = runs.iter().all(|r| r.gap > MIN_GAP && r.ranking >= MIN_RANKING);
    let (fast, time) = within(SEPARATION_BUDGET, total);
    let per: Vec<String> = runs
        .iter()
        .map(|r| format!("seed {} gap {:.3} ranking {:.3} ({} patches)", r.seed, r.gap, r.ranking, r.patches))
        .collect();
    Verdict::new(
        ok && fast && runs.len() == SEEDS.len(),
        format!(
            "{}; need gap > {MIN_GAP} and ranking >= {MIN_RANKING}; pretraining {time}, slowest seed {:.0}s",
            per.join(", "),
            slowest.as_secs_f64()
        ),
    )
}

fn all_black_verdict(runs: &[SeedRun], elapsed: Duration) -> Verdict {
    let ok = runs.iter().all(|r| {
        r.baseline_loss < BASELINE_MAX_LOSS
            && r.baseline_recall < BASELINE_MAX_RECALL
            && r.crackgan_recall > CRACKGAN_MIN_RECALL
            && r.crackgan_hd > CRACKGAN_MIN_HD
    });
    let (fast, time) = within(ALL_BLACK_BUDGET, elapsed);
    let per: Vec<String> = runs
        .iter()
        .map(|r| {
            format!(
                "seed {}: baseline loss {:.4} recall {:.3} (crack share {:.5}), detector recall {:.3} HD {:.2}",
                r.seed, r.baseline_loss, r.baseline_recall, r.crack_share, r.crackgan_recall, r.crackgan_hd
            )
        })
        .collect();
    Verdict::new(
        ok && fast && runs.len() == SEEDS.len(),
        format!(
            "{}; need baseline loss < {BASELINE_MAX_LOSS} with recall < {BASELINE_MAX_RECALL}, detector recall > {CRACKGAN_MIN_RECALL} \
             and HD > {CRACKGAN_MIN_HD}; {time}",
            per.join("; ")
        ),
    )
}

// ---------------------------------------------------------------- full convolution

fn fcn_consistency(trained: Option<&AsymmetricUNet<F>>) -> Verdict {
    let cfg = RunConfig::default();
    let fresh;
    let (g, which) = match trained {
        Some(g) => (g, "trained detector"),
        None => {
            fresh = AsymmetricUNet::<F>::new(&cfg.arch, &mut stream(9, Purpose::Init, &[])).unwrap();
            (&fresh, "untrained detector")
        }
    };
    let (h, w) = FCN_SIZE;
    let margin = (g.receptive_field().unwrap().size / 2.0).ceil() as usize;
    let pts = window_interior(h, w, FCN_WINDOW, FCN_STRIDE, g.output_factor(), margin);
    let scene = crackgan_core::synth::SceneParams {
        height: h,
        width: w,
        cracks: 3,
        length: (600, 1400),
        ..cfg.data.scene
    };
    let mut worst = 0f32;
    let (mut t_full, mut t_window) = (Duration::ZERO, Duration::ZERO);
    for i in 0..FCN_IMAGES {
        let image: GrayImage = crackgan_core::synth::generate_scene(&scene, 5000 + i as u64).unwrap().image;
        let t = Instant::now();
        let det = detect(g, &image, &cfg.detect).unwrap();
        t_full += t.elapsed();
        let t = Instant::now();
        let map = sliding_window_reference(g, &image, FCN_WINDOW, FCN_STRIDE).unwrap();
        let _ = crackgan_core::inference::postprocess_map(&map, &cfg.detect).unwrap();
        t_window += t.elapsed();
        let mw = map.width();
        for &(r, c) in &pts {
            worst = worst.max((det.map.data()[r * mw + c] - map.data()[r * mw + c]).abs());
        }
    }
    let speedup = t_window.as_secs_f64() / t_full.as_secs_f64();
    Verdict::new(
        worst < FCN_TOL && speedup >= FCN_MIN_SPEEDUP && !pts.is_empty(),
        format!(
            "{FCN_IMAGES} images of {h}x{w} with the {which}: max interior difference {worst:.2e} over {} px per image \
             (tolerance {FCN_TOL:.0e}); full pass {:.2}s vs windows {:.2}s, speedup {speedup:.2}x (need {FCN_MIN_SPEEDUP}x)",
            pts.len(),
            t_full.as_secs_f64(),
            t_window.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- grid

fn grid_board() -> Verdict {
    let start = Instant::now();
    let mut cfg = desk_config(SEEDS[0]);
    cfg.data.scene.annotation_offset = GRID_ANNOTATION_OFFSET;
    let (train, val, _) = splits(&cfg);
    let encoder = pipeline::pretrain_encoder(&cfg, &train, &mut |_| {}).unwrap().net;
    let board = pipeline::run_grid(&cfg, &train, &val, Some(&encoder), &mut |c| {
        note(&format!(
            "lambda {} dilation {}: {:.2} ({:.0}s)",
            c.lambda,
            c.dilation,
            c.score,
            start.elapsed().as_secs_f64()
        ))
    })
    .unwrap();
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-grid");
    emit_gridboard(&board, &dir).unwrap();
    let mut low = Vec::new();
    let mut best_good: Option<(f64, usize, f64)> = None;
    for (i, &lambda) in board.lambdas.iter().enumerate() {
        for (j, &dilation) in board.dilations.iter().enumerate() {
            let s = board.scores[i][j];
            if dilation == GRID_LOW_DILATION {
                low.push(s);
            }
            let in_band = lambda >= GRID_GOOD_LAMBDA.0
                && lambda <= GRID_GOOD_LAMBDA.1
                && dilation >= GRID_GOOD_DILATION.0
                && dilation <= GRID_GOOD_DILATION.1;
            if in_band && best_good.is_none_or(|b| s > b.2) {
                best_good = Some((lambda, dilation, s));
            }
        }
    }
    let low_ok = !low.is_empty() && low.iter().all(|&s| s < GRID_LOW_MAX);
    let good_ok = best_good.is_some_and(|b| b.2 > GRID_GOOD_MIN);
    let (fast, time) = within(GRID_BUDGET, start.elapsed());
    let rows: Vec<String> = board
        .scores
        .iter()
        .zip(&board.lambdas)
        .map(|(r, l)| format!("lambda {l}: {}", r.iter().map(|s| format!("{s:.1}")).collect::<Vec<_>>().join(" ")))
        .collect();
    let (bl, bd, bs) = best_good.unwrap_or((f64::NAN, 0, f64::NAN));
    Verdict::new(
        low_ok && good_ok && fast,
        format!(
            "dilations {:?}: {}; dilation {GRID_LOW_DILATION} max {:.1} (need < {GRID_LOW_MAX}); best in band lambda {bl} dilation {bd} = {bs:.1} \
             (need > {GRID_GOOD_MIN}); board at {}; {time}",
            board.dilations,
            rows.join(", "),
            low.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            dir.display()
        ),
    )
}

// ---------------------------------------------------------------- driver

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |key: &str| filters.is_empty() || filters.iter().any(|f| key.contains(f.as_str()));
    let mut failed = 0;
    let mut run = |key: &str, title: &str, f: &mut dyn FnMut() -> Verdict| {
        if wanted(key) {
            let t = Instant::now();
            let v = f();
            if !report(title, &v, t.elapsed()) {
                failed += 1;
            }
        }
    };

    run("metrics", "Metric oracles", &mut metric_oracles);
    run("shapes", "Shape laws", &mut shape_laws);
    run("gradients", "Gradient checks", &mut gradient_checks);
    run("morphology", "Morphology oracle", &mut morphology_oracle);

    let want_sep = wanted("separation");
    let want_black = wanted("all-black");
    let mut runs = Vec::new();
    let t = Instant::now();
    if want_sep || want_black {
        for &seed in &SEEDS {
            runs.push(seed_run(seed, want_black));
        }
    }
    let elapsed = t.elapsed();
    run("separation", "One-class discriminator separation", &mut || separation_verdict(&runs));
    run("all-black", "All Black reproduction", &mut || all_black_verdict(&runs, elapsed));

    let trained = runs.first().filter(|_| want_black).map(|r| r.generator.clone());
    run("fcn", "Fully-convolutional consistency", &mut || fcn_consistency(trained.as_ref()));
    run("grid", "Grid-search board", &mut grid_board);

    if failed > 0 {
        let _ = writeln!(std::io::stdout(), "{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
