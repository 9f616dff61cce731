use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use crackgan::checkpoint::Checkpoint;
use crackgan::dataset::read_manifest;

const TINY: &str = "\
arch.base_width = 4
arch.patch = 64
arch.z_dim = 8
data.images = 4
data.val_images = 2
data.scene.height = 128
data.scene.width = 128
data.scene.length = [60, 100]
data.stride = 32
dcgan.epochs = 1
dcgan.batch_size = 8
encoder.epochs = 1
encoder.batch_size = 8
train.batch_size = 8
baseline.batch_size = 8
";

fn crackgan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crackgan"))
        .current_dir(dir)
        .env_remove("CRACKGAN_OUTPUT_ROOT")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = crackgan(dir, args);
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{args:?}\nstdout: {stdout}\nstderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    stdout
}

fn run_dir(stdout: &str) -> PathBuf {
    let line = stdout
        .lines()
        .find_map(|l| l.strip_prefix("run directory: "))
        .expect("run directory printed");
    PathBuf::from(line.trim())
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.txt"), TINY).unwrap();
    dir
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "resolved_config.txt" {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn exit_codes_separate_usage_from_runtime_errors() {
    let w = workspace();
    let d = w.path();
    assert_eq!(crackgan(d, &["--help"]).status.code(), Some(0));
    assert_eq!(crackgan(d, &["--version"]).status.code(), Some(0));
    assert_eq!(crackgan(d, &[]).status.code(), Some(1));
    assert_eq!(crackgan(d, &["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(crackgan(d, &["gen-data", "--size", "12by4", "--out", "x"]).status.code(), Some(1));
    assert_eq!(crackgan(d, &["--set", "no.such.key=1", "rf-calc"]).status.code(), Some(1));
    assert_eq!(crackgan(d, &["--set", "train.epochs=many", "rf-calc"]).status.code(), Some(1));
    let missing = crackgan(d, &["infer", "--out", "p"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("paths.model"));
    assert_eq!(crackgan(d, &["gen-data"]).status.code(), Some(1));
    let runtime = crackgan(d, &["eval", "--pred", "none", "--gt", "none", "--report", "r.json"]);
    assert_eq!(runtime.status.code(), Some(2));
    assert_eq!(crackgan(d, &["--config", "absent.txt", "rf-calc"]).status.code(), Some(2));
    assert_eq!(crackgan(d, &["rf-calc"]).status.code(), Some(0));
}

#[test]
fn gen_data_is_reproducible_from_its_snapshot() {
    let w = workspace();
    let d = w.path();
    ok(d, &["--config", "tiny.txt", "--seed", "7", "gen-data", "--out", "a", "--num", "3", "--size", "96x160"]);
    let m = read_manifest(&d.join("a")).unwrap();
    assert_eq!(m.entries.len(), 3);
    assert_eq!((m.scene.height, m.scene.width), (96, 160));
    assert_eq!(m.seed, 7);
    for e in &m.entries {
        for f in [&e.image, &e.gt, &e.truth] {
            assert!(d.join("a").join(f).is_file(), "{f:?}");
        }
        assert!(!e.curves.is_empty());
    }
    let snapshot = fs::read_to_string(d.join("a/resolved_config.txt")).unwrap();
    assert!(snapshot.contains("seed = 7"));
    assert!(snapshot.contains("data.scene.height = 96"));

    ok(d, &["--config", "a/resolved_config.txt", "gen-data", "--out", "b"]);
    assert_eq!(dir_bytes(&d.join("a")), dir_bytes(&d.join("b")));

    ok(d, &["--config", "tiny.txt", "--seed", "8", "gen-data", "--out", "c", "--num", "3", "--size", "96x160"]);
    assert_ne!(dir_bytes(&d.join("a")), dir_bytes(&d.join("c")));
}

#[test]
fn training_resumes_bit_exactly_and_feeds_infer_and_eval() {
    let w = workspace();
    let d = w.path();
    let tiny = ["--config", "tiny.txt"];
    let with = |rest: &[&str]| -> Vec<String> { tiny.iter().chain(rest).map(|s| s.to_string()).collect() };
    let call = |rest: &[&str]| {
        let args = with(rest);
        ok(d, &args.iter().map(String::as_str).collect::<Vec<_>>())
    };

    call(&["gen-data", "--out", "train"]);
    call(&["gen-data", "--out", "val", "--split", "val", "--num", "2"]);
    let dcgan = run_dir(&call(&["pretrain-dcgan", "--data", "train", "--out", "runs"]));
    let ck = Checkpoint::<f32>::load(&d.join(&dcgan).join("dcgan.ckpt")).unwrap();
    for role in ["discriminator", "dcgan_generator"] {
        assert!(ck.has(role), "{role}");
        ck.optimizer(role).unwrap();
    }
    let encoder = run_dir(&call(&["pretrain-encoder", "--data", "train", "--out", "runs"]));
    let d_ck = dcgan.join("dcgan.ckpt").display().to_string();
    let e_ck = encoder.join("encoder.ckpt").display().to_string();
    let common = ["train", "--data", "train", "--val-data", "val", "--discriminator", &d_ck, "--encoder", &e_ck];

    let mut straight = common.to_vec();
    straight.extend(["--epochs", "2", "--out", "full"]);
    let full = run_dir(&call(&straight));
    let mut first = common.to_vec();
    first.extend(["--epochs", "1", "--out", "part"]);
    let part = run_dir(&call(&first));

    let resume = part.join("checkpoint.ckpt").display().to_string();
    let snapshot = part.join("resolved_config.txt").display().to_string();
    let out = ok(d, &["--config", &snapshot, "train", "--resume", &resume, "--epochs", "2", "--out", "resumed"]);
    let resumed = run_dir(&out);
    assert!(!out.contains("epoch 1/2"), "resumed run repeated the first epoch:\n{out}");

    for file in ["checkpoint.ckpt", "generator.ckpt"] {
        let a = fs::read(d.join(&full).join(file)).unwrap();
        let b = fs::read(d.join(&resumed).join(file)).unwrap();
        assert!(a == b, "{file} differs after resume");
    }
    let log = fs::read_to_string(d.join(&full).join("train_log.csv")).unwrap();
    assert!(log.starts_with("iteration,epoch,"));
    assert!(log.lines().count() > 2);

    let wrong_stage = encoder.join("encoder.ckpt").display().to_string();
    let mut bad = common.to_vec();
    bad.extend(["--resume", &wrong_stage, "--out", "bad"]);
    assert_eq!(crackgan(d, &with(&bad).iter().map(String::as_str).collect::<Vec<_>>()).status.code(), Some(1));

    let model = full.join("generator.ckpt").display().to_string();
    call(&["infer", "--model", &model, "--image", "val/images", "--out", "pred"]);
    for sub in ["maps", "masks"] {
        for name in ["0000.png", "0001.png"] {
            assert!(d.join("pred").join(sub).join(name).is_file(), "{sub}/{name}");
        }
    }
    let comps: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("pred/components/0000.json")).unwrap()).unwrap();
    assert_eq!(comps["height"], 128);
    assert!(comps["components"].is_array());
    let single = call(&["infer", "--model", &model, "--image", "val/images/0001.png", "--out", "one"]);
    assert!(single.contains("0001.png"));
    assert_eq!(
        fs::read(d.join("one/masks/0001.png")).unwrap(),
        fs::read(d.join("pred/masks/0001.png")).unwrap()
    );

    let table = call(&["eval", "--pred", "pred/masks", "--gt", "val/truth", "--report", "rep/report.json"]);
    assert!(table.contains("HD-score"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("rep/report.json")).unwrap()).unwrap();
    assert_eq!(report["images"].as_array().unwrap().len(), 2);
    let csv = fs::read_to_string(d.join("rep/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let perfect = call(&["eval", "--pred", "val/truth", "--gt", "val/truth", "--report", "self.json"]);
    assert!(perfect.contains("100.00"), "{perfect}");

    let base = run_dir(&call(&["baseline", "--data", "train", "--epochs", "1", "--out", "runs"]));
    let g = Checkpoint::<f32>::load(&d.join(&base).join("generator.ckpt")).unwrap();
    assert!(g.has("generator"));
    let base_model = base.join("generator.ckpt").display().to_string();
    call(&["infer", "--model", &base_model, "--image", "val/images", "--out", "base_pred"]);
}

#[test]
fn grid_search_writes_a_board() {
    let w = workspace();
    let d = w.path();
    let out = ok(
        d,
        &[
            "--config", "tiny.txt", "grid-search", "--lambdas", "0.1,0.3", "--dilations", "1,3", "--epochs", "1",
            "--out", "g",
        ],
    );
    let dir = d.join(run_dir(&out));
    for f in ["board.png", "board.csv", "board.json", "best.txt", "resolved_config.txt"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    let board = crackgan::gridboard::read_board_csv(&dir.join("board.csv")).unwrap();
    assert_eq!(board.lambdas, vec![0.1, 0.3]);
    assert_eq!(board.dilations, vec![1, 3]);
    assert_eq!(out.matches("HD-score").count(), 5);
}

#[test]
fn output_root_applies_to_relative_paths() {
    let w = workspace();
    let root = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_crackgan"))
        .current_dir(w.path())
        .env("CRACKGAN_OUTPUT_ROOT", root.path())
        .args(["--config", "tiny.txt", "gen-data", "--out", "data", "--num", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(root.path().join("data/manifest.json").is_file());
    assert!(!w.path().join("data").exists());
}
