//! Dataset evaluation over mask directories and report output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crackgan_core::metrics::{evaluate_pair, EvalParams, EvalReport, ImageMetrics};

use crate::error::{Error, Result};
use crate::io;

/// PNG files directly inside `dir`, sorted by name.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if path.is_file() && is_png {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Scores every predicted mask in `pred_dir` against the same-named mask in
/// `gt_dir`. Files present on only one side are listed in `skipped`.
pub fn evaluate_dataset(pred_dir: &Path, gt_dir: &Path, params: &EvalParams) -> Result<EvalReport> {
    let preds = list_pngs(pred_dir)?;
    let gts = list_pngs(gt_dir)?;
    let gt_names: std::collections::BTreeSet<String> = gts.iter().map(|p| stem(p)).collect();
    let pred_names: std::collections::BTreeSet<String> = preds.iter().map(|p| stem(p)).collect();
    let mut skipped: Vec<String> = Vec::new();
    let mut jobs = Vec::new();
    for p in &preds {
        let name = stem(p);
        if gt_names.contains(&name) {
            jobs.push((name.clone(), p.clone(), gt_dir.join(p.file_name().expect("listed file"))));
        } else {
            skipped.push(format!("{}: no ground truth", p.display()));
        }
    }
    for g in &gts {
        if !pred_names.contains(&stem(g)) {
            skipped.push(format!("{}: no prediction", g.display()));
        }
    }
    let eval_one = |(name, pred, gt): &(String, PathBuf, PathBuf)| -> Result<ImageMetrics> {
        let pm = io::read_mask_png(pred)?;
        let gm = io::read_mask_png(gt)?;
        if !pm.same_shape(&gm) {
            return Err(Error::format(
                pred,
                format!("{}x{} mask, ground truth is {}x{}", pm.height(), pm.width(), gm.height(), gm.width()),
            ));
        }
        Ok(evaluate_pair(name, &pm, &gm, params)?)
    };
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len().max(1));
    let per = jobs.len().div_ceil(threads).max(1);
    let images = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .chunks(per)
            .map(|chunk| s.spawn(move || chunk.iter().map(eval_one).collect::<Result<Vec<_>>>()))
            .collect();
        let mut all = Vec::with_capacity(jobs.len());
        for h in handles {
            all.extend(h.join().expect("evaluation thread panicked")?);
        }
        Ok::<_, Error>(all)
    })?;
    Ok(EvalReport::new(*params, images, skipped))
}

pub fn write_report_json(path: &Path, report: &EvalReport) -> Result<()> {
    io::write_json(path, report)
}

#[derive(serde::Serialize)]
struct CsvRow<'a> {
    schema_version: u32,
    name: &'a str,
    hd_score: f64,
    all_black: bool,
    p_region: f64,
    r_region: f64,
    f1_region: f64,
    tp: Option<usize>,
    fp: Option<usize>,
    #[serde(rename = "fn")]
    fn_: Option<usize>,
}

/// One row per image followed by a `mean` row with the aggregates.
pub fn write_report_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for m in &report.images {
        w.serialize(CsvRow {
            schema_version: report.schema_version,
            name: &m.name,
            hd_score: m.hd_score,
            all_black: m.all_black,
            p_region: m.p_region,
            r_region: m.r_region,
            f1_region: m.f1_region,
            tp: Some(m.tp),
            fp: Some(m.fp),
            fn_: Some(m.fn_),
        })
        .map_err(csv_err)?;
    }
    let a = &report.aggregate;
    w.serialize(CsvRow {
        schema_version: report.schema_version,
        name: "mean",
        hd_score: a.hd_score,
        all_black: a.all_black_images > 0,
        p_region: a.p_region,
        r_region: a.r_region,
        f1_region: a.f1_region,
        tp: None,
        fp: None,
        fn_: None,
    })
    .map_err(csv_err)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Text table with one line per method: HD-score, region precision, recall
/// and F1, with all-black images marked as N/A for the HD-score.
pub fn summary_table(rows: &[(&str, &EvalReport)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<16} {:>9} {:>10} {:>8} {:>8} {:>7}", "Method", "HD-score", "Precision", "Recall", "F1", "Images");
    for (name, r) in rows {
        let a = &r.aggregate;
        let hd = if a.images > 0 && a.all_black_images == a.images {
            String::from("N/A")
        } else {
            format!("{:.2}", a.hd_score)
        };
        let _ = writeln!(
            s,
            "{:<16} {:>9} {:>9.2}% {:>7.2}% {:>7.2}% {:>7}",
            name,
            hd,
            a.p_region * 100.0,
            a.r_region * 100.0,
            a.f1_region * 100.0,
            a.images
        );
        if a.all_black_images > 0 {
            let _ = writeln!(s, "{:<16} {} of {} images all black", "", a.all_black_images, a.images);
        }
        if !r.skipped.is_empty() {
            let _ = writeln!(s, "{:<16} {} unmatched files skipped", "", r.skipped.len());
        }
    }
    s
}
