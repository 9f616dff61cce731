//! Grid-search board output: a heatmap PNG with per-cell scores and the score
//! matrix as CSV.
//!
//! The CSV holds the bare matrix (one row per lambda, one column per dilation
//! scale) preceded by two `#` comment lines naming the axis values.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crackgan_core::training::GridBoard;

use crate::error::{Error, Result};
use crate::font::{draw_text, text_width, GLYPH_H};

/// Colour bins from coldest to hottest.
pub const PALETTE: [[u8; 3]; 8] = [
    [49, 54, 149],
    [69, 117, 180],
    [116, 173, 209],
    [171, 217, 233],
    [254, 224, 144],
    [253, 174, 97],
    [244, 109, 67],
    [215, 48, 39],
];

/// Palette bin of `v` on the board's `[min, max]` range; the maximum always
/// lands in the hottest bin and the mapping is monotone.
pub fn color_bin(v: f64, min: f64, max: f64) -> usize {
    let n = PALETTE.len();
    if !(max > min) {
        return n - 1;
    }
    let t = ((v - min) / (max - min)).clamp(0.0, 1.0);
    ((t * n as f64) as usize).min(n - 1)
}

fn check(board: &GridBoard) -> Result<()> {
    let shape_ok = !board.scores.is_empty()
        && board.scores.len() == board.lambdas.len()
        && board.scores.iter().all(|r| r.len() == board.dilations.len() && !r.is_empty());
    if shape_ok {
        Ok(())
    } else {
        Err(Error::Config(String::from("grid board must be a non-empty matrix matching its axes")))
    }
}

pub fn write_board_csv(path: &Path, board: &GridBoard) -> Result<()> {
    check(board)?;
    let join = |xs: Vec<String>| xs.join(",");
    let mut text = format!(
        "# lambdas: {}\n# dilations: {}\n",
        join(board.lambdas.iter().map(f64::to_string).collect()),
        join(board.dilations.iter().map(usize::to_string).collect()),
    );
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in &board.scores {
        w.write_record(row.iter().map(f64::to_string)).map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    }
    text.push_str(&String::from_utf8(w.into_inner().expect("in-memory writer")).expect("ascii"));
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_board_csv(path: &Path) -> Result<GridBoard> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let axis = |tag: &str| -> Result<Vec<String>> {
        let line = text
            .lines()
            .find_map(|l| l.strip_prefix(tag))
            .ok_or_else(|| Error::format(path, format!("missing `{tag}` line")))?;
        Ok(line.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
    };
    let bad = |what: &str| Error::format(path, format!("bad {what}"));
    let lambdas = axis("# lambdas:")?
        .iter()
        .map(|s| s.parse::<f64>().map_err(|_| bad("lambda")))
        .collect::<Result<Vec<_>>>()?;
    let dilations = axis("# dilations:")?
        .iter()
        .map(|s| s.parse::<usize>().map_err(|_| bad("dilation")))
        .collect::<Result<Vec<_>>>()?;
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut scores = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        scores.push(
            rec.iter()
                .map(|s| s.trim().parse::<f64>().map_err(|_| bad("score")))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let board = GridBoard {
        lambdas,
        dilations,
        scores,
    };
    check(&board).map_err(|_| Error::format(path, "matrix does not match its axes"))?;
    Ok(board)
}

const CELL_W: usize = 84;
const CELL_H: usize = 44;
const LEFT: usize = 110;
const TOP: usize = 40;
const BOTTOM: usize = 64;
const RIGHT: usize = 16;

/// Pixel rectangle `(x, y, w, h)` of cell `(i, j)` in the heatmap.
pub fn cell_rect(i: usize, j: usize) -> (usize, usize, usize, usize) {
    (LEFT + j * CELL_W, TOP + i * CELL_H, CELL_W, CELL_H)
}

struct Canvas {
    w: usize,
    h: usize,
    px: Vec<u8>,
}

impl Canvas {
    fn new(w: usize, h: usize) -> Self {
        Canvas {
            w,
            h,
            px: vec![255; w * h * 3],
        }
    }

    fn put(&mut self, x: usize, y: usize, c: [u8; 3]) {
        if x < self.w && y < self.h {
            let k = (y * self.w + x) * 3;
            self.px[k..k + 3].copy_from_slice(&c);
        }
    }

    fn fill(&mut self, x: usize, y: usize, w: usize, h: usize, c: [u8; 3]) {
        for yy in y..y + h {
            for xx in x..x + w {
                self.put(xx, yy, c);
            }
        }
    }

    fn text(&mut self, s: &str, x: usize, y: usize, scale: usize, c: [u8; 3]) {
        let mut pts = Vec::new();
        draw_text(s, x, y, scale, |px, py| pts.push((px, py)));
        for (px, py) in pts {
            self.put(px, py, c);
        }
    }
}

/// Axis tick text: at most four decimals, trailing zeros dropped.
fn tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0');
    s.strip_suffix('.').unwrap_or(s).to_string()
}

/// Renders the board: rows are lambda values (top to bottom), columns are
/// dilation scales, each cell coloured by score and labelled with it.
pub fn write_board_png(path: &Path, board: &GridBoard) -> Result<()> {
    check(board)?;
    let (rows, cols) = (board.lambdas.len(), board.dilations.len());
    let mut cv = Canvas::new(LEFT + cols * CELL_W + RIGHT, TOP + rows * CELL_H + BOTTOM);
    let all = board.scores.iter().flatten().copied();
    let min = all.clone().fold(f64::INFINITY, f64::min);
    let max = all.fold(f64::NEG_INFINITY, f64::max);
    let black = [0, 0, 0];
    let title = "HD-score";
    cv.text(title, LEFT + (cols * CELL_W).saturating_sub(text_width(title, 2)) / 2, 10, 2, black);
    for (i, row) in board.scores.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let (x, y, w, h) = cell_rect(i, j);
            let c = PALETTE[color_bin(v, min, max)];
            cv.fill(x, y, w, h, c);
            let luma = 0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64;
            let ink = if luma < 140.0 { [255, 255, 255] } else { black };
            let label = format!("{v:.1}");
            let tw = text_width(&label, 2);
            cv.text(&label, x + w.saturating_sub(tw) / 2, y + (h - GLYPH_H * 2) / 2, 2, ink);
        }
        let label = tick(board.lambdas[i]);
        let (_, y, _, h) = cell_rect(i, 0);
        cv.text(&label, LEFT.saturating_sub(8 + text_width(&label, 2)), y + (h - GLYPH_H * 2) / 2, 2, black);
    }
    for (j, d) in board.dilations.iter().enumerate() {
        let label = d.to_string();
        let (x, _, w, _) = cell_rect(0, j);
        cv.text(&label, x + (w - text_width(&label, 2)) / 2, TOP + rows * CELL_H + 8, 2, black);
    }
    let xlabel = "dilation";
    cv.text(xlabel, LEFT + (cols * CELL_W).saturating_sub(text_width(xlabel, 2)) / 2, TOP + rows * CELL_H + 36, 2, black);
    cv.text("lambda", 6, TOP.saturating_sub(18), 2, black);

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), cv.w as u32, cv.h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let encode = |source| Error::PngEncode {
        path: path.to_path_buf(),
        source,
    };
    let mut w = enc.write_header().map_err(encode)?;
    w.write_image_data(&cv.px).map_err(encode)?;
    w.finish().map_err(encode)?;
    Ok(())
}

/// Writes `board.png`, `board.csv` and `board.json` into `dir`.
pub fn emit_gridboard(board: &GridBoard, dir: &Path) -> Result<()> {
    crate::io::create_dir(dir)?;
    write_board_png(&dir.join("board.png"), board)?;
    write_board_csv(&dir.join("board.csv"), board)?;
    crate::io::write_json(&dir.join("board.json"), board)?;
    let mut f = File::create(dir.join("best.txt")).map_err(|e| Error::io(dir, e))?;
    if let Some((i, j, s)) = board.best() {
        writeln!(f, "lambda = {}\ndilation = {}\nscore = {s}", board.lambdas[i], board.dilations[j])
            .map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}
