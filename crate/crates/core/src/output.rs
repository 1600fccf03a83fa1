//! Files written by the command-line tool: CSV tables, SVG line plots and the
//! manifest that lists every file with its SHA-256.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::InvalidParameter(format!("{}: {e}", path.display()))
}

/// CSV text with a header row, `\n` line endings and shortest round-trip floats.
pub fn csv_string<I, R>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: AsRef<[f64]>,
{
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.as_ref().iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| io_err(path, e))
    }

    pub fn files_with_role<'a>(&'a self, role: &'a str) -> impl Iterator<Item = &'a FileEntry> + 'a {
        self.files.iter().filter(move |f| f.role == role)
    }
}

/// Writes files into one directory and records them for the manifest.
pub struct OutputDir {
    root: PathBuf,
    manifest: Manifest,
}

impl OutputDir {
    pub fn create(root: &Path, command: &str, seed: Option<u64>, config_hash: Option<String>) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest: Manifest {
                tool: "wgmirror".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                seed,
                config_hash,
                files: Vec::new(),
            },
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, role: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
        self.manifest.files.retain(|f| f.path != name);
        self.manifest.files.push(FileEntry {
            path: name.into(),
            sha256: sha256_hex(contents),
            role: role.into(),
        });
        Ok(path)
    }

    /// Writes the manifest itself; it is not listed in its own file list.
    pub fn finish(self, manifest_name: &str) -> Result<(PathBuf, Manifest)> {
        let path = self.root.join(manifest_name);
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serialises");
        text.push('\n');
        fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        Ok((path, self.manifest))
    }
}

/// One polyline of a plot.
pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![lo];
    }
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

/// Minimal SVG line chart: axes, ticks, labels and a legend.
pub fn svg_line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 20.0, 40.0, 55.0);
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let sy = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-size="15" text-anchor="middle" font-family="sans-serif">{}</text>"#, w / 2.0, escape(title));
    let (ax0, ax1, ay0, ay1) = (left, w - right, h - bottom, top);
    let _ = writeln!(s, r#"<path d="M{ax0} {ay1} L{ax0} {ay0} L{ax1} {ay0}" stroke="black" fill="none"/>"#);
    for t in nice_ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{ay0}" x2="{x:.2}" y2="{}" stroke="black"/>"#, ay0 + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" font-size="11" text-anchor="middle" font-family="sans-serif">{}</text>"#, ay0 + 18.0, fmt_tick(t));
    }
    for t in nice_ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{ax0}" y2="{y:.2}" stroke="black"/>"#, ax0 - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" font-size="11" text-anchor="end" font-family="sans-serif">{}</text>"#, ax0 - 8.0, y + 4.0, fmt_tick(t));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="13" text-anchor="middle" font-family="sans-serif">{}</text>"#, (ax0 + ax1) / 2.0, h - 12.0, escape(x_label));
    let _ = writeln!(s, r#"<text x="18" y="{}" font-size="13" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 18 {})">{}</text>"#, (ay0 + ay1) / 2.0, (ay0 + ay1) / 2.0, escape(y_label));
    for (i, ser) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = ser
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .enumerate()
            .map(|(j, &(x, y))| format!("{}{:.2} {:.2}", if j == 0 { 'M' } else { 'L' }, sx(x), sy(y)))
            .collect();
        if !path.is_empty() {
            let _ = writeln!(s, r#"<path d="{}" stroke="{colour}" stroke-width="1.6" fill="none"/>"#, path.join(" "));
        }
        let ly = top + 14.0 + 16.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/>"#, ax1 - 140.0, ax1 - 120.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" font-family="sans-serif">{}</text>"#, ax1 - 114.0, ly + 4.0, escape(ser.label));
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Reads a numeric CSV with the given header. Errors carry 1-based line numbers.
pub fn read_numeric_csv(path: &Path, expected: &[&str]) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_numeric_csv(&text, expected)
}

pub fn parse_numeric_csv(text: &str, expected: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines().enumerate();
    let header: Vec<&str> = match lines.next() {
        Some((_, h)) => h.split(',').map(str::trim).collect(),
        None => return Err(Error::MalformedRow { line: 1, reason: "empty file".into() }),
    };
    let cols: Vec<usize> = expected
        .iter()
        .map(|name| {
            header.iter().position(|h| h == name).ok_or_else(|| Error::MalformedRow {
                line: 1,
                reason: format!("missing column {name}"),
            })
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != header.len() {
            return Err(Error::MalformedRow {
                line: i + 1,
                reason: format!("{} fields, expected {}", cells.len(), header.len()),
            });
        }
        let row = cols
            .iter()
            .map(|&c| {
                cells[c].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::MalformedRow {
                    line: i + 1,
                    reason: format!("{:?} is not a finite number", cells[c]),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}
