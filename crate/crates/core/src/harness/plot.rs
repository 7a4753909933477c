//! SVG line charts derived from a results CSV: one curve per iterative
//! method, one horizontal rule per single-shot method.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::experiment::{read_rows, MetricRow};
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

const COLUMNS: [(&str, fn(&MetricRow) -> f64); 4] = [
    ("l2_error", |r| r.l2_error),
    ("l1_error", |r| r.l1_error),
    ("objective", |r| r.objective),
    ("metric", |r| r.metric),
];

enum Series {
    Curve(Vec<(f64, f64)>),
    Level(f64),
}

/// Per method, trial means of a column (finite values only).
fn series(rows: &[MetricRow], value: fn(&MetricRow) -> f64) -> Vec<(String, Series)> {
    let mut methods: Vec<String> = Vec::new();
    let mut sums: BTreeMap<(String, i64), (f64, usize)> = BTreeMap::new();
    for r in rows {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
        let v = value(r);
        if v.is_finite() {
            let e = sums.entry((r.method.clone(), r.round)).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    let mut out = Vec::new();
    for m in methods {
        let pts: Vec<(i64, f64)> = sums
            .iter()
            .filter(|((name, _), _)| *name == m)
            .map(|((_, round), (s, k))| (*round, s / *k as f64))
            .collect();
        if pts.is_empty() {
            continue;
        }
        if pts.iter().all(|(r, _)| *r < 0) {
            out.push((m, Series::Level(pts[0].1)));
        } else {
            out.push((m, Series::Curve(pts.into_iter().filter(|(r, _)| *r >= 0).map(|(r, v)| (r as f64, v)).collect())));
        }
    }
    out
}

fn render(title: &str, data: &[(String, Series)]) -> String {
    let mut x_max = 1.0_f64;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, s) in data {
        match s {
            Series::Curve(pts) => {
                for &(x, y) in pts {
                    x_max = x_max.max(x);
                    lo = lo.min(y);
                    hi = hi.max(y);
                }
            }
            Series::Level(y) => {
                lo = lo.min(*y);
                hi = hi.max(*y);
            }
        }
    }
    if hi - lo < 1e-12 * hi.abs().max(1.0) {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + plot_w * x / x_max;
    let py = |y: f64| TOP + plot_h * (hi - y) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" font-family="sans-serif" font-size="14" text-anchor="middle">{title}</text>"#, LEFT + plot_w / 2.0);
    let _ = writeln!(
        s,
        r#"<path d="M{:.2},{:.2} V{:.2} H{:.2}" stroke="black" fill="none"/>"#,
        LEFT,
        TOP,
        TOP + plot_h,
        LEFT + plot_w
    );
    let x_ticks = x_max.min(10.0) as usize;
    for k in 0..=x_ticks {
        let x = x_max * k as f64 / x_ticks as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            px(x),
            TOP + plot_h + 16.0,
            format_tick(x)
        );
    }
    for k in 0..=4 {
        let y = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            py(y) + 4.0,
            format_tick(y)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">round</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    for (i, (name, series)) in data.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        match series {
            Series::Curve(pts) => {
                let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
                let _ = writeln!(s, r#"<polyline points="{}" stroke="{color}" stroke-width="2" fill="none"/>"#, coords.join(" "));
            }
            Series::Level(y) => {
                let _ = writeln!(
                    s,
                    r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2" stroke-dasharray="6 4"/>"#,
                    px(0.0),
                    py(*y),
                    px(x_max),
                    py(*y)
                );
            }
        }
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(s, r#"<rect x="{lx:.2}" y="{:.2}" width="14" height="4" fill="{color}"/>"#, ly - 2.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{name}</text>"#, lx + 20.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

fn format_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Writes `<stem>_<column>.svg` into `out_dir` for every column with data.
pub fn emit_plots(csv_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let rows = read_rows(csv_path)?;
    if rows.is_empty() {
        return Err(Error::Data(format!("{} has no methods to plot", csv_path.display())));
    }
    let stem = csv_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "results".into());
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (column, value) in COLUMNS {
        let data = series(&rows, value);
        if data.is_empty() {
            continue;
        }
        let path = out_dir.join(format!("{stem}_{column}.svg"));
        fs::write(&path, render(&format!("{stem}: {column}"), &data))?;
        written.push(path);
    }
    Ok(written)
}
