//! Display-only SVG exports: per-sample boxplots of `log(x + 1)` and
//! sorted sample curves colored by depth.

use std::fmt::Write as _;

use serde::Serialize;

use crate::depth::DepthResult;
use crate::error::{Error, Result};
use crate::matrix::ExpressionMatrix;
use crate::stats;

/// Tukey's five-number summary (min, lower hinge, median, upper hinge, max)
/// computed with type-7 quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl FiveNumber {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyResult);
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Ok(Self {
            min: v[0],
            q1: stats::quantile_sorted(&v, 0.25),
            median: stats::quantile_sorted(&v, 0.5),
            q3: stats::quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

/// Five-number summary of `ln(x + 1)` for every column.
pub fn log1_summaries(m: &ExpressionMatrix) -> Result<Vec<FiveNumber>> {
    let logged = crate::matrix::log1_transform(m)?;
    logged.columns().map(FiveNumber::of).collect()
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;

fn svg_open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Scale {
    lo: f64,
    hi: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64) -> Self {
        if hi > lo {
            Self { lo, hi }
        } else {
            Self { lo: lo - 0.5, hi: hi + 0.5 }
        }
    }

    fn y(&self, v: f64) -> f64 {
        let frac = (v - self.lo) / (self.hi - self.lo);
        HEIGHT - MARGIN - frac * (HEIGHT - 2.0 * MARGIN)
    }
}

fn y_axis(out: &mut String, scale: &Scale) {
    let _ = writeln!(
        out,
        r#"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{}" stroke="black"/>"#,
        HEIGHT - MARGIN
    );
    for k in 0..=4 {
        let v = scale.lo + (scale.hi - scale.lo) * k as f64 / 4.0;
        let y = scale.y(v);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{:.2}</text>"#,
            MARGIN - 4.0,
            y + 3.0,
            v
        );
    }
}

/// Boxplot SVG, one box per sample.
pub fn boxplot_svg(summaries: &[FiveNumber], labels: &[String], title: &str) -> Result<String> {
    if summaries.is_empty() || summaries.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} summaries for {} labels",
            summaries.len(),
            labels.len()
        )));
    }
    let lo = summaries.iter().map(|s| s.min).fold(f64::INFINITY, f64::min);
    let hi = summaries.iter().map(|s| s.max).fold(f64::NEG_INFINITY, f64::max);
    let scale = Scale::new(lo, hi);
    let slot = (WIDTH - 2.0 * MARGIN) / summaries.len() as f64;
    let half = (slot * 0.3).max(1.0);

    let mut out = String::new();
    svg_open(&mut out, title);
    y_axis(&mut out, &scale);
    for (k, (s, label)) in summaries.iter().zip(labels).enumerate() {
        let cx = MARGIN + slot * (k as f64 + 0.5);
        let _ = writeln!(out, r#"<g class="box" data-sample="{}">"#, escape(label));
        let _ = writeln!(
            out,
            r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
            scale.y(s.max),
            scale.y(s.min)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="lightsteelblue" stroke="black"/>"#,
            cx - half,
            scale.y(s.q3),
            2.0 * half,
            (scale.y(s.q1) - scale.y(s.q3)).max(0.5)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            scale.y(s.median),
            cx + half,
            scale.y(s.median)
        );
        let _ = writeln!(
            out,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            HEIGHT - MARGIN + 14.0,
            escape(label)
        );
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Blue (shallow) to red (deep).
fn depth_color(depth: f64, max_depth: f64) -> String {
    let t = if max_depth > 0.0 { (depth / max_depth).clamp(0.0, 1.0) } else { 1.0 };
    let r = (40.0 + 215.0 * t).round() as u8;
    let b = (255.0 - 215.0 * t).round() as u8;
    format!("#{r:02x}30{b:02x}")
}

/// Column-sorted curves, one polyline per sample, colored by depth.
/// Long curves are thinned to at most `max_points` vertices.
pub fn depth_curves_svg(
    sorted: &ExpressionMatrix,
    depth: &DepthResult,
    title: &str,
    max_points: usize,
) -> Result<String> {
    if !sorted.is_sorted() {
        return Err(Error::NotSorted);
    }
    let n = sorted.n_cols();
    let values = depth.depth_values();
    if values.len() != n {
        return Err(Error::Dimension(format!(
            "depth has {} samples, matrix has {n}",
            values.len()
        )));
    }
    let g = sorted.n_rows();
    let step = g.div_ceil(max_points.max(2)).max(1);
    let lo = sorted.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sorted.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = Scale::new(lo, hi);
    let max_depth = values.iter().copied().fold(0.0, f64::max);
    let x = |i: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / (g.max(2) - 1) as f64;

    // shallow curves first so the deepest ends up on top
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));

    let mut out = String::new();
    svg_open(&mut out, title);
    y_axis(&mut out, &scale);
    for j in order {
        let col = sorted.column(j);
        let mut pts = String::new();
        let mut idx: Vec<usize> = (0..g).step_by(step).collect();
        if idx.last() != Some(&(g - 1)) {
            idx.push(g - 1);
        }
        for i in idx {
            let _ = write!(pts, "{:.1},{:.1} ", x(i), scale.y(col[i]));
        }
        let _ = writeln!(
            out,
            r#"<polyline data-sample="{}" data-depth="{}" points="{}" fill="none" stroke="{}" stroke-width="1.2"/>"#,
            escape(&sorted.sample_ids()[j]),
            values[j],
            pts.trim_end(),
            depth_color(values[j], max_depth)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
