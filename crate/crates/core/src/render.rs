//! Deterministic SVG 1.1 output: embedding scatter plots and curves over a
//! log2 perplexity axis.
//!
//! Coordinates are printed with two decimals so identical inputs always give
//! byte-identical documents.

use serde::{Deserialize, Serialize};
use std::fmt::Write;
use thiserror::Error;

use crate::tsne::Embedding;

/// Categorical palette (tab20); label `l` uses entry `l mod 20`.
pub const PALETTE: [&str; 20] = [
    "#1f77b4", "#aec7e8", "#ff7f0e", "#ffbb78", "#2ca02c", "#98df8a", "#d62728", "#ff9896", "#9467bd", "#c5b0d5",
    "#8c564b", "#c49c94", "#e377c2", "#f7b6d2", "#7f7f7f", "#c7c7c7", "#bcbd22", "#dbdb8d", "#17becf", "#9edae5",
];
const PLAIN_MARKER: &str = "#404040";
const MARGIN: f64 = 16.0;
const TITLE_BAND: f64 = 24.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenderError {
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("x values must be positive and strictly increasing")]
    BadAxis,
    #[error("empty series")]
    Empty,
    #[error("marker index {0} out of range")]
    MarkerIndex(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub width: u32,
    pub height: u32,
    pub color_by_label: bool,
    pub title: String,
    pub marker_radius: f64,
    /// Free text stored in the document's `<desc>` element.
    pub description: Option<String>,
}

impl Default for PlotSpec {
    fn default() -> Self {
        Self { width: 480, height: 480, color_by_label: true, title: String::new(), marker_radius: 2.5, description: None }
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn open_document(spec: &PlotSpec) -> String {
    let (w, h) = (spec.width.max(1), spec.height.max(1));
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    if let Some(desc) = &spec.description {
        let _ = writeln!(s, "<desc>{}</desc>", escape(desc));
    }
    let _ = writeln!(s, "<rect class=\"background\" x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>");
    if !spec.title.is_empty() {
        let _ = writeln!(
            s,
            "<text class=\"title\" x=\"{:.2}\" y=\"17.00\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">{}</text>",
            f64::from(w) / 2.0,
            escape(&spec.title)
        );
    }
    s
}

/// Scatter plot of an embedding, scaled uniformly into the viewport and
/// centered.
pub fn render_embedding(embedding: &Embedding, labels: Option<&[i64]>, spec: &PlotSpec) -> String {
    render_points(&embedding.coords, labels, spec)
}

pub fn render_points(coords: &[[f64; 2]], labels: Option<&[i64]>, spec: &PlotSpec) -> String {
    let (w, h) = (f64::from(spec.width.max(1)), f64::from(spec.height.max(1)));
    let top = if spec.title.is_empty() { MARGIN } else { TITLE_BAND + MARGIN / 2.0 };
    let (area_w, area_h) = ((w - 2.0 * MARGIN).max(1.0), (h - top - MARGIN).max(1.0));
    let (cx, cy) = (MARGIN + area_w / 2.0, top + area_h / 2.0);

    let (mut min, mut max) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for c in coords {
        for k in 0..2 {
            min[k] = min[k].min(c[k]);
            max[k] = max[k].max(c[k]);
        }
    }
    let span = [max[0] - min[0], max[1] - min[1]];
    let scale = match (span[0] > 0.0, span[1] > 0.0) {
        (false, false) => 0.0,
        (true, false) => area_w / span[0],
        (false, true) => area_h / span[1],
        (true, true) => (area_w / span[0]).min(area_h / span[1]),
    };
    let mid = [(min[0] + max[0]) / 2.0, (min[1] + max[1]) / 2.0];

    let labels = labels.filter(|l| spec.color_by_label && l.len() == coords.len());
    let mut s = open_document(spec);
    s.push_str("<g class=\"markers\" stroke=\"none\">\n");
    for (i, c) in coords.iter().enumerate() {
        let x = cx + (c[0] - mid[0]) * scale;
        // SVG y grows downwards.
        let y = cy - (c[1] - mid[1]) * scale;
        let fill = labels.map_or(PLAIN_MARKER, |l| PALETTE[l[i].rem_euclid(PALETTE.len() as i64) as usize]);
        let _ = writeln!(s, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{:.2}\" fill=\"{fill}\"/>", spec.marker_radius);
    }
    s.push_str("</g>\n");
    if let Some(labels) = labels {
        let mut classes: Vec<i64> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        s.push_str("<g class=\"legend\" font-family=\"sans-serif\" font-size=\"10\">\n");
        for (k, l) in classes.iter().enumerate() {
            let y = top + 12.0 * k as f64;
            let fill = PALETTE[l.rem_euclid(PALETTE.len() as i64) as usize];
            let _ = writeln!(
                s,
                "<rect x=\"{:.2}\" y=\"{y:.2}\" width=\"8\" height=\"8\" fill=\"{fill}\"/><text x=\"{:.2}\" y=\"{:.2}\">{l}</text>",
                w - MARGIN - 30.0,
                w - MARGIN - 18.0,
                y + 8.0
            );
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MarkerKind {
    Dot,
    Cross,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMarker {
    pub index: usize,
    pub kind: MarkerKind,
    pub label: String,
}

/// Optional decorations for [`render_curve`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CurveDecor<'a> {
    /// Shaded region between `(lower, upper)`.
    pub band: Option<(&'a [f64], &'a [f64])>,
    pub markers: Vec<CurveMarker>,
    /// Dashed horizontal reference lines.
    pub hlines: Vec<f64>,
    pub y_label: String,
}

fn format_tick(x: f64) -> String {
    let s = format!("{x:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Line chart over a log2 x axis with ticks at every x value.
pub fn render_curve(xs: &[f64], ys: &[f64], decor: &CurveDecor<'_>, spec: &PlotSpec) -> Result<String, RenderError> {
    if xs.len() != ys.len() {
        return Err(RenderError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.is_empty() {
        return Err(RenderError::Empty);
    }
    if xs.iter().any(|&x| !(x > 0.0 && x.is_finite())) || xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(RenderError::BadAxis);
    }
    if let Some((lo, hi)) = decor.band {
        if lo.len() != xs.len() || hi.len() != xs.len() {
            return Err(RenderError::LengthMismatch(xs.len(), lo.len().min(hi.len())));
        }
    }
    if let Some(m) = decor.markers.iter().find(|m| m.index >= xs.len()) {
        return Err(RenderError::MarkerIndex(m.index));
    }

    let (w, h) = (f64::from(spec.width.max(1)), f64::from(spec.height.max(1)));
    let (left, right, top, bottom) = (60.0, 16.0, if spec.title.is_empty() { 16.0 } else { 32.0 }, 44.0);
    let (pw, ph) = ((w - left - right).max(1.0), (h - top - bottom).max(1.0));

    let lx: Vec<f64> = xs.iter().map(|x| x.log2()).collect();
    let (x0, x1) = (lx[0], lx[lx.len() - 1]);
    let px = |v: f64| if x1 > x0 { left + (v - x0) / (x1 - x0) * pw } else { left + pw / 2.0 };

    let mut values: Vec<f64> = ys.iter().copied().filter(|v| v.is_finite()).collect();
    if let Some((lo, hi)) = decor.band {
        values.extend(lo.iter().chain(hi.iter()).copied().filter(|v| v.is_finite()));
    }
    values.extend(decor.hlines.iter().copied().filter(|v| v.is_finite()));
    let (mut y0, mut y1) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(y1 > y0) {
        let c = if y0.is_finite() { y0 } else { 0.0 };
        (y0, y1) = (c - 1.0, c + 1.0);
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let py = |v: f64| top + (y1 - v) / (y1 - y0) * ph;

    let mut s = open_document(spec);
    let _ = writeln!(
        s,
        "<g class=\"axes\" stroke=\"#000000\" stroke-width=\"1\"><line x1=\"{left:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\"/><line x1=\"{left:.2}\" y1=\"{top:.2}\" x2=\"{left:.2}\" y2=\"{:.2}\"/></g>",
        top + ph,
        left + pw,
        top + ph,
        top + ph
    );
    s.push_str("<g class=\"ticks\" font-family=\"sans-serif\" font-size=\"10\">\n");
    for (&x, &l) in xs.iter().zip(&lx) {
        let _ = writeln!(
            s,
            "<line x1=\"{0:.2}\" y1=\"{1:.2}\" x2=\"{0:.2}\" y2=\"{2:.2}\" stroke=\"#000000\"/><text x=\"{0:.2}\" y=\"{3:.2}\" text-anchor=\"middle\">{4}</text>",
            px(l),
            top + ph,
            top + ph + 4.0,
            top + ph + 15.0,
            format_tick(x)
        );
    }
    for k in 0..=4 {
        let v = y0 + (y1 - y0) * f64::from(k) / 4.0;
        let _ = writeln!(
            s,
            "<line x1=\"{0:.2}\" y1=\"{1:.2}\" x2=\"{left:.2}\" y2=\"{1:.2}\" stroke=\"#000000\"/><text x=\"{2:.2}\" y=\"{3:.2}\" text-anchor=\"end\">{v:.3}</text>",
            left - 4.0,
            py(v),
            left - 6.0,
            py(v) + 3.0
        );
    }
    s.push_str("</g>\n");
    let _ = writeln!(
        s,
        "<text class=\"xlabel\" x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">perplexity (log2 scale)</text>",
        left + pw / 2.0,
        h - 8.0
    );
    if !decor.y_label.is_empty() {
        let _ = writeln!(
            s,
            "<text class=\"ylabel\" x=\"12.00\" y=\"{0:.2}\" transform=\"rotate(-90 12.00 {0:.2})\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{1}</text>",
            top + ph / 2.0,
            escape(&decor.y_label)
        );
    }

    if let Some((lo, hi)) = decor.band {
        let pts: Vec<String> = lx
            .iter()
            .zip(hi)
            .chain(lx.iter().zip(lo).rev())
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(s, "<polygon class=\"band\" points=\"{}\" fill=\"#d62728\" fill-opacity=\"0.2\" stroke=\"none\"/>", pts.join(" "));
    }
    for &v in &decor.hlines {
        let _ = writeln!(
            s,
            "<line class=\"hline\" x1=\"{left:.2}\" y1=\"{0:.2}\" x2=\"{1:.2}\" y2=\"{0:.2}\" stroke=\"#d62728\" stroke-dasharray=\"5,3\"/>",
            py(v),
            left + pw
        );
    }
    let pts: Vec<String> = lx
        .iter()
        .zip(ys)
        .filter(|(_, y)| y.is_finite())
        .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
        .collect();
    let _ = writeln!(s, "<polyline class=\"series\" points=\"{}\" fill=\"none\" stroke=\"#000000\" stroke-width=\"1.5\"/>", pts.join(" "));

    for m in &decor.markers {
        let (x, y) = (px(lx[m.index]), py(ys[m.index]));
        let _ = writeln!(
            s,
            "<line class=\"vline\" x1=\"{x:.2}\" y1=\"{top:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#1f77b4\" stroke-dasharray=\"4,3\"/>",
            top + ph
        );
        match m.kind {
            MarkerKind::Dot => {
                let _ = writeln!(s, "<circle class=\"marker-dot\" cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"4.00\" fill=\"#d62728\"><title>{}</title></circle>", escape(&m.label));
            }
            MarkerKind::Cross => {
                let _ = writeln!(
                    s,
                    "<g class=\"marker-cross\" stroke=\"#000000\" stroke-width=\"2\"><title>{}</title><line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\"/><line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\"/></g>",
                    escape(&m.label),
                    x - 5.0, y - 5.0, x + 5.0, y + 5.0,
                    x - 5.0, y + 5.0, x + 5.0, y - 5.0
                );
            }
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}
