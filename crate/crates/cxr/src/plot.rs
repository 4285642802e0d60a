//! Standalone SVG figures with CSV companions.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use cxr_core::linalg::Matrix;
use cxr_core::metrics::ConfusionMatrix;

use crate::error::{Error, Result};

const CLASS_NAMES: [&str; 2] = ["Normal", "Pneumonia"];
const LABEL_COLORS: [&str; 2] = ["#1f77b4", "#d62728"];

pub fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Counts as `[actual][predicted]`, normal first.
fn grid(cm: &ConfusionMatrix) -> [[u64; 2]; 2] {
    [[cm.tn, cm.fp], [cm.fn_, cm.tp]]
}

/// 2×2 heatmap, rows actual class and columns predicted class, each cell
/// annotated with its count.
pub fn confusion_svg(cm: &ConfusionMatrix, title: &str) -> String {
    let g = grid(cm);
    let max = g.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let (x0, y0, cell) = (140.0, 70.0, 120.0);
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str("<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"420\" height=\"360\" viewBox=\"0 0 420 360\">\n");
    s.push_str("<rect width=\"420\" height=\"360\" fill=\"white\"/>\n");
    let _ = writeln!(s, "<text x=\"260\" y=\"30\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>", escape_xml(title));
    let _ = writeln!(s, "<text x=\"260\" y=\"56\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">Predicted</text>");
    let _ = writeln!(
        s,
        "<text x=\"30\" y=\"190\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 30 190)\">Actual</text>"
    );
    for (i, row) in g.iter().enumerate() {
        for (j, &count) in row.iter().enumerate() {
            let (x, y) = (x0 + j as f64 * cell, y0 + i as f64 * cell);
            let t = count as f64 / max;
            let shade = (255.0 - 200.0 * t).round() as u8;
            let _ = writeln!(
                s,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({shade},{shade},255)\" stroke=\"black\"/>"
            );
            let ink = if t > 0.6 { "white" } else { "black" };
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"20\" fill=\"{ink}\">{count}</text>",
                x + cell / 2.0,
                y + cell / 2.0 + 7.0
            );
        }
    }
    for (k, name) in CLASS_NAMES.iter().enumerate() {
        let c = x0 + k as f64 * cell + cell / 2.0;
        let _ = writeln!(s, "<text x=\"{c}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{name}</text>", y0 + 2.0 * cell + 18.0);
        let r = y0 + k as f64 * cell + cell / 2.0;
        let _ = writeln!(s, "<text x=\"{}\" y=\"{r}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">{name}</text>", x0 - 8.0);
    }
    s.push_str("</svg>\n");
    s
}

pub fn confusion_csv(cm: &ConfusionMatrix) -> String {
    let g = grid(cm);
    format!(
        "actual,predicted_normal,predicted_pneumonia\nnormal,{},{}\npneumonia,{},{}\n",
        g[0][0], g[0][1], g[1][0], g[1][1]
    )
}

/// Writes `<stem>.svg` and `<stem>.csv` into `dir`.
pub fn emit_confusion_plot(cm: &ConfusionMatrix, title: &str, dir: &Path, stem: &str) -> Result<()> {
    write(&dir.join(format!("{}.svg", stem)), &confusion_svg(cm, title))?;
    write(&dir.join(format!("{}.csv", stem)), &confusion_csv(cm))
}

/// Scatter of 2-D points colored by label.
pub fn scatter_svg(points: &Matrix, labels: &[usize], title: &str) -> Result<String> {
    if points.cols() != 2 || points.rows() != labels.len() {
        return Err(Error::Core(cxr_core::Error::Dimension(format!(
            "scatter of {}×{} points with {} labels",
            points.rows(),
            points.cols(),
            labels.len()
        ))));
    }
    let (w, h, pad) = (480.0, 480.0, 40.0);
    let range = |j: usize| {
        let c = points.column(j);
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0) - 1.0, lo.max(0.0) + 1.0) }
    };
    let ((x_lo, x_hi), (y_lo, y_hi)) = (range(0), range(1));
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(s, "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">");
    let _ = writeln!(s, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>", w / 2.0, escape_xml(title));
    for (i, &l) in labels.iter().enumerate() {
        let x = pad + (points.get(i, 0) - x_lo) / (x_hi - x_lo) * (w - 2.0 * pad);
        let y = h - pad - (points.get(i, 1) - y_lo) / (y_hi - y_lo) * (h - 2.0 * pad);
        let color = LABEL_COLORS.get(l).copied().unwrap_or("gray");
        let _ = writeln!(s, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{color}\" fill-opacity=\"0.7\"/>");
    }
    for (k, name) in CLASS_NAMES.iter().enumerate() {
        let y = 44.0 + 18.0 * k as f64;
        let _ = writeln!(s, "<circle cx=\"{}\" cy=\"{}\" r=\"5\" fill=\"{}\"/>", w - 110.0, y - 4.0, LABEL_COLORS[k]);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"12\">{name}</text>", w - 100.0);
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn scatter_csv(points: &Matrix, labels: &[usize]) -> String {
    let mut s = String::from("x,y,label\n");
    for (i, l) in labels.iter().enumerate().take(points.rows()) {
        let _ = writeln!(s, "{},{},{}", points.get(i, 0), points.get(i, 1), l);
    }
    s
}

/// Writes `<stem>.svg` and `<stem>.csv` of an embedding into `dir`.
pub fn emit_scatter_plot(points: &Matrix, labels: &[usize], title: &str, dir: &Path, stem: &str) -> Result<()> {
    write(&dir.join(format!("{}.svg", stem)), &scatter_svg(points, labels, title)?)?;
    write(&dir.join(format!("{}.csv", stem)), &scatter_csv(points, labels))
}

pub(crate) fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
