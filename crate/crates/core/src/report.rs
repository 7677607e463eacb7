//! Deterministic report output: JSON with sorted keys and floats rounded to
//! 12 significant digits, and a minimal SVG line plot.

use serde::Serialize;
use serde_json::Value;

use crate::{Error, Result};

/// `x` rounded to 12 significant decimal digits. Non-finite values pass
/// through.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Rounds every float in a JSON tree.
pub fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if n.is_f64() {
                if let Some(x) = n.as_f64() {
                    if let Some(r) = serde_json::Number::from_f64(round_sig(x)) {
                        *n = r;
                    }
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with sorted keys and rounded floats, newline-terminated.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// One named polyline.
pub struct Series<'a> {
    pub label: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// A 640×400 SVG with one polyline per series, axes and a legend.
pub fn line_plot_svg(title: &str, series: &[Series]) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let finite = |s: &Series| s.x.iter().zip(s.y).filter(|(a, b)| a.is_finite() && b.is_finite()).map(|(a, b)| (*a, *b)).collect::<Vec<_>>();
    let pts: Vec<Vec<(f64, f64)>> = series.iter().map(finite).collect();
    let all = pts.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x0 < x1) {
        x1 = x0 + 1.0;
    }
    if !(y0 < y1) {
        y0 -= 0.5;
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n\
         <path d=\"M{pad} {pad} V{} H{}\" fill=\"none\" stroke=\"black\"/>\n",
        w / 2.0,
        escape(title),
        h - pad,
        w - pad
    );
    for (label, v, x, y) in [("x", x0, pad, h - pad + 16.0), ("x", x1, w - pad, h - pad + 16.0), ("y", y0, 4.0, h - pad), ("y", y1, 4.0, pad)] {
        let anchor = if label == "x" { "middle" } else { "start" };
        out.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{y:.1}\" text-anchor=\"{anchor}\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
            round_sig(v)
        ));
    }
    for (k, (s, p)) in series.iter().zip(&pts).enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        if !p.is_empty() {
            let d: Vec<String> = p
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| format!("{}{:.2} {:.2}", if i == 0 { "M" } else { "L" }, sx(x), sy(y)))
                .collect();
            out.push_str(&format!("<path d=\"{}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.5\"/>\n", d.join(" ")));
        }
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{colour}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            w - pad - 120.0,
            pad + 14.0 * (k as f64 + 1.0),
            escape(s.label)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
