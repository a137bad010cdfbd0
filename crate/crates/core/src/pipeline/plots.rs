//! DET curves as SVG and feature maps as portable graymaps.

use std::fmt::Write as _;

use crate::audio::FeatureMatrix;
use crate::error::{Error, Result};
use crate::eval::{probit, DetPoint};

const TICKS: [f64; 10] = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 40.0, 50.0];
const SIZE: f64 = 480.0;
const MARGIN: f64 = 60.0;
const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// One curve on a DET plot.
pub struct DetCurve<'a> {
    pub label: &'a str,
    pub points: &'a [DetPoint],
    pub eer: f64,
}

fn axis(p: f64) -> f64 {
    let (lo, hi) = (probit(TICKS[0] / 100.0), probit(0.5));
    MARGIN + (probit(p) - lo) / (hi - lo) * SIZE
}

/// Map a probability to its pixel position on either axis (x grows right, y grows up).
pub fn det_coords(far: f64, frr: f64) -> (f64, f64) {
    let lo = TICKS[0] / 100.0;
    let x = axis(far.clamp(lo, 0.5));
    let y = 2.0 * MARGIN + SIZE - axis(frr.clamp(lo, 0.5));
    (x, y)
}

/// Probit-scaled DET plot, 0.1 % to 50 % on both axes, one polyline and an
/// EER marker per curve, legend in input order. Output depends only on the input.
pub fn plot_det(curves: &[DetCurve<'_>]) -> Result<String> {
    if curves.is_empty() || curves.iter().any(|c| c.points.is_empty()) {
        return Err(Error::Data("DET plot needs at least one non-empty curve".into()));
    }
    let full = SIZE + 2.0 * MARGIN;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{full}" height="{full}" viewBox="0 0 {full} {full}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#);
    for t in TICKS {
        let (x, y) = det_coords(t / 100.0, t / 100.0);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{MARGIN}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{t}</text>"##,
            MARGIN + SIZE,
            MARGIN + SIZE + 16.0
        );
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{t}</text>"##,
            MARGIN + SIZE,
            MARGIN - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">False alarm probability (%)</text>"#,
        MARGIN + SIZE / 2.0,
        full - 14.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">Miss probability (%)</text>"#,
        MARGIN + SIZE / 2.0,
        MARGIN + SIZE / 2.0
    );
    for (i, c) in curves.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let pts: Vec<String> = c
            .points
            .iter()
            .map(|p| {
                let (x, y) = det_coords(p.far, p.frr);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let (ex, ey) = det_coords(c.eer, c.eer);
        let _ = writeln!(s, r#"<circle cx="{ex:.2}" cy="{ey:.2}" r="4" fill="{colour}"/>"#);
        let ly = MARGIN + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{colour}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{} (EER {:.2}%)</text>"#,
            MARGIN + SIZE - 170.0,
            MARGIN + SIZE - 150.0,
            MARGIN + SIZE - 144.0,
            ly + 4.0,
            escape(c.label),
            100.0 * c.eer
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Binary PGM with time along x and feature dimension along y (dimension 0
/// at the top). Each dimension is min-max scaled on its own; a constant
/// dimension is mid grey.
pub fn plot_features(f: &FeatureMatrix) -> Result<Vec<u8>> {
    if f.rows == 0 || f.cols == 0 {
        return Err(Error::Data("cannot draw an empty feature matrix".into()));
    }
    let mut out = format!("P5\n{} {}\n255\n", f.rows, f.cols).into_bytes();
    for d in 0..f.cols {
        let col = (0..f.rows).map(|t| f.data[t * f.cols + d]);
        let (lo, hi) = col.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        out.extend(col.map(|v| if hi > lo { ((v - lo) / (hi - lo) * 255.0).round() as u8 } else { 128 }));
    }
    Ok(out)
}

/// Per-dimension temporal statistics as `dim,mean,variance,variance_ratio`,
/// the ratio taken against the most variable dimension.
pub fn feature_stats_csv(f: &FeatureMatrix) -> String {
    let n = f.rows as f64;
    let stats: Vec<(f64, f64)> = (0..f.cols)
        .map(|d| {
            let m = (0..f.rows).map(|t| f.data[t * f.cols + d]).sum::<f64>() / n;
            let v = (0..f.rows).map(|t| (f.data[t * f.cols + d] - m).powi(2)).sum::<f64>() / n;
            (m, v)
        })
        .collect();
    let top = stats.iter().map(|s| s.1).fold(0.0, f64::max);
    let mut s = String::from("dim,mean,variance,variance_ratio\n");
    for (d, (m, v)) in stats.iter().enumerate() {
        let ratio = if top > 0.0 { v / top } else { 0.0 };
        let _ = writeln!(s, "{d},{m:.6e},{v:.6e},{ratio:.6}");
    }
    s
}
