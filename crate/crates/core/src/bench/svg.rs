//! Minimal SVG box plots.

use std::fmt::Write;

use super::quantile;

/// Five-number summary with Tukey whiskers.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    /// Most extreme values within 1.5·IQR of the box.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

impl BoxStats {
    /// `None` when no finite values are present.
    pub fn new(values: &[f64]) -> Option<Self> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let (q25, median, q75) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let iqr = q75 - q25;
        let (lo_fence, hi_fence) = (q25 - 1.5 * iqr, q75 + 1.5 * iqr);
        let inside: Vec<f64> = v.iter().copied().filter(|&x| x >= lo_fence && x <= hi_fence).collect();
        Some(Self {
            q25,
            median,
            q75,
            whisker_low: inside.first().copied().unwrap_or(q25),
            whisker_high: inside.last().copied().unwrap_or(q75),
            outliers: v.into_iter().filter(|&x| x < lo_fence || x > hi_fence).collect(),
        })
    }
}

const HEIGHT: f64 = 360.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 300.0;
const LEFT: f64 = 70.0;
const SLOT: f64 = 80.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One box per `(label, values)` group on a shared vertical axis.
pub fn boxplot_svg(title: &str, groups: &[(String, Vec<f64>)]) -> String {
    let width = LEFT + SLOT * groups.len().max(1) as f64 + 20.0;
    let all: Vec<f64> = groups.iter().flat_map(|(_, v)| v.iter().copied()).filter(|x| x.is_finite()).collect();
    let (mut lo, mut hi) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if all.is_empty() {
        (lo, hi) = (0.0, 1.0);
    } else if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        let pad = 0.5 * hi.abs().max(1.0);
        (lo, hi) = (lo - pad, hi + pad);
    } else {
        let pad = 0.05 * (hi - lo);
        (lo, hi) = (lo - pad, hi + pad);
    }
    let y = |v: f64| BOTTOM - (v - lo) / (hi - lo) * (BOTTOM - TOP);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{HEIGHT:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#, width / 2.0, escape(title));
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{BOTTOM}" stroke="black"/>"#);
    for t in 0..=4 {
        let v = lo + (hi - lo) * t as f64 / 4.0;
        let yy = y(v);
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{yy:.2}" x2="{LEFT}" y2="{yy:.2}" stroke="black"/>"#, LEFT - 4.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.2}" text-anchor="end">{v:.4}</text>"#, LEFT - 6.0, yy + 4.0);
    }
    for (i, (label, values)) in groups.iter().enumerate() {
        let cx = LEFT + SLOT * (i as f64 + 0.5);
        let half = SLOT * 0.3;
        let _ = writeln!(s, r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, BOTTOM + 18.0, escape(label));
        let Some(b) = BoxStats::new(values) else { continue };
        let _ = writeln!(s, r#"<g class="box">"#);
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.1}" y1="{:.2}" x2="{cx:.1}" y2="{:.2}" stroke="black"/>"#,
            y(b.whisker_low),
            y(b.q25)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.1}" y1="{:.2}" x2="{cx:.1}" y2="{:.2}" stroke="black"/>"#,
            y(b.q75),
            y(b.whisker_high)
        );
        for w in [b.whisker_low, b.whisker_high] {
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{:.2}" x2="{:.1}" y2="{:.2}" stroke="black"/>"#,
                cx - half / 2.0,
                y(w),
                cx + half / 2.0,
                y(w)
            );
        }
        let _ = writeln!(
            s,
            r##"<rect x="{:.1}" y="{:.2}" width="{:.1}" height="{:.2}" fill="#9ecae1" stroke="black"/>"##,
            cx - half,
            y(b.q75),
            2.0 * half,
            y(b.q25) - y(b.q75)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{:.2}" x2="{:.1}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            y(b.median),
            cx + half,
            y(b.median)
        );
        for o in &b.outliers {
            let _ = writeln!(s, r#"<circle cx="{cx:.1}" cy="{:.2}" r="2.5" fill="none" stroke="black"/>"#, y(*o));
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}
