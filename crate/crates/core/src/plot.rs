//! Minimal static SVG charts for run artifacts.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit<'a>(pts: impl Iterator<Item = &'a (f64, f64)>) -> Frame {
        let mut f = Frame {
            x0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y0: f64::INFINITY,
            y1: f64::NEG_INFINITY,
        };
        for &(x, y) in pts.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            f.x0 = f.x0.min(x);
            f.x1 = f.x1.max(x);
            f.y0 = f.y0.min(y);
            f.y1 = f.y1.max(y);
        }
        if !f.x0.is_finite() {
            return Frame {
                x0: 0.0,
                x1: 1.0,
                y0: 0.0,
                y1: 1.0,
            };
        }
        let pad = |lo: f64, hi: f64| {
            let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
            (lo - 0.05 * span, hi + 0.05 * span)
        };
        (f.x0, f.x1) = pad(f.x0, f.x1);
        (f.y0, f.y1) = pad(f.y0, f.y1);
        f
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (bx, by) = (LEFT, H - BOTTOM);
    let _ = write!(
        out,
        r#"<line x1="{bx}" y1="{by}" x2="{}" y2="{by}" stroke="black"/><line x1="{bx}" y1="{by}" x2="{bx}" y2="{TOP}" stroke="black"/>"#,
        W - RIGHT
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let xv = f.x0 + t * (f.x1 - f.x0);
        let yv = f.y0 + t * (f.y1 - f.y0);
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            f.px(xv),
            by + 16.0,
            tick(xv)
        );
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            bx - 6.0,
            f.py(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = write!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 12.0,
        escape(xlabel)
    );
    let _ = write!(
        out,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        (TOP + H - BOTTOM) / 2.0,
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Scatter plot; the `highlight` point is drawn larger in red.
pub fn scatter(title: &str, xlabel: &str, ylabel: &str, pts: &[(f64, f64)], highlight: Option<usize>) -> String {
    let f = Frame::fit(pts.iter());
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, xlabel, ylabel);
    for (i, &(x, y)) in pts.iter().enumerate() {
        if !(x.is_finite() && y.is_finite()) || Some(i) == highlight {
            continue;
        }
        let _ = write!(
            out,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f77b4" fill-opacity="0.7"/>"##,
            f.px(x),
            f.py(y)
        );
    }
    if let Some(&(x, y)) = highlight.and_then(|i| pts.get(i)) {
        let _ = write!(
            out,
            r##"<circle cx="{:.2}" cy="{:.2}" r="6" fill="#d62728"/>"##,
            f.px(x),
            f.py(y)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Line chart with one polyline per named series.
pub fn lines(title: &str, xlabel: &str, ylabel: &str, series: &[(&str, Vec<(f64, f64)>)]) -> String {
    let f = Frame::fit(series.iter().flat_map(|(_, s)| s.iter()));
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, xlabel, ylabel);
    for (k, (name, s)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = s
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
            .collect();
        let _ = write!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let ly = TOP + 14.0 * k as f64 + 4.0;
        let _ = write!(
            out,
            r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{2}" y="{3}">{4}</text>"#,
            W - RIGHT - 130.0,
            W - RIGHT - 110.0,
            W - RIGHT - 104.0,
            ly + 4.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Grouped bar chart: one group per metric, one bar per category.
pub fn bars(title: &str, categories: &[&str], metrics: &[(&str, Vec<f64>)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let groups = metrics.len().max(1);
    let gw = (W - LEFT - RIGHT) / groups as f64;
    let bw = gw * 0.8 / categories.len().max(1) as f64;
    let base = H - BOTTOM;
    for (g, (metric, values)) in metrics.iter().enumerate() {
        let top = values.iter().copied().filter(|v| v.is_finite()).fold(0.0f64, |a, v| a.max(v.abs()));
        let scale = if top > 0.0 { (H - TOP - BOTTOM - 20.0) / top } else { 0.0 };
        let gx = LEFT + g as f64 * gw + 0.1 * gw;
        for (c, v) in values.iter().enumerate() {
            let hgt = if v.is_finite() { v.abs() * scale } else { 0.0 };
            let x = gx + c as f64 * bw;
            let _ = write!(
                out,
                r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{hgt:.2}" fill="{}"/><text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#,
                base - hgt,
                bw * 0.9,
                PALETTE[c % PALETTE.len()],
                x + bw * 0.45,
                base - hgt - 3.0,
                tick(*v)
            );
        }
        let _ = write!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            gx + 0.4 * gw,
            base + 16.0,
            escape(metric)
        );
    }
    for (c, name) in categories.iter().enumerate() {
        let ly = TOP + 14.0 * c as f64;
        let _ = write!(
            out,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            W - RIGHT - 130.0,
            ly - 5.0,
            PALETTE[c % PALETTE.len()],
            W - RIGHT - 115.0,
            ly + 4.0,
            escape(name)
        );
    }
    let _ = write!(out, r#"<line x1="{LEFT}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#, W - RIGHT);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed() {
        let s = scatter("t", "x", "y<1", &[(0.0, 1.0), (1.0, f64::INFINITY), (2.0, 0.5)], Some(2));
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("y&lt;1"));
        assert_eq!(s.matches("<circle").count(), 2);
        let l = lines("loss", "epoch", "loss", &[("train", vec![(1.0, 2.0), (2.0, 1.0)])]);
        assert!(l.contains("<polyline"));
        let b = bars("cmp", &["a", "b"], &[("m", vec![1.0, 2.0])]);
        assert_eq!(b.matches("<rect").count(), 1 + 2 + 2);
    }
}
