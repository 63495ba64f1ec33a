//! Minimal SVG charts: a log-x line plot with error bands and a grouped bar chart.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// One line with a symmetric band of half-width `err` around each point.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64, f64)>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, esc(title));
}

fn axis_labels(out: &mut String, x_label: &str, y_label: &str) {
    let (x0, x1, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{TOP}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, HEIGHT - 15.0, esc(x_label));
    let _ = writeln!(
        out,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        (TOP + y1) / 2.0,
        esc(y_label)
    );
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    while t <= hi + 1e-9 * span {
        ticks.push(if t.abs() < 1e-12 * span { 0.0 } else { t });
        t += step;
    }
    ticks
}

fn tick_label(t: f64) -> String {
    let r = (t * 1e6).round() / 1e6;
    format!("{}", if r == 0.0 { 0.0 } else { r })
}

fn y_ticks(out: &mut String, lo: f64, hi: f64, to_y: &dyn Fn(f64) -> f64) {
    for t in nice_ticks(lo, hi) {
        let y = to_y(t);
        let _ = writeln!(out, r#"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(out, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/>"##, WIDTH - RIGHT);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, y + 4.0, tick_label(t));
    }
}

fn legend(out: &mut String, labels: &[String]) {
    for (i, label) in labels.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let x = WIDTH - RIGHT + 15.0;
        let _ = writeln!(out, r#"<rect x="{x}" y="{}" width="14" height="10" fill="{}"/>"#, y - 9.0, PALETTE[i % PALETTE.len()]);
        let _ = writeln!(out, r#"<text x="{}" y="{y}">{}</text>"#, x + 20.0, esc(label));
    }
}

/// Line plot on a log-10 x axis. Non-positive x values are dropped.
pub fn log_x_line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series], reference: Option<f64>) -> String {
    let pts = || series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0 > 0.0 && p.1.is_finite());
    let (mut xlo, mut xhi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut ylo, mut yhi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y, e) in pts() {
        let e = if e.is_finite() { e } else { 0.0 };
        xlo = xlo.min(x.log10());
        xhi = xhi.max(x.log10());
        ylo = ylo.min(y - e);
        yhi = yhi.max(y + e);
    }
    if let Some(r) = reference {
        ylo = ylo.min(r);
        yhi = yhi.max(r);
    }
    if !xlo.is_finite() {
        (xlo, xhi, ylo, yhi) = (0.0, 1.0, 0.0, 1.0);
    }
    xlo = xlo.floor();
    xhi = xhi.ceil().max(xlo + 1.0);
    let pad = ((yhi - ylo) * 0.05).max(1e-3);
    ylo = (ylo - pad).min(0.0f64.max(ylo - pad));
    yhi += pad;

    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let to_x = |x: f64| x0 + (x.log10() - xlo) / (xhi - xlo) * (x1 - x0);
    let to_y = |y: f64| y1 - (y - ylo) / (yhi - ylo) * (y1 - y0);

    let mut out = String::new();
    header(&mut out, title);
    y_ticks(&mut out, ylo, yhi, &to_y);
    let mut d = xlo as i32;
    while d as f64 <= xhi {
        let x = to_x(10f64.powi(d));
        let _ = writeln!(out, r#"<line x1="{x:.2}" y1="{y1}" x2="{x:.2}" y2="{}" stroke="black"/>"#, y1 + 5.0);
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{}" text-anchor="middle">1e{d}</text>"#, y1 + 20.0);
        d += 1;
    }
    if let Some(r) = reference {
        let y = to_y(r);
        let _ = writeln!(out, r#"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="gray" stroke-dasharray="4 3"/>"#);
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let p: Vec<(f64, f64, f64)> =
            s.points.iter().copied().filter(|p| p.0 > 0.0 && p.1.is_finite()).map(|(x, y, e)| (x, y, if e.is_finite() { e } else { 0.0 })).collect();
        if p.is_empty() {
            continue;
        }
        let upper = p.iter().map(|&(x, y, e)| format!("{:.2},{:.2}", to_x(x), to_y(y + e)));
        let lower = p.iter().rev().map(|&(x, y, e)| format!("{:.2},{:.2}", to_x(x), to_y(y - e)));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(out, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.join(" "));
        let line: Vec<String> = p.iter().map(|&(x, y, _)| format!("{:.2},{:.2}", to_x(x), to_y(y))).collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        for &(x, y, _) in &p {
            let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, to_x(x), to_y(y));
        }
    }
    axis_labels(&mut out, x_label, y_label);
    legend(&mut out, &series.iter().map(|s| s.label.clone()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// One bar per (category, group) with an error whisker of half-width `err`.
pub struct BarGroup {
    pub label: String,
    pub values: Vec<(f64, f64)>,
}

/// Grouped bar chart on a linear y axis starting at zero.
pub fn bar_chart(title: &str, y_label: &str, categories: &[String], groups: &[BarGroup], reference: Option<f64>) -> String {
    let mut yhi = reference.unwrap_or(0.0);
    for g in groups {
        for &(v, e) in &g.values {
            if v.is_finite() {
                yhi = yhi.max(v + if e.is_finite() { e } else { 0.0 });
            }
        }
    }
    let yhi = if yhi > 0.0 { yhi * 1.08 } else { 1.0 };
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let to_y = |y: f64| y1 - y / yhi * (y1 - y0);
    let slot = (x1 - x0) / categories.len().max(1) as f64;
    let bar = slot * 0.8 / groups.len().max(1) as f64;

    let mut out = String::new();
    header(&mut out, title);
    y_ticks(&mut out, 0.0, yhi, &to_y);
    for (ci, cat) in categories.iter().enumerate() {
        let cx = x0 + slot * (ci as f64 + 0.5);
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{0}" text-anchor="end" font-size="10" transform="rotate(-30 {cx:.2} {0})">{1}</text>"#,
            y1 + 14.0,
            esc(cat)
        );
        for (gi, g) in groups.iter().enumerate() {
            let Some(&(v, e)) = g.values.get(ci) else { continue };
            if !v.is_finite() {
                continue;
            }
            let bx = x0 + slot * ci as f64 + slot * 0.1 + bar * gi as f64;
            let color = PALETTE[gi % PALETTE.len()];
            let _ = writeln!(
                out,
                r#"<rect x="{bx:.2}" y="{:.2}" width="{bar:.2}" height="{:.2}" fill="{color}"/>"#,
                to_y(v),
                (y1 - to_y(v)).max(0.0)
            );
            if e.is_finite() && e > 0.0 {
                let mx = bx + bar / 2.0;
                let _ = writeln!(
                    out,
                    r#"<line x1="{mx:.2}" y1="{:.2}" x2="{mx:.2}" y2="{:.2}" stroke="black"/>"#,
                    to_y(v + e),
                    to_y((v - e).max(0.0))
                );
            }
        }
    }
    if let Some(r) = reference {
        let y = to_y(r);
        let _ = writeln!(out, r#"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="gray" stroke-dasharray="4 3"/>"#);
    }
    axis_labels(&mut out, "", y_label);
    legend(&mut out, &groups.iter().map(|g| g.label.clone()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}
