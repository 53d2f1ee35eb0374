//! Minimal SVG line and bar charts with fixed number formatting, so equal
//! inputs give byte-identical files.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    )
}

fn axes(s: &mut String, x_label: &str, y_label: &str) {
    let (x0, y0, x1, y1) = (LEFT, HEIGHT - BOTTOM, WIDTH - RIGHT, TOP);
    let _ = writeln!(s, "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>");
    let _ = writeln!(s, "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        (x0 + x1) / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if !(hi > lo) {
        (lo - 0.5, lo + 0.5)
    } else {
        (lo, hi)
    }
}

/// Line chart of one or more `(label, points)` series. With `log_y`,
/// non-positive values are dropped and the y axis shows log10.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)], log_y: bool) -> String {
    let map_y = |y: f64| if log_y { y.log10() } else { y };
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, p)| p.iter().copied())
        .filter(|&(x, y)| x.is_finite() && y.is_finite() && (!log_y || y > 0.0))
        .map(|(x, y)| (x, map_y(y)))
        .collect();
    let mut s = header(title);
    let y_axis = if log_y { format!("log10 {y_label}") } else { y_label.to_string() };
    axes(&mut s, x_label, &y_axis);
    if pts.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let (x_lo, x_hi) = span(
        pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
        pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
    );
    let (y_lo, y_hi) = span(
        pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
        pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
    );
    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * (WIDTH - LEFT - RIGHT);
    let sy = |y: f64| HEIGHT - BOTTOM - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - TOP - BOTTOM);
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x_lo + f * (x_hi - x_lo), y_lo + f * (y_hi - y_lo));
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", sx(xv), HEIGHT - BOTTOM + 18.0, tick_label(xv));
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>", LEFT - 6.0, sy(yv) + 4.0, tick_label(yv));
    }
    for (n, (label, points)) in series.iter().enumerate() {
        let color = COLORS[n % COLORS.len()];
        let path: Vec<String> = points
            .iter()
            .filter(|&&(x, y)| x.is_finite() && y.is_finite() && (!log_y || y > 0.0))
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(map_y(y))))
            .collect();
        let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>", path.join(" "));
        if path.len() <= 20 {
            for p in &path {
                let (x, y) = p.split_once(',').expect("formatted pair");
                let _ = writeln!(s, "<circle cx=\"{x}\" cy=\"{y}\" r=\"3\" fill=\"{color}\"/>");
            }
        }
        let ly = TOP + 14.0 + 16.0 * n as f64;
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{ly:.1}\" fill=\"{color}\" text-anchor=\"end\">{}</text>",
            WIDTH - RIGHT - 4.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Vertical bars, one per `(label, value)`, on a zero-based axis.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let mut s = header(title);
    axes(&mut s, "", y_label);
    let hi = bars.iter().map(|b| b.1).filter(|v| v.is_finite()).fold(0.0, f64::max);
    let hi = if hi > 0.0 { hi } else { 1.0 };
    let slot = (WIDTH - LEFT - RIGHT) / bars.len().max(1) as f64;
    let plot_h = HEIGHT - TOP - BOTTOM;
    for k in 0..=4 {
        let v = hi * k as f64 / 4.0;
        let y = HEIGHT - BOTTOM - plot_h * k as f64 / 4.0;
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>", LEFT - 6.0, y + 4.0, tick_label(v));
    }
    for (n, (label, value)) in bars.iter().enumerate() {
        let v = if value.is_finite() { value.max(0.0) } else { 0.0 };
        let h = v / hi * plot_h;
        let x = LEFT + slot * (n as f64 + 0.2);
        let color = COLORS[n % COLORS.len()];
        let _ = writeln!(
            s,
            "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"{color}\"/>",
            HEIGHT - BOTTOM - h,
            slot * 0.6
        );
        let cx = x + slot * 0.3;
        let _ = writeln!(s, "<text x=\"{cx:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", HEIGHT - BOTTOM + 18.0, escape(label));
        let _ = writeln!(s, "<text x=\"{cx:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", HEIGHT - BOTTOM - h - 6.0, tick_label(*value));
    }
    s.push_str("</svg>\n");
    s
}
