//! Minimal SVG emission for weight histograms and convergence traces.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn frame(title: &str, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{x}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{t}</text>\n\
         <line x1=\"{PAD}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{b}\" stroke=\"black\"/>\n\
         {body}</svg>\n",
        x = W / 2.0,
        t = escape(title),
        b = H - PAD,
        r = W - PAD,
    )
}

/// Bar chart of atom weights on a `[0, 1]` axis.
pub fn histogram(title: &str, bars: &[(String, f64)]) -> String {
    let mut body = String::new();
    let span = W - 2.0 * PAD;
    let slot = span / bars.len().max(1) as f64;
    let plot_h = H - 2.0 * PAD;
    for (i, (label, w)) in bars.iter().enumerate() {
        let h = w.clamp(0.0, 1.0) * plot_h;
        let x = PAD + i as f64 * slot + 0.15 * slot;
        let _ = writeln!(
            body,
            "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"{}\"/>",
            H - PAD - h,
            0.7 * slot,
            COLORS[i % COLORS.len()]
        );
        let _ = writeln!(
            body,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{} ({w:.4})</text>",
            x + 0.35 * slot,
            H - PAD + 16.0,
            escape(label)
        );
    }
    frame(title, &body)
}

/// Line plot of `(x, y)` series, each scaled to the joint bounding box.
pub fn trace_plot(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let pts = series.iter().flat_map(|s| s.1.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut body = String::new();
    for (i, (name, s)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = s
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            body,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            path.join(" ")
        );
        let _ = writeln!(
            body,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{}</text>",
            W - PAD - 120.0,
            PAD + 14.0 * (i as f64 + 1.0),
            escape(name)
        );
    }
    let _ = writeln!(
        body,
        "<text x=\"{PAD}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\">y in [{y0:.4}, {y1:.4}], x in [{x0:.2}, {x1:.2}]</text>",
        H - 12.0
    );
    frame(title, &body)
}
