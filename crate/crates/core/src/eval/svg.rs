//! Minimal static SVG plots. Output is a pure function of the inputs with
//! fixed-precision formatting, so identical data gives identical bytes.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 50.0;
const MARGIN_B: f64 = 60.0;

const SERIES_COLORS: [&str; 4] = ["#1f6fb2", "#d95f02", "#2c9a4b", "#8e44ad"];

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let span = (self.x1 - self.x0).max(1e-12);
        MARGIN_L + (x - self.x0) / span * (WIDTH - MARGIN_L - MARGIN_R)
    }
    fn py(&self, y: f64) -> f64 {
        let span = (self.y1 - self.y0).max(1e-12);
        HEIGHT - MARGIN_B - (y - self.y0) / span * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn svg_header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">
<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<text x="{tx}" y="28" font-family="monospace" font-size="16" text-anchor="middle">{title}</text>
"#,
        tx = WIDTH / 2.0,
        title = xml_escape(title),
    );
}

fn axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let (l, r) = (MARGIN_L, WIDTH - MARGIN_R);
    let (t, b) = (MARGIN_T, HEIGHT - MARGIN_B);
    let _ = write!(
        out,
        r##"<rect x="{l}" y="{t}" width="{w}" height="{h}" fill="none" stroke="#444" stroke-width="1"/>
"##,
        w = r - l,
        h = b - t
    );
    for i in 0..=4 {
        let fx = frame.x0 + (frame.x1 - frame.x0) * i as f64 / 4.0;
        let fy = frame.y0 + (frame.y1 - frame.y0) * i as f64 / 4.0;
        let px = frame.px(fx);
        let py = frame.py(fy);
        let _ = write!(
            out,
            r##"<line x1="{px}" y1="{b}" x2="{px}" y2="{b2}" stroke="#444"/>
<text x="{px}" y="{ty}" font-family="monospace" font-size="11" text-anchor="middle">{}</text>
<line x1="{l}" y1="{py}" x2="{l2}" y2="{py}" stroke="#444"/>
<text x="{lx}" y="{lyt}" font-family="monospace" font-size="11" text-anchor="end">{}</text>
"##,
            fmt(fx),
            fmt(fy),
            b2 = b + 5.0,
            ty = b + 18.0,
            l2 = l - 5.0,
            lx = l - 8.0,
            lyt = py + 4.0,
        );
    }
    let _ = write!(
        out,
        r#"<text x="{cx}" y="{by}" font-family="monospace" font-size="13" text-anchor="middle">{xl}</text>
<text x="18" y="{cy}" font-family="monospace" font-size="13" text-anchor="middle" transform="rotate(-90 18 {cy})">{yl}</text>
"#,
        cx = (l + r) / 2.0,
        by = HEIGHT - 16.0,
        cy = (t + b) / 2.0,
        xl = xml_escape(x_label),
        yl = xml_escape(y_label),
    );
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Multi-series line plot over explicit (x, y) points.
pub fn line_plot_svg(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(&str, &[(f64, f64)])],
    bounds: ((f64, f64), (f64, f64)),
) -> String {
    let frame = Frame {
        x0: bounds.0 .0,
        x1: bounds.0 .1,
        y0: bounds.1 .0,
        y1: bounds.1 .1,
    };
    let mut out = String::new();
    svg_header(&mut out, title);
    axes(&mut out, &frame, x_label, y_label);
    for (si, (name, pts)) in series.iter().enumerate() {
        let color = SERIES_COLORS[si % SERIES_COLORS.len()];
        if !pts.is_empty() {
            let mut path = String::new();
            for (i, (x, y)) in pts.iter().enumerate() {
                let _ = write!(
                    path,
                    "{}{},{}",
                    if i == 0 { "M" } else { " L" },
                    fmt(frame.px(*x)),
                    fmt(frame.py(*y))
                );
            }
            let _ = write!(
                out,
                r#"<path d="{path}" fill="none" stroke="{color}" stroke-width="2"/>
"#
            );
            for (x, y) in pts.iter() {
                let _ = write!(
                    out,
                    r#"<circle cx="{}" cy="{}" r="3" fill="{color}"/>
"#,
                    fmt(frame.px(*x)),
                    fmt(frame.py(*y))
                );
            }
        }
        let ly = MARGIN_T + 16.0 * si as f64 + 12.0;
        let _ = write!(
            out,
            r#"<rect x="{bx}" y="{ry}" width="12" height="4" fill="{color}"/>
<text x="{tx}" y="{ly}" font-family="monospace" font-size="12">{name}</text>
"#,
            bx = MARGIN_L + 10.0,
            ry = ly - 5.0,
            tx = MARGIN_L + 28.0,
            name = xml_escape(name),
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Box plot (median, quartiles, whiskers at data extremes) per labeled group.
pub fn box_plot_svg(title: &str, y_label: &str, groups: &[(&str, &[f64])]) -> String {
    let frame = Frame {
        x0: 0.0,
        x1: groups.len() as f64,
        y0: 0.0,
        y1: 1.0,
    };
    let mut out = String::new();
    svg_header(&mut out, title);
    axes(&mut out, &frame, "", y_label);
    for (gi, (name, values)) in groups.iter().enumerate() {
        let color = SERIES_COLORS[gi % SERIES_COLORS.len()];
        let mut sorted: Vec<f64> = values.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        if sorted.is_empty() {
            continue;
        }
        let q = |p: f64| -> f64 {
            let idx = p * (sorted.len() - 1) as f64;
            let lo = idx.floor() as usize;
            let hi = idx.ceil() as usize;
            let frac = idx - lo as f64;
            sorted[lo] * (1.0 - frac) + sorted[hi] * frac
        };
        let (min, q1, med, q3, max) = (sorted[0], q(0.25), q(0.5), q(0.75), sorted[sorted.len() - 1]);
        let cx = frame.px(gi as f64 + 0.5);
        let half = 28.0;
        let _ = write!(
            out,
            r#"<line x1="{cx}" y1="{ymin}" x2="{cx}" y2="{ymax}" stroke="{color}"/>
<rect x="{bx}" y="{yq3}" width="{bw}" height="{bh}" fill="{color}" fill-opacity="0.35" stroke="{color}"/>
<line x1="{bx}" y1="{ymed}" x2="{bx2}" y2="{ymed}" stroke="{color}" stroke-width="2"/>
<text x="{cx}" y="{ly}" font-family="monospace" font-size="12" text-anchor="middle">{name}</text>
"#,
            ymin = fmt(frame.py(min)),
            ymax = fmt(frame.py(max)),
            bx = fmt(cx - half),
            bx2 = fmt(cx + half),
            yq3 = fmt(frame.py(q3)),
            bw = fmt(2.0 * half),
            bh = fmt(frame.py(q1) - frame.py(q3)),
            ymed = fmt(frame.py(med)),
            ly = HEIGHT - MARGIN_B + 18.0,
            name = xml_escape(name),
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_inputs_give_identical_bytes() {
        let pts = [(0.0, 0.1), (0.5, 0.7), (1.0, 0.9)];
        let a = line_plot_svg("t", "x", "y", &[("s", &pts)], ((0.0, 1.0), (0.0, 1.0)));
        let b = line_plot_svg("t", "x", "y", &[("s", &pts)], ((0.0, 1.0), (0.0, 1.0)));
        assert_eq!(a, b);
        assert!(a.starts_with("<?xml"));
        assert!(a.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn escapes_markup_in_labels() {
        let svg = line_plot_svg("a<b & c", "x", "y", &[], ((0.0, 1.0), (0.0, 1.0)));
        assert!(svg.contains("a&lt;b &amp; c"));
    }

    #[test]
    fn box_plot_renders_groups() {
        let svg = box_plot_svg("d", "dice", &[("run", &[0.5, 0.6, 0.7, 0.8, 0.9])]);
        assert!(svg.contains("rect"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
