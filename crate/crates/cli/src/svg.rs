//! Minimal SVG quick-looks. CSV outputs are the contract; these are for
//! eyeballing only.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 480.0;
const PAD: f64 = 50.0;
/// Scatter layers are thinned to at most this many points.
const MAX_POINTS: usize = 20_000;
const COLOURS: [&str; 8] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

pub enum Layer {
    Points { xy: Vec<[f64; 2]>, colour: &'static str },
    Line { xy: Vec<[f64; 2]>, colour: &'static str, dashed: bool, label: Option<String> },
}

pub fn palette(k: usize) -> &'static str {
    COLOURS[k % COLOURS.len()]
}

pub fn thin(points: impl Iterator<Item = [f64; 2]>, total: usize) -> Vec<[f64; 2]> {
    let stride = total.div_ceil(MAX_POINTS).max(1);
    points.step_by(stride).collect()
}

pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub layers: Vec<Layer>,
}

impl Plot {
    pub fn render(&self) -> String {
        let all = self.layers.iter().flat_map(|l| match l {
            Layer::Points { xy, .. } | Layer::Line { xy, .. } => xy.iter(),
        });
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in all.filter(|p| p[0].is_finite() && p[1].is_finite()) {
            x0 = x0.min(p[0]);
            x1 = x1.max(p[0]);
            y0 = y0.min(p[1]);
            y1 = y1.max(p[1]);
        }
        if !(x0 < x1) {
            (x0, x1) = (x0 - 1.0, x0 + 1.0);
        }
        if !(y0 < y1) {
            (y0, y1) = (y0 - 1.0, y0 + 1.0);
        }
        let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
        let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - 2.0 * PAD,
            H - 2.0 * PAD
        );
        let _ = writeln!(s, r#"<text x="{}" y="25" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(&self.title));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 10.0, escape(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(&self.y_label)
        );
        for (v, anchor, x, y) in [
            (x0, "start", PAD, H - PAD + 15.0),
            (x1, "end", W - PAD, H - PAD + 15.0),
            (y0, "end", PAD - 4.0, H - PAD),
            (y1, "end", PAD - 4.0, PAD + 10.0),
        ] {
            let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{}</text>"#, tick(v));
        }

        let mut legend = 0;
        for layer in &self.layers {
            match layer {
                Layer::Points { xy, colour } => {
                    for p in xy {
                        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="1.2" fill="{colour}" fill-opacity="0.4"/>"#, sx(p[0]), sy(p[1]));
                    }
                }
                Layer::Line { xy, colour, dashed, label } => {
                    let pts: Vec<String> = xy.iter().map(|p| format!("{:.2},{:.2}", sx(p[0]), sy(p[1]))).collect();
                    let dash = if *dashed { r#" stroke-dasharray="5,4""# } else { "" };
                    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"{dash}/>"#, pts.join(" "));
                    if let Some(l) = label {
                        let y = PAD + 15.0 + 15.0 * legend as f64;
                        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end" fill="{colour}">{}</text>"#, W - PAD - 5.0, escape(l));
                        legend += 1;
                    }
                }
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e5) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
