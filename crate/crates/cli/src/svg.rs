//! Minimal static SVG charts: lines, markers, shaded bands, error bars.
//!
//! Coordinates are printed with fixed precision so the same input always
//! yields the same bytes.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log10,
}

impl Scale {
    fn map(self, v: f64) -> f64 {
        match self {
            Scale::Linear => v,
            Scale::Log10 => v.log10(),
        }
    }
}

enum Item {
    Line {
        pts: Vec<(f64, f64)>,
        color: String,
        dashed: bool,
        label: Option<String>,
    },
    Markers {
        pts: Vec<(f64, f64)>,
        color: String,
        radius: f64,
        label: Option<String>,
    },
    Band {
        x: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
        color: String,
        label: Option<String>,
    },
    ErrorBars {
        pts: Vec<(f64, f64, f64)>,
        color: String,
    },
}

pub struct Chart {
    title: String,
    x_label: String,
    y_label: String,
    x_scale: Scale,
    y_scale: Scale,
    items: Vec<Item>,
    notes: Vec<String>,
}

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x_scale: Scale::Linear,
            y_scale: Scale::Linear,
            items: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn scales(mut self, x: Scale, y: Scale) -> Self {
        self.x_scale = x;
        self.y_scale = y;
        self
    }

    pub fn line(&mut self, pts: Vec<(f64, f64)>, color: &str, dashed: bool, label: Option<&str>) {
        self.items.push(Item::Line {
            pts,
            color: color.into(),
            dashed,
            label: label.map(Into::into),
        });
    }

    pub fn markers(&mut self, pts: Vec<(f64, f64)>, color: &str, radius: f64, label: Option<&str>) {
        self.items.push(Item::Markers {
            pts,
            color: color.into(),
            radius,
            label: label.map(Into::into),
        });
    }

    pub fn band(&mut self, x: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>, color: &str, label: Option<&str>) {
        self.items.push(Item::Band {
            x,
            lo,
            hi,
            color: color.into(),
            label: label.map(Into::into),
        });
    }

    /// `(x, y, half_width)` vertical bars.
    pub fn error_bars(&mut self, pts: Vec<(f64, f64, f64)>, color: &str) {
        self.items.push(Item::ErrorBars {
            pts,
            color: color.into(),
        });
    }

    pub fn note(&mut self, text: &str) {
        self.notes.push(text.into());
    }

    fn bounds(&self) -> ((f64, f64), (f64, f64)) {
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for item in &self.items {
            match item {
                Item::Line { pts, .. } | Item::Markers { pts, .. } => {
                    xs.extend(pts.iter().map(|p| p.0));
                    ys.extend(pts.iter().map(|p| p.1));
                }
                Item::Band { x, lo, hi, .. } => {
                    xs.extend(x);
                    ys.extend(lo);
                    ys.extend(hi);
                }
                Item::ErrorBars { pts, .. } => {
                    for &(x, y, h) in pts {
                        xs.push(x);
                        ys.push(y - h);
                        ys.push(y + h);
                    }
                }
            }
        }
        let range = |v: &[f64], s: Scale| {
            let mapped: Vec<f64> = v.iter().map(|&t| s.map(t)).filter(|t| t.is_finite()).collect();
            let lo = mapped.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = mapped.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() {
                return (0.0, 1.0);
            }
            let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
            (lo - pad, hi + pad)
        };
        (range(&xs, self.x_scale), range(&ys, self.y_scale))
    }

    pub fn render(&self) -> String {
        let ((x0, x1), (y0, y1)) = self.bounds();
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let (xs, ys) = (self.x_scale, self.y_scale);
        let px = |x: f64| LEFT + (xs.map(x) - x0) / (x1 - x0) * pw;
        let py = |y: f64| TOP + ph - (ys.map(y) - y0) / (y1 - y0) * ph;
        let path = |pts: &[(f64, f64)]| -> String {
            pts.iter()
                .filter(|(x, y)| px(*x).is_finite() && py(*y).is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect::<Vec<_>>()
                .join(" ")
        };

        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(
            w,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            w,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            esc(&self.title)
        );
        let _ = writeln!(
            w,
            r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
        );

        for t in ticks(x0, x1) {
            let x = LEFT + (t - x0) / (x1 - x0) * pw;
            let _ = writeln!(
                w,
                r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#444"/>"##,
                TOP + ph,
                TOP + ph + 5.0
            );
            let _ = writeln!(
                w,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                TOP + ph + 18.0,
                tick_label(t, xs)
            );
        }
        for t in ticks(y0, y1) {
            let y = TOP + ph - (t - y0) / (y1 - y0) * ph;
            let _ = writeln!(
                w,
                r##"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="#444"/>"##,
                LEFT - 5.0
            );
            let _ = writeln!(
                w,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 8.0,
                y + 4.0,
                tick_label(t, ys)
            );
        }
        let _ = writeln!(
            w,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 12.0,
            esc(&self.x_label)
        );
        let _ = writeln!(
            w,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            esc(&self.y_label)
        );

        let mut legend = Vec::new();
        for item in &self.items {
            match item {
                Item::Band {
                    x,
                    lo,
                    hi,
                    color,
                    label,
                } => {
                    let upper: Vec<(f64, f64)> = x.iter().copied().zip(hi.iter().copied()).collect();
                    let lower: Vec<(f64, f64)> = x.iter().copied().zip(lo.iter().copied()).rev().collect();
                    let _ = writeln!(
                        w,
                        r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.25" stroke="none"/>"#,
                        path(&upper),
                        path(&lower)
                    );
                    if let Some(l) = label {
                        legend.push((l.clone(), color.clone()));
                    }
                }
                Item::Line {
                    pts,
                    color,
                    dashed,
                    label,
                } => {
                    let dash = if *dashed { r#" stroke-dasharray="6 4""# } else { "" };
                    let _ = writeln!(
                        w,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"{dash}/>"#,
                        path(pts)
                    );
                    if let Some(l) = label {
                        legend.push((l.clone(), color.clone()));
                    }
                }
                Item::Markers {
                    pts,
                    color,
                    radius,
                    label,
                } => {
                    for &(x, y) in pts {
                        let (cx, cy) = (px(x), py(y));
                        if cx.is_finite() && cy.is_finite() {
                            let _ = writeln!(
                                w,
                                r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{radius}" fill="{color}" fill-opacity="0.8"/>"#
                            );
                        }
                    }
                    if let Some(l) = label {
                        legend.push((l.clone(), color.clone()));
                    }
                }
                Item::ErrorBars { pts, color } => {
                    for &(x, y, h) in pts {
                        let (cx, top, bot) = (px(x), py(y + h), py((y - h).max(f64::MIN_POSITIVE)));
                        if cx.is_finite() && top.is_finite() && bot.is_finite() {
                            let _ = writeln!(
                                w,
                                r#"<line x1="{cx:.2}" y1="{top:.2}" x2="{cx:.2}" y2="{bot:.2}" stroke="{color}"/>"#
                            );
                        }
                    }
                }
            }
        }
        for (i, (label, color)) in legend.iter().enumerate() {
            let y = TOP + 16.0 + 16.0 * i as f64;
            let x = LEFT + pw - 190.0;
            let _ = writeln!(
                w,
                r#"<rect x="{x:.1}" y="{:.1}" width="14" height="8" fill="{color}"/>"#,
                y - 8.0
            );
            let _ = writeln!(w, r#"<text x="{:.1}" y="{y:.1}">{}</text>"#, x + 20.0, esc(label));
        }
        for (i, note) in self.notes.iter().enumerate() {
            let _ = writeln!(
                w,
                r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
                LEFT + 10.0,
                TOP + ph - 10.0 - 16.0 * i as f64,
                esc(note)
            );
        }
        let _ = writeln!(w, "</svg>");
        s
    }
}

/// About five round tick positions in `[lo, hi]` (in mapped coordinates).
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    if span.is_nan() || span <= 0.0 {
        return vec![lo];
    }
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-12 * span {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn tick_label(t: f64, scale: Scale) -> String {
    match scale {
        Scale::Linear => format!("{}", (t * 1e6).round() / 1e6),
        Scale::Log10 => format!("{:.3}", 10f64.powf(t))
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string(),
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        let t = ticks(0.0, 1.0);
        assert_eq!(t.len(), 6);
        assert_eq!(t[0], 0.0);
        assert!((t[5] - 1.0).abs() < 1e-12);
        assert_eq!(ticks(3.0, 3.0), vec![3.0]);
    }

    #[test]
    fn renders_deterministically() {
        let mut c = Chart::new("t", "x", "y").scales(Scale::Log10, Scale::Log10);
        c.line(vec![(10.0, 1.0), (100.0, 0.1)], "black", true, Some("fit"));
        c.markers(vec![(10.0, 1.0)], "red", 3.0, None);
        c.error_bars(vec![(10.0, 1.0, 0.1)], "red");
        c.note("slope -1");
        let a = c.render();
        assert_eq!(a, c.render());
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert!(a.contains("slope -1"));
    }
}
