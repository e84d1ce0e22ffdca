//! Minimal static SVG line charts.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

pub struct Chart<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub log_y: bool,
    pub points: &'a [(f64, f64)],
    /// Horizontal reference line and its label.
    pub reference: Option<(f64, &'a str)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

impl Chart<'_> {
    pub fn render(&self) -> String {
        let transform = |y: f64| if self.log_y { y.log10() } else { y };
        // smallest positive value stands in for zeros on a log axis
        let floor = self
            .points
            .iter()
            .map(|p| p.1)
            .chain(self.reference.map(|r| r.0))
            .filter(|&y| y > 0.0)
            .fold(f64::INFINITY, f64::min);
        let floor = if floor.is_finite() { floor } else { 1e-16 };
        let ys: Vec<f64> = self
            .points
            .iter()
            .map(|p| {
                if self.log_y {
                    transform(p.1.max(floor))
                } else {
                    p.1
                }
            })
            .collect();
        let ref_y = self.reference.map(|r| {
            if self.log_y {
                transform(r.0.max(floor))
            } else {
                r.0
            }
        });

        let (mut y_lo, mut y_hi) = ys
            .iter()
            .chain(ref_y.iter())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
                (lo.min(y), hi.max(y))
            });
        if !y_lo.is_finite() {
            (y_lo, y_hi) = (0.0, 1.0);
        }
        if self.log_y {
            y_lo = y_lo.floor();
            y_hi = y_hi.ceil();
        }
        if y_hi - y_lo < 1e-300 {
            y_hi = y_lo + 1.0;
        }
        let (x_lo, x_hi) = self
            .points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.0), hi.max(p.0))
            });
        let (x_lo, x_hi) = if x_lo.is_finite() && x_hi > x_lo {
            (x_lo, x_hi)
        } else {
            (0.0, 1.0)
        };

        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let px = |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
        let py = |y: f64| MARGIN_TOP + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(self.title)
        );
        let _ = writeln!(
            svg,
            r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
        );

        let ticks = 5;
        for i in 0..=ticks {
            let y = y_lo + (y_hi - y_lo) * i as f64 / ticks as f64;
            let label = if self.log_y {
                format!("1e{y:.1}")
            } else {
                format!("{y:.3e}")
            };
            let _ = writeln!(
                svg,
                r##"<line x1="{MARGIN_LEFT}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="#ddd"/><text x="{2:.2}" y="{3:.2}" text-anchor="end">{4}</text>"##,
                py(y),
                MARGIN_LEFT + plot_w,
                MARGIN_LEFT - 6.0,
                py(y) + 4.0,
                label
            );
            let x = x_lo + (x_hi - x_lo) * i as f64 / ticks as f64;
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                px(x),
                MARGIN_TOP + plot_h + 18.0,
                format_tick(x)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            HEIGHT - 10.0,
            escape(self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{0:.2}" text-anchor="middle" transform="rotate(-90 16 {0:.2})">{1}</text>"#,
            MARGIN_TOP + plot_h / 2.0,
            escape(self.y_label)
        );

        if let (Some(y), Some((_, label))) = (ref_y, self.reference) {
            let _ = writeln!(
                svg,
                r##"<line x1="{MARGIN_LEFT}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="#c0392b" stroke-dasharray="6 4"/><text x="{2:.2}" y="{3:.2}" text-anchor="end" fill="#c0392b">{4}</text>"##,
                py(y),
                MARGIN_LEFT + plot_w,
                MARGIN_LEFT + plot_w - 4.0,
                py(y) - 4.0,
                escape(label)
            );
        }

        let path: Vec<String> = self
            .points
            .iter()
            .zip(&ys)
            .map(|(p, &y)| format!("{:.2},{:.2}", px(p.0), py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r##"<polyline fill="none" stroke="#1f77b4" stroke-width="2" points="{}"/>"##,
            path.join(" ")
        );
        for (p, &y) in self.points.iter().zip(&ys) {
            let _ = writeln!(
                svg,
                r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="#1f77b4"/>"##,
                px(p.0),
                py(y)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn format_tick(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x:.0}")
    } else {
        format!("{x:.2}")
    }
}
