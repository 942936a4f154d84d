//! Minimal static SVG line plots.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const TICKS: usize = 5;

pub struct Plot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    /// Multiplies x values before plotting (e.g. 1e3 for mm).
    pub x_scale: f64,
    pub y_scale: f64,
    pub xs: &'a [f64],
    pub ys: &'a [f64],
    /// Indices of samples drawn as small circles on the curve.
    pub markers: &'a [usize],
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v
        .filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.05 };
        (lo - pad, hi + pad)
    }
}

pub fn render(plot: &Plot) -> String {
    let xs: Vec<f64> = plot.xs.iter().map(|x| x * plot.x_scale).collect();
    let ys: Vec<f64> = plot.ys.iter().map(|y| y * plot.y_scale).collect();
    let (x0, x1) = bounds(xs.iter().copied());
    let (y0, y1) = bounds(ys.iter().copied());
    let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| MARGIN_TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(plot.title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(xv),
            MARGIN_TOP + ph + 18.0,
            tick_label(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 6.0,
            py(yv) + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + pw / 2.0,
        HEIGHT - 10.0,
        escape(plot.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        MARGIN_TOP + ph / 2.0,
        MARGIN_TOP + ph / 2.0,
        escape(plot.y_label)
    );
    let points: Vec<String> = xs
        .iter()
        .zip(&ys)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#,
        points.join(" ")
    );
    for &i in plot.markers {
        if let (Some(&x), Some(&y)) = (xs.get(i), ys.get(i)) {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="crimson"/>"#,
                px(x),
                py(y)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_deterministically() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [1.0, 3.0, 2.0];
        let plot = Plot {
            title: "g2 <vs> L",
            x_label: "L (mm)",
            y_label: "g2",
            x_scale: 1.0,
            y_scale: 1.0,
            xs: &xs,
            ys: &ys,
            markers: &[1],
        };
        let a = render(&plot);
        assert_eq!(a, render(&plot));
        assert!(a.starts_with("<svg"));
        assert!(a.contains("&lt;vs&gt;"));
        assert!(a.contains("<circle"));
        assert!(a.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn constant_series_does_not_divide_by_zero() {
        let plot = Plot {
            title: "",
            x_label: "",
            y_label: "",
            x_scale: 1.0,
            y_scale: 1.0,
            xs: &[0.0, 1.0],
            ys: &[2.0, 2.0],
            markers: &[],
        };
        assert!(!render(&plot).contains("NaN"));
    }
}
