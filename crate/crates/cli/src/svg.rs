//! Self-contained SVG line charts.

use std::fmt::Write;

pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: String,
    pub points: Vec<(f64, f64)>,
    /// `(x, lo, hi)` shaded behind the line.
    pub band: Option<Vec<(f64, f64, f64)>>,
    pub dashed: bool,
}

#[derive(Debug, Clone)]
pub struct Axes {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
}

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Maps data coordinates to pixels inside a plot rectangle.
#[derive(Debug, Clone, Copy)]
struct Scale {
    lo: f64,
    hi: f64,
    log: bool,
    px_lo: f64,
    px_hi: f64,
}

impl Scale {
    fn new(mut lo: f64, mut hi: f64, log: bool, px_lo: f64, px_hi: f64) -> Self {
        if log {
            lo = lo.log10().floor();
            hi = hi.log10().ceil();
            if hi <= lo {
                hi = lo + 1.0;
            }
        } else if hi <= lo {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
            lo -= pad;
            hi += pad;
        }
        Self { lo, hi, log, px_lo, px_hi }
    }

    fn usable(&self, v: f64) -> bool {
        v.is_finite() && (!self.log || v > 0.0)
    }

    fn px(&self, v: f64) -> f64 {
        let t = if self.log { v.log10() } else { v };
        self.px_lo + (t - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }

    /// `(value, label)` tick marks.
    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (lo, hi) = (self.lo as i32, self.hi as i32);
            let step = ((hi - lo) as f64 / 8.0).ceil().max(1.0) as i32;
            (lo..=hi)
                .step_by(step as usize)
                .map(|e| (10f64.powi(e), format!("1e{e}")))
                .collect()
        } else {
            let raw = (self.hi - self.lo) / 5.0;
            let mag = 10f64.powf(raw.log10().floor());
            let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(raw);
            let mut v = (self.lo / step).ceil() * step;
            let mut out = Vec::new();
            while v <= self.hi + step * 1e-9 {
                out.push((v, format_tick(v, step)));
                v += step;
            }
            out
        }
    }
}

fn format_tick(v: f64, step: f64) -> String {
    let digits = (-step.log10().floor()).max(0.0) as usize;
    let v = if v.abs() < step * 1e-9 { 0.0 } else { v };
    format!("{v:.digits$}")
}

fn range(values: impl Iterator<Item = f64>, log: bool) -> Option<(f64, f64)> {
    values
        .filter(|v| v.is_finite() && (!log || *v > 0.0))
        .fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
}

fn polyline(out: &mut String, pts: impl Iterator<Item = (f64, f64)>, color: &str, width: f64, dashed: bool) {
    let d: Vec<String> = pts.map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    if d.len() < 2 {
        return;
    }
    let dash = if dashed { " stroke-dasharray=\"6 4\"" } else { "" };
    let _ = writeln!(
        out,
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"{dash} points=\"{}\"/>",
        d.join(" ")
    );
}

fn frame(out: &mut String, sx: &Scale, sy: &Scale, x0: f64, y0: f64, x1: f64, y1: f64) {
    let _ = writeln!(
        out,
        "<rect x=\"{x0:.2}\" y=\"{y1:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#444\"/>",
        x1 - x0,
        y0 - y1
    );
    for (v, label) in sx.ticks() {
        let x = sx.px(v);
        let _ = writeln!(
            out,
            "<line x1=\"{x:.2}\" y1=\"{y0:.2}\" x2=\"{x:.2}\" y2=\"{y1:.2}\" stroke=\"#ddd\"/>\
             <text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">{label}</text>",
            y0 + 15.0
        );
    }
    for (v, label) in sy.ticks() {
        let y = sy.px(v);
        let _ = writeln!(
            out,
            "<line x1=\"{x0:.2}\" y1=\"{y:.2}\" x2=\"{x1:.2}\" y2=\"{y:.2}\" stroke=\"#ddd\"/>\
             <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{label}</text>",
            x0 - 5.0,
            y + 4.0
        );
    }
}

fn header(w: f64, h: f64, title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"22\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        w / 2.0,
        escape(title)
    )
}

/// Line chart with optional shaded bands and a legend on the right.
pub fn line_chart(axes: &Axes, series: &[Series]) -> String {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let ys = series.iter().flat_map(|s| {
        let band = s.band.iter().flatten().flat_map(|b| [b.1, b.2]);
        s.points.iter().map(|p| p.1).chain(band)
    });
    let (xlo, xhi) = range(xs, axes.log_x).unwrap_or((1.0, 10.0));
    let (ylo, yhi) = range(ys, axes.log_y).unwrap_or((1.0, 10.0));
    let sx = Scale::new(xlo, xhi, axes.log_x, x0, x1);
    let sy = Scale::new(ylo, yhi, axes.log_y, y0, y1);

    let mut out = header(W, H, &axes.title);
    frame(&mut out, &sx, &sy, x0, y0, x1, y1);
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"16\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>",
        (x0 + x1) / 2.0,
        H - 14.0,
        escape(&axes.x_label),
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(&axes.y_label)
    );
    for s in series {
        if let Some(band) = &s.band {
            let pts: Vec<&(f64, f64, f64)> = band
                .iter()
                .filter(|b| sx.usable(b.0) && sy.usable(b.1) && sy.usable(b.2))
                .collect();
            if pts.len() >= 2 {
                let upper = pts.iter().map(|b| format!("{:.2},{:.2}", sx.px(b.0), sy.px(b.2)));
                let lower = pts.iter().rev().map(|b| format!("{:.2},{:.2}", sx.px(b.0), sy.px(b.1)));
                let d: Vec<String> = upper.chain(lower).collect();
                let _ = writeln!(
                    out,
                    "<polygon fill=\"{}\" fill-opacity=\"0.18\" stroke=\"none\" points=\"{}\"/>",
                    s.color,
                    d.join(" ")
                );
            }
        }
    }
    for s in series {
        let pts = s
            .points
            .iter()
            .filter(|p| sx.usable(p.0) && sy.usable(p.1))
            .map(|p| (sx.px(p.0), sy.px(p.1)));
        polyline(&mut out, pts, &s.color, 1.8, s.dashed);
    }
    for (i, s) in series.iter().enumerate() {
        let y = TOP + 14.0 + 20.0 * i as f64;
        let lx = W - RIGHT + 12.0;
        let dash = if s.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        let _ = writeln!(
            out,
            "<line x1=\"{lx:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"{}\" stroke-width=\"2\"{dash}/>\
             <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\">{}</text>",
            lx + 24.0,
            s.color,
            lx + 30.0,
            y + 4.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One categorical law drawn in a state panel.
#[derive(Debug, Clone)]
pub struct LawCurve {
    pub label: String,
    pub color: String,
    /// `(location, mass)` pairs in increasing location.
    pub atoms: Vec<(f64, f64)>,
    pub mean: f64,
}

/// One panel per state; each law is a line over its atoms with a dashed
/// vertical line at its mean.
pub fn law_panels(title: &str, panels: &[(String, Vec<LawCurve>)]) -> String {
    const PW: f64 = 300.0;
    const PH: f64 = 220.0;
    let cols = panels.len().clamp(1, 3);
    let rows = panels.len().div_ceil(cols).max(1);
    let legend_h = 24.0;
    let (w, h) = (cols as f64 * PW + 20.0, rows as f64 * PH + 50.0 + legend_h);
    let all = panels.iter().flat_map(|(_, c)| c.iter());
    let (xlo, xhi) = range(all.clone().flat_map(|c| c.atoms.iter().map(|a| a.0)), false).unwrap_or((0.0, 1.0));
    let (_, yhi) = range(all.flat_map(|c| c.atoms.iter().map(|a| a.1)), false).unwrap_or((0.0, 1.0));

    let mut out = header(w, h, title);
    for (p, (name, curves)) in panels.iter().enumerate() {
        let (c, r) = ((p % cols) as f64, (p / cols) as f64);
        let (x0, x1) = (10.0 + c * PW + 46.0, 10.0 + (c + 1.0) * PW - 10.0);
        let (y1, y0) = (40.0 + r * PH + 20.0, 40.0 + (r + 1.0) * PH - 28.0);
        let sx = Scale::new(xlo, xhi, false, x0, x1);
        let sy = Scale::new(0.0, yhi.max(1e-12), false, y0, y1);
        frame(&mut out, &sx, &sy, x0, y0, x1, y1);
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
            (x0 + x1) / 2.0,
            y1 - 5.0,
            escape(name)
        );
        for curve in curves {
            polyline(
                &mut out,
                curve.atoms.iter().map(|a| (sx.px(a.0), sy.px(a.1))),
                &curve.color,
                1.5,
                false,
            );
            let mx = sx.px(curve.mean.clamp(sx.lo, sx.hi));
            let _ = writeln!(
                out,
                "<line x1=\"{mx:.2}\" y1=\"{y0:.2}\" x2=\"{mx:.2}\" y2=\"{y1:.2}\" stroke=\"{}\" stroke-width=\"1.2\" stroke-dasharray=\"5 3\"/>",
                curve.color
            );
        }
    }
    if let Some((_, curves)) = panels.first() {
        let mut x = 20.0;
        let y = h - 12.0;
        for curve in curves {
            let _ = writeln!(
                out,
                "<line x1=\"{x:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"{}\" stroke-width=\"2\"/>\
                 <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\">{}</text>",
                x + 20.0,
                curve.color,
                x + 25.0,
                y + 4.0,
                escape(&curve.label)
            );
            x += 40.0 + 7.0 * curve.label.len() as f64;
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axes() -> Axes {
        Axes {
            title: "t".into(),
            x_label: "k".into(),
            y_label: "r".into(),
            log_x: true,
            log_y: true,
        }
    }

    #[test]
    fn log_chart_skips_nonpositive_points() {
        let s = Series {
            label: "a<b".into(),
            color: PALETTE[0].into(),
            points: vec![(1.0, 1.0), (10.0, 0.0), (100.0, 0.1)],
            band: None,
            dashed: false,
        };
        let svg = line_chart(&axes(), &[s]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("a&lt;b"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn band_only_with_two_points() {
        let s = Series {
            label: "x".into(),
            color: PALETTE[1].into(),
            points: vec![(1.0, 1.0), (10.0, 0.5)],
            band: Some(vec![(1.0, 0.9, 1.1), (10.0, 0.4, 0.6)]),
            dashed: true,
        };
        let svg = line_chart(&axes(), &[s]);
        assert_eq!(svg.matches("<polygon").count(), 1);
        assert!(svg.contains("stroke-dasharray"));
    }

    #[test]
    fn panels_have_mean_lines() {
        let curve = LawCurve {
            label: "km".into(),
            color: PALETTE[0].into(),
            atoms: vec![(0.0, 0.2), (0.5, 0.5), (1.0, 0.3)],
            mean: 0.55,
        };
        let svg = law_panels("laws", &[("state 0".into(), vec![curve.clone()]), ("state 1".into(), vec![curve])]);
        assert_eq!(svg.matches("stroke-dasharray=\"5 3\"").count(), 2);
    }

    #[test]
    fn linear_ticks_cover_range() {
        let s = Scale::new(-0.2, 0.45, false, 0.0, 100.0);
        let t = s.ticks();
        assert!(t.len() >= 3 && t.len() <= 12);
        assert!(t.iter().any(|(v, _)| *v == 0.0));
    }
}
