//! Self-contained SVG figures: bar chart, heatmap and line charts.

use std::fmt::Write;

use ndarray::Array2;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Axis range padded so that a constant series still spans a visible band.
fn padded_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

/// Round tick positions covering [lo, hi].
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= target as f64)
        .unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    (start..=end).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn open(svg: &mut String, title: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(title)
    );
}

fn axes(svg: &mut String, f: &Frame, x_label: &str, y_label: &str, x_ticks: bool) {
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        svg,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#
    );
    if x_ticks {
        for t in ticks(f.x.0, f.x.1, 8) {
            let x = f.px(t);
            let _ = writeln!(
                svg,
                r#"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                y0 + 5.0,
                y0 + 18.0,
                fmt_tick(t)
            );
        }
    }
    for t in ticks(f.y.0, f.y.1, 6) {
        let y = f.py(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/><line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#e0e0e0"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(18,{:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

/// Bars at `x` positions; highlighted bars are drawn in the accent colour.
pub fn bar_chart(title: &str, x_label: &str, y_label: &str, x: &[f64], values: &[f64], highlight: &[bool]) -> String {
    let mut svg = String::new();
    open(&mut svg, title);
    let (xl, xh) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    let vmax = values.iter().copied().fold(0.0, f64::max);
    let f = Frame {
        x: padded_range(xl, xh),
        y: (0.0, if vmax > 0.0 { vmax * 1.05 } else { 1.0 }),
    };
    axes(&mut svg, &f, x_label, y_label, true);
    let width = if x.len() > 1 {
        ((f.px(x[1]) - f.px(x[0])).abs() * 0.8).max(1.0)
    } else {
        6.0
    };
    for (i, (&xi, &v)) in x.iter().zip(values).enumerate() {
        let color = if highlight.get(i).copied().unwrap_or(false) {
            PALETTE[1]
        } else {
            PALETTE[0]
        };
        let top = f.py(v);
        let _ = writeln!(
            svg,
            r#"<rect x="{:.2}" y="{top:.2}" width="{width:.2}" height="{:.2}" fill="{color}"/>"#,
            f.px(xi) - width / 2.0,
            (f.py(0.0) - top).max(0.0)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Blue to yellow colour ramp for t in [0, 1].
fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let stops = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let pos = t * (stops.len() - 1) as f64;
    let i = (pos.floor() as usize).min(stops.len() - 2);
    let w = pos - i as f64;
    let lerp = |a: f64, b: f64| (a + (b - a) * w).round() as u8;
    let (a, b) = (stops[i], stops[i + 1]);
    format!("#{:02x}{:02x}{:02x}", lerp(a.0, b.0), lerp(a.1, b.1), lerp(a.2, b.2))
}

/// Heatmap of `values` (rows along y, columns along x), downsampled to at
/// most `max_cols` columns by block averaging.
pub fn heatmap(
    title: &str,
    x_label: &str,
    y_label: &str,
    x_range: (f64, f64),
    y_range: (f64, f64),
    values: &Array2<f64>,
    max_cols: usize,
) -> String {
    let (rows, cols) = values.dim();
    let block = cols.div_ceil(max_cols.max(1)).max(1);
    let out_cols = cols.div_ceil(block);
    let mut reduced = Array2::<f64>::zeros((rows, out_cols));
    for r in 0..rows {
        for c in 0..out_cols {
            let end = ((c + 1) * block).min(cols);
            let slice = values.slice(ndarray::s![r, c * block..end]);
            reduced[(r, c)] = slice.sum() / slice.len() as f64;
        }
    }
    let vmax = reduced.iter().copied().fold(0.0, f64::max);
    let mut svg = String::new();
    open(&mut svg, title);
    let f = Frame { x: x_range, y: y_range };
    let cw = (WIDTH - LEFT - RIGHT) / out_cols.max(1) as f64;
    let ch = (HEIGHT - TOP - BOTTOM) / rows.max(1) as f64;
    for r in 0..rows {
        for c in 0..out_cols {
            let t = if vmax > 0.0 { reduced[(r, c)] / vmax } else { 0.0 };
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                LEFT + c as f64 * cw,
                HEIGHT - BOTTOM - (r + 1) as f64 * ch,
                cw + 0.3,
                ch + 0.3,
                ramp(t)
            );
        }
    }
    axes(&mut svg, &f, x_label, y_label, true);
    // colour bar
    let bx = WIDTH - RIGHT + 20.0;
    for i in 0..50 {
        let t = i as f64 / 49.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{bx}" y="{:.2}" width="14" height="{:.2}" fill="{}"/>"#,
            HEIGHT - BOTTOM - (i + 1) as f64 * (HEIGHT - TOP - BOTTOM) / 50.0,
            (HEIGHT - TOP - BOTTOM) / 50.0 + 0.3,
            ramp(t)
        );
    }
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">0</text>"#, bx + 18.0, HEIGHT - BOTTOM);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}">{:.3}</text>"#,
        bx + 18.0,
        TOP + 10.0,
        vmax
    );
    svg.push_str("</svg>\n");
    svg
}

/// One polyline of a line chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
    pub markers: bool,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            points,
            dashed: false,
            markers: false,
        }
    }
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let finite = || {
        series
            .iter()
            .flat_map(|s| s.points.iter())
            .filter(|p| p.0.is_finite() && p.1.is_finite())
    };
    let (xl, xh) = finite().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p.0), h.max(p.0)));
    let (yl, yh) = finite().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p.1), h.max(p.1)));
    let f = Frame {
        x: if xh > xl { (xl, xh) } else { padded_range(xl, xh) },
        y: padded_range(yl, yh),
    };
    let mut svg = String::new();
    open(&mut svg, title);
    axes(&mut svg, &f, x_label, y_label, true);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut d = String::new();
        let mut pen_down = false;
        for &(x, y) in &s.points {
            if !(x.is_finite() && y.is_finite()) {
                pen_down = false;
                continue;
            }
            let _ = write!(d, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, f.px(x), f.py(y));
            pen_down = true;
        }
        let dash = if s.dashed { r#" stroke-dasharray="6,4""# } else { "" };
        let _ = writeln!(
            svg,
            r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            d.trim_end()
        );
        if s.markers {
            for &(x, y) in s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                    f.px(x),
                    f.py(y)
                );
            }
        }
        let ly = TOP + 10.0 + i as f64 * 18.0;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.2}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 22.0,
            lx + 28.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
