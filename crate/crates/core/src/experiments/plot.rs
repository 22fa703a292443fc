//! Minimal SVG line plots and heatmaps.

use std::fmt::Write as _;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const MARGIN: [f64; 4] = [70.0, 20.0, 40.0, 50.0]; // left, right, top, bottom

/// One polyline.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub dashed: bool,
}

impl Series {
    pub fn new(label: &str, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            x,
            y,
            dashed: false,
        }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AxisScale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_scale: AxisScale,
    pub y_scale: AxisScale,
    pub width: u32,
    pub height: u32,
}

impl LinePlot {
    pub fn new(title: &str, x_label: &str, y_label: &str, width: u32, height: u32) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x_scale: AxisScale::Linear,
            y_scale: AxisScale::Linear,
            width,
            height,
        }
    }

    pub fn log_log(mut self) -> Self {
        self.x_scale = AxisScale::Log;
        self.y_scale = AxisScale::Log;
        self
    }

    pub fn render(&self, series: &[Series]) -> String {
        let tx = |v: f64| transform(v, self.x_scale);
        let ty = |v: f64| transform(v, self.y_scale);
        let xs = series.iter().flat_map(|s| s.x.iter().map(|&v| tx(v)));
        let ys = series.iter().flat_map(|s| s.y.iter().map(|&v| ty(v)));
        let (x0, x1) = padded_range(xs, 0.0);
        let (y0, y1) = padded_range(ys, 0.05);
        let frame = Frame::new(self.width, self.height, [x0, x1], [y0, y1]);

        let mut svg = frame.open(&self.title);
        frame.axes(&mut svg, &self.x_label, &self.y_label, self.x_scale, self.y_scale);
        for (i, s) in series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts = s
                .x
                .iter()
                .zip(&s.y)
                .map(|(&x, &y)| (tx(x), ty(y)))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(x, y)| {
                    let (px, py) = frame.to_px(x, y);
                    format!("{px:.2},{py:.2}")
                })
                .collect::<Vec<_>>()
                .join(" ");
            let dash = if s.dashed { r#" stroke-dasharray="6,4""# } else { "" };
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{pts}"/>"#
            );
            let ly = MARGIN[2] + 16.0 + 16.0 * i as f64;
            let lx = self.width as f64 - MARGIN[1] - 150.0;
            let _ = writeln!(
                svg,
                r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#,
                lx + 20.0,
                lx + 25.0,
                ly + 4.0,
                escape(&s.label)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// Heatmap of `values[i][j]` at `(x[i], y[j])` with optional overlays.
#[derive(Debug, Clone)]
pub struct Heatmap {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub width: u32,
    pub height: u32,
}

impl Heatmap {
    pub fn new(title: &str, x_label: &str, y_label: &str, width: u32, height: u32) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            width,
            height,
        }
    }

    /// `x`, `y` are cell centers (uniformly spaced); `path` is drawn as a
    /// polyline and `markers` as dots.
    pub fn render(&self, x: &[f64], y: &[f64], values: &[Vec<f64>], path: &[(f64, f64)], markers: &[(f64, f64)]) -> String {
        let half = |a: &[f64]| if a.len() > 1 { (a[1] - a[0]) / 2.0 } else { 0.5 };
        let (hx, hy) = (half(x), half(y));
        let xr = [x[0] - hx, x[x.len() - 1] + hx];
        let yr = [y[0] - hy, y[y.len() - 1] + hy];
        let frame = Frame::new(self.width, self.height, xr, yr);
        let finite = values.iter().flatten().copied().filter(|v| v.is_finite());
        let (lo, hi) = padded_range(finite, 0.0);

        let mut svg = frame.open(&self.title);
        for (i, &xi) in x.iter().enumerate() {
            for (j, &yj) in y.iter().enumerate() {
                let v = values[i][j];
                let (px0, py1) = frame.to_px(xi - hx, yj - hy);
                let (px1, py0) = frame.to_px(xi + hx, yj + hy);
                let fill = if v.is_finite() { viridis((v - lo) / (hi - lo)) } else { "#ffffff".into() };
                let _ = writeln!(
                    svg,
                    r#"<rect x="{px0:.2}" y="{py0:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                    px1 - px0 + 0.3,
                    py1 - py0 + 0.3
                );
            }
        }
        if !path.is_empty() {
            let pts = path
                .iter()
                .map(|&(a, b)| {
                    let (px, py) = frame.to_px(a, b);
                    format!("{px:.2},{py:.2}")
                })
                .collect::<Vec<_>>()
                .join(" ");
            let _ = writeln!(svg, r##"<polyline fill="none" stroke="#ffffff" stroke-width="1.5" points="{pts}"/>"##);
        }
        for &(a, b) in markers {
            let (px, py) = frame.to_px(a, b);
            let _ = writeln!(svg, r##"<circle cx="{px:.2}" cy="{py:.2}" r="2.5" fill="#d62728"/>"##);
        }
        frame.axes(&mut svg, &self.x_label, &self.y_label, AxisScale::Linear, AxisScale::Linear);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">color range [{}, {}]</text>"#,
            self.width as f64 - MARGIN[1],
            MARGIN[2] - 8.0,
            fmt_tick(lo),
            fmt_tick(hi)
        );
        svg.push_str("</svg>\n");
        svg
    }
}

struct Frame {
    width: f64,
    height: f64,
    x: [f64; 2],
    y: [f64; 2],
}

impl Frame {
    fn new(width: u32, height: u32, x: [f64; 2], y: [f64; 2]) -> Self {
        Self {
            width: width as f64,
            height: height as f64,
            x,
            y,
        }
    }

    fn to_px(&self, x: f64, y: f64) -> (f64, f64) {
        let w = self.width - MARGIN[0] - MARGIN[1];
        let h = self.height - MARGIN[2] - MARGIN[3];
        (
            MARGIN[0] + (x - self.x[0]) / (self.x[1] - self.x[0]) * w,
            MARGIN[2] + (1.0 - (y - self.y[0]) / (self.y[1] - self.y[0])) * h,
        )
    }

    fn open(&self, title: &str) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n<text x=\"{:.1}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
            self.width / 2.0,
            escape(title),
            w = self.width,
            h = self.height,
        )
    }

    fn axes(&self, svg: &mut String, x_label: &str, y_label: &str, xs: AxisScale, ys: AxisScale) {
        let (left, top) = (MARGIN[0], MARGIN[2]);
        let (right, bottom) = (self.width - MARGIN[1], self.height - MARGIN[3]);
        let _ = writeln!(
            svg,
            r#"<rect x="{left}" y="{top}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
            right - left,
            bottom - top
        );
        for t in ticks(self.x[0], self.x[1]) {
            let (px, _) = self.to_px(t, self.y[0]);
            let _ = writeln!(
                svg,
                r#"<line x1="{px:.2}" y1="{bottom}" x2="{px:.2}" y2="{:.1}" stroke="black"/><text x="{px:.2}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
                bottom + 5.0,
                bottom + 18.0,
                tick_label(t, xs)
            );
        }
        for t in ticks(self.y[0], self.y[1]) {
            let (_, py) = self.to_px(self.x[0], t);
            let _ = writeln!(
                svg,
                r#"<line x1="{:.1}" y1="{py:.2}" x2="{left}" y2="{py:.2}" stroke="black"/><text x="{:.1}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#,
                left - 5.0,
                left - 8.0,
                py + 4.0,
                tick_label(t, ys)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#,
            (left + right) / 2.0,
            self.height - 12.0,
            escape(x_label)
        );
        let (cx, cy) = (16.0, (top + bottom) / 2.0);
        let _ = writeln!(
            svg,
            r#"<text x="{cx}" y="{cy:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 {cx} {cy:.1})">{}</text>"#,
            escape(y_label)
        );
    }
}

fn transform(v: f64, scale: AxisScale) -> f64 {
    match scale {
        AxisScale::Linear => v,
        AxisScale::Log if v > 0.0 => v.log10(),
        AxisScale::Log => f64::NAN,
    }
}

fn padded_range(values: impl Iterator<Item = f64>, pad: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        return (lo - 0.5, hi + 0.5);
    }
    let p = pad * (hi - lo);
    (lo - p, hi + p)
}

/// Roughly five round tick positions in `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step && out.len() < 20 {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn tick_label(t: f64, scale: AxisScale) -> String {
    match scale {
        AxisScale::Linear => fmt_tick(t),
        AxisScale::Log => fmt_tick(10f64.powf(t)),
    }
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Piecewise-linear approximation of the viridis colormap.
fn viridis(t: f64) -> String {
    const STOPS: [[f64; 3]; 5] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [94.0, 201.0, 98.0],
        [253.0, 231.0, 37.0],
    ];
    let t = t.clamp(0.0, 1.0) * 4.0;
    let i = (t.floor() as usize).min(3);
    let f = t - i as f64;
    let c: Vec<u8> = (0..3)
        .map(|k| (STOPS[i][k] + f * (STOPS[i + 1][k] - STOPS[i][k])).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}
