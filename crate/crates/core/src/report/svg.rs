//! Minimal static SVG line/scatter plots.
//!
//! Every plotted datum carries its raw coordinates in `data-*` attributes so
//! figures can be parsed back and compared with the CSV tables.

use std::fmt::Write as _;

use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 56.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

impl Scale {
    fn forward(self, v: f64) -> f64 {
        match self {
            Scale::Linear => v,
            Scale::Log => v.ln(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Scale::Linear => "linear",
            Scale::Log => "log",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub label: String,
    pub scale: Scale,
}

impl Axis {
    pub fn linear(label: impl Into<String>) -> Self {
        Axis { label: label.into(), scale: Scale::Linear }
    }

    pub fn log(label: impl Into<String>) -> Self {
        Axis { label: label.into(), scale: Scale::Log }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub markers: bool,
    pub line: bool,
    /// Extra class on the group, e.g. `"optimum"`.
    pub class: Option<String>,
}

impl Series {
    pub fn markers(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series { name: name.into(), points, markers: true, line: false, class: None }
    }

    pub fn line(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series { name: name.into(), points, markers: false, line: true, class: None }
    }

    pub fn with_line(mut self) -> Self {
        self.line = true;
        self
    }

    pub fn with_class(mut self, class: impl Into<String>) -> Self {
        self.class = Some(class.into());
        self
    }
}

/// Straight line in transformed coordinates: `Y = slope * X + intercept`,
/// where `X`, `Y` are the axis-transformed values (`ln` on log axes).
#[derive(Debug, Clone, PartialEq)]
pub struct FitLine {
    pub name: String,
    pub slope: f64,
    pub intercept: f64,
    pub x_start: f64,
    pub x_end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x: Axis,
    pub y: Axis,
    pub series: Vec<Series>,
    pub fits: Vec<FitLine>,
    pub notes: Vec<String>,
}

impl Plot {
    pub fn new(title: impl Into<String>, x: Axis, y: Axis) -> Self {
        Plot { title: title.into(), x, y, series: Vec::new(), fits: Vec::new(), notes: Vec::new() }
    }

    fn fit_y(&self, f: &FitLine, x: f64) -> f64 {
        let yt = f.slope * self.x.scale.forward(x) + f.intercept;
        match self.y.scale {
            Scale::Linear => yt,
            Scale::Log => yt.exp(),
        }
    }

    fn usable(&self, (x, y): (f64, f64)) -> bool {
        let ok = |v: f64, s: Scale| v.is_finite() && (s == Scale::Linear || v > 0.0);
        ok(x, self.x.scale) && ok(y, self.y.scale)
    }

    /// Data range in transformed coordinates, padded by 5%.
    fn bounds(&self) -> Result<[(f64, f64); 2]> {
        let mut pts: Vec<(f64, f64)> = self.series.iter().flat_map(|s| s.points.iter().copied()).collect();
        for f in &self.fits {
            pts.push((f.x_start, self.fit_y(f, f.x_start)));
            pts.push((f.x_end, self.fit_y(f, f.x_end)));
        }
        pts.retain(|&p| self.usable(p));
        if pts.is_empty() {
            return Err(Error::EmptyInput("plot data"));
        }
        let range = |vals: Vec<f64>| {
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5_f64.max(0.05 * lo.abs()) };
            (lo - pad, hi + pad)
        };
        Ok([
            range(pts.iter().map(|p| self.x.scale.forward(p.0)).collect()),
            range(pts.iter().map(|p| self.y.scale.forward(p.1)).collect()),
        ])
    }

    pub fn render(&self) -> Result<String> {
        let [(x0, x1), (y0, y1)] = self.bounds()?;
        let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let px = |x: f64| MARGIN_LEFT + (self.x.scale.forward(x) - x0) / (x1 - x0) * pw;
        let py = |y: f64| MARGIN_TOP + ph - (self.y.scale.forward(y) - y0) / (y1 - y0) * ph;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" data-x-scale="{}" data-y-scale="{}">"#,
            self.x.scale.name(),
            self.y.scale.name()
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text class="title" x="{}" y="22" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
            MARGIN_LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
        );
        self.axes(&mut s, (x0, x1), (y0, y1), pw, ph);
        for (i, series) in self.series.iter().enumerate() {
            let colour = PALETTE[i % PALETTE.len()];
            let class = series.class.as_deref().map(|c| format!(" {c}")).unwrap_or_default();
            let _ = writeln!(s, r#"<g class="series{class}" data-name="{}">"#, escape(&series.name));
            let pts: Vec<(f64, f64)> = series.points.iter().copied().filter(|&p| self.usable(p)).collect();
            if series.line && pts.len() > 1 {
                let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
                    path.join(" ")
                );
            }
            if series.markers {
                for &(x, y) in &pts {
                    let _ = writeln!(
                        s,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{colour}" data-x="{x}" data-y="{y}"/>"#,
                        px(x),
                        py(y)
                    );
                }
            }
            let _ = writeln!(s, "</g>");
        }
        for (i, f) in self.fits.iter().enumerate() {
            let colour = PALETTE[(self.series.len() + i) % PALETTE.len()];
            let (ya, yb) = (self.fit_y(f, f.x_start), self.fit_y(f, f.x_end));
            if !self.usable((f.x_start, ya)) || !self.usable((f.x_end, yb)) {
                continue;
            }
            let _ = writeln!(
                s,
                r#"<line class="fit" data-name="{}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{colour}" stroke-width="1.5" stroke-dasharray="6 3" data-slope="{}" data-intercept="{}" data-x1="{}" data-y1="{}" data-x2="{}" data-y2="{}"/>"#,
                escape(&f.name),
                px(f.x_start),
                py(ya),
                px(f.x_end),
                py(yb),
                f.slope,
                f.intercept,
                f.x_start,
                ya,
                f.x_end,
                yb
            );
        }
        self.legend(&mut s);
        let _ = writeln!(s, "</svg>");
        Ok(s)
    }

    fn axes(&self, s: &mut String, (x0, x1): (f64, f64), (y0, y1): (f64, f64), pw: f64, ph: f64) {
        let fmt = |v: f64, scale: Scale| match scale {
            Scale::Log => format!("{:.2e}", v.exp()),
            Scale::Linear => format!("{v:.3}"),
        };
        for k in 0..=4 {
            let t = k as f64 / 4.0;
            let xv = x0 + t * (x1 - x0);
            let xp = MARGIN_LEFT + t * pw;
            let _ = writeln!(
                s,
                r#"<text class="tick" x="{xp:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="10">{}</text>"#,
                MARGIN_TOP + ph + 16.0,
                fmt(xv, self.x.scale)
            );
            let yv = y0 + t * (y1 - y0);
            let yp = MARGIN_TOP + ph - t * ph;
            let _ = writeln!(
                s,
                r#"<text class="tick" x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="10">{}</text>"#,
                MARGIN_LEFT - 6.0,
                yp + 3.0,
                fmt(yv, self.y.scale)
            );
        }
        let _ = writeln!(
            s,
            r#"<text class="xlabel" x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            MARGIN_LEFT + pw / 2.0,
            HEIGHT - 14.0,
            escape(&self.x.label)
        );
        let cy = MARGIN_TOP + ph / 2.0;
        let _ = writeln!(
            s,
            r#"<text class="ylabel" x="16" y="{cy:.2}" transform="rotate(-90 16 {cy:.2})" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            escape(&self.y.label)
        );
    }

    fn legend(&self, s: &mut String) {
        let x = WIDTH - MARGIN_RIGHT + 12.0;
        let mut y = MARGIN_TOP + 8.0;
        let names = self.series.iter().map(|se| se.name.as_str()).chain(self.fits.iter().map(|f| f.name.as_str()));
        for (i, name) in names.enumerate() {
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{:.2}" width="10" height="10" fill="{}"/><text class="legend" x="{}" y="{:.2}" font-family="sans-serif" font-size="10">{}</text>"#,
                y - 8.0,
                PALETTE[i % PALETTE.len()],
                x + 14.0,
                y + 1.0,
                escape(name)
            );
            y += 15.0;
        }
        for note in &self.notes {
            y += 4.0;
            let _ = writeln!(
                s,
                r##"<text class="note" x="{x}" y="{y:.2}" font-family="sans-serif" font-size="10" fill="#555">{}</text>"##,
                escape(note)
            );
            y += 12.0;
        }
    }
}

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Value of attribute `name` in an SVG element string, if present.
pub fn attribute<'a>(element: &'a str, name: &str) -> Option<&'a str> {
    let key = format!(" {name}=\"");
    let start = element.find(&key)? + key.len();
    let len = element[start..].find('"')?;
    Some(&element[start..start + len])
}

/// Elements (start tags) with the given tag name, in document order.
pub fn elements<'a>(svg: &'a str, tag: &str) -> Vec<&'a str> {
    let open = format!("<{tag} ");
    let mut out = Vec::new();
    let mut rest = svg;
    while let Some(i) = rest.find(&open) {
        let tail = &rest[i..];
        let end = tail.find('>').map_or(tail.len(), |e| e + 1);
        out.push(&tail[..end]);
        rest = &tail[end..];
    }
    out
}

/// Parsed `data-*` of every fit line.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedFit {
    pub name: String,
    pub slope: f64,
    pub intercept: f64,
    pub start: (f64, f64),
    pub end: (f64, f64),
}

pub fn parse_fit_lines(svg: &str) -> Result<Vec<ParsedFit>> {
    let num = |el: &str, name: &str| -> Result<f64> {
        attribute(el, name)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format { what: "svg", message: format!("fit line lacks numeric {name}") })
    };
    elements(svg, "line")
        .into_iter()
        .filter(|el| attribute(el, "class") == Some("fit"))
        .map(|el| {
            Ok(ParsedFit {
                name: attribute(el, "data-name").unwrap_or_default().to_string(),
                slope: num(el, "data-slope")?,
                intercept: num(el, "data-intercept")?,
                start: (num(el, "data-x1")?, num(el, "data-y1")?),
                end: (num(el, "data-x2")?, num(el, "data-y2")?),
            })
        })
        .collect()
}

/// Marker coordinates of each series, keyed by series name.
pub fn parse_markers(svg: &str) -> Vec<(String, Vec<(f64, f64)>)> {
    let mut out: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for chunk in svg.split("<g class=\"series").skip(1) {
        let header = &chunk[..chunk.find('>').unwrap_or(chunk.len())];
        let name = attribute(&format!(" {header}"), "data-name").unwrap_or_default().to_string();
        let body = &chunk[..chunk.find("</g>").unwrap_or(chunk.len())];
        let pts = elements(body, "circle")
            .into_iter()
            .filter_map(|el| Some((attribute(el, "data-x")?.parse().ok()?, attribute(el, "data-y")?.parse().ok()?)))
            .collect();
        out.push((name, pts));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Plot {
        let mut p = Plot::new("a < b & \"c\"", Axis::log("N"), Axis::linear("loss"));
        p.series.push(Series::markers("C=1e9", vec![(1e3, 2.0), (1e4, 1.5), (1e5, 1.8)]).with_line());
        p.fits.push(FitLine { name: "fit".into(), slope: 0.5, intercept: -1.0, x_start: 1e3, x_end: 1e5 });
        p.notes.push("reference 0.58".into());
        p
    }

    #[test]
    fn markers_round_trip() {
        let svg = sample().render().unwrap();
        let m = parse_markers(&svg);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].0, "C=1e9");
        assert_eq!(m[0].1, vec![(1e3, 2.0), (1e4, 1.5), (1e5, 1.8)]);
    }

    #[test]
    fn fit_endpoints_follow_transformed_line() {
        let svg = sample().render().unwrap();
        let f = &parse_fit_lines(&svg).unwrap()[0];
        assert_eq!((f.slope, f.intercept), (0.5, -1.0));
        assert_eq!(f.start.0, 1e3);
        // log x, linear y: y = 0.5 ln x - 1
        assert!((f.start.1 - (0.5 * 1e3f64.ln() - 1.0)).abs() < 1e-12);
        assert!((f.end.1 - (0.5 * 1e5f64.ln() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn text_is_escaped() {
        let svg = sample().render().unwrap();
        assert!(svg.contains("a &lt; b &amp; &quot;c&quot;"));
        assert!(!svg.contains("a < b"));
    }

    #[test]
    fn log_axis_drops_nonpositive_points() {
        let mut p = Plot::new("t", Axis::log("x"), Axis::log("y"));
        p.series.push(Series::markers("s", vec![(0.0, 1.0), (1.0, 2.0), (2.0, -1.0), (3.0, 4.0)]));
        let m = parse_markers(&p.render().unwrap());
        assert_eq!(m[0].1, vec![(1.0, 2.0), (3.0, 4.0)]);
    }

    #[test]
    fn empty_plot_is_an_error() {
        assert!(Plot::new("t", Axis::linear("x"), Axis::linear("y")).render().is_err());
    }
}
