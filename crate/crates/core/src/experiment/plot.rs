//! Static SVG charts drawn from the report CSVs.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 72.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];

/// A fixed-size chart with linear axes.
#[derive(Debug, Clone)]
pub struct Svg {
    body: String,
    x: (f64, f64),
    y: (f64, f64),
}

fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn extent(vals: impl IntoIterator<Item = f64>) -> (f64, f64) {
    vals.into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

impl Svg {
    /// Empty chart with title, axis labels, and the given data ranges.
    pub fn new(title: &str, xlabel: &str, ylabel: &str, x: (f64, f64), y: (f64, f64)) -> Self {
        let mut s = Svg {
            body: String::new(),
            x: padded(x.0, x.1),
            y: padded(y.0, y.1),
        };
        let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
        let _ = writeln!(
            s.body,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
            num(WIDTH / 2.0),
            escape(title)
        );
        let _ = writeln!(
            s.body,
            r#"<path d="M{} {} V{} H{}" fill="none" stroke="black"/>"#,
            num(x0),
            num(y0),
            num(y1),
            num(x1)
        );
        let _ = writeln!(
            s.body,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
            num((x0 + x1) / 2.0),
            num(HEIGHT - 12.0),
            escape(xlabel)
        );
        let _ = writeln!(
            s.body,
            r#"<text x="16" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {})">{}</text>"#,
            num((y0 + y1) / 2.0),
            num((y0 + y1) / 2.0),
            escape(ylabel)
        );
        for k in 0..=4 {
            let v = s.y.0 + (s.y.1 - s.y.0) * k as f64 / 4.0;
            let py = s.py(v);
            let _ = writeln!(
                s.body,
                r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{}</text>"#,
                num(x0 - 4.0),
                num(py + 3.0),
                num(v)
            );
        }
        s
    }

    fn px(&self, v: f64) -> f64 {
        LEFT + (v - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - (v - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }

    pub fn point(&mut self, x: f64, y: f64, r: f64, color: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{}" cy="{}" r="{}" fill="{color}"/>"#,
            num(self.px(x)),
            num(self.py(y)),
            num(r)
        );
    }

    /// Polyline through finite points; gaps break the line.
    pub fn line(&mut self, pts: &[(f64, f64)], color: &str) {
        let mut seg: Vec<String> = Vec::new();
        let flush = |seg: &mut Vec<String>, body: &mut String| {
            if seg.len() > 1 {
                let _ = writeln!(
                    body,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1"/>"#,
                    seg.join(" ")
                );
            }
            seg.clear();
        };
        for &(x, y) in pts {
            if x.is_finite() && y.is_finite() {
                seg.push(format!("{},{}", num(self.px(x)), num(self.py(y))));
            } else {
                flush(&mut seg, &mut self.body);
            }
        }
        flush(&mut seg, &mut self.body);
    }

    /// Bar from the x axis baseline (or 0) up to `y`, centred on `x`.
    pub fn bar(&mut self, x: f64, width: f64, y: f64, color: &str) {
        let base = self.py(0.0_f64.clamp(self.y.0, self.y.1));
        let top = self.py(y);
        let w = width / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT);
        let _ = writeln!(
            self.body,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{color}"/>"#,
            num(self.px(x) - w / 2.0),
            num(top.min(base)),
            num(w),
            num((base - top).abs())
        );
    }

    /// Rotated category label under the x axis.
    pub fn x_label(&mut self, x: f64, text: &str) {
        let (px, py) = (self.px(x), HEIGHT - BOTTOM + 12.0);
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" text-anchor="end" font-size="9" transform="rotate(-60 {} {})">{}</text>"#,
            num(px),
            num(py),
            num(px),
            num(py),
            escape(text)
        );
    }

    pub fn legend(&mut self, entries: &[(&str, &str)]) {
        for (k, (name, color)) in entries.iter().enumerate() {
            let x = WIDTH - RIGHT - 150.0;
            let y = TOP + 4.0 + 16.0 * k as f64;
            let _ = writeln!(
                self.body,
                r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}" font-size="11">{}</text>"#,
                num(x),
                num(y),
                num(x + 14.0),
                num(y + 9.0),
                escape(name)
            );
        }
    }

    pub fn render(&self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = WIDTH,
            h = HEIGHT
        )
    }
}

/// Grouped bars per category.
pub(crate) fn bar_chart(title: &str, ylabel: &str, cats: &[String], series: &[(&str, Vec<f64>)]) -> String {
    let (lo, hi) = extent(series.iter().flat_map(|(_, v)| v.iter().copied()).chain([0.0]));
    let n = cats.len().max(1) as f64;
    let mut svg = Svg::new(title, "node", ylabel, (-0.5, n - 0.5), (lo, hi));
    let k = series.len().max(1) as f64;
    let w = 0.8 / k;
    for (s, (_, vals)) in series.iter().enumerate() {
        for (i, &v) in vals.iter().enumerate() {
            let x = i as f64 - 0.4 + w * (s as f64 + 0.5);
            svg.bar(x, w, v, PALETTE[s % PALETTE.len()]);
        }
    }
    for (i, c) in cats.iter().enumerate() {
        svg.x_label(i as f64, c);
    }
    let entries: Vec<(&str, &str)> = series
        .iter()
        .enumerate()
        .map(|(s, (name, _))| (*name, PALETTE[s % PALETTE.len()]))
        .collect();
    svg.legend(&entries);
    svg.render()
}

pub(crate) fn scatter(title: &str, xlabel: &str, ylabel: &str, pts: &[(f64, f64)]) -> String {
    let (x0, x1) = extent(pts.iter().map(|p| p.0));
    let (y0, y1) = extent(pts.iter().map(|p| p.1));
    let mut svg = Svg::new(title, xlabel, ylabel, (x0, x1), (y0, y1));
    for &(x, y) in pts {
        svg.point(x, y, 4.0, PALETTE[0]);
    }
    svg.render()
}

type Table = (Vec<String>, Vec<Vec<String>>);

fn read_table(path: &Path) -> Result<Option<Table>> {
    if !path.exists() {
        return Ok(None);
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    let header = r
        .headers()
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = r
        .records()
        .map(|rec| {
            rec.map(|r| r.iter().map(str::to_string).collect())
                .map_err(|e| Error::format(path.display().to_string(), e.to_string()))
        })
        .collect::<Result<_>>()?;
    Ok(Some((header, rows)))
}

fn column(path: &Path, t: &Table, name: &str) -> Result<usize> {
    t.0.iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::format(path.display().to_string(), format!("missing column `{name}`")))
}

fn parse(path: &Path, cell: &str) -> Result<f64> {
    if cell.is_empty() {
        return Ok(f64::NAN);
    }
    cell.parse()
        .map_err(|_| Error::format(path.display().to_string(), format!("non-numeric cell `{cell}`")))
}

fn numeric(path: &Path, t: &Table, name: &str) -> Result<Vec<f64>> {
    let c = column(path, t, name)?;
    t.1.iter().map(|r| parse(path, &r[c])).collect()
}

fn text(path: &Path, t: &Table, name: &str) -> Result<Vec<String>> {
    let c = column(path, t, name)?;
    Ok(t.1.iter().map(|r| r[c].clone()).collect())
}

fn empty_table() -> Table {
    (Vec::new(), Vec::new())
}

/// Renders `plots/*.svg` from the CSVs of a report directory. Missing CSVs
/// give charts with axes only.
pub fn emit_plots(dir: &Path) -> Result<()> {
    let plots = dir.join("plots");
    std::fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    let save = |name: &str, svg: String| {
        let p = plots.join(name);
        std::fs::write(&p, svg).map_err(|e| Error::io(&p, e))
    };

    let path = dir.join("thresholds.csv");
    let (ids, f1, tau) = match read_table(&path)? {
        Some(t) => (text(&path, &t, "node_id")?, numeric(&path, &t, "val_f1")?, numeric(&path, &t, "threshold")?),
        None => Default::default(),
    };
    save(
        "threshold_tuning.svg",
        bar_chart("Per-node threshold tuning", "value", &ids, &[("validation F1", f1), ("threshold", tau)]),
    )?;

    let path = dir.join("degree.csv");
    let pts = match read_table(&path)? {
        Some(t) => {
            let d = numeric(&path, &t, "degree")?;
            let f = numeric(&path, &t, "delta_f1")?;
            d.into_iter().zip(f).collect()
        }
        None => Vec::new(),
    };
    save("f1_vs_degree.svg", scatter("F1 gain vs node degree", "degree", "delta F1", &pts))?;

    let path = dir.join("anomaly_counts.csv");
    let t = read_table(&path)?.unwrap_or_else(empty_table);
    let (ids, series) = if t.0.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        (
            text(&path, &t, "node_id")?,
            vec![
                ("train", numeric(&path, &t, "train")?),
                ("validation", numeric(&path, &t, "val")?),
                ("test", numeric(&path, &t, "test")?),
            ],
        )
    };
    save("anomaly_counts.svg", bar_chart("Labeled anomalies per node", "count", &ids, &series))?;

    let path = dir.join("forecast.csv");
    let svg = match read_table(&path)? {
        Some(t) => {
            let ts = numeric(&path, &t, "t")?;
            let actual = numeric(&path, &t, "actual")?;
            let fc = numeric(&path, &t, "forecast")?;
            let flagged = numeric(&path, &t, "flagged")?;
            let label = numeric(&path, &t, "label")?;
            let (x0, x1) = extent(ts.iter().copied());
            let (y0, y1) = extent(actual.iter().chain(&fc).copied());
            let mut svg = Svg::new("Forecast vs actual", "time step", "value", (x0, x1), (y0, y1));
            let pair = |v: &[f64]| ts.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
            svg.line(&pair(&actual), PALETTE[0]);
            svg.line(&pair(&fc), PALETTE[1]);
            for k in 0..ts.len() {
                if label[k] == 1.0 && actual[k].is_finite() {
                    svg.point(ts[k], actual[k], 5.0, PALETTE[2]);
                }
                if flagged[k] == 1.0 && actual[k].is_finite() {
                    svg.point(ts[k], actual[k], 3.0, PALETTE[3]);
                }
            }
            svg.legend(&[
                ("actual", PALETTE[0]),
                ("forecast", PALETTE[1]),
                ("labeled", PALETTE[2]),
                ("flagged", PALETTE[3]),
            ]);
            svg.render()
        }
        None => Svg::new("Forecast vs actual", "time step", "value", (0.0, 1.0), (0.0, 1.0)).render(),
    };
    save("forecast_vs_actual.svg", svg)
}
