//! SVG line plots of `history.csv` and `solution.csv`.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Result};
use mfg_core::metrics::savgol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum PlotKind {
    /// The three stage losses against the iteration.
    Loss,
    /// The density along `x1` at one time.
    Slice,
    /// The sup distances to the reference against the iteration.
    Linf,
}

pub struct PlotOptions {
    /// Savitzky-Golay window applied to every series before drawing.
    pub smooth: Option<usize>,
    /// Time of the density slice; the last time in the file by default.
    pub time: Option<f64>,
}

/// A numeric CSV table; empty cells are `None`.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> =
            lines.next().ok_or_else(|| anyhow!("empty CSV"))?.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|c| {
                    let c = c.trim();
                    if c.is_empty() {
                        Ok(None)
                    } else {
                        c.parse().map(Some).map_err(|_| anyhow!("row {}: `{c}` is not a number", i + 1))
                    }
                })
                .collect::<Result<Vec<Option<f64>>>>()?;
            if row.len() != header.len() {
                bail!("row {} has {} cells, header has {}", i + 1, row.len(), header.len());
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| anyhow!("missing column `{name}`"))
    }
}

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

fn iteration_series(table: &Table, names: &[&str]) -> Result<Vec<Series>> {
    let it = table.column("iter")?;
    names
        .iter()
        .map(|name| {
            let c = table.column(name)?;
            let points = table.rows.iter().filter_map(|r| Some((r[it]?, r[c]?))).collect();
            Ok(Series { name: name.to_string(), points })
        })
        .collect()
}

/// Rows of the slice: the time nearest `time`, and every coordinate but
/// `x1` at the sampled value nearest the middle of its range.
fn slice_series(table: &Table, time: Option<f64>) -> Result<Vec<Series>> {
    let (tc, xc, rc) = (table.column("t")?, table.column("x1")?, table.column("rho")?);
    let others: Vec<usize> = (2..).map(|k| format!("x{k}")).map_while(|n| table.column(&n).ok()).collect();
    let value =
        |r: &Vec<Option<f64>>, c: usize| r[c].ok_or_else(|| anyhow!("empty cell in column `{}`", table.header[c]));
    let nearest = |c: usize, target: Option<f64>| -> Result<f64> {
        let vals = table.rows.iter().map(|r| value(r, c)).collect::<Result<Vec<f64>>>()?;
        let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        let goal = target.unwrap_or((lo + hi) / 2.0);
        vals.into_iter().min_by(|a, b| (a - goal).abs().total_cmp(&(b - goal).abs())).ok_or_else(|| anyhow!("no rows"))
    };
    let t = match time {
        Some(t) => nearest(tc, Some(t))?,
        None => table
            .rows
            .iter()
            .map(|r| value(r, tc))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max),
    };
    let fixed = others.iter().map(|&c| Ok((c, nearest(c, None)?))).collect::<Result<Vec<_>>>()?;
    let mut points = Vec::new();
    for r in &table.rows {
        if value(r, tc)? == t && fixed.iter().all(|&(c, v)| r[c] == Some(v)) {
            points.push((value(r, xc)?, value(r, rc)?));
        }
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(vec![Series { name: format!("rho(t = {t:.4})"), points }])
}

const COLOURS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];
const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 450.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

/// Renders a CSV as an SVG plot. The output depends only on the inputs.
pub fn render(text: &str, kind: PlotKind, opts: &PlotOptions) -> Result<String> {
    let table = Table::parse(text)?;
    let (mut series, log_y, title) = match kind {
        PlotKind::Loss => (iteration_series(&table, &["loss_fp", "loss_hjb", "loss_policy"])?, true, "loss"),
        PlotKind::Linf => (iteration_series(&table, &["linf_rho", "linf_phi", "linf_q"])?, true, "L-infinity distance"),
        PlotKind::Slice => (slice_series(&table, opts.time)?, false, "density slice"),
    };
    if log_y {
        for s in &mut series {
            s.points = s.points.iter().filter(|p| p.1 > 0.0).map(|&(x, y)| (x, y.log10())).collect();
        }
    }
    if series.iter().all(|s| s.points.is_empty()) {
        bail!("nothing to plot: the selected columns have no values");
    }
    if let Some(w) = opts.smooth {
        for s in series.iter_mut().filter(|s| !s.points.is_empty()) {
            let ys: Vec<f64> = s.points.iter().map(|p| p.1).collect();
            let sm = savgol(&ys, w, 3.min(w.saturating_sub(1)))?;
            s.points.iter_mut().zip(sm).for_each(|(p, y)| p.1 = y);
        }
    }
    Ok(draw(&series, log_y, title))
}

fn bounds(series: &[Series]) -> ([f64; 2], [f64; 2]) {
    let mut xb = [f64::INFINITY, f64::NEG_INFINITY];
    let mut yb = xb;
    for (x, y) in series.iter().flat_map(|s| &s.points) {
        xb = [xb[0].min(*x), xb[1].max(*x)];
        yb = [yb[0].min(*y), yb[1].max(*y)];
    }
    for b in [&mut xb, &mut yb] {
        if b[1] - b[0] < 1e-12 * (1.0 + b[0].abs()) {
            *b = [b[0] - 0.5, b[1] + 0.5];
        }
    }
    (xb, yb)
}

fn tick_label(v: f64, log: bool) -> String {
    if log {
        format!("1e{v:.1}")
    } else if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn draw(series: &[Series], log_y: bool, title: &str) -> String {
    let (xb, yb) = bounds(series);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - xb[0]) / (xb[1] - xb[0]) * pw;
    let sy = |y: f64| TOP + (yb[1] - y) / (yb[1] - yb[0]) * ph;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{:.2}" y="18" text-anchor="middle">{title}</text>"#, LEFT + pw / 2.0);
    let _ = writeln!(
        svg,
        r#"<path d="M{LEFT:.2} {TOP:.2} V{:.2} H{:.2}" fill="none" stroke="black"/>"#,
        TOP + ph,
        LEFT + pw
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (x, y) = (xb[0] + f * (xb[1] - xb[0]), yb[0] + f * (yb[1] - yb[0]));
        let (px, py) = (sx(x), sy(y));
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#,
            TOP + ph,
            TOP + ph + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph + 20.0,
            tick_label(x, false)
        );
        let _ =
            writeln!(svg, r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT:.2}" y2="{py:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 8.0,
            py + 4.0,
            tick_label(y, log_y)
        );
    }
    for (i, s) in series.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ =
            writeln!(svg, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let ly = TOP + 15.0 + 18.0 * i as f64;
        let lx = LEFT + pw - 150.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{colour}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, s.name);
    }
    svg.push_str("</svg>\n");
    svg
}
