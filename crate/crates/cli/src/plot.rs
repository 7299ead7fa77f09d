//! Minimal SVG line charts and heatmaps rendered from the CSV artifacts.
//! Output depends only on the input bytes: coordinates are printed with a
//! fixed number of decimals and no timestamps are embedded.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("artifact {0} is missing or has no data rows")]
    MissingArtifact(PathBuf),
    #[error("artifact {path} is malformed: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: (f64, f64, f64, f64) = (64.0, 24.0, 32.0, 48.0); // left, right, top, bottom
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Columns of a numeric CSV by header name; empty cells become NaN.
pub struct Table {
    pub columns: BTreeMap<String, Vec<f64>>,
    pub rows: usize,
}

pub fn read_table(path: &Path) -> Result<Table, PlotError> {
    let malformed = |message: String| PlotError::Malformed { path: path.to_path_buf(), message };
    let mut rdr = csv::Reader::from_path(path).map_err(|_| PlotError::MissingArtifact(path.to_path_buf()))?;
    let headers: Vec<String> = rdr.headers().map_err(|e| malformed(e.to_string()))?.iter().map(str::to_string).collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| malformed(e.to_string()))?;
        for (c, field) in cols.iter_mut().zip(rec.iter()) {
            let v = if field.is_empty() {
                f64::NAN
            } else {
                field.parse().map_err(|_| malformed(format!("not a number: {field}")))?
            };
            c.push(v);
        }
    }
    let rows = cols.first().map_or(0, Vec::len);
    if rows == 0 {
        return Err(PlotError::MissingArtifact(path.to_path_buf()));
    }
    Ok(Table { columns: headers.into_iter().zip(cols).collect(), rows })
}

impl Table {
    fn col(&self, name: &str, path: &Path) -> Result<&[f64], PlotError> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| PlotError::Malformed { path: path.to_path_buf(), message: format!("no column {name}") })
    }
}

fn nice_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-300 {
        let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN.0 + (x - self.x.0) / (self.x.1 - self.x.0) * (W - MARGIN.0 - MARGIN.1)
    }
    fn py(&self, y: f64) -> f64 {
        H - MARGIN.3 - (y - self.y.0) / (self.y.1 - self.y.0) * (H - MARGIN.2 - MARGIN.3)
    }
}

fn header(svg: &mut String, title: &str) {
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(svg: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (x0, x1) = (f.px(f.x.0), f.px(f.x.1));
    let (y0, y1) = (f.py(f.y.0), f.py(f.y.1));
    let _ = writeln!(
        svg,
        "<rect x=\"{x0:.2}\" y=\"{y1:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"black\"/>",
        x1 - x0,
        y0 - y1
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let xv = f.x.0 + t * (f.x.1 - f.x.0);
        let yv = f.y.0 + t * (f.y.1 - f.y.0);
        let _ = writeln!(svg, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", f.px(xv), y0 + 16.0, tick(xv));
        let _ = writeln!(svg, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>", x0 - 4.0, f.py(yv) + 4.0, tick(yv));
    }
    let _ =
        writeln!(svg, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", (x0 + x1) / 2.0, H - 8.0, escape(xlabel));
    let _ = writeln!(
        svg,
        "<text x=\"14\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.2})\">{}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Line chart of several series against a shared x column.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, x: &[f64], series: &[(&str, &[f64])]) -> String {
    let f = Frame { x: nice_range(x.iter().copied()), y: nice_range(series.iter().flat_map(|(_, s)| s.iter().copied())) };
    let mut svg = String::new();
    header(&mut svg, title);
    axes(&mut svg, &f, xlabel, ylabel);
    for (k, (name, ys)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = x
            .iter()
            .zip(ys.iter())
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(&a, &b)| format!("{:.2},{:.2}", f.px(a), f.py(b)))
            .collect();
        let _ = writeln!(svg, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>", pts.join(" "));
        let ly = MARGIN.2 + 16.0 * (k as f64 + 1.0);
        let _ = writeln!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
            W - MARGIN.1 - 150.0,
            W - MARGIN.1 - 130.0,
            W - MARGIN.1 - 124.0,
            ly + 4.0,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Piecewise-linear blue-to-yellow colour ramp on [0, 1].
fn ramp(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 4] = [(68.0, 1.0, 84.0), (59.0, 82.0, 139.0), (33.0, 145.0, 140.0), (253.0, 231.0, 37.0)];
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t as usize).min(STOPS.len() - 2);
    let u = t - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |p: f64, q: f64| (p + u * (q - p)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Heatmap of scattered (x, y, z) triples lying on a tensor grid.
pub fn heatmap(title: &str, xs: &[f64], ys: &[f64], zs: &[f64]) -> String {
    let mut ux: Vec<f64> = xs.to_vec();
    let mut uy: Vec<f64> = ys.to_vec();
    for v in [&mut ux, &mut uy] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    let f = Frame { x: (ux[0], *ux.last().unwrap()), y: (uy[0], *uy.last().unwrap() + 1.0 / uy.len() as f64) };
    let zmax = zs.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max).max(1e-300);
    let mut svg = String::new();
    header(&mut svg, title);
    let idx = |v: &[f64], t: f64| v.partition_point(|&s| s < t);
    let (dx, dy): (Vec<f64>, f64) = (
        (0..ux.len()).map(|i| if i + 1 < ux.len() { ux[i + 1] - ux[i] } else { ux[i] - ux[i - 1] }).collect(),
        1.0 / uy.len() as f64,
    );
    for ((&x, &y), &z) in xs.iter().zip(ys).zip(zs) {
        let i = idx(&ux, x);
        let (x0, x1) = (f.px(x), f.px((x + dx[i]).min(f.x.1)));
        let (y0, y1) = (f.py(y), f.py(y + dy));
        if x1 > x0 {
            let _ = writeln!(
                svg,
                "<rect x=\"{x0:.2}\" y=\"{y1:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                x1 - x0,
                y0 - y1,
                ramp(z / zmax)
            );
        }
    }
    axes(&mut svg, &f, "x", "y");
    svg.push_str("</svg>\n");
    svg
}

fn write_svg(dir: &Path, name: &str, svg: String) -> Result<PathBuf, PlotError> {
    let path = dir.join(name);
    std::fs::write(&path, svg)?;
    Ok(path)
}

/// Renders every plot whose source CSV exists in `dir`. A source that exists
/// but holds no rows is an error, and so is a directory with no sources.
pub fn render_plots(dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    let mut written = Vec::new();
    let load = |name: &str| -> Result<Option<(PathBuf, Table)>, PlotError> {
        let p = dir.join(name);
        if !p.exists() {
            return Ok(None);
        }
        Ok(Some((p.clone(), read_table(&p)?)))
    };
    if let Some((p, t)) = load("spectral.csv")? {
        let y = t.col("y", &p)?;
        written.push(write_svg(
            dir,
            "lambda1.svg",
            line_chart(
                "lambda1(y)",
                "y",
                "lambda1",
                y,
                &[("numerical", t.col("lambda1", &p)?), ("Kramers", t.col("lambda1_kramers", &p)?)],
            ),
        )?);
        written.push(write_svg(
            dir,
            "rates.svg",
            line_chart("Kramers rates", "y", "rate", y, &[("r_minus", t.col("r_minus", &p)?), ("r_plus", t.col("r_plus", &p)?)]),
        )?);
    }
    let jump = load("jump.csv")?;
    let inv = load("invariant.csv")?;
    if jump.is_some() || inv.is_some() {
        // δ from the two-state chain and δ₁ from the expansion share one chart
        // when both exist; each sits on its own y-grid.
        let mut charts: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
        if let Some((p, t)) = &jump {
            charts.push(("delta (two-state)".into(), t.col("y", p)?.to_vec(), t.col("delta", p)?.to_vec()));
        }
        if let Some((p, t)) = &inv {
            charts.push(("delta1 (expansion)".into(), t.col("y", p)?.to_vec(), t.col("delta1", p)?.to_vec()));
        }
        let x = &charts[0].1;
        let resampled: Vec<Vec<f64>> = charts.iter().map(|(_, cy, cv)| x.iter().map(|&t| interp(cy, cv, t)).collect()).collect();
        let series: Vec<(&str, &[f64])> =
            charts.iter().zip(&resampled).map(|((n, _, _), v)| (n.as_str(), v.as_slice())).collect();
        written.push(write_svg(dir, "delta.svg", line_chart("occupation asymmetry", "y", "delta", x, &series))?);
    }
    if let Some((p, t)) = load("tau.csv")? {
        let mut tau: Vec<f64> = t.col("tau", &p)?.iter().copied().filter(|v| v.is_finite()).collect();
        if tau.is_empty() {
            return Err(PlotError::MissingArtifact(p));
        }
        tau.sort_by(f64::total_cmp);
        let n = t.rows as f64;
        let surv: Vec<f64> = (0..tau.len()).map(|i| 1.0 - (i + 1) as f64 / n).collect();
        written.push(write_svg(
            dir,
            "survival.svg",
            line_chart("survival of tau_B", "t", "P(tau_B > t)", &tau, &[("empirical", &surv)]),
        )?);
    }
    if let Some((p, t)) = load("pi.csv")? {
        written.push(write_svg(
            dir,
            "pi.svg",
            heatmap("invariant density", t.col("x", &p)?, t.col("y", &p)?, t.col("density", &p)?),
        )?);
    }
    if written.is_empty() {
        return Err(PlotError::MissingArtifact(dir.to_path_buf()));
    }
    Ok(written)
}

/// Periodic linear interpolation on an increasing grid over [0, 1).
fn interp(xs: &[f64], vs: &[f64], t: f64) -> f64 {
    let n = xs.len();
    let i = xs.partition_point(|&s| s <= t);
    let (a, b) = if i == 0 || i == n { (n - 1, 0) } else { (i - 1, i) };
    let (xa, mut xb) = (xs[a], xs[b]);
    let mut tt = t;
    if b <= a {
        xb += 1.0;
        if tt < xa {
            tt += 1.0;
        }
    }
    if xb == xa {
        return vs[a];
    }
    vs[a] + (vs[b] - vs[a]) * (tt - xa) / (xb - xa)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_is_deterministic_svg() {
        let x = [0.0, 0.5, 1.0];
        let a = line_chart("t", "x", "y", &x, &[("s", &[1.0, 2.0, 1.5])]);
        assert_eq!(a, line_chart("t", "x", "y", &x, &[("s", &[1.0, 2.0, 1.5])]));
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert!(a.contains("<polyline"));
    }

    #[test]
    fn empty_csv_is_missing() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("spectral.csv"), "y,lambda1\n").unwrap();
        assert!(matches!(render_plots(dir.path()), Err(PlotError::MissingArtifact(_))));
        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(render_plots(empty.path()), Err(PlotError::MissingArtifact(_))));
    }

    #[test]
    fn periodic_interpolation_wraps() {
        let xs = [0.0, 0.25, 0.5, 0.75];
        let vs = [0.0, 1.0, 0.0, -1.0];
        assert!((interp(&xs, &vs, 0.875) + 0.5).abs() < 1e-15);
        assert!((interp(&xs, &vs, 0.125) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ramp_endpoints() {
        assert_eq!(ramp(0.0), "#440154");
        assert_eq!(ramp(1.0), "#fde725");
    }
}
