//! Self-contained SVG line charts with a logarithmic y axis.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotSpec {
    pub x: String,
    /// Log-scaled columns.
    pub y: Vec<String>,
    /// Grouping column, one curve per distinct value.
    pub series: Option<String>,
    /// Column drawn once as a dashed curve.
    pub reference_curve: Option<String>,
    pub title: Option<String>,
}

impl Default for PlotSpec {
    fn default() -> Self {
        Self {
            x: "snr_db".into(),
            y: vec!["rmse_f_rel".into()],
            series: Some("method".into()),
            reference_curve: Some("crb_rel".into()),
            title: None,
        }
    }
}

/// Parsed CSV with string cells.
#[derive(Debug, Clone)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(|s| s.trim().to_string()).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { headers, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::MissingColumn(name.to_string()))
    }
}

/// One drawn curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

fn parse(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| !v.is_nan())
}

/// Extracts the curves described by `spec`, validating columns and the
/// log-scale domain.
pub fn curves(table: &Table, spec: &PlotSpec) -> Result<Vec<Curve>> {
    if spec.y.is_empty() {
        return Err(CliError::Plot("spec lists no y columns".into()));
    }
    let xc = table.column(&spec.x)?;
    let ycs = spec
        .y
        .iter()
        .map(|y| table.column(y))
        .collect::<Result<Vec<_>>>()?;
    let sc = spec.series.as_deref().map(|s| table.column(s)).transpose()?;
    let rc = spec
        .reference_curve
        .as_deref()
        .map(|s| table.column(s))
        .transpose()?;

    let mut groups: Vec<String> = Vec::new();
    if let Some(sc) = sc {
        for row in &table.rows {
            if !groups.contains(&row[sc]) {
                groups.push(row[sc].clone());
            }
        }
    } else {
        groups.push(String::new());
    }

    let check = |col: usize, line: usize, v: f64| {
        if v <= 0.0 {
            Err(CliError::Plot(format!(
                "column `{}` has value {v} at row {}; a log axis needs y > 0",
                table.headers[col],
                line + 2
            )))
        } else {
            Ok(v)
        }
    };

    let mut out = Vec::new();
    for (&yc, yname) in ycs.iter().zip(&spec.y) {
        for g in &groups {
            let mut points = Vec::new();
            for (line, row) in table.rows.iter().enumerate() {
                if sc.is_some_and(|sc| &row[sc] != g) {
                    continue;
                }
                let (Some(x), Some(y)) = (parse(&row[xc]), parse(&row[yc])) else {
                    continue;
                };
                if x.is_finite() && y.is_finite() {
                    points.push((x, check(yc, line, y)?));
                }
            }
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            let label = match (g.is_empty(), spec.y.len() > 1) {
                (true, _) => yname.clone(),
                (false, false) => g.clone(),
                (false, true) => format!("{g} {yname}"),
            };
            out.push(Curve {
                label,
                points,
                dashed: false,
            });
        }
    }
    if let Some(rc) = rc {
        let mut points: Vec<(f64, f64)> = Vec::new();
        for (line, row) in table.rows.iter().enumerate() {
            let (Some(x), Some(y)) = (parse(&row[xc]), parse(&row[rc])) else {
                continue;
            };
            if x.is_finite() && y.is_finite() && !points.iter().any(|p| p.0 == x) {
                points.push((x, check(rc, line, y)?));
            }
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        out.push(Curve {
            label: table.headers[rc].clone(),
            points,
            dashed: true,
        });
    }
    Ok(out)
}

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn render_svg(curves: &[Curve], spec: &PlotSpec) -> Result<String> {
    let all: Vec<(f64, f64)> = curves.iter().flat_map(|c| c.points.iter().copied()).collect();
    if all.is_empty() {
        return Err(CliError::Plot("no finite data points to plot".into()));
    }
    let (mut x0, mut x1) = all.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
    if x0 == x1 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    let (lmin, lmax) = all.iter().fold((f64::MAX, f64::MIN), |(a, b), p| {
        (a.min(p.1.log10()), b.max(p.1.log10()))
    });
    let (mut d0, mut d1) = (lmin.floor(), lmax.ceil());
    if d0 == d1 {
        d0 -= 1.0;
        d1 += 1.0;
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (d1 - y.log10()) / (d1 - d0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if let Some(t) = &spec.title {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + pw / 2.0,
            escape(t)
        );
    }
    // Decade grid and labels.
    let mut d = d0;
    while d <= d1 {
        let y = TOP + (d1 - d) / (d1 - d0) * ph;
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + pw
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            d as i64
        );
        d += 1.0;
    }
    let mut xs: Vec<f64> = all.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() > 12 {
        xs = (0..=5).map(|i| x0 + (x1 - x0) * i as f64 / 5.0).collect();
    }
    for &x in &xs {
        let px = sx(x);
        let _ = writeln!(
            s,
            r##"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{:.2}" stroke="#eeeeee"/>"##,
            TOP + ph
        );
        let _ = writeln!(
            s,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph + 18.0,
            crate::io::fmt_f64(x)
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 18.0,
        escape(&spec.x)
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&spec.y.join(", "))
    );

    let mut color_idx = 0;
    for (i, c) in curves.iter().enumerate() {
        let color = if c.dashed {
            "black"
        } else {
            color_idx += 1;
            PALETTE[(color_idx - 1) % PALETTE.len()]
        };
        let pts: Vec<String> = c
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let dash = if c.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        if pts.len() > 1 {
            let _ = writeln!(
                s,
                r#"<polyline class="curve" data-label="{}" points="{}" fill="none" stroke="{color}" stroke-width="1.8"{dash}/>"#,
                escape(&c.label),
                pts.join(" ")
            );
        }
        if !c.dashed || c.points.len() == 1 {
            for &(x, y) in &c.points {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                    sx(x),
                    sy(y)
                );
            }
        }
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = LEFT + pw + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="1.8"{dash}/>"#,
            lx + 24.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 30.0,
            ly + 4.0,
            escape(&c.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Reads `input`, draws it per `spec` and writes the SVG to `out`.
pub fn plot_file(input: &Path, spec: &PlotSpec, out: &Path) -> Result<usize> {
    let table = Table::read(input)?;
    let cs = curves(&table, spec)?;
    let svg = render_svg(&cs, spec)?;
    std::fs::write(out, svg).map_err(|e| CliError::io(out, e))?;
    Ok(cs.len())
}
