//! CSV tables and SVG plots.
//!
//! Floats are written with 17 significant digits so a table round-trips
//! exactly. Files are written to a temporary sibling and renamed into place.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::bench::BenchRow;
use crate::dynamics::DualInertia;
use crate::harness::{MetricSummary, TrialResult};
use crate::hybridsim::{EpisodeLog, JumpRecord};
use crate::{Error, Result};

pub const EPISODE_COLUMNS: [&str; 20] = [
    "t", "j", "px", "py", "pz", "qw", "qx", "qy", "qz", "wx", "wy", "wz", "vbx", "vby", "vbz", "V", "Vpos", "Vkin", "Ek",
    "event",
];
pub const METRICS_COLUMNS: [&str; 7] = ["trial", "controller", "peak_l2_m", "rmse_l2_m", "peak_ek_J", "settling_s", "failed"];
pub const SUMMARY_COLUMNS: [&str; 8] = [
    "metric",
    "candidate",
    "reference",
    "candidate_mean",
    "candidate_std",
    "reference_mean",
    "reference_std",
    "improvement_pct",
];
pub const JUMP_COLUMNS: [&str; 11] = [
    "t",
    "j",
    "point",
    "magnitude",
    "inverse_mass",
    "normal_velocity",
    "V_before",
    "V_after",
    "dissipated",
    "injected",
    "certificate_ok",
];
pub const BENCH_COLUMNS: [&str; 7] = ["formulation", "adds", "muls", "total", "median_ns", "p95_ns", "checksum"];

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn table<I>(header: &[&str], rows: I) -> Result<String>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn episode_csv(log: &EpisodeLog, inertia: &DualInertia) -> Result<String> {
    table(
        &EPISODE_COLUMNS,
        log.samples.iter().map(|s| {
            let p = s.pose.translation();
            let q = s.pose.rotation();
            let qv = q.vector();
            let (w, v) = (s.twist.real, s.twist.dual);
            let mut row = vec![fmt_f64(s.t), s.j.to_string()];
            row.extend(
                [
                    p.x,
                    p.y,
                    p.z,
                    q.w(),
                    qv.x,
                    qv.y,
                    qv.z,
                    w.x,
                    w.y,
                    w.z,
                    v.x,
                    v.y,
                    v.z,
                    s.lyapunov.total,
                    s.lyapunov.potential,
                    s.lyapunov.kinetic,
                    inertia.kinetic_energy(&s.twist),
                ]
                .map(fmt_f64),
            );
            row.push(s.event.label().to_owned());
            row
        }),
    )
}

pub fn metrics_csv(trials: &[TrialResult]) -> Result<String> {
    table(
        &METRICS_COLUMNS,
        trials.iter().map(|r| {
            let m = &r.metrics;
            vec![
                r.trial.to_string(),
                r.controller.to_string(),
                fmt_f64(m.peak_l2),
                fmt_f64(m.rmse_l2),
                fmt_f64(m.peak_ek),
                fmt_f64(m.settling_or_window()),
                m.failed.to_string(),
            ]
        }),
    )
}

pub fn summary_csv(candidate: &str, reference: &str, summary: &[MetricSummary]) -> Result<String> {
    table(
        &SUMMARY_COLUMNS,
        summary.iter().map(|s| {
            vec![
                s.name.to_owned(),
                candidate.to_owned(),
                reference.to_owned(),
                fmt_f64(s.candidate_mean),
                fmt_f64(s.candidate_std),
                fmt_f64(s.reference_mean),
                fmt_f64(s.reference_std),
                fmt_f64(s.improvement_pct),
            ]
        }),
    )
}

pub fn jumps_csv(jumps: &[JumpRecord]) -> Result<String> {
    table(
        &JUMP_COLUMNS,
        jumps.iter().map(|r| {
            let (dissipated, injected, ok) = match &r.certificate {
                Some(c) => (fmt_f64(c.dissipated), fmt_f64(c.injected), c.ok.to_string()),
                None => (String::new(), String::new(), String::new()),
            };
            vec![
                fmt_f64(r.t),
                r.j.to_string(),
                r.point.to_string(),
                fmt_f64(r.impulse.magnitude),
                fmt_f64(r.impulse.inverse_mass),
                fmt_f64(r.impulse.normal_velocity),
                fmt_f64(r.v_before),
                fmt_f64(r.v_after),
                dissipated,
                injected,
                ok,
            ]
        }),
    )
}

pub fn bench_csv(rows: &[BenchRow]) -> Result<String> {
    table(
        &BENCH_COLUMNS,
        rows.iter().map(|r| {
            vec![
                r.formulation.to_string(),
                r.ops.adds.to_string(),
                r.ops.muls.to_string(),
                r.ops.total.to_string(),
                fmt_f64(r.latency.median_ns),
                fmt_f64(r.latency.p95_ns),
                fmt_f64(r.latency.checksum),
            ]
        }),
    )
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Numeric columns of an episode table read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub events: Vec<String>,
}

impl EpisodeTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
        if header != EPISODE_COLUMNS {
            return Err(Error::MalformedTable(format!("episode header must be `{}`", EPISODE_COLUMNS.join(","))));
        }
        let numeric = header.len() - 1;
        let mut rows = Vec::new();
        let mut events = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .take(numeric)
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::MalformedTable(format!("line {}: {e}", i + 2)))?;
            rows.push(row);
            events.push(rec[numeric].to_owned());
        }
        Ok(EpisodeTable { columns: header[..numeric].to_vec(), rows, events })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

// ---------------------------------------------------------------------------
// SVG

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 170.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 110.0;
const MARGIN_TOP: f64 = 28.0;
const MARGIN_BOTTOM: f64 = 26.0;

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
    /// Draw markers instead of a polyline.
    pub markers: bool,
}

pub struct Panel<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub series: Vec<Series<'a>>,
}

fn bounds(values: impl Iterator<Item = f64>, pad_fraction: f64) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * pad_fraction;
    (lo - pad, hi + pad)
}

fn render_panel(svg: &mut String, panel: &Panel, top: f64) {
    let (x0, y0) = (MARGIN_LEFT, top + MARGIN_TOP);
    let (w, h) = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT, PANEL_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM);
    let all = || panel.series.iter().flat_map(|s| s.points.iter());
    let (xmin, xmax) = bounds(all().map(|p| p.0), 0.0);
    let (ymin, ymax) = bounds(all().map(|p| p.1), 0.05);
    let sx = |x: f64| x0 + (x - xmin) / (xmax - xmin) * w;
    let sy = |y: f64| y0 + h - (y - ymin) / (ymax - ymin) * h;

    let _ = writeln!(svg, r##"<text x="{x0}" y="{:.1}" font-size="13" font-weight="bold">{}</text>"##, top + 18.0, panel.title);
    let _ = writeln!(svg, r##"<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#444"/>"##);
    for (v, y) in [(ymax, y0), (ymin, y0 + h)] {
        let _ = writeln!(svg, r##"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{v:.3e}</text>"##, x0 - 4.0, y + 4.0);
    }
    if ymin < 0.0 && ymax > 0.0 {
        let _ = writeln!(
            svg,
            r##"<line x1="{x0}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="#bbb" stroke-dasharray="3,3"/>"##,
            sy(0.0),
            x0 + w
        );
    }
    let _ = writeln!(
        svg,
        r##"<text x="{x0}" y="{0:.1}" font-size="10">{xmin:.3}</text><text x="{1:.1}" y="{0:.1}" font-size="10" text-anchor="end">{xmax:.3} {2}</text>"##,
        y0 + h + 14.0,
        x0 + w,
        panel.x_label
    );
    for (k, s) in panel.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts = s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite());
        if s.markers {
            for &(x, y) in pts {
                let _ = writeln!(svg, r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"##, sx(x), sy(y));
            }
        } else {
            let coords: Vec<String> = pts.map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(svg, r##"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"##, coords.join(" "));
        }
        let ly = y0 + 12.0 + 14.0 * k as f64;
        let _ = writeln!(
            svg,
            r##"<line x1="{0:.1}" y1="{ly:.1}" x2="{1:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{2:.1}" y="{3:.1}" font-size="11">{4}</text>"##,
            x0 + w + 8.0,
            x0 + w + 24.0,
            x0 + w + 28.0,
            ly + 4.0,
            s.label
        );
    }
}

/// Stacks panels into one standalone SVG document.
pub fn render_svg(panels: &[Panel]) -> String {
    let height = PANEL_HEIGHT * panels.len().max(1) as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">"##
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="white"/>"##);
    for (i, p) in panels.iter().enumerate() {
        render_panel(&mut svg, p, PANEL_HEIGHT * i as f64);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Position, attitude, Lyapunov function and kinetic energy against time.
pub fn episode_svg(table: &EpisodeTable) -> Result<String> {
    let t = table.column("t").ok_or_else(|| Error::MalformedTable("missing column t".into()))?;
    let series = |names: &[&'static str]| -> Result<Vec<Series<'static>>> {
        names
            .iter()
            .map(|&name| {
                let y = table.column(name).ok_or_else(|| Error::MalformedTable(format!("missing column {name}")))?;
                Ok(Series { label: name, points: t.iter().copied().zip(y).collect(), markers: false })
            })
            .collect()
    };
    let panels = [
        Panel { title: "position (m)", x_label: "s", series: series(&["px", "py", "pz"])? },
        Panel { title: "attitude (quaternion vector part)", x_label: "s", series: series(&["qx", "qy", "qz"])? },
        Panel { title: "Lyapunov function (J)", x_label: "s", series: series(&["V", "Vpos", "Vkin"])? },
        Panel { title: "kinetic energy (J)", x_label: "s", series: series(&["Ek"])? },
    ];
    Ok(render_svg(&panels))
}

/// Per-trial metrics of both controllers overlaid, one panel per metric.
pub fn montecarlo_svg(trials: &[TrialResult], candidate: &str, reference: &str) -> String {
    type Pick = fn(&TrialResult) -> f64;
    let metrics: [(&str, Pick); 4] = [
        ("peak position error (m)", |r| r.metrics.peak_l2),
        ("RMS position error (m)", |r| r.metrics.rmse_l2),
        ("peak kinetic energy (J)", |r| r.metrics.peak_ek),
        ("settling time (s)", |r| r.metrics.settling_or_window()),
    ];
    let panels: Vec<Panel> = metrics
        .iter()
        .map(|&(title, f)| {
            let pick = |who: &str| -> Vec<(f64, f64)> {
                trials.iter().filter(|r| r.controller.to_string() == who).map(|r| (r.trial as f64, f(r))).collect()
            };
            Panel {
                title,
                x_label: "trial",
                series: vec![
                    Series { label: candidate, points: pick(candidate), markers: true },
                    Series { label: reference, points: pick(reference), markers: true },
                ],
            }
        })
        .collect();
    render_svg(&panels)
}
