//! Output artifacts: results and summary CSVs, SVG charts, and PTRM /
//! partition dumps. Every file goes through [`write_atomic`].

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiment::{Algorithm, EpisodeRow, ExperimentResults, Summary, SweepAxis};
use crate::partition::PartitionSet;
use crate::reachability::Ptrm;

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let wrap = |source| Error::Write {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(wrap)?;
    tmp.write_all(bytes).map_err(wrap)?;
    tmp.as_file().sync_all().map_err(wrap)?;
    tmp.persist(path).map_err(|e| wrap(e.error))?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Write {
        path: dir.to_path_buf(),
        source,
    })
}

fn csv_bytes<T: Serialize>(records: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Config(e.to_string()))
}

/// One line per episode.
pub fn results_csv(rows: &[EpisodeRow]) -> Result<Vec<u8>> {
    csv_bytes(rows)
}

#[derive(Serialize)]
struct SummaryRecord<'a> {
    group: &'a str,
    algorithm: Algorithm,
    density: f64,
    radius: f64,
    episodes: usize,
    failed: usize,
    path_length_mean: f64,
    path_length_stderr: f64,
    stops_mean: f64,
    stops_stderr: f64,
    energy_mean: f64,
    energy_stderr: f64,
    replans_mean: f64,
    replans_stderr: f64,
}

/// Means and standard errors; failed episodes are counted but left out of
/// the statistics.
pub fn summary_csv(summaries: &[Summary]) -> Result<Vec<u8>> {
    csv_bytes(summaries.iter().map(|s| SummaryRecord {
        group: &s.group,
        algorithm: s.algorithm,
        density: s.density,
        radius: s.radius,
        episodes: s.episodes,
        failed: s.failed,
        path_length_mean: s.path_length.mean,
        path_length_stderr: s.path_length.stderr,
        stops_mean: s.stops.mean,
        stops_stderr: s.stops.stderr,
        energy_mean: s.energy.mean,
        energy_stderr: s.energy.stderr,
        replans_mean: s.replans.mean,
        replans_stderr: s.replans.stderr,
    }))
}

/// Fixed-width table for the terminal.
pub fn summary_table(summaries: &[Summary]) -> String {
    let mut out = format!(
        "{:<18} {:<11} {:>6} {:>16} {:>14} {:>16} {:>14}\n",
        "group", "algorithm", "failed", "energy", "path_m", "stops", "replans"
    );
    for s in summaries {
        let _ = writeln!(
            out,
            "{:<18} {:<11} {:>6} {:>8.4}±{:<7.4} {:>7.4}±{:<6.4} {:>8.3}±{:<7.3} {:>7.3}±{:.3}",
            s.group,
            s.algorithm.name(),
            s.failed,
            s.energy.mean,
            s.energy.stderr,
            s.path_length.mean,
            s.path_length.stderr,
            s.stops.mean,
            s.stops.stderr,
            s.replans.mean,
            s.replans.stderr,
        );
    }
    out
}

/// A curve of (x, mean, stderr) points.
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64, f64)>,
}

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Line chart with error bars of one standard error.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (480.0, 360.0);
    let (left, right, top, bottom) = (64.0, 16.0, 36.0, 48.0);
    let finite = |v: f64| v.is_finite();
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|p| finite(p.1));
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for &(x, m, e) in pts {
        let e = if e.is_finite() { e } else { 0.0 };
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(m - e);
        y1 = y1.max(m + e);
    }
    if !x0.is_finite() {
        (x0, x1, y1) = (0.0, 1.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    y1 += 0.05 * (y1 - y0);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let sy = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<path d="M{l} {t} V{b} H{r}" fill="none" stroke="black"/>"#,
        l = left,
        t = top,
        b = h - bottom,
        r = w - right
    );
    for k in 0..=4 {
        let y = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            sy(y) + 4.0,
            tick(y)
        );
    }
    let mut xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    for &x in &xs {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            sx(x),
            h - bottom + 16.0,
            tick(x)
        );
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (left + w - right) / 2.0, h - 10.0, escape(x_label));
    let _ = writeln!(
        svg,
        r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (top + h - bottom) / 2.0,
        escape(y_label)
    );
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let drawn: Vec<&(f64, f64, f64)> = s.points.iter().filter(|p| finite(p.1)).collect();
        let line: Vec<String> = drawn.iter().map(|p| format!("{:.1},{:.1}", sx(p.0), sy(p.1))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        for &&(x, m, e) in &drawn {
            if e.is_finite() && e > 0.0 {
                let _ = writeln!(
                    svg,
                    r#"<path d="M{x:.1} {a:.1} V{b:.1} M{l:.1} {a:.1} H{r:.1} M{l:.1} {b:.1} H{r:.1}" stroke="{color}"/>"#,
                    x = sx(x),
                    a = sy(m + e),
                    b = sy(m - e),
                    l = sx(x) - 4.0,
                    r = sx(x) + 4.0
                );
            }
            let _ = writeln!(svg, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, sx(x), sy(m));
        }
        let ly = top + 8.0 + 16.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{a}" y1="{ly}" x2="{b}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{c}" y="{t}">{name}</text>"#,
            a = w - right - 110.0,
            b = w - right - 90.0,
            c = w - right - 84.0,
            t = ly + 4.0,
            name = escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

type Metric = (&'static str, &'static str, fn(&Summary) -> (f64, f64));

const METRICS: [Metric; 4] = [
    ("energy", "energy", |s| (s.energy.mean, s.energy.stderr)),
    ("path_length", "path length (m)", |s| (s.path_length.mean, s.path_length.stderr)),
    ("stops", "stops", |s| (s.stops.mean, s.stops.stderr)),
    ("replans", "replans", |s| (s.replans.mean, s.replans.stderr)),
];

/// One chart per metric over the sweep axis. Returns the written paths.
pub fn write_charts(dir: &Path, results: &ExperimentResults) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let axis = results.sweep_axis();
    let summaries = results.per_setting(axis);
    let mut algorithms: Vec<Algorithm> = summaries.iter().map(|s| s.algorithm).collect();
    algorithms.sort();
    algorithms.dedup();
    let x_of = |s: &Summary| match axis {
        SweepAxis::Density => s.density,
        SweepAxis::Radius => s.radius,
    };
    let x_label = match axis {
        SweepAxis::Density => "density (targets per m²)",
        SweepAxis::Radius => "TROI radius (m)",
    };
    let mut written = Vec::new();
    for (key, label, get) in METRICS {
        let series: Vec<Series> = algorithms
            .iter()
            .map(|&a| Series {
                name: a.name().to_string(),
                points: summaries
                    .iter()
                    .filter(|s| s.algorithm == a)
                    .map(|s| {
                        let (m, e) = get(s);
                        (x_of(s), m, e)
                    })
                    .collect(),
            })
            .collect();
        let svg = line_chart_svg(&format!("{label} vs {}", axis.name()), x_label, label, &series);
        let path = dir.join(format!("{}_{key}.svg", axis.name()));
        write_atomic(&path, svg.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

/// Results CSV, summary CSV and (optionally) charts under `dir`.
pub fn write_experiment(dir: &Path, results: &ExperimentResults, charts: bool) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let results_path = dir.join("results.csv");
    write_atomic(&results_path, &results_csv(&results.rows)?)?;
    let summary_path = dir.join("summary.csv");
    write_atomic(&summary_path, &summary_csv(&results.per_setting(results.sweep_axis()))?)?;
    let scenes_path = dir.join("summary_per_scene.csv");
    write_atomic(&scenes_path, &summary_csv(&results.per_scene())?)?;
    let mut written = vec![results_path, summary_path, scenes_path];
    if charts {
        written.extend(write_charts(&dir.join("charts"), results)?);
    }
    Ok(written)
}

/// Binary 8-bit PGM of a per-cell field in [0, 1]. The top image row is the
/// highest grid row.
pub fn field_pgm(nx: usize, ny: usize, value: impl Fn(usize) -> f64) -> Vec<u8> {
    let mut out = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    for iy in (0..ny).rev() {
        for ix in 0..nx {
            let v = value(iy * nx + ix).clamp(0.0, 1.0);
            out.push((v * 255.0).round() as u8);
        }
    }
    out
}

#[derive(Serialize)]
struct DumpHeader {
    origin: [f64; 2],
    cell_size: f64,
    nx: usize,
    ny: usize,
    layout: &'static str,
    targets: Vec<TargetDump>,
    regions: usize,
    labeled_cells: usize,
}

#[derive(Serialize)]
struct TargetDump {
    id: usize,
    field: String,
    support_cells: usize,
    mass: f64,
}

/// PTRM fields (one PGM and one CSV per target), the region label map, the
/// partition probability matrix, and a JSON header describing the grid.
pub fn write_inspection(dir: &Path, ptrm: &Ptrm, set: &PartitionSet) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let grid = ptrm.grid();
    let mut written = Vec::new();
    let mut targets = Vec::new();
    for row in 0..ptrm.len() {
        let id = ptrm.troi(row).id;
        let prob = ptrm.prob(row);
        let pgm = dir.join(format!("field_{id}.pgm"));
        write_atomic(&pgm, &field_pgm(grid.nx, grid.ny, |c| prob[c]))?;
        let mut text = String::new();
        for iy in 0..grid.ny {
            let line: Vec<String> = (0..grid.nx).map(|ix| prob[grid.index(ix, iy)].to_string()).collect();
            text.push_str(&line.join(","));
            text.push('\n');
        }
        let csv = dir.join(format!("field_{id}.csv"));
        write_atomic(&csv, text.as_bytes())?;
        written.extend([pgm, csv]);
        targets.push(TargetDump {
            id,
            field: format!("field_{id}.pgm"),
            support_cells: ptrm.support(row).len(),
            mass: ptrm.mass(row),
        });
    }

    let labels = set.partition.label_map();
    let mut text = String::new();
    for iy in 0..grid.ny {
        let line: Vec<String> = (0..grid.nx).map(|ix| labels[grid.index(ix, iy)].to_string()).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    let label_path = dir.join("labels.csv");
    write_atomic(&label_path, text.as_bytes())?;
    let r = set.partition.len().max(1) as f64;
    let label_pgm = dir.join("labels.pgm");
    write_atomic(&label_pgm, &field_pgm(grid.nx, grid.ny, |c| labels[c] as f64 / r))?;

    let mut text = String::from("region,parents,cells");
    for row in 0..ptrm.len() {
        let _ = write!(text, ",p_{}", ptrm.troi(row).id);
    }
    text.push('\n');
    for region in set.partition.regions() {
        let parents: Vec<String> = region.parents.iter().map(|&i| ptrm.troi(i).id.to_string()).collect();
        let _ = write!(text, "{},{},{}", region.id, parents.join(" "), region.cells.len());
        for row in 0..ptrm.len() {
            let _ = write!(text, ",{}", set.prob[[row, region.id - 1]]);
        }
        text.push('\n');
    }
    let region_path = dir.join("regions.csv");
    write_atomic(&region_path, text.as_bytes())?;

    let header = DumpHeader {
        origin: grid.origin.into(),
        cell_size: grid.cell_size,
        nx: grid.nx,
        ny: grid.ny,
        layout: "CSV rows are grid rows from the lowest y; PGM rows start at the highest y",
        targets,
        regions: set.partition.len(),
        labeled_cells: labels.iter().filter(|&&l| l > 0).count(),
    };
    let header_path = dir.join("ptrm.json");
    let json = serde_json::to_string_pretty(&header).map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(&header_path, json.as_bytes())?;
    written.extend([label_path, label_pgm, region_path, header_path]);
    Ok(written)
}
