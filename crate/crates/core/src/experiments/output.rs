//! CSV, metadata sidecar and SVG writers.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use super::PhaseDiagram;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvRow {
    pub p: f64,
    pub sigma: f64,
    pub m: usize,
    pub r: usize,
    pub trials: u64,
    pub error: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub neurons: usize,
    pub censored: bool,
    pub eps: Option<f64>,
}

const COLUMNS: [&str; 10] = ["p", "sigma", "M", "R", "trials", "error", "ci_lo", "ci_hi", "neurons", "censored"];

/// Write rows; the trailing `eps` column appears only if some row has one.
pub fn write_csv<W: io::Write>(out: W, rows: &[CsvRow]) -> csv::Result<()> {
    let with_eps = rows.iter().any(|r| r.eps.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = COLUMNS.to_vec();
    if with_eps {
        header.push("eps");
    }
    w.write_record(&header)?;
    for r in rows {
        let mut record = vec![
            r.p.to_string(),
            r.sigma.to_string(),
            r.m.to_string(),
            r.r.to_string(),
            r.trials.to_string(),
            r.error.to_string(),
            r.ci_lo.to_string(),
            r.ci_hi.to_string(),
            r.neurons.to_string(),
            r.censored.to_string(),
        ];
        if with_eps {
            record.push(r.eps.map(|e| e.to_string()).unwrap_or_default());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Sidecar: the run configuration as flat keys plus a `[run]` table.
pub fn write_meta(path: &Path, config: &toml::Table, seed: u64, wall_seconds: f64) -> io::Result<()> {
    let mut doc = config.clone();
    let mut run = toml::Table::new();
    run.insert("seed".into(), toml::Value::Integer(seed as i64));
    run.insert("git_rev".into(), toml::Value::String(git_revision()));
    run.insert("wall_time_s".into(), toml::Value::Float(wall_seconds));
    doc.insert("run".into(), toml::Value::Table(run));
    std::fs::write(path, toml::to_string(&doc).map_err(io::Error::other)?)
}

fn git_revision() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "--short", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

/// Heatmap: blue below the threshold, red above, lightness by error.
pub fn phase_diagram_svg(d: &PhaseDiagram) -> String {
    let (cell, margin) = (40.0, 60.0);
    let (cols, rows) = (d.ps.len(), d.sigmas.len());
    let (w, h) = (margin * 2.0 + cell * cols as f64, margin * 2.0 + cell * rows as f64);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="10">"#);
    for i in 0..rows {
        for j in 0..cols {
            let point = d.at(i, j);
            let e = point.estimate.error;
            let shade = (255.0 * (1.0 - (e / d.eps0).min(1.0) * 0.6)) as u8;
            let fill = if d.is_tolerant(point) {
                format!("rgb({shade},{shade},255)")
            } else {
                let t = (255.0 * (1.0 - e).max(0.0)) as u8;
                format!("rgb(255,{t},{t})")
            };
            let (x, y) = (margin + cell * j as f64, margin + cell * (rows - 1 - i) as f64);
            let _ = writeln!(s, r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}"><title>p={} sigma={} error={e}</title></rect>"#, point.p, point.sigma);
        }
    }
    let px = |p: f64| {
        let (a, b) = (d.ps[0], *d.ps.last().unwrap());
        margin + cell / 2.0 + if b > a { (p - a) / (b - a) * cell * (cols - 1) as f64 } else { 0.0 }
    };
    let sy = |sg: f64| {
        let (a, b) = (d.sigmas[0], *d.sigmas.last().unwrap());
        margin + cell * rows as f64 - cell / 2.0 - if b > a { (sg - a) / (b - a) * cell * (rows - 1) as f64 } else { 0.0 }
    };
    for &(p, sg) in &d.boundary {
        let _ = writeln!(s, r#"<circle cx="{}" cy="{}" r="3" fill="black"/>"#, px(p), sy(sg));
    }
    for (j, p) in d.ps.iter().enumerate() {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{p}</text>"#, margin + cell * (j as f64 + 0.5), h - margin + 15.0);
    }
    for (i, sg) in d.sigmas.iter().enumerate() {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{sg}</text>"#, margin - 5.0, margin + cell * ((rows - 1 - i) as f64 + 0.5));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">p</text>"#, w / 2.0, h - 15.0);
    let _ = writeln!(s, r#"<text x="15" y="{}" text-anchor="middle">σ</text>"#, h / 2.0);
    s.push_str("</svg>\n");
    s
}
