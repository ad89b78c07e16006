//! CSV, JSON and SVG emission. Output bytes depend only on the values,
//! never on timing or thread count.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::correlation::CorrelationReport;
use crate::error::{Error, Result};
use crate::estimates::BoundCheck;

/// 17 significant digits.
pub fn fmt_f(x: f64) -> String {
    // -0 prints as 0
    format!("{:.16e}", x + 0.0)
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::numerical(format!("json: {e}")))?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

pub const ORBIT_COLUMNS: [&str; 8] =
    ["kx", "ky", "kz", "multiplicity", "lune_size", "bos_term", "ex_term", "trace_term"];

pub fn write_orbit_csv(path: &Path, r: &CorrelationReport) -> Result<()> {
    write_rows(
        path,
        &ORBIT_COLUMNS,
        r.per_orbit.iter().map(|o| {
            vec![
                o.k.x.to_string(),
                o.k.y.to_string(),
                o.k.z.to_string(),
                o.multiplicity.to_string(),
                o.lune_size.to_string(),
                opt(o.bos_term),
                opt(o.ex_term),
                opt(o.trace_term),
            ]
        }),
    )
}

/// One line per k_F of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub k_f: f64,
    pub n: usize,
    pub e_bos_quadrature: f64,
    pub e_bos_trace: Option<f64>,
    pub e_ex: f64,
    pub e_second_order: f64,
    pub e_b6: Option<f64>,
    pub tail_estimate_bos: f64,
    pub tail_estimate_ex: f64,
    pub max_dual_path_mismatch: Option<f64>,
}

impl From<&CorrelationReport> for SummaryRow {
    fn from(r: &CorrelationReport) -> Self {
        SummaryRow {
            k_f: r.k_f,
            n: r.n,
            e_bos_quadrature: r.e_bos_quadrature,
            e_bos_trace: r.e_bos_trace,
            e_ex: r.e_ex,
            e_second_order: r.e_second_order,
            e_b6: r.e_b6,
            tail_estimate_bos: r.tail_estimate_bos,
            tail_estimate_ex: r.tail_estimate_ex,
            max_dual_path_mismatch: r.diagnostics.max_dual_path_mismatch,
        }
    }
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_rows(
        path,
        &[
            "k_f",
            "n",
            "e_bos_quadrature",
            "e_bos_trace",
            "e_ex",
            "e_second_order",
            "e_b6",
            "tail_estimate_bos",
            "tail_estimate_ex",
            "max_dual_path_mismatch",
        ],
        rows.iter().map(|r| {
            vec![
                fmt_f(r.k_f),
                r.n.to_string(),
                fmt_f(r.e_bos_quadrature),
                opt(r.e_bos_trace),
                fmt_f(r.e_ex),
                fmt_f(r.e_second_order),
                opt(r.e_b6),
                fmt_f(r.tail_estimate_bos),
                fmt_f(r.tail_estimate_ex),
                opt(r.max_dual_path_mismatch),
            ]
        }),
    )
}

pub fn write_bound_csv(path: &Path, rows: &[BoundCheck]) -> Result<()> {
    write_rows(
        path,
        &["name", "k_f", "beta", "epsilon", "lhs", "rhs_envelope", "ratio", "pass", "context"],
        rows.iter().map(|b| {
            vec![
                b.name.clone(),
                fmt_f(b.k_f),
                fmt_f(b.beta),
                fmt_f(b.epsilon),
                fmt_f(b.lhs),
                fmt_f(b.rhs_envelope),
                fmt_f(b.ratio),
                b.pass.to_string(),
                b.context.clone(),
            ]
        }),
    )
}

/// Reads a two-column (k_f, value) CSV with a header row.
pub fn read_series_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::validation(format!("cannot read {}: {e}", path.display())))?;
    let (mut x, mut y) = (vec![], vec![]);
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
        let get = |j: usize| -> Result<f64> {
            rec.get(j)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::validation(format!("{} row {}: expected two numbers", path.display(), i + 2)))
        };
        x.push(get(0)?);
        y.push(get(1)?);
    }
    Ok((x, y))
}

#[derive(Clone, Debug)]
pub struct PlotSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Drawn as a line without markers.
    pub line_only: bool,
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 60.0;
const COLORS: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

/// Static SVG plot of one or more series against k_F.
pub fn svg_plot(title: &str, x_label: &str, series: &[PlotSeries]) -> String {
    let pts: Vec<(f64, f64)> =
        series.iter().flat_map(|s| s.points.iter().copied()).filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if pts.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#, W / 2.0, esc(title));
    let _ = writeln!(
        s,
        r#"<path d="M{PAD} {} L{} {} M{PAD} {} L{PAD} {PAD}" stroke="black" fill="none"/>"#,
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="10">{}</text>"#,
            sx(xv),
            H - PAD + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end" font-family="sans-serif" font-size="10">{}</text>"#,
            PAD - 4.0,
            sy(yv) + 3.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        W / 2.0,
        H - 16.0,
        esc(x_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let p: Vec<_> = ser.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
        if p.len() > 1 {
            let d: Vec<String> = p.iter().map(|&&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let dash = if ser.line_only { r#" stroke-dasharray="5,3""# } else { "" };
            let _ = writeln!(s, r#"<polyline points="{}" stroke="{c}" fill="none"{dash}/>"#, d.join(" "));
        }
        if !ser.line_only {
            for &&(x, y) in &p {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}"/>"#, sx(x), sy(y));
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{c}">{}</text>"#,
            W - PAD - 150.0,
            PAD + 14.0 * i as f64,
            esc(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v == 0.0 || (1e-3..1e4).contains(&v.abs()) {
        format!("{v:.4}")
    } else {
        format!("{v:.2e}")
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f(-2.0), "-2.0000000000000000e0");
        let x = 0.1 + 0.2;
        assert_eq!(fmt_f(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn series_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "k_f,value\n4,1.5\n6,-2e-3\n").unwrap();
        assert_eq!(read_series_csv(&p).unwrap(), (vec![4.0, 6.0], vec![1.5, -2e-3]));
        std::fs::write(&p, "k_f,value\n4,x\n").unwrap();
        assert_eq!(read_series_csv(&p).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn svg_is_well_formed() {
        let s = svg_plot(
            "E <bos>",
            "k_F",
            &[PlotSeries { name: "a".into(), points: vec![(1.0, 2.0), (2.0, 3.0)], line_only: false }],
        );
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("E &lt;bos&gt;"));
        assert_eq!(s.matches("<circle").count(), 2);
    }
}
