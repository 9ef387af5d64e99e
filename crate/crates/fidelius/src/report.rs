//! Run-record persistence, reliability-diagram rendering (CSV + SVG), and
//! method-comparison tables.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::confidence::{ConfidenceRecord, Method};
use crate::metrics::{MetricReport, ReliabilityDiagram};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{path}: schema version {found}, expected {expected}")]
    SchemaVersion {
        path: String,
        found: u32,
        expected: u32,
    },
    #[error("no reports to compare")]
    NoReports,
}

/// Config snapshot written as the first line of a run-record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub schema_version: u32,
    pub backend_id: String,
    pub model: String,
    pub dataset: String,
    pub methods: Vec<Method>,
    pub k: u32,
    pub tau: f64,
    pub temperature: f64,
    pub top_p: f64,
    pub bins: usize,
    pub seed: u64,
    pub timestamp_unix: u64,
}

/// Write the header plus one record per line. Field order is fixed by the
/// struct definitions, so identical inputs produce identical bytes.
pub fn write_run(
    records: &[ConfidenceRecord],
    header: &RunHeader,
    path: &Path,
) -> Result<(), ReportError> {
    let io_err = |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = Vec::new();
    out.extend_from_slice(serde_json::to_string(header).expect("serialize header").as_bytes());
    out.push(b'\n');
    for record in records {
        out.extend_from_slice(
            serde_json::to_string(record).expect("serialize record").as_bytes(),
        );
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(&out).map_err(io_err)
}

/// Read a run-record file back. Fails on schema mismatch and reports parse
/// errors with their line number.
pub fn read_run(path: &Path) -> Result<(RunHeader, Vec<ConfidenceRecord>), ReportError> {
    let file = fs::File::open(path).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut header: Option<RunHeader> = None;
    let mut records = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line_no = index as u64 + 1;
        let line = line.map_err(|source| ReportError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        if header.is_none() {
            let parsed: RunHeader =
                serde_json::from_str(&line).map_err(|e| ReportError::Parse {
                    path: path.display().to_string(),
                    line: line_no,
                    message: format!("bad header: {e}"),
                })?;
            if parsed.schema_version != SCHEMA_VERSION {
                return Err(ReportError::SchemaVersion {
                    path: path.display().to_string(),
                    found: parsed.schema_version,
                    expected: SCHEMA_VERSION,
                });
            }
            header = Some(parsed);
            continue;
        }
        let record: ConfidenceRecord =
            serde_json::from_str(&line).map_err(|e| ReportError::Parse {
                path: path.display().to_string(),
                line: line_no,
                message: e.to_string(),
            })?;
        records.push(record);
    }
    let header = header.ok_or_else(|| ReportError::Parse {
        path: path.display().to_string(),
        line: 0,
        message: "missing header line".into(),
    })?;
    Ok((header, records))
}

/// Group records by method, preserving record order within each method.
pub fn group_by_method(records: &[ConfidenceRecord]) -> BTreeMap<Method, Vec<ConfidenceRecord>> {
    let mut groups: BTreeMap<Method, Vec<ConfidenceRecord>> = BTreeMap::new();
    for record in records {
        groups.entry(record.method).or_default().push(record.clone());
    }
    groups
}

/// Decimal string with 12 significant digits, for human-facing CSV/tables.
fn fmt_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (11 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Fixed six-decimal formatting for SVG geometry.
fn fmt_svg(x: f64) -> String {
    format!("{x:.6}")
}

/// Emit `<base>.csv` and `<base>.svg` for a diagram. Both outputs are
/// byte-deterministic for identical input.
pub fn render_diagram(diagram: &ReliabilityDiagram, base: &Path) -> Result<(), ReportError> {
    let csv_path = base.with_extension("csv");
    let svg_path = base.with_extension("svg");
    let mut csv = String::from("bin_lo,bin_hi,count,density,mean_conf,accuracy\n");
    let n = diagram.n as f64;
    for b in &diagram.bins {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_sig12(b.lo),
            fmt_sig12(b.hi),
            b.count,
            fmt_sig12(b.count as f64 / n),
            fmt_sig12(b.mean_conf),
            fmt_sig12(b.accuracy),
        ));
    }
    fs::write(&csv_path, csv).map_err(|source| ReportError::Io {
        path: csv_path.display().to_string(),
        source,
    })?;
    let svg = render_svg(diagram);
    fs::write(&svg_path, svg).map_err(|source| ReportError::Io {
        path: svg_path.display().to_string(),
        source,
    })
}

fn render_svg(diagram: &ReliabilityDiagram) -> String {
    // fixed frame: 640x480, plot area inset by the margins below
    const LEFT: f64 = 60.0;
    const TOP: f64 = 20.0;
    const PLOT_W: f64 = 560.0;
    const PLOT_H: f64 = 420.0;
    let x = |v: f64| LEFT + v * PLOT_W;
    let y = |v: f64| TOP + (1.0 - v) * PLOT_H;
    let n = diagram.n as f64;
    let max_density = diagram
        .bins
        .iter()
        .map(|b| b.count as f64 / n)
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);

    let mut svg = String::new();
    svg.push_str(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 640 480\" width=\"640\" height=\"480\">\n",
    );
    svg.push_str("<rect x=\"0\" y=\"0\" width=\"640\" height=\"480\" fill=\"white\"/>\n");
    // axes
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\" stroke-width=\"1\"/>\n",
        fmt_svg(x(0.0)),
        fmt_svg(y(0.0)),
        fmt_svg(x(1.0)),
        fmt_svg(y(0.0)),
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\" stroke-width=\"1\"/>\n",
        fmt_svg(x(0.0)),
        fmt_svg(y(0.0)),
        fmt_svg(x(0.0)),
        fmt_svg(y(1.0)),
    ));
    // accuracy bars, opacity scaled by bin density
    for b in &diagram.bins {
        if b.count == 0 {
            continue;
        }
        let density = b.count as f64 / n;
        let opacity = density / max_density;
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"steelblue\" fill-opacity=\"{}\" stroke=\"black\" stroke-width=\"0.5\"/>\n",
            fmt_svg(x(b.lo)),
            fmt_svg(y(b.accuracy)),
            fmt_svg((b.hi - b.lo) * PLOT_W),
            fmt_svg(b.accuracy * PLOT_H),
            fmt_svg(opacity),
        ));
    }
    // identity line y = x
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"crimson\" stroke-width=\"1.5\" stroke-dasharray=\"6,4\"/>\n",
        fmt_svg(x(0.0)),
        fmt_svg(y(0.0)),
        fmt_svg(x(1.0)),
        fmt_svg(y(1.0)),
    ));
    // tick labels at 0, 0.5, 1 on both axes
    for v in [0.0, 0.5, 1.0] {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            fmt_svg(x(v)),
            fmt_svg(y(0.0) + 16.0),
            v,
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{}</text>\n",
            fmt_svg(x(0.0) - 6.0),
            fmt_svg(y(v) + 4.0),
            v,
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">confidence</text>\n",
        fmt_svg(x(0.5)),
        fmt_svg(y(0.0) + 34.0),
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">accuracy</text>\n",
        fmt_svg(y(0.5)),
        fmt_svg(y(0.5)),
    ));
    svg.push_str("</svg>\n");
    svg
}

/// Aligned text and CSV renderings of a method comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareTable {
    pub text: String,
    pub csv: String,
}

/// One row per method; the best ECE/IPR/CE/accuracy cells are starred
/// (lower is better for ECE and IPR, higher for CE and accuracy). Ties are
/// all starred.
pub fn compare_table(reports: &[MetricReport]) -> Result<CompareTable, ReportError> {
    if reports.is_empty() {
        return Err(ReportError::NoReports);
    }
    let fold_min = |f: fn(&MetricReport) -> f64| {
        reports.iter().map(f).fold(f64::INFINITY, f64::min)
    };
    let fold_max = |f: fn(&MetricReport) -> f64| {
        reports.iter().map(f).fold(f64::NEG_INFINITY, f64::max)
    };
    let best_ece = fold_min(|r| r.ece);
    let best_ipr = fold_min(|r| r.ipr);
    let best_ce = fold_max(|r| r.ce);
    let best_acc = fold_max(|r| r.accuracy);

    let mut text = format!(
        "{:<12} {:>10} {:>10} {:>10} {:>10} {:>10} {:>8} {:>8}\n",
        "method", "ece", "ipr", "ce", "brier", "acc", "usable", "flagged"
    );
    let mut csv = String::from("method,ece,ipr,ce,brier,accuracy,usable,flagged,best\n");
    for r in reports {
        let star = |value: f64, best: f64| if value == best { "*" } else { "" };
        text.push_str(&format!(
            "{:<12} {:>10} {:>10} {:>10} {:>10} {:>10} {:>8} {:>8}\n",
            r.method.as_str(),
            format!("{:.4}{}", r.ece, star(r.ece, best_ece)),
            format!("{:.4}{}", r.ipr, star(r.ipr, best_ipr)),
            format!("{:.4}{}", r.ce, star(r.ce, best_ce)),
            format!("{:.4}", r.brier),
            format!("{:.4}{}", r.accuracy, star(r.accuracy, best_acc)),
            r.usable_count,
            r.flagged_count,
        ));
        let mut best_cols = Vec::new();
        if r.ece == best_ece {
            best_cols.push("ece");
        }
        if r.ipr == best_ipr {
            best_cols.push("ipr");
        }
        if r.ce == best_ce {
            best_cols.push("ce");
        }
        if r.accuracy == best_acc {
            best_cols.push("acc");
        }
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.method.as_str(),
            fmt_sig12(r.ece),
            fmt_sig12(r.ipr),
            fmt_sig12(r.ce),
            fmt_sig12(r.brier),
            fmt_sig12(r.accuracy),
            r.usable_count,
            r.flagged_count,
            best_cols.join("+"),
        ));
    }
    Ok(CompareTable { text, csv })
}
