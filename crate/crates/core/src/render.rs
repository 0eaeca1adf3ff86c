//! Heatmap output for normalized relation matrices: CSV grid, binary PGM and SVG.

use std::fmt::Write as _;
use std::path::Path;

use crate::datamodel::RelationMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderFormat {
    Csv,
    Pgm,
    Svg,
}

impl std::str::FromStr for RenderFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "pgm" => Ok(Self::Pgm),
            "svg" => Ok(Self::Svg),
            other => Err(Error::Validation(format!("unknown render format {other:?}"))),
        }
    }
}

/// Row (question token) and column (schema item) labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixLabels {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
}

impl MatrixLabels {
    /// `q0, q1, ...` and `s0, s1, ...`.
    pub fn positional(rows: usize, cols: usize) -> Self {
        Self {
            rows: (0..rows).map(|i| format!("q{i}")).collect(),
            cols: (0..cols).map(|j| format!("s{j}")).collect(),
        }
    }
}

/// 8-bit gray level with round-half-up quantization.
pub fn quantize(v: f64) -> u8 {
    (255.0 * v + 0.5).floor().clamp(0.0, 255.0) as u8
}

fn check(xn: &RelationMatrix, labels: &MatrixLabels) -> Result<()> {
    if !xn.is_normalized() {
        return Err(Error::Validation("rendering expects a normalized relation matrix".into()));
    }
    if labels.rows.len() != xn.rows() || labels.cols.len() != xn.cols() {
        return Err(Error::Validation(format!(
            "{}x{} labels for a {}x{} matrix",
            labels.rows.len(),
            labels.cols.len(),
            xn.rows(),
            xn.cols()
        )));
    }
    Ok(())
}

pub fn to_csv(xn: &RelationMatrix, labels: &MatrixLabels) -> Result<Vec<u8>> {
    check(xn, labels)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Validation(format!("csv encoding failed: {e}"));
    w.write_record(std::iter::once("").chain(labels.cols.iter().map(String::as_str)))
        .map_err(csv_err)?;
    for i in 0..xn.rows() {
        let mut record = vec![labels.rows[i].clone()];
        record.extend(xn.row(i).iter().map(|v| v.to_string()));
        w.write_record(&record).map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::Validation(format!("csv encoding failed: {e}")))
}

/// Binary P5 graymap, one pixel per cell, row-major.
pub fn to_pgm(xn: &RelationMatrix) -> Result<Vec<u8>> {
    if !xn.is_normalized() {
        return Err(Error::Validation("rendering expects a normalized relation matrix".into()));
    }
    let mut out = format!("P5\n{} {}\n255\n", xn.cols(), xn.rows()).into_bytes();
    out.extend(xn.values().iter().map(|&v| quantize(v)));
    Ok(out)
}

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
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

const CELL: usize = 24;
const CHAR_W: usize = 7;

/// Labeled heatmap; each cell is one `<rect>`, darker for higher scores.
pub fn to_svg(xn: &RelationMatrix, labels: &MatrixLabels) -> Result<String> {
    check(xn, labels)?;
    let left = 10 + CHAR_W * labels.rows.iter().map(|l| l.chars().count()).max().unwrap_or(0);
    let top = 10 + CHAR_W * labels.cols.iter().map(|l| l.chars().count()).max().unwrap_or(0);
    let width = left + CELL * xn.cols() + 10;
    let height = top + CELL * xn.rows() + 10;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" font-family="monospace" font-size="11">"#
    );
    for (j, label) in labels.cols.iter().enumerate() {
        let x = left + CELL * j + CELL / 2;
        let _ = writeln!(
            svg,
            r#"  <text x="{x}" y="{y}" transform="rotate(-90 {x} {y})">{}</text>"#,
            escape_xml(label),
            y = top - 4,
        );
    }
    for (i, label) in labels.rows.iter().enumerate() {
        let y = top + CELL * i + CELL / 2 + 4;
        let _ = writeln!(
            svg,
            r#"  <text x="{}" y="{y}" text-anchor="end">{}</text>"#,
            left - 4,
            escape_xml(label)
        );
    }
    for i in 0..xn.rows() {
        for (j, &v) in xn.row(i).iter().enumerate() {
            let shade = 255 - quantize(v);
            let _ = writeln!(
                svg,
                r#"  <rect class="cell" x="{}" y="{}" width="{CELL}" height="{CELL}" fill="rgb({shade},{shade},255)"><title>{}</title></rect>"#,
                left + CELL * j,
                top + CELL * i,
                v
            );
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn render_bytes(xn: &RelationMatrix, labels: &MatrixLabels, format: RenderFormat) -> Result<Vec<u8>> {
    match format {
        RenderFormat::Csv => to_csv(xn, labels),
        RenderFormat::Pgm => {
            check(xn, labels)?;
            to_pgm(xn)
        }
        RenderFormat::Svg => to_svg(xn, labels).map(String::into_bytes),
    }
}

pub fn render_matrix(
    xn: &RelationMatrix,
    labels: &MatrixLabels,
    format: RenderFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    let bytes = render_bytes(xn, labels, format)?;
    let path = path.as_ref();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
