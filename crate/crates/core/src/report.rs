//! CSV tables and SVG heatmaps for analysis results. Output is a pure
//! function of the input, so reruns are byte-identical.

use std::fmt::Write;

use crate::analysis::{AlignmentTrace, DiagnosisResult, DistanceReport, ScorePairs};
use crate::linalg::DenseMatrix;

const RAMP: [(u8, u8, u8); 8] = [
    (0x44, 0x01, 0x54),
    (0x46, 0x32, 0x7e),
    (0x36, 0x5c, 0x8d),
    (0x27, 0x7f, 0x8e),
    (0x1f, 0xa1, 0x87),
    (0x4a, 0xc1, 0x6d),
    (0xa0, 0xda, 0x39),
    (0xfd, 0xe7, 0x25),
];

const CELL: usize = 14;
const MARGIN_LEFT: usize = 64;
const MARGIN_TOP: usize = 40;

fn comment_lines(out: &mut String, comments: &[String]) {
    for c in comments {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
}

fn matrix_csv(m: &DenseMatrix, row_name: &str, col_prefix: &str, comments: &[String]) -> String {
    let mut out = String::new();
    comment_lines(&mut out, comments);
    out.push_str(row_name);
    for j in 0..m.cols() {
        let _ = write!(out, ",{col_prefix}{j}");
    }
    out.push('\n');
    for i in 0..m.rows() {
        let _ = write!(out, "{i}");
        for v in m.row(i) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Rows are separator components, columns answer components, with a final
/// `min` row holding each column's minimum.
pub fn distance_csv(report: &DistanceReport, comments: &[String]) -> String {
    let mut out = matrix_csv(&report.distances.values, "component_s", "a", comments);
    out.push_str("min");
    for v in &report.minima {
        let _ = write!(out, ",{v}");
    }
    out.push('\n');
    out
}

pub fn alignment_csv(trace: &AlignmentTrace, comments: &[String]) -> String {
    matrix_csv(&trace.coefficients, "layer", "c", comments)
}

pub fn score_pairs_csv(pairs: &ScorePairs, comments: &[String]) -> String {
    let mut out = String::new();
    comment_lines(&mut out, comments);
    match pairs.rank_correlation {
        Some(r) => {
            let _ = writeln!(out, "# spearman {r}");
        }
        None => out.push_str("# spearman undefined\n"),
    }
    out.push_str("component,d_min,coefficient\n");
    for (j, (d, c)) in pairs.pairs.iter().enumerate() {
        let _ = writeln!(out, "{j},{d},{c}");
    }
    out
}

pub fn diagnosis_csv(result: &DiagnosisResult, comments: &[String]) -> String {
    let mut out = String::new();
    comment_lines(&mut out, comments);
    out.push_str("prompt_id,R,correct\n");
    for s in &result.per_prompt {
        let _ = writeln!(out, "{},{},{}", s.prompt_id, s.r, s.correct);
    }
    out
}

/// Colour for `t ∈ [0, 1]`, interpolated between the eight ramp stops.
pub fn ramp_color(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (RAMP.len() - 1) as f64;
    let i = (x.floor() as usize).min(RAMP.len() - 2);
    let f = x - i as f64;
    let mix = |a: u8, b: u8| (f64::from(a) + f * (f64::from(b) - f64::from(a))).round() as u8;
    let (a, b) = (RAMP[i], RAMP[i + 1]);
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace("--", "- -")
}

/// Heatmap of `m` with one cell per entry, row-major, colours scaled from
/// the matrix minimum to its maximum.
pub fn heatmap_svg(m: &DenseMatrix, title: &str, row_prefix: &str, col_prefix: &str, comments: &[String]) -> String {
    let (rows, cols) = m.shape();
    let width = MARGIN_LEFT + cols * CELL + 16;
    let height = MARGIN_TOP + rows * CELL + 16;
    let lo = m.data().iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    let hi = m.data().iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="monospace" font-size="9">"#
    );
    for c in comments {
        let _ = writeln!(out, "<!-- {} -->", escape(c));
    }
    let _ = writeln!(out, r#"<text x="4" y="12" font-size="11">{}</text>"#, escape(title));
    let _ = writeln!(out, r#"<text x="4" y="24">range {lo:.4} .. {hi:.4}</text>"#);
    for j in 0..cols {
        let x = MARGIN_LEFT + j * CELL + CELL / 2;
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{}" text-anchor="middle">{col_prefix}{j}</text>"#,
            MARGIN_TOP - 4
        );
    }
    for i in 0..rows {
        let y = MARGIN_TOP + i * CELL;
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{row_prefix}{i}</text>"#, MARGIN_LEFT - 4, y + CELL - 4);
        for j in 0..cols {
            let x = MARGIN_LEFT + j * CELL;
            let fill = ramp_color((m.get(i, j) - lo) / span);
            let _ = writeln!(out, r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}"/>"#);
        }
    }
    out.push_str("</svg>\n");
    out
}
