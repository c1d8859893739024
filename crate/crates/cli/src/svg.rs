//! Minimal SVG heatmaps of binary matrices: one `rect` per cell, an
//! optional red/green strip marking two host groups.

use std::fmt::Write as _;

use ndarray::Array2;

const CELL: usize = 10;
const STRIP: usize = 6;
const LABEL_W: usize = 90;
const HEADER_H: usize = 20;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Rows are drawn in `order`. `groups[i]` (row index, not position) picks the
/// strip colour: `Some(false)` red, `Some(true)` green.
pub fn heatmap(m: &Array2<u8>, order: &[usize], row_labels: &[String], col_labels: &[String], groups: Option<&[bool]>) -> String {
    let (rows, cols) = (order.len(), m.ncols());
    let strip = if groups.is_some() { STRIP + 2 } else { 0 };
    let x0 = LABEL_W + strip;
    let width = x0 + cols * CELL + 10;
    let height = HEADER_H + rows * CELL + 10;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="8">"#
    );
    let _ = writeln!(out, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    for (c, name) in col_labels.iter().enumerate() {
        let x = x0 + c * CELL + CELL / 2;
        let _ = writeln!(out, r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#, HEADER_H - 6, escape(name));
    }
    for (pos, &r) in order.iter().enumerate() {
        let y = HEADER_H + pos * CELL;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LABEL_W - 4,
            y + CELL - 2,
            escape(&row_labels[r])
        );
        if let Some(g) = groups {
            let colour = if g[r] { "#2ca02c" } else { "#d62728" };
            let _ = writeln!(out, r#"<rect class="group" x="{LABEL_W}" y="{y}" width="{STRIP}" height="{CELL}" fill="{colour}"/>"#);
        }
        for c in 0..cols {
            let fill = if m[[r, c]] == 1 { "#222222" } else { "#eeeeee" };
            let _ = writeln!(
                out,
                r#"<rect class="cell" x="{}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="white" stroke-width="0.5"/>"#,
                x0 + c * CELL
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn one_cell_per_entry() {
        let m = array![[1u8, 0, 1], [0, 1, 0]];
        let labels = vec!["a".to_string(), "b<".to_string()];
        let cols = vec!["1".to_string(), "2".to_string(), "3".to_string()];
        let svg = heatmap(&m, &[1, 0], &labels, &cols, Some(&[true, false]));
        assert_eq!(svg.matches(r#"class="cell""#).count(), 6);
        assert_eq!(svg.matches(r##"fill="#222222""##).count(), 3);
        assert_eq!(svg.matches(r#"class="group""#).count(), 2);
        assert!(svg.contains("b&lt;"));
    }
}
