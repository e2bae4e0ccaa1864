//! Static SVG heatmaps of box-wise values.
//!
//! Values are mapped linearly from `[min, max]` onto a five-stop viridis
//! ramp (dark purple, blue, teal, green, yellow), which is monotone in
//! lightness. A constant surface maps to the middle stop. Grid row 0 is drawn
//! at the bottom. Output depends only on the input, byte for byte.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;

const STOPS: [(f64, f64, f64); 5] = [
    (68.0, 1.0, 84.0),
    (59.0, 82.0, 139.0),
    (33.0, 145.0, 140.0),
    (94.0, 201.0, 98.0),
    (253.0, 231.0, 37.0),
];

const CELL: usize = 10;

/// Hex color for `t` in `[0, 1]`.
pub fn color(t: f64) -> String {
    let t = if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let pos = t * (STOPS.len() - 1) as f64;
    let k = (pos.floor() as usize).min(STOPS.len() - 2);
    let f = pos - k as f64;
    let (a, b) = (STOPS[k], STOPS[k + 1]);
    let mix = |x: f64, y: f64| (x + (y - x) * f).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(a.0, b.0),
        mix(a.1, b.1),
        mix(a.2, b.2)
    )
}

pub fn render_svg(grid: &Grid, values: &[f64], title: &str) -> Result<String> {
    if values.len() != grid.n_boxes() {
        return Err(Error::DimensionMismatch {
            expected: grid.n_boxes(),
            actual: values.len(),
        });
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (w, h) = (grid.n_x() * CELL, grid.n_y() * CELL);
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" shape-rendering="crispEdges">"#
    )
    .unwrap();
    writeln!(s, "<title>{}</title>", escape(title)).unwrap();
    writeln!(s, "<desc>min={lo} max={hi}</desc>").unwrap();
    for (i, &v) in values.iter().enumerate() {
        let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
        let (row, col) = grid.row_col(i);
        let x = col * CELL;
        let y = (grid.n_y() - 1 - row) * CELL;
        writeln!(
            s,
            r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}"/>"#,
            color(t)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Writes `<stem>.svg` and `<stem>.csv` next to each other.
pub fn emit_heatmap(grid: &Grid, values: &[f64], stem: &Path, title: &str) -> Result<()> {
    let svg = render_svg(grid, values, title)?;
    std::fs::write(stem.with_extension("svg"), svg)?;
    let mut csv = BufWriter::new(File::create(stem.with_extension("csv"))?);
    grid.write_matrix_csv(values, &mut csv)?;
    csv.flush()?;
    Ok(())
}
