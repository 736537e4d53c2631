//! CSV, JSON, and SVG outputs for grid results.

use std::fmt::Write as _;
use std::path::Path;

use polyad::{Error, Result};

use crate::phase::{GridResult, Method};

/// CSV with one row per (method, n, r) cell.
///
/// Schema: `method,n,r,trials,successes,rate,mean_residual,mean_seconds`.
/// Everything except `mean_seconds` is deterministic in the master seed.
pub fn grid_to_csv(grid: &GridResult) -> String {
    let mut out = String::from("method,n,r,trials,successes,rate,mean_residual,mean_seconds\n");
    for c in &grid.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:e},{:.6}",
            c.method, c.n, c.r, c.trials, c.successes, c.rate, c.mean_residual, c.mean_seconds
        );
    }
    out
}

/// Parse the CSV back into per-cell aggregates (no per-trial records).
pub fn grid_from_csv(text: &str) -> Result<Vec<(String, usize, usize, usize, usize, f64)>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if ln == 0 {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::InvalidArgument(format!(
                "csv line {} has {} fields, expected 8",
                ln + 1,
                fields.len()
            )));
        }
        let parse_err = |what: &str| Error::InvalidArgument(format!("csv line {}: bad {what}", ln + 1));
        out.push((
            fields[0].to_string(),
            fields[1].parse().map_err(|_| parse_err("n"))?,
            fields[2].parse().map_err(|_| parse_err("r"))?,
            fields[3].parse().map_err(|_| parse_err("trials"))?,
            fields[4].parse().map_err(|_| parse_err("successes"))?,
            fields[5].parse().map_err(|_| parse_err("rate"))?,
        ));
    }
    Ok(out)
}

/// Fig.-3 style success-rate heatmap, one SVG per method: n on the x axis,
/// r on the y axis, cell fill linear in the rate.
pub fn grid_to_svg(grid: &GridResult, method: Method) -> String {
    let mut ns: Vec<usize> = grid
        .cells
        .iter()
        .filter(|c| c.method == method)
        .map(|c| c.n)
        .collect();
    ns.sort_unstable();
    ns.dedup();
    let mut rs: Vec<usize> = grid
        .cells
        .iter()
        .filter(|c| c.method == method)
        .map(|c| c.r)
        .collect();
    rs.sort_unstable();
    rs.dedup();

    let cell = 28usize;
    let margin_left = 60usize;
    let margin_top = 40usize;
    let margin_bottom = 50usize;
    let width = margin_left + ns.len().max(1) * cell + 20;
    let height = margin_top + rs.len().max(1) * cell + margin_bottom;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">{} success rate</text>",
        margin_left, method
    );
    for (xi, &n) in ns.iter().enumerate() {
        for (yi, &r) in rs.iter().enumerate() {
            let rate = grid
                .cells
                .iter()
                .find(|c| c.method == method && c.n == n && c.r == r)
                .map(|c| c.rate)
                .unwrap_or(0.0);
            // Linear white → dark blue.
            let shade = (255.0 * (1.0 - rate)).round() as u8;
            let x = margin_left + xi * cell;
            // r grows upward, as in the phase-transition plots.
            let y = margin_top + (rs.len() - 1 - yi) * cell;
            let _ = writeln!(
                svg,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({shade},{shade},255)\" stroke=\"#999\" stroke-width=\"0.5\"><title>n={n} r={r} rate={rate:.2}</title></rect>"
            );
        }
    }
    for (xi, &n) in ns.iter().enumerate() {
        let x = margin_left + xi * cell + cell / 2;
        let y = margin_top + rs.len() * cell + 16;
        let _ = writeln!(
            svg,
            "<text x=\"{x}\" y=\"{y}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{n}</text>"
        );
    }
    for (yi, &r) in rs.iter().enumerate() {
        let x = margin_left - 8;
        let y = margin_top + (rs.len() - 1 - yi) * cell + cell / 2 + 4;
        let _ = writeln!(
            svg,
            "<text x=\"{x}\" y=\"{y}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{r}</text>"
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">n</text>",
        margin_left + ns.len() * cell / 2,
        margin_top + rs.len() * cell + 36
    );
    let _ = writeln!(
        svg,
        "<text x=\"14\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">r</text>",
        margin_top + rs.len() * cell / 2
    );
    svg.push_str("</svg>\n");
    svg
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::{CellResult, GridResult};

    fn cell(method: Method, n: usize, r: usize, successes: usize, trials: usize) -> CellResult {
        CellResult {
            method,
            n,
            r,
            trials,
            successes,
            rate: successes as f64 / trials as f64,
            mean_residual: 1e-9,
            mean_seconds: 0.25,
            records: Vec::new(),
        }
    }

    #[test]
    fn empty_grid_is_header_only() {
        let grid = GridResult { cells: Vec::new() };
        let csv = grid_to_csv(&grid);
        assert_eq!(csv, "method,n,r,trials,successes,rate,mean_residual,mean_seconds\n");
        assert!(grid_from_csv(&csv).unwrap().is_empty());
    }

    #[test]
    fn csv_round_trip_preserves_rates() {
        let grid = GridResult {
            cells: vec![
                cell(Method::AdmmG, 4, 2, 5, 5),
                cell(Method::AdmmG, 4, 6, 2, 5),
                cell(Method::Sos2, 4, 2, 4, 5),
            ],
        };
        let csv = grid_to_csv(&grid);
        let rows = grid_from_csv(&csv).unwrap();
        assert_eq!(rows.len(), 3);
        for (row, c) in rows.iter().zip(grid.cells.iter()) {
            assert_eq!(row.0, c.method.name());
            assert_eq!(row.3, c.trials);
            assert_eq!(row.4, c.successes);
            assert_eq!(row.5, c.rate);
        }
    }

    #[test]
    fn single_cell_rate_one() {
        let grid = GridResult {
            cells: vec![cell(Method::AdmmR, 10, 1, 5, 5)],
        };
        let csv = grid_to_csv(&grid);
        let rows = grid_from_csv(&csv).unwrap();
        assert_eq!(rows[0].5, 1.0);
    }

    #[test]
    fn svg_contains_cells_and_axes() {
        let grid = GridResult {
            cells: vec![cell(Method::AdmmG, 4, 2, 5, 5), cell(Method::AdmmG, 6, 2, 0, 5)],
        };
        let svg = grid_to_svg(&grid, Method::AdmmG);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<rect").count(), 2);
        // Full-rate cell renders at zero shade, failed cell at full shade.
        assert!(svg.contains("rgb(0,0,255)"));
        assert!(svg.contains("rgb(255,255,255)"));
        assert!(svg.contains(">n<") && svg.contains(">r<"));
    }
}
