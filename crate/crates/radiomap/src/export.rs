//! File formats for map artifacts.
//!
//! * Grid CSV — `# radiomap-grid-v1` header comment, then a rows x cols
//!   matrix of dBm values, one row per line, `NaN` literal for empty cells,
//!   row 0 = southernmost.
//! * Metadata JSON — grid geometry, build parameters, cell-state counts,
//!   defect summary.
//! * Heatmap PGM (P2 ASCII) — values affine-mapped from [min, max] dBm to
//!   [0, 255] for quick visual inspection; the mapping is recorded in the
//!   comment line. Top raster row is the north edge.
//! * Defect report — JSON lines, one object per detected stuck segment.
//!
//! All writers are deterministic: identical inputs yield identical bytes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::builder::{BuildMeta, DefectCounts, RadioMap, SegmentRecord};
use crate::geo::GridIndex;

/// Format tag on the first line of a grid CSV.
pub const GRID_FORMAT_TAG: &str = "radiomap-grid-v1";
/// `format` field value of a metadata JSON document.
pub const META_FORMAT_TAG: &str = "radiomap-meta-v1";

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("grid is empty")]
    EmptyGrid,
    #[error("ragged grid: line {line} has {got} values, expected {want}")]
    RaggedRow {
        line: usize,
        got: usize,
        want: usize,
    },
}

/// A bare value grid: row-major dBm values with row 0 the southernmost.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        assert_eq!(
            values.len(),
            rows * cols,
            "value count must match dimensions"
        );
        Self { rows, cols, values }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    /// First cell holding the maximum value in row-major order; `None` when
    /// every value is NaN.
    pub fn argmax(&self) -> Option<GridIndex> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.values.iter().enumerate() {
            if v.is_nan() {
                continue;
            }
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| GridIndex::new(i / self.cols, i % self.cols))
    }
}

impl RadioMap {
    /// Cell values as a bare [`Grid`] (NaN for empty cells).
    pub fn to_grid(&self) -> Grid {
        Grid {
            rows: self.spec().rows(),
            cols: self.spec().cols(),
            values: self.values(),
        }
    }
}

/// Serializes a grid to CSV. `{}` formatting of `f64` is shortest-roundtrip,
/// so parsing recovers the exact values.
pub fn write_grid_csv(grid: &Grid) -> String {
    let mut out = String::with_capacity(grid.values.len() * 8);
    out.push_str("# ");
    out.push_str(GRID_FORMAT_TAG);
    out.push('\n');
    for row in 0..grid.rows {
        let mut first = true;
        for col in 0..grid.cols {
            if !first {
                out.push(',');
            }
            first = false;
            out.push_str(&format!("{}", grid.get(row, col)));
        }
        out.push('\n');
    }
    out
}

/// Parses a grid CSV written by [`write_grid_csv`]. Comment lines (`#`) and
/// blank lines are skipped; all rows must have the same width.
pub fn parse_grid_csv(input: &str) -> Result<Grid, ExportError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<(usize, usize)> = None; // (cols, defining line)
    for (n, raw) in input.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| ExportError::Parse {
                line: line_no,
                reason: format!("cannot parse value `{field}`"),
            })?;
            row.push(v);
        }
        match width {
            None => width = Some((row.len(), line_no)),
            Some((w, _)) if w != row.len() => {
                return Err(ExportError::RaggedRow {
                    line: line_no,
                    got: row.len(),
                    want: w,
                })
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(ExportError::EmptyGrid);
    }
    let cols = rows[0].len();
    let values = rows.concat();
    Ok(Grid {
        rows: values.len() / cols,
        cols,
        values,
    })
}

/// Renders a grid as an ASCII PGM (P2) heatmap. Finite values are mapped
/// affinely from [min, max] to [0, 255]; NaN renders as 0. The top raster
/// row is the north edge (grid row `rows - 1`).
pub fn write_pgm(grid: &Grid) -> String {
    let finite: Vec<f64> = grid
        .values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .collect();
    let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let scale = |v: f64| -> u8 {
        if !v.is_finite() || span <= 0.0 {
            return 0;
        }
        (((v - min) / span) * 255.0).round().clamp(0.0, 255.0) as u8
    };
    let mut out = String::new();
    out.push_str("P2\n");
    if finite.is_empty() {
        out.push_str("# empty grid\n");
    } else {
        out.push_str(&format!(
            "# dbm range [{min}, {max}] mapped to [0, 255]; top row = north\n"
        ));
    }
    out.push_str(&format!("{} {}\n255\n", grid.cols, grid.rows));
    for row in (0..grid.rows).rev() {
        let mut first = true;
        for col in 0..grid.cols {
            if !first {
                out.push(' ');
            }
            first = false;
            out.push_str(&format!("{}", scale(grid.get(row, col))));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct GridMeta {
    pub origin_lat_deg: f64,
    pub origin_lon_deg: f64,
    pub cell_size_m: f64,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ParamsMeta {
    pub alpha: f64,
    pub sigma_window: usize,
    pub stuck_min_len: usize,
    pub disc_update: bool,
    pub stuck_correction: bool,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct CellCounts {
    pub measured: usize,
    pub interpolated: usize,
    pub empty: usize,
}

/// Serializable mirror of a map's geometry, parameters, and counts.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct MetaFile {
    pub format: String,
    pub grid: GridMeta,
    pub params: ParamsMeta,
    pub sources: Vec<String>,
    pub cells: CellCounts,
    pub defects: DefectCounts,
}

impl MetaFile {
    pub fn from_map(map: &RadioMap) -> Self {
        let spec = map.spec();
        let meta: &BuildMeta = map.meta();
        Self {
            format: META_FORMAT_TAG.to_string(),
            grid: GridMeta {
                origin_lat_deg: spec.origin().lat(),
                origin_lon_deg: spec.origin().lon(),
                cell_size_m: spec.cell_size(),
                rows: spec.rows(),
                cols: spec.cols(),
            },
            params: ParamsMeta {
                alpha: meta.alpha,
                sigma_window: meta.sigma_window,
                stuck_min_len: meta.stuck_min_len,
                disc_update: meta.disc_update_enabled,
                stuck_correction: meta.stuck_correction_enabled,
            },
            sources: meta.sources.clone(),
            cells: CellCounts {
                measured: map.measured_count(),
                interpolated: map.interpolated_count(),
                empty: map.empty_count(),
            },
            defects: meta.defects.clone(),
        }
    }
}

/// Serializes map metadata as pretty-printed JSON (trailing newline).
pub fn write_metadata_json(map: &RadioMap) -> String {
    let mut s = serde_json::to_string_pretty(&MetaFile::from_map(map)).expect("meta serializes");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct SegmentLine<'a> {
    source_id: &'a str,
    t_s: f64,
    t_f: Option<f64>,
    epochs: usize,
}

/// Serializes the defect report as JSON lines, one object per detected
/// stuck segment (`t_f` is null for segments that never resumed).
pub fn write_defect_report_jsonl(segments: &[SegmentRecord]) -> String {
    let mut out = String::new();
    for seg in segments {
        let line = SegmentLine {
            source_id: &seg.source_id,
            t_s: seg.t_s,
            t_f: seg.t_f,
            epochs: seg.epochs,
        };
        out.push_str(&serde_json::to_string(&line).expect("segment serializes"));
        out.push('\n');
    }
    out
}
