//! Radio map construction.
//!
//! A map starts as a grid of empty (NaN) cells. Survey samples update cells
//! through an exponential moving average so a temporary measurement error
//! cannot overwrite a cell outright; each sample is written into every cell
//! within twice the rolling positional sigma of its fix (degenerating to the
//! single containing cell when the disc is empty). Remaining empty cells are
//! then filled by inverse-distance-weighted interpolation over all measured
//! cells, yielding a complete map.
//!
//! [`build_map`] chains the whole pipeline: merge traces, repair frozen
//! fixes, estimate per-sample sigma, apply disc updates in global timestamp
//! order, interpolate. Smoothing state is kept per (cell, walker) during the
//! update phase so interleaved collectors do not cross-contaminate each
//! other's averages; a cell touched by several walkers gets the mean of
//! their per-walker averages.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::defects::{
    repair_stuck_positions, rolling_sigma, DefectError, SigmaEstimate, StuckSegment,
};
use crate::geo::{GeoError, GridIndex, GridSpec, LocalPoint};
use crate::trace::SurveyTrace;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BuildError {
    #[error("smoothing factor must satisfy 0 < alpha < 1, got {0}")]
    InvalidAlpha(f64),
    #[error("invalid build parameters: {0}")]
    InvalidParams(String),
    #[error("update position outside the grid: {0}")]
    OutOfGrid(GeoError),
    #[error("radio map has no measured cells")]
    NoMeasurements,
    #[error("cell array has {got} entries, grid needs {want}")]
    DimensionMismatch { got: usize, want: usize },
}

/// State of one grid cell.
///
/// `Empty` serializes as NaN. An interpolated value never overwrites a
/// measured one, and a fresh measurement supersedes an interpolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellState {
    Empty,
    Measured { value: f64, ema_count: u32 },
    Interpolated { value: f64 },
}

impl CellState {
    /// Stored dBm value; NaN when empty (the serialized representation).
    pub fn value_or_nan(&self) -> f64 {
        match self {
            CellState::Empty => f64::NAN,
            CellState::Measured { value, .. } | CellState::Interpolated { value } => *value,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            CellState::Empty => None,
            CellState::Measured { value, .. } | CellState::Interpolated { value } => Some(*value),
        }
    }

    pub fn is_measured(&self) -> bool {
        matches!(self, CellState::Measured { .. })
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, CellState::Empty)
    }
}

/// Exponential smoothing configuration for cell updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    alpha: f64,
    unnormalized: bool,
}

impl SmoothingConfig {
    /// Default smoothing factor when none is configured.
    pub const DEFAULT_ALPHA: f64 = 0.3;

    /// `alpha` must lie strictly between 0 and 1.
    pub fn new(alpha: f64) -> Result<Self, BuildError> {
        if !(alpha.is_finite() && 0.0 < alpha && alpha < 1.0) {
            return Err(BuildError::InvalidAlpha(alpha));
        }
        Ok(Self {
            alpha,
            unnormalized: false,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Switches the update rule to `v + (1 - alpha) * prev`, in which the
    /// incoming value enters at full weight. The weights then sum to more
    /// than one, so repeated updates drift instead of averaging; kept only
    /// as an off-by-default comparison mode.
    pub fn with_unnormalized_update(mut self, enabled: bool) -> Self {
        self.unnormalized = enabled;
        self
    }

    pub fn unnormalized(&self) -> bool {
        self.unnormalized
    }
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self::new(Self::DEFAULT_ALPHA).expect("default alpha is valid")
    }
}

/// Applies one measurement to a cell.
///
/// An empty (or interpolated) cell takes the value directly; a measured cell
/// blends as `alpha * v + (1 - alpha) * prev`, evaluated as
/// `prev + alpha * (v - prev)` so a repeated value is an exact fixed point.
pub fn ema_update(cell: CellState, v: f64, cfg: &SmoothingConfig) -> CellState {
    match cell {
        CellState::Measured { value, ema_count } => {
            let next = if cfg.unnormalized {
                v + (1.0 - cfg.alpha) * value
            } else {
                value + cfg.alpha * (v - value)
            };
            CellState::Measured {
                value: next,
                ema_count: ema_count.saturating_add(1),
            }
        }
        CellState::Empty | CellState::Interpolated { .. } => CellState::Measured {
            value: v,
            ema_count: 1,
        },
    }
}

/// Indices of all cells whose center lies within `radius` meters of
/// `center` (inclusive), in row-major order. May be empty.
pub fn disc_cells(spec: &GridSpec, center: LocalPoint, radius: f64) -> Vec<GridIndex> {
    let s = spec.cell_size();
    let max_row = (spec.rows() - 1) as f64;
    let max_col = (spec.cols() - 1) as f64;
    let lo_f = |c: f64| ((c - radius) / s - 0.5).ceil();
    let hi_f = |c: f64| ((c + radius) / s - 0.5).floor();
    let (row_lo, row_hi) = (lo_f(center.y), hi_f(center.y).min(max_row));
    let (col_lo, col_hi) = (lo_f(center.x), hi_f(center.x).min(max_col));
    if row_lo > max_row || col_lo > max_col || row_hi < 0.0 || col_hi < 0.0 {
        return Vec::new();
    }
    let mut cells = Vec::new();
    for row in row_lo.max(0.0) as usize..=row_hi as usize {
        for col in col_lo.max(0.0) as usize..=col_hi as usize {
            let idx = GridIndex::new(row, col);
            if spec.cell_center(idx).distance(&center) <= radius {
                cells.push(idx);
            }
        }
    }
    cells
}

/// Counts of detected GPS defects and dropped samples, recorded in the map
/// metadata.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DefectCounts {
    /// Stuck segments detected across all traces.
    pub stuck_segments: usize,
    /// Frozen epochs repositioned by interpolation.
    pub repaired_epochs: usize,
    /// Frozen epochs excluded because their segment never resumed.
    pub dropped_unresumed_epochs: usize,
    /// Samples dropped because their position fell outside the grid.
    pub dropped_out_of_grid: usize,
}

/// Build parameters recorded alongside the cell array.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildMeta {
    pub alpha: f64,
    pub sigma_window: usize,
    pub stuck_min_len: usize,
    pub disc_update_enabled: bool,
    pub stuck_correction_enabled: bool,
    /// Source ids of the traces that fed the map.
    pub sources: Vec<String>,
    pub defects: DefectCounts,
}

impl Default for BuildMeta {
    fn default() -> Self {
        Self {
            alpha: SmoothingConfig::DEFAULT_ALPHA,
            sigma_window: crate::defects::DEFAULT_SIGMA_WINDOW,
            stuck_min_len: crate::defects::DEFAULT_STUCK_MIN_LEN,
            disc_update_enabled: true,
            stuck_correction_enabled: true,
            sources: Vec::new(),
            defects: DefectCounts::default(),
        }
    }
}

/// The gridded radio map: geometry plus one [`CellState`] per cell in
/// row-major order (row 0 = southernmost).
#[derive(Debug, Clone, PartialEq)]
pub struct RadioMap {
    spec: GridSpec,
    cells: Vec<CellState>,
    meta: BuildMeta,
}

impl RadioMap {
    /// A map with every cell empty (the NaN-initialized state).
    pub fn new_empty(spec: GridSpec, meta: BuildMeta) -> Self {
        let cells = vec![CellState::Empty; spec.cell_count()];
        Self { spec, cells, meta }
    }

    /// Assembles a map from an explicit cell array (row-major).
    pub fn from_cells(
        spec: GridSpec,
        cells: Vec<CellState>,
        meta: BuildMeta,
    ) -> Result<Self, BuildError> {
        if cells.len() != spec.cell_count() {
            return Err(BuildError::DimensionMismatch {
                got: cells.len(),
                want: spec.cell_count(),
            });
        }
        Ok(Self { spec, cells, meta })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn meta(&self) -> &BuildMeta {
        &self.meta
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn cell(&self, idx: GridIndex) -> CellState {
        self.cells[self.spec.linear(idx)]
    }

    pub fn set_cell(&mut self, idx: GridIndex, state: CellState) {
        let i = self.spec.linear(idx);
        self.cells[i] = state;
    }

    pub fn measured_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_measured()).count()
    }

    pub fn interpolated_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c, CellState::Interpolated { .. }))
            .count()
    }

    pub fn empty_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_empty()).count()
    }

    /// Cell values in row-major order, NaN for empty cells.
    pub fn values(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.value_or_nan()).collect()
    }

    /// Cell with the highest value (row-major scan, first maximum wins).
    /// Empty cells are skipped; `None` if all cells are empty.
    pub fn argmax(&self) -> Option<GridIndex> {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in self.cells.iter().enumerate() {
            if let Some(v) = c.value() {
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((i, v));
                }
            }
        }
        best.map(|(i, _)| self.spec.from_linear(i))
    }

    /// Writes one measurement into every cell whose center lies within
    /// `2 * sigma` of `center`; when no cell center falls inside that disc
    /// the containing cell alone is updated (a plain point update).
    pub fn disc_update(
        &mut self,
        center: LocalPoint,
        sigma: &SigmaEstimate,
        v: f64,
        cfg: &SmoothingConfig,
    ) -> Result<(), BuildError> {
        let containing = self
            .spec
            .grid_index(center)
            .map_err(BuildError::OutOfGrid)?;
        let touched = disc_cells(&self.spec, center, 2.0 * sigma.sigma);
        if touched.is_empty() {
            let i = self.spec.linear(containing);
            self.cells[i] = ema_update(self.cells[i], v, cfg);
        } else {
            for idx in touched {
                let i = self.spec.linear(idx);
                self.cells[i] = ema_update(self.cells[i], v, cfg);
            }
        }
        Ok(())
    }

    /// Measured cells as (center, value) pairs in row-major order.
    fn measured_points(&self) -> Vec<(LocalPoint, f64)> {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(i, c)| match c {
                CellState::Measured { value, .. } => {
                    Some((self.spec.cell_center(self.spec.from_linear(i)), *value))
                }
                _ => None,
            })
            .collect()
    }

    /// Shepard (inverse-distance weighted, power 1) estimate at an arbitrary
    /// point over all measured cells. A query landing exactly on a measured
    /// cell center returns that value.
    pub fn idw_at(&self, p: LocalPoint) -> Result<f64, BuildError> {
        let measured = self.measured_points();
        shepard(p, &measured).ok_or(BuildError::NoMeasurements)
    }

    /// Replaces every empty cell with the inverse-distance weighted mean of
    /// all measured cells (weights `1/d` between cell centers). Measured
    /// cells are never touched; a second run is a no-op because no empty
    /// cells remain. Returns the number of cells filled.
    pub fn idw_interpolate(&mut self) -> Result<usize, BuildError> {
        let measured = self.measured_points();
        if measured.is_empty() {
            return Err(BuildError::NoMeasurements);
        }
        let mut filled = 0;
        for i in 0..self.cells.len() {
            if self.cells[i].is_empty() {
                let center = self.spec.cell_center(self.spec.from_linear(i));
                let value = shepard(center, &measured).expect("measured set is non-empty");
                self.cells[i] = CellState::Interpolated { value };
                filled += 1;
            }
        }
        Ok(filled)
    }
}

/// Weighted mean of `points` with weights `1/d(p, point)`; the exact stored
/// value when `p` coincides with a point. `None` when `points` is empty.
///
/// The result is clamped into [min, max] of the contributing values: the
/// mean is a convex combination, so only the final rounding could ever land
/// outside, and the clamp keeps that contract exact.
fn shepard(p: LocalPoint, points: &[(LocalPoint, f64)]) -> Option<f64> {
    if points.is_empty() {
        return None;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (q, value) in points {
        let d = p.distance(q);
        if d == 0.0 {
            return Some(*value);
        }
        num += value / d;
        den += 1.0 / d;
        lo = lo.min(*value);
        hi = hi.max(*value);
    }
    Some((num / den).clamp(lo, hi))
}

/// Knobs of [`build_map`]. Defaults: alpha 0.3, sigma window 30, stuck
/// minimum run length 3, both corrections enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildParams {
    pub smoothing: SmoothingConfig,
    pub sigma_window: usize,
    pub stuck_min_len: usize,
    pub disc_update_enabled: bool,
    pub stuck_correction_enabled: bool,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            smoothing: SmoothingConfig::default(),
            sigma_window: crate::defects::DEFAULT_SIGMA_WINDOW,
            stuck_min_len: crate::defects::DEFAULT_STUCK_MIN_LEN,
            disc_update_enabled: true,
            stuck_correction_enabled: true,
        }
    }
}

impl BuildParams {
    pub fn validate(&self) -> Result<(), BuildError> {
        if self.sigma_window < 2 {
            return Err(BuildError::InvalidParams(format!(
                "sigma window must be >= 2, got {}",
                self.sigma_window
            )));
        }
        if self.stuck_min_len < 2 {
            return Err(BuildError::InvalidParams(format!(
                "stuck min length must be >= 2, got {}",
                self.stuck_min_len
            )));
        }
        Ok(())
    }

    fn meta(&self, sources: Vec<String>, defects: DefectCounts) -> BuildMeta {
        BuildMeta {
            alpha: self.smoothing.alpha(),
            sigma_window: self.sigma_window,
            stuck_min_len: self.stuck_min_len,
            disc_update_enabled: self.disc_update_enabled,
            stuck_correction_enabled: self.stuck_correction_enabled,
            sources,
            defects,
        }
    }
}

/// One detected stuck segment attributed to its source trace, for the
/// defect report.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord {
    pub source_id: String,
    pub t_s: f64,
    pub t_f: Option<f64>,
    pub epochs: usize,
}

impl SegmentRecord {
    fn new(source_id: &str, seg: &StuckSegment) -> Self {
        Self {
            source_id: source_id.to_string(),
            t_s: seg.t_s,
            t_f: seg.t_f,
            epochs: seg.epochs(),
        }
    }
}

/// Everything [`build_map`] produces: the map before interpolation (still
/// holding empty cells), the complete map, and the defect report.
#[derive(Debug, Clone)]
pub struct BuildOutput {
    /// Post-update, pre-interpolation snapshot.
    pub raw: RadioMap,
    /// Complete map with every empty cell interpolated.
    pub map: RadioMap,
    /// Detected stuck segments, per source.
    pub segments: Vec<SegmentRecord>,
}

/// One prepared map update: a sample with its projected position and
/// positional sigma, ready to fold into the grid.
struct Update {
    t: f64,
    source: usize,
    pos: LocalPoint,
    rssi: f64,
    sigma: f64,
}

/// Runs the full construction pipeline over one or more traces:
/// repair frozen fixes per trace, estimate per-sample positional sigma per
/// trace, merge all samples into global timestamp order, apply disc updates,
/// then interpolate the remaining empty cells.
///
/// Out-of-grid samples are dropped and counted, not errors. Frozen samples
/// whose segment never resumed are likewise dropped. Disabling
/// `stuck_correction_enabled` still reports detected segments; disabling
/// `disc_update_enabled` forces plain single-cell updates.
pub fn build_map(
    traces: &[SurveyTrace],
    spec: &GridSpec,
    params: &BuildParams,
) -> Result<BuildOutput, BuildError> {
    params.validate()?;
    let mut defects = DefectCounts::default();
    let mut segments = Vec::new();
    let mut updates: Vec<Update> = Vec::new();

    for (si, trace) in traces.iter().enumerate() {
        let repair = repair_stuck_positions(trace, params.stuck_min_len);
        segments.extend(
            repair
                .segments
                .iter()
                .map(|seg| SegmentRecord::new(&trace.source_id, seg)),
        );
        defects.stuck_segments += repair.segments.len();

        let (working, unusable) = if params.stuck_correction_enabled {
            defects.repaired_epochs += repair
                .segments
                .iter()
                .filter(|s| s.t_f.is_some())
                .map(|s| s.epochs())
                .sum::<usize>();
            defects.dropped_unresumed_epochs += repair.unusable.len();
            (repair.trace, repair.unusable)
        } else {
            (trace.clone(), Vec::new())
        };
        let unusable: std::collections::HashSet<usize> = unusable.into_iter().collect();

        for (i, sample) in working.samples.iter().enumerate() {
            if unusable.contains(&i) {
                continue;
            }
            let sigma = if params.disc_update_enabled {
                match rolling_sigma(&working, i, params.sigma_window) {
                    Ok(est) => est.sigma,
                    // Not enough history yet: fall back to a point update.
                    Err(DefectError::InsufficientWindow { .. }) => 0.0,
                    Err(_) => 0.0,
                }
            } else {
                0.0
            };
            match spec
                .to_local(sample.pos)
                .and_then(|p| spec.grid_index(p).map(|_| p))
            {
                Ok(pos) => updates.push(Update {
                    t: sample.t,
                    source: si,
                    pos,
                    rssi: sample.rssi,
                    sigma,
                }),
                Err(_) => defects.dropped_out_of_grid += 1,
            }
        }
    }

    // Global timestamp order; ties break by source id, then input order
    // (stable sort over the push order).
    updates.sort_by(|a, b| {
        a.t.total_cmp(&b.t)
            .then_with(|| traces[a.source].source_id.cmp(&traces[b.source].source_id))
    });

    // Per-(cell, source) smoothing chains; BTreeMap for deterministic
    // grouping at finalize.
    let mut chains: BTreeMap<(usize, usize), CellState> = BTreeMap::new();
    for u in &updates {
        let touched = disc_cells(spec, u.pos, 2.0 * u.sigma);
        let write = |chains: &mut BTreeMap<(usize, usize), CellState>, cell: usize| {
            let entry = chains.entry((cell, u.source)).or_insert(CellState::Empty);
            *entry = ema_update(*entry, u.rssi, &params.smoothing);
        };
        if touched.is_empty() {
            let idx = spec
                .grid_index(u.pos)
                .expect("update position verified in grid");
            write(&mut chains, spec.linear(idx));
        } else {
            for idx in touched {
                write(&mut chains, spec.linear(idx));
            }
        }
    }

    let sources: Vec<String> = traces.iter().map(|t| t.source_id.clone()).collect();
    let mut raw = RadioMap::new_empty(spec.clone(), params.meta(sources, defects));

    // Collapse per-source chains: a cell touched by one walker keeps that
    // walker's average exactly; several walkers average their chains.
    let mut iter = chains.into_iter().peekable();
    while let Some(((cell, _), state)) = iter.next() {
        let mut sum = 0.0;
        let mut count = 0u32;
        let mut chains_n = 0u32;
        let mut add = |s: CellState| {
            if let CellState::Measured { value, ema_count } = s {
                sum += value;
                count += ema_count;
                chains_n += 1;
            }
        };
        add(state);
        while let Some(&((next_cell, _), next_state)) = iter.peek() {
            if next_cell != cell {
                break;
            }
            add(next_state);
            iter.next();
        }
        if chains_n > 0 {
            let value = if chains_n == 1 {
                sum
            } else {
                sum / chains_n as f64
            };
            raw.cells[cell] = CellState::Measured {
                value,
                ema_count: count,
            };
        }
    }

    let mut map = raw.clone();
    map.idw_interpolate()?;
    Ok(BuildOutput { raw, map, segments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;
    use crate::trace::SurveySample;

    fn small_spec() -> GridSpec {
        GridSpec::new(GeoPoint::new(37.55, 127.04).unwrap(), 10.0, 8, 8).unwrap()
    }

    fn cfg(alpha: f64) -> SmoothingConfig {
        SmoothingConfig::new(alpha).unwrap()
    }

    #[test]
    fn ema_first_update_takes_value() {
        let c = ema_update(CellState::Empty, -70.0, &cfg(0.3));
        assert_eq!(
            c,
            CellState::Measured {
                value: -70.0,
                ema_count: 1
            }
        );
    }

    #[test]
    fn ema_blends_half_and_half() {
        let c = CellState::Measured {
            value: -80.0,
            ema_count: 1,
        };
        let c = ema_update(c, -70.0, &cfg(0.5));
        assert_eq!(
            c,
            CellState::Measured {
                value: -75.0,
                ema_count: 2
            }
        );
    }

    #[test]
    fn ema_fixed_point_is_exact() {
        for alpha in [0.1, 0.3, 0.5, 0.7, 0.9, 0.123456789] {
            let mut c = CellState::Measured {
                value: -71.3,
                ema_count: 1,
            };
            for _ in 0..10 {
                c = ema_update(c, -71.3, &cfg(alpha));
            }
            assert_eq!(c.value(), Some(-71.3));
        }
    }

    #[test]
    fn ema_measurement_supersedes_interpolation() {
        let c = ema_update(CellState::Interpolated { value: -90.0 }, -70.0, &cfg(0.3));
        assert_eq!(
            c,
            CellState::Measured {
                value: -70.0,
                ema_count: 1
            }
        );
    }

    #[test]
    fn ema_unnormalized_mode_reproduces_printed_recurrence() {
        let cfg = cfg(0.3).with_unnormalized_update(true);
        let c = ema_update(
            CellState::Measured {
                value: -80.0,
                ema_count: 1,
            },
            -70.0,
            &cfg,
        );
        assert_eq!(c.value(), Some(-70.0 + 0.7 * -80.0));
    }

    #[test]
    fn alpha_bounds_are_strict() {
        assert!(SmoothingConfig::new(0.0).is_err());
        assert!(SmoothingConfig::new(1.0).is_err());
        assert!(SmoothingConfig::new(-0.1).is_err());
        assert!(SmoothingConfig::new(f64::NAN).is_err());
        assert!(SmoothingConfig::new(0.5).is_ok());
    }

    /// Brute-force oracle: every cell center within `radius` of `center`.
    fn disc_oracle(spec: &GridSpec, center: LocalPoint, radius: f64) -> Vec<GridIndex> {
        let mut out = Vec::new();
        for row in 0..spec.rows() {
            for col in 0..spec.cols() {
                let idx = GridIndex::new(row, col);
                if spec.cell_center(idx).distance(&center) <= radius {
                    out.push(idx);
                }
            }
        }
        out
    }

    #[test]
    fn disc_cells_match_brute_force_enumeration() {
        let spec = GridSpec::default();
        // Deterministic scatter of centers and radii, including boundary cases.
        for k in 0..300 {
            let x = (k as f64 * 37.7) % 1000.0;
            let y = (k as f64 * 17.3) % 700.0;
            let r = (k as f64 * 1.37) % 60.0;
            let center = LocalPoint::new(x, y);
            assert_eq!(
                disc_cells(&spec, center, r),
                disc_oracle(&spec, center, r),
                "center {center:?} r {r}"
            );
        }
    }

    #[test]
    fn disc_at_cell_center_with_sigma_ten() {
        // sigma = 10 m on a 10 m grid: the 2-sigma disc spans the 3x3 block
        // around the center plus the four centers exactly 20 m away.
        let spec = GridSpec::default();
        let center = spec.cell_center(GridIndex::new(35, 50));
        let cells = disc_cells(&spec, center, 20.0);
        assert_eq!(cells, disc_oracle(&spec, center, 20.0));
        assert_eq!(cells.len(), 13);
        assert!(cells.contains(&GridIndex::new(35, 50)));
        assert!(cells.contains(&GridIndex::new(34, 49)));
        assert!(cells.contains(&GridIndex::new(35, 52)));
        assert!(!cells.contains(&GridIndex::new(33, 48)));
    }

    #[test]
    fn disc_update_sigma_zero_equals_single_cell_ema() {
        let spec = small_spec();
        let cfg = SmoothingConfig::default();
        let p = LocalPoint::new(33.0, 47.0);
        let mut via_disc = RadioMap::new_empty(spec.clone(), BuildMeta::default());
        via_disc
            .disc_update(p, &SigmaEstimate::zero(), -67.25, &cfg)
            .unwrap();
        via_disc
            .disc_update(p, &SigmaEstimate::zero(), -71.5, &cfg)
            .unwrap();

        let mut via_ema = RadioMap::new_empty(spec.clone(), BuildMeta::default());
        let idx = spec.grid_index(p).unwrap();
        via_ema.set_cell(idx, ema_update(via_ema.cell(idx), -67.25, &cfg));
        via_ema.set_cell(idx, ema_update(via_ema.cell(idx), -71.5, &cfg));

        assert_eq!(via_disc, via_ema);
    }

    #[test]
    fn disc_update_out_of_grid_is_an_error() {
        let mut map = RadioMap::new_empty(small_spec(), BuildMeta::default());
        let err = map.disc_update(
            LocalPoint::new(-5.0, 10.0),
            &SigmaEstimate::zero(),
            -70.0,
            &SmoothingConfig::default(),
        );
        assert!(matches!(err, Err(BuildError::OutOfGrid(_))));
    }

    #[test]
    fn idw_query_at_measured_center_is_exact() {
        let spec = small_spec();
        let mut map = RadioMap::new_empty(spec.clone(), BuildMeta::default());
        map.set_cell(
            GridIndex::new(2, 3),
            CellState::Measured {
                value: -63.7,
                ema_count: 1,
            },
        );
        map.set_cell(
            GridIndex::new(5, 6),
            CellState::Measured {
                value: -81.2,
                ema_count: 1,
            },
        );
        let v = map.idw_at(spec.cell_center(GridIndex::new(2, 3))).unwrap();
        assert_eq!(v, -63.7);
    }

    #[test]
    fn idw_equidistant_pair_averages() {
        let spec = small_spec();
        let mut map = RadioMap::new_empty(spec.clone(), BuildMeta::default());
        map.set_cell(
            GridIndex::new(3, 1),
            CellState::Measured {
                value: -60.0,
                ema_count: 1,
            },
        );
        map.set_cell(
            GridIndex::new(3, 5),
            CellState::Measured {
                value: -80.0,
                ema_count: 1,
            },
        );
        // Midpoint of the two centers.
        let v = map.idw_at(spec.cell_center(GridIndex::new(3, 3))).unwrap();
        assert!((v - -70.0).abs() < 1e-12);
    }

    #[test]
    fn idw_with_no_measurements_errors() {
        let map = RadioMap::new_empty(small_spec(), BuildMeta::default());
        assert!(matches!(
            map.idw_at(LocalPoint::new(5.0, 5.0)),
            Err(BuildError::NoMeasurements)
        ));
        let mut map = map;
        assert!(matches!(
            map.idw_interpolate(),
            Err(BuildError::NoMeasurements)
        ));
    }

    #[test]
    fn idw_interpolation_fills_everything_and_is_idempotent() {
        let spec = small_spec();
        let mut map = RadioMap::new_empty(spec, BuildMeta::default());
        map.set_cell(
            GridIndex::new(0, 0),
            CellState::Measured {
                value: -60.0,
                ema_count: 1,
            },
        );
        map.set_cell(
            GridIndex::new(7, 7),
            CellState::Measured {
                value: -90.0,
                ema_count: 1,
            },
        );
        let filled = map.idw_interpolate().unwrap();
        assert_eq!(filled, 62);
        assert_eq!(map.empty_count(), 0);
        let again = map.clone();
        let mut map2 = map.clone();
        assert_eq!(map2.idw_interpolate().unwrap(), 0);
        assert_eq!(map2, again);
        // Convex combination: all interpolated values inside [min, max].
        for c in map.cells() {
            let v = c.value().unwrap();
            assert!((-90.0..=-60.0).contains(&v));
        }
    }

    #[test]
    fn idw_constant_field_stays_constant() {
        let spec = small_spec();
        let mut map = RadioMap::new_empty(spec, BuildMeta::default());
        for idx in [
            GridIndex::new(1, 1),
            GridIndex::new(4, 2),
            GridIndex::new(6, 5),
        ] {
            map.set_cell(
                idx,
                CellState::Measured {
                    value: -72.0,
                    ema_count: 1,
                },
            );
        }
        map.idw_interpolate().unwrap();
        for c in map.cells() {
            assert!((c.value().unwrap() - -72.0).abs() < 1e-12);
        }
    }

    fn trace_at_centers(spec: &GridSpec, cells: &[(usize, usize, f64)]) -> SurveyTrace {
        let samples = cells
            .iter()
            .enumerate()
            .map(|(i, &(row, col, rssi))| SurveySample {
                t: i as f64,
                pos: spec.to_geo(spec.cell_center(GridIndex::new(row, col))),
                rssi,
            })
            .collect();
        SurveyTrace::new("t", samples)
    }

    #[test]
    fn build_single_sample_yields_constant_map() {
        let spec = small_spec();
        let trace = trace_at_centers(&spec, &[(2, 2, -70.0)]);
        let params = BuildParams {
            disc_update_enabled: false,
            ..BuildParams::default()
        };
        let out = build_map(&[trace], &spec, &params).unwrap();
        assert_eq!(
            out.map.cell(GridIndex::new(2, 2)),
            CellState::Measured {
                value: -70.0,
                ema_count: 1
            }
        );
        assert_eq!(out.map.measured_count(), 1);
        assert_eq!(out.map.interpolated_count(), 63);
        for c in out.map.cells() {
            assert_eq!(c.value(), Some(-70.0));
        }
        assert_eq!(out.raw.empty_count(), 63);
    }

    #[test]
    fn build_drops_and_counts_out_of_grid_samples() {
        let spec = small_spec();
        let mut trace = trace_at_centers(&spec, &[(1, 1, -70.0), (2, 2, -71.0)]);
        trace.samples.push(SurveySample {
            t: 2.0,
            pos: spec.to_geo(LocalPoint::new(2000.0, 2000.0)),
            rssi: -75.0,
        });
        let out = build_map(&[trace], &spec, &BuildParams::default()).unwrap();
        assert_eq!(out.map.meta().defects.dropped_out_of_grid, 1);
    }

    #[test]
    fn build_with_no_usable_samples_reports_no_measurements() {
        let spec = small_spec();
        let trace = SurveyTrace::new(
            "t",
            vec![SurveySample {
                t: 0.0,
                pos: spec.to_geo(LocalPoint::new(5000.0, 5000.0)),
                rssi: -70.0,
            }],
        );
        assert!(matches!(
            build_map(&[trace], &spec, &BuildParams::default()),
            Err(BuildError::NoMeasurements)
        ));
    }

    #[test]
    fn build_is_deterministic() {
        let spec = small_spec();
        let a = trace_at_centers(&spec, &[(0, 0, -60.0), (1, 3, -65.0), (4, 4, -72.0)]);
        let b = trace_at_centers(&spec, &[(7, 7, -80.0), (5, 1, -77.0)]);
        let out1 = build_map(&[a.clone(), b.clone()], &spec, &BuildParams::default()).unwrap();
        let out2 = build_map(&[a, b], &spec, &BuildParams::default()).unwrap();
        assert_eq!(out1.map, out2.map);
        assert_eq!(out1.raw, out2.raw);
    }

    #[test]
    fn build_from_disjoint_traces_matches_concatenated_trace() {
        let spec = small_spec();
        // Disjoint halves with disjoint time ranges.
        let first = trace_at_centers(&spec, &[(0, 0, -60.0), (1, 1, -62.0), (2, 2, -64.0)]);
        let mut second = trace_at_centers(&spec, &[(5, 5, -80.0), (6, 6, -82.0)]);
        for s in &mut second.samples {
            s.t += 10.0;
        }
        let mut concat = first.clone();
        concat.samples.extend(second.samples.iter().copied());
        // Point updates only: the rolling sigma window is per source, so it
        // would legitimately differ across the concatenation seam.
        let params = BuildParams {
            disc_update_enabled: false,
            ..BuildParams::default()
        };
        let split = build_map(&[first, second], &spec, &params).unwrap();
        let merged = build_map(&[concat], &spec, &params).unwrap();
        assert_eq!(split.map.values(), merged.map.values());
    }

    #[test]
    fn build_keeps_smoothing_per_source() {
        // Two walkers hit the same cell with interleaved timestamps. Each
        // walker's average is computed on its own chain and the cell gets
        // the mean of the chains: blending across walkers would instead
        // yield an order-dependent mix.
        let spec = small_spec();
        let mut a = trace_at_centers(&spec, &[(2, 2, -60.0), (2, 2, -60.0)]);
        let mut b = trace_at_centers(&spec, &[(2, 2, -90.0), (2, 2, -90.0)]);
        a.samples[0].t = 0.0;
        a.samples[1].t = 2.0;
        b.samples[0].t = 1.0;
        b.samples[1].t = 3.0;
        a.source_id = "a".into();
        b.source_id = "b".into();
        let params = BuildParams {
            disc_update_enabled: false,
            ..BuildParams::default()
        };
        let out = build_map(&[a, b], &spec, &params).unwrap();
        assert_eq!(
            out.raw.cell(GridIndex::new(2, 2)),
            CellState::Measured {
                value: -75.0,
                ema_count: 4
            }
        );
    }

    #[test]
    fn build_params_validated() {
        let spec = small_spec();
        let trace = trace_at_centers(&spec, &[(0, 0, -60.0)]);
        let params = BuildParams {
            sigma_window: 1,
            ..BuildParams::default()
        };
        assert!(matches!(
            build_map(std::slice::from_ref(&trace), &spec, &params),
            Err(BuildError::InvalidParams(_))
        ));
        let params = BuildParams {
            stuck_min_len: 1,
            ..BuildParams::default()
        };
        assert!(matches!(
            build_map(&[trace], &spec, &params),
            Err(BuildError::InvalidParams(_))
        ));
    }

    #[test]
    fn ema_boundedness_over_random_sequences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let alpha = rng.random_range(0.01..0.99);
            let cfg = cfg(alpha);
            let mut cell = CellState::Empty;
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for _ in 0..50 {
                let v = rng.random_range(-120.0..-30.0);
                lo = lo.min(v);
                hi = hi.max(v);
                cell = ema_update(cell, v, &cfg);
                let s = cell.value().unwrap();
                assert!(s >= lo - 1e-9 && s <= hi + 1e-9, "{s} outside [{lo}, {hi}]");
            }
        }
    }
}
