//! Synthetic ground truth for validating map construction.
//!
//! The real survey campaign this tool models cannot be rerun at a desk, so
//! corrections are validated against a simulated world instead: a
//! log-distance path-loss field (optionally with per-cell shadowing) plays
//! the transmitter, scripted walkers sample it along polyline paths, and a
//! defect script injects the two GPS failure modes — frozen position
//! updates and windows of degraded accuracy. Everything is a deterministic
//! function of the configured seed, so generated traces, fields, and the
//! maps built from them reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::builder::RadioMap;
use crate::export::Grid;
use crate::geo::{GridIndex, GridSpec, LocalPoint};
use crate::trace::{SurveySample, SurveyTrace, RSSI_MAX_DBM, RSSI_MIN_DBM};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("defect window [{start}, {end}] has start >= end")]
    InvalidWindow { start: f64, end: f64 },
    #[error("defect windows [{a_start}, {a_end}] and [{b_start}, {b_end}] overlap")]
    OverlappingWindows {
        a_start: f64,
        a_end: f64,
        b_start: f64,
        b_end: f64,
    },
    #[error("path timestamps not strictly increasing at index {index}")]
    NonMonotonePath { index: usize },
    #[error("grid dimensions {a_rows}x{a_cols} do not match {b_rows}x{b_cols}")]
    DimensionMismatch {
        a_rows: usize,
        a_cols: usize,
        b_rows: usize,
        b_cols: usize,
    },
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b)
}

/// Log-distance path-loss field with optional per-cell shadowing: the
/// synthetic transmitter used as ground truth.
///
/// Mean value at distance `d` from the transmitter is
/// `p0 - 10 * n * log10(max(d, d0) / d0)`. Shadowing is a zero-mean
/// Gaussian drawn deterministically per (seed, shadow cell), so repeated
/// visits to one location always see the same environment. `exponent = 0`
/// gives a flat field of `p0` everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLossField {
    pub tx_pos: LocalPoint,
    /// dBm at the reference distance.
    pub p0_dbm: f64,
    /// Path-loss exponent (2 = free space, larger in clutter).
    pub exponent: f64,
    /// Reference distance in meters; distances clamp to it from below.
    pub d0_m: f64,
    /// Shadowing standard deviation in dB (0 disables shadowing).
    pub noise_sigma_db: f64,
    pub seed: u64,
    /// Edge length of the square cells on which shadowing is drawn.
    pub shadow_cell_m: f64,
}

impl PathLossField {
    pub fn new(
        tx_pos: LocalPoint,
        p0_dbm: f64,
        exponent: f64,
        d0_m: f64,
        noise_sigma_db: f64,
        seed: u64,
    ) -> Result<Self, SimError> {
        if !(tx_pos.x.is_finite() && tx_pos.y.is_finite() && p0_dbm.is_finite()) {
            return Err(SimError::InvalidField(
                "transmitter position and p0 must be finite".into(),
            ));
        }
        if !(exponent.is_finite() && exponent >= 0.0) {
            return Err(SimError::InvalidField(format!(
                "path-loss exponent must be >= 0, got {exponent}"
            )));
        }
        if !(d0_m.is_finite() && d0_m > 0.0) {
            return Err(SimError::InvalidField(format!(
                "reference distance must be positive, got {d0_m}"
            )));
        }
        if !(noise_sigma_db.is_finite() && noise_sigma_db >= 0.0) {
            return Err(SimError::InvalidField(format!(
                "shadowing sigma must be >= 0, got {noise_sigma_db}"
            )));
        }
        Ok(Self {
            tx_pos,
            p0_dbm,
            exponent,
            d0_m,
            noise_sigma_db,
            seed,
            shadow_cell_m: 10.0,
        })
    }

    pub fn with_shadow_cell(mut self, shadow_cell_m: f64) -> Self {
        assert!(shadow_cell_m > 0.0, "shadow cell size must be positive");
        self.shadow_cell_m = shadow_cell_m;
        self
    }
}

/// Noise-free component of the field at a point.
pub fn truth_mean(field: &PathLossField, p: LocalPoint) -> f64 {
    let d = p.distance(&field.tx_pos).max(field.d0_m);
    field.p0_dbm - 10.0 * field.exponent * (d / field.d0_m).log10()
}

/// Shadowing term at a point: constant within each shadow cell,
/// deterministic in (seed, cell).
pub fn shadowing(field: &PathLossField, p: LocalPoint) -> f64 {
    if field.noise_sigma_db == 0.0 {
        return 0.0;
    }
    let ix = (p.x / field.shadow_cell_m).floor() as i64 as u64;
    let iy = (p.y / field.shadow_cell_m).floor() as i64 as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(field.seed, ix, iy));
    Normal::new(0.0, field.noise_sigma_db)
        .expect("sigma validated")
        .sample(&mut rng)
}

/// Field value a receiver at `p` measures: mean path loss plus the
/// location's shadowing.
pub fn truth_rssi(field: &PathLossField, p: LocalPoint) -> f64 {
    truth_mean(field, p) + shadowing(field, p)
}

/// Noise-free field evaluated at every cell center of `spec`; the reference
/// grid that maps are scored against.
pub fn truth_grid(field: &PathLossField, spec: &GridSpec) -> Grid {
    let mut values = Vec::with_capacity(spec.cell_count());
    for row in 0..spec.rows() {
        for col in 0..spec.cols() {
            values.push(truth_mean(
                field,
                spec.cell_center(GridIndex::new(row, col)),
            ));
        }
    }
    Grid::new(spec.rows(), spec.cols(), values)
}

/// Scripted GPS failures injected into a generated trace. Times are in
/// seconds and windows include both endpoints. Windows must not overlap
/// within either list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DefectScript {
    /// Intervals during which the reported position freezes at its value on
    /// window entry.
    pub stuck_windows: Vec<(f64, f64)>,
    /// Intervals of degraded accuracy: (start, end, per-axis sigma meters).
    pub noise_windows: Vec<(f64, f64, f64)>,
}

impl DefectScript {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        check_windows(
            &self
                .stuck_windows
                .iter()
                .map(|&(s, e)| (s, e))
                .collect::<Vec<_>>(),
        )?;
        check_windows(
            &self
                .noise_windows
                .iter()
                .map(|&(s, e, _)| (s, e))
                .collect::<Vec<_>>(),
        )?;
        for &(_, _, sigma) in &self.noise_windows {
            if !(sigma.is_finite() && sigma >= 0.0) {
                return Err(SimError::InvalidField(format!(
                    "noise window sigma must be >= 0, got {sigma}"
                )));
            }
        }
        Ok(())
    }

    fn stuck_window_at(&self, t: f64) -> Option<usize> {
        self.stuck_windows
            .iter()
            .position(|&(s, e)| (s..=e).contains(&t))
    }

    fn noise_sigma_at(&self, t: f64) -> Option<f64> {
        self.noise_windows
            .iter()
            .find(|&&(s, e, _)| (s..=e).contains(&t))
            .map(|&(_, _, sigma)| sigma)
    }
}

fn check_windows(windows: &[(f64, f64)]) -> Result<(), SimError> {
    for &(s, e) in windows {
        if !(s.is_finite() && e.is_finite() && s < e) {
            return Err(SimError::InvalidWindow { start: s, end: e });
        }
    }
    let mut sorted: Vec<(f64, f64)> = windows.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for pair in sorted.windows(2) {
        if pair[1].0 <= pair[0].1 {
            return Err(SimError::OverlappingWindows {
                a_start: pair[0].0,
                a_end: pair[0].1,
                b_start: pair[1].0,
                b_end: pair[1].1,
            });
        }
    }
    Ok(())
}

/// A generated trace plus the true positions each sample was measured at,
/// kept for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTrace {
    pub trace: SurveyTrace,
    pub truth_positions: Vec<LocalPoint>,
}

/// Samples the field along a path of (time, true position) waypoints and
/// applies the defect script to the *reported* positions.
///
/// RSSI is always measured at the true position. Inside a stuck window the
/// reported position stays frozen at the window's first report; inside a
/// noise window it is the true position plus per-axis Gaussian noise drawn
/// from a stream seeded by (field seed, source id). Measured values are
/// clamped to the plausible RSSI range so the trace survives a CSV round
/// trip; with sane field parameters the clamp never engages.
pub fn generate_trace(
    field: &PathLossField,
    spec: &GridSpec,
    path: &[(f64, LocalPoint)],
    script: &DefectScript,
    source_id: &str,
) -> Result<GeneratedTrace, SimError> {
    script.validate()?;
    for (i, pair) in path.windows(2).enumerate() {
        if pair[1].0 <= pair[0].0 {
            return Err(SimError::NonMonotonePath { index: i + 1 });
        }
    }

    let mut rng =
        ChaCha8Rng::seed_from_u64(mix(field.seed, fnv1a64(source_id.as_bytes()), 0x6e6f_6973));
    let mut frozen: Vec<Option<LocalPoint>> = vec![None; script.stuck_windows.len()];
    let mut samples = Vec::with_capacity(path.len());
    let mut truth_positions = Vec::with_capacity(path.len());

    for &(t, true_pos) in path {
        let rssi = truth_rssi(field, true_pos).clamp(RSSI_MIN_DBM, RSSI_MAX_DBM);
        let noisy = |rng: &mut ChaCha8Rng| -> LocalPoint {
            match script.noise_sigma_at(t) {
                Some(sigma) if sigma > 0.0 => {
                    let normal = Normal::new(0.0, sigma).expect("sigma validated");
                    LocalPoint::new(
                        true_pos.x + normal.sample(rng),
                        true_pos.y + normal.sample(rng),
                    )
                }
                _ => true_pos,
            }
        };
        let reported = match script.stuck_window_at(t) {
            Some(w) => match frozen[w] {
                Some(p) => p,
                None => {
                    let p = noisy(&mut rng);
                    frozen[w] = Some(p);
                    p
                }
            },
            None => noisy(&mut rng),
        };
        samples.push(SurveySample {
            t,
            pos: spec.to_geo(reported),
            rssi,
        });
        truth_positions.push(true_pos);
    }
    Ok(GeneratedTrace {
        trace: SurveyTrace::new(source_id, samples),
        truth_positions,
    })
}

/// Samples a polyline at constant speed, one sample every `interval_s`
/// seconds starting at t = 0, until the path is exhausted.
pub fn walk_polyline(
    waypoints: &[LocalPoint],
    speed_mps: f64,
    interval_s: f64,
) -> Vec<(f64, LocalPoint)> {
    assert!(
        speed_mps > 0.0 && interval_s > 0.0,
        "speed and interval must be positive"
    );
    assert!(
        !waypoints.is_empty(),
        "polyline needs at least one waypoint"
    );
    let seg_lens: Vec<f64> = waypoints.windows(2).map(|w| w[0].distance(&w[1])).collect();
    let total: f64 = seg_lens.iter().sum();
    if total == 0.0 {
        return vec![(0.0, waypoints[0])];
    }
    let step = speed_mps * interval_s;
    let n = (total / step).floor() as usize;
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = k as f64 * interval_s;
        let mut s = k as f64 * step;
        let mut pos = *waypoints.last().unwrap();
        for (i, &len) in seg_lens.iter().enumerate() {
            if s <= len && len > 0.0 {
                let u = s / len;
                let (a, b) = (waypoints[i], waypoints[i + 1]);
                pos = LocalPoint::new(a.x * (1.0 - u) + b.x * u, a.y * (1.0 - u) + b.y * u);
                break;
            }
            s -= len;
        }
        out.push((t, pos));
    }
    out
}

/// Map-versus-truth comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub rmse_db: f64,
    pub max_abs_error_db: f64,
    /// Cell holding the map's highest value.
    pub map_peak: GridIndex,
    /// Reference peak: the transmitter's cell when known, otherwise the
    /// truth grid's highest cell.
    pub truth_peak: GridIndex,
    pub peak_match: bool,
}

/// Scores one grid against another of the same shape: RMSE and maximum
/// absolute error over all cells, plus whether the peaks coincide.
pub fn evaluate_grids(map: &Grid, truth: &Grid) -> Result<EvalReport, SimError> {
    if map.rows != truth.rows || map.cols != truth.cols {
        return Err(SimError::DimensionMismatch {
            a_rows: map.rows,
            a_cols: map.cols,
            b_rows: truth.rows,
            b_cols: truth.cols,
        });
    }
    let n = map.values.len() as f64;
    let mut sq_sum = 0.0;
    let mut max_abs: f64 = 0.0;
    for (m, t) in map.values.iter().zip(&truth.values) {
        let e = m - t;
        sq_sum += e * e;
        max_abs = max_abs.max(e.abs());
    }
    let map_peak = map.argmax().unwrap_or(GridIndex::new(0, 0));
    let truth_peak = truth.argmax().unwrap_or(GridIndex::new(0, 0));
    Ok(EvalReport {
        rmse_db: (sq_sum / n).sqrt(),
        max_abs_error_db: max_abs,
        map_peak,
        truth_peak,
        peak_match: map_peak == truth_peak,
    })
}

/// Scores a finalized map against the noise-free component of the field at
/// every cell center. The reference peak is the transmitter's cell when the
/// transmitter lies inside the grid.
pub fn evaluate_map(map: &RadioMap, field: &PathLossField) -> EvalReport {
    let truth = truth_grid(field, map.spec());
    let mut report = evaluate_grids(&map.to_grid(), &truth).expect("same spec, same dimensions");
    if let Ok(tx_cell) = map.spec().grid_index(field.tx_pos) {
        report.truth_peak = tx_cell;
        report.peak_match = report.map_peak == tx_cell;
    }
    report
}

// ---------------------------------------------------------------------------
// Scenario files
// ---------------------------------------------------------------------------

/// Error in a scenario document, located by a JSON pointer.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{pointer}: {message}")]
pub struct ScenarioError {
    pub pointer: String,
    pub message: String,
}

impl ScenarioError {
    fn new(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScenarioGrid {
    pub origin_lat_deg: f64,
    pub origin_lon_deg: f64,
    pub cell_size_m: f64,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScenarioField {
    /// Transmitter position in grid-local meters.
    pub tx_x_m: f64,
    pub tx_y_m: f64,
    pub p0_dbm: f64,
    pub path_loss_exponent: f64,
    pub reference_distance_m: f64,
    pub shadowing_sigma_db: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct ScenarioDefects {
    #[serde(default)]
    pub stuck_windows: Vec<[f64; 2]>,
    #[serde(default)]
    pub noise_windows: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScenarioWalker {
    pub source_id: String,
    pub speed_mps: f64,
    /// Polyline waypoints in grid-local meters, [x, y].
    pub waypoints: Vec<[f64; 2]>,
    #[serde(default)]
    pub defects: ScenarioDefects,
}

/// A complete simulation setup: grid geometry, transmitter field, walkers
/// with their paths and defect scripts, and the master seed.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub grid: ScenarioGrid,
    pub field: ScenarioField,
    pub sample_interval_s: f64,
    pub walkers: Vec<ScenarioWalker>,
}

/// Everything a scenario run produces.
#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub spec: GridSpec,
    pub field: PathLossField,
    pub walkers: Vec<GeneratedTrace>,
    /// Noise-free field at every cell center.
    pub truth: Grid,
}

impl Scenario {
    /// Parses and validates a scenario JSON document. Errors carry the JSON
    /// pointer of the offending field.
    pub fn from_json(input: &str) -> Result<Self, ScenarioError> {
        let mut de = serde_json::Deserializer::from_str(input);
        let scenario: Scenario = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let pointer = path_to_pointer(e.path());
            ScenarioError::new(pointer, e.inner().to_string())
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.grid.cell_size_m.is_finite() && self.grid.cell_size_m > 0.0) {
            return Err(ScenarioError::new(
                "/grid/cell_size_m",
                "cell size must be positive",
            ));
        }
        if self.grid.rows == 0 {
            return Err(ScenarioError::new(
                "/grid/rows",
                "grid needs at least one row",
            ));
        }
        if self.grid.cols == 0 {
            return Err(ScenarioError::new(
                "/grid/cols",
                "grid needs at least one column",
            ));
        }
        self.grid_spec()
            .map_err(|e| ScenarioError::new("/grid", e.to_string()))?;
        self.field()
            .map_err(|e| ScenarioError::new("/field", e.to_string()))?;
        if !(self.sample_interval_s.is_finite() && self.sample_interval_s > 0.0) {
            return Err(ScenarioError::new(
                "/sample_interval_s",
                "sample interval must be positive",
            ));
        }
        if self.walkers.is_empty() {
            return Err(ScenarioError::new(
                "/walkers",
                "at least one walker is required",
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for (i, w) in self.walkers.iter().enumerate() {
            if w.source_id.is_empty() || !seen.insert(&w.source_id) {
                return Err(ScenarioError::new(
                    format!("/walkers/{i}/source_id"),
                    "source ids must be non-empty and unique",
                ));
            }
            if !(w.speed_mps.is_finite() && w.speed_mps > 0.0) {
                return Err(ScenarioError::new(
                    format!("/walkers/{i}/speed_mps"),
                    "walker speed must be positive",
                ));
            }
            if w.waypoints.is_empty() {
                return Err(ScenarioError::new(
                    format!("/walkers/{i}/waypoints"),
                    "at least one waypoint is required",
                ));
            }
            for (j, wp) in w.waypoints.iter().enumerate() {
                if !(wp[0].is_finite() && wp[1].is_finite()) {
                    return Err(ScenarioError::new(
                        format!("/walkers/{i}/waypoints/{j}"),
                        "waypoint coordinates must be finite",
                    ));
                }
            }
            for (j, win) in w.defects.stuck_windows.iter().enumerate() {
                if !(win[0].is_finite() && win[1].is_finite() && win[0] < win[1]) {
                    return Err(ScenarioError::new(
                        format!("/walkers/{i}/defects/stuck_windows/{j}"),
                        "window must have start < end",
                    ));
                }
            }
            for (j, win) in w.defects.noise_windows.iter().enumerate() {
                if !(win[0].is_finite() && win[1].is_finite() && win[0] < win[1]) {
                    return Err(ScenarioError::new(
                        format!("/walkers/{i}/defects/noise_windows/{j}"),
                        "window must have start < end",
                    ));
                }
                if !(win[2].is_finite() && win[2] >= 0.0) {
                    return Err(ScenarioError::new(
                        format!("/walkers/{i}/defects/noise_windows/{j}"),
                        "noise sigma must be >= 0",
                    ));
                }
            }
            if let Err(e) = w.script().validate() {
                let list = if matches!(e, SimError::OverlappingWindows { .. }) {
                    // Locate the second window of the overlapping pair.
                    overlap_pointer(&w.defects)
                } else {
                    "defects".to_string()
                };
                return Err(ScenarioError::new(
                    format!("/walkers/{i}/defects/{list}"),
                    e.to_string(),
                ));
            }
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec, crate::geo::GeoError> {
        let origin = crate::geo::GeoPoint::new(self.grid.origin_lat_deg, self.grid.origin_lon_deg)?;
        GridSpec::new(
            origin,
            self.grid.cell_size_m,
            self.grid.rows,
            self.grid.cols,
        )
    }

    pub fn field(&self) -> Result<PathLossField, SimError> {
        Ok(PathLossField::new(
            LocalPoint::new(self.field.tx_x_m, self.field.tx_y_m),
            self.field.p0_dbm,
            self.field.path_loss_exponent,
            self.field.reference_distance_m,
            self.field.shadowing_sigma_db,
            self.seed,
        )?
        .with_shadow_cell(self.grid.cell_size_m))
    }

    /// Runs the scenario: walks every path, samples the field, applies the
    /// defect scripts. Deterministic in the seed.
    pub fn run(&self) -> Result<ScenarioOutput, ScenarioError> {
        self.validate()?;
        let spec = self.grid_spec().expect("validated");
        let field = self.field().expect("validated");
        let mut walkers = Vec::with_capacity(self.walkers.len());
        for (i, w) in self.walkers.iter().enumerate() {
            let waypoints: Vec<LocalPoint> = w
                .waypoints
                .iter()
                .map(|p| LocalPoint::new(p[0], p[1]))
                .collect();
            let path = walk_polyline(&waypoints, w.speed_mps, self.sample_interval_s);
            let generated = generate_trace(&field, &spec, &path, &w.script(), &w.source_id)
                .map_err(|e| ScenarioError::new(format!("/walkers/{i}"), e.to_string()))?;
            walkers.push(generated);
        }
        let truth = truth_grid(&field, &spec);
        Ok(ScenarioOutput {
            spec,
            field,
            walkers,
            truth,
        })
    }
}

impl ScenarioWalker {
    fn script(&self) -> DefectScript {
        DefectScript {
            stuck_windows: self
                .defects
                .stuck_windows
                .iter()
                .map(|w| (w[0], w[1]))
                .collect(),
            noise_windows: self
                .defects
                .noise_windows
                .iter()
                .map(|w| (w[0], w[1], w[2]))
                .collect(),
        }
    }
}

fn overlap_pointer(defects: &ScenarioDefects) -> String {
    let stuck: Vec<(f64, f64)> = defects.stuck_windows.iter().map(|w| (w[0], w[1])).collect();
    if check_windows(&stuck).is_err() {
        return "stuck_windows".to_string();
    }
    "noise_windows".to_string()
}

fn path_to_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{key}")),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}
