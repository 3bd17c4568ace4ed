//! Construction of gridded radio maps from GPS+RSSI survey traces.
//!
//! Walkers carry a signal receiver and a GPS receiver through the map area,
//! logging one (position, RSSI) sample per second. This crate turns those
//! traces into a complete radio map — a grid in which every cell holds the
//! expected signal strength at that location — while correcting two classes
//! of defective GPS behavior observed in real surveys:
//!
//! * **Frozen position updates**: the receiver keeps reporting a stale fix
//!   while the walker moves, piling misattributed measurements into one
//!   cell. Detected runs are repaired by constant-speed interpolation
//!   between the bracketing fixes ([`defects`]).
//! * **Degraded positional accuracy**: fixes scatter under multipath. Each
//!   measurement is written into every cell within twice the rolling
//!   positional standard deviation of the fix instead of a single cell
//!   ([`builder`]).
//!
//! Cells are smoothed with an exponential moving average as samples arrive
//! and remaining gaps are filled by inverse-distance-weighted interpolation
//! over all measured cells ([`builder`]). A deterministic simulator
//! ([`simulator`]) generates ground-truth fields, walker traces, and
//! scripted GPS defects so that both corrections can be scored against a
//! known truth.
//!
//! ```
//! use radiomap::builder::{build_map, BuildParams};
//! use radiomap::geo::{GridSpec, LocalPoint};
//! use radiomap::simulator::{evaluate_map, generate_trace, walk_polyline, DefectScript, PathLossField};
//!
//! let spec = GridSpec::default();
//! let field = PathLossField::new(LocalPoint::new(500.0, 350.0), -40.0, 3.0, 1.0, 0.0, 7).unwrap();
//! let path = walk_polyline(&[LocalPoint::new(5.0, 345.0), LocalPoint::new(995.0, 345.0)], 1.4, 1.0);
//! let walker = generate_trace(&field, &spec, &path, &DefectScript::empty(), "w1").unwrap();
//! let out = build_map(&[walker.trace], &spec, &BuildParams::default()).unwrap();
//! let score = evaluate_map(&out.map, &field);
//! assert!(score.rmse_db.is_finite());
//! ```

pub mod builder;
pub mod defects;
pub mod export;
pub mod geo;
pub mod simulator;
pub mod trace;

pub use builder::{build_map, BuildOutput, BuildParams, RadioMap};
pub use geo::{GeoPoint, GridIndex, GridSpec, LocalPoint};
pub use trace::{SurveyTrace, TRACE_CSV_HEADER};
