//! Detection and repair of defective GPS behavior in survey traces.
//!
//! Two defect classes are handled:
//!
//! * **Frozen position updates** — the receiver keeps reporting the same fix
//!   while the walker moves, then jumps when updates resume. Detected as
//!   runs of bitwise-identical positions and repaired by constant-speed
//!   linear interpolation between the last good fix and the resume fix, one
//!   interpolated point per measurement epoch.
//! * **Positional noise** — reported fixes scatter around the true path.
//!   Quantified as a rolling standard deviation over a trailing window of
//!   positions; the map builder uses twice that value as an update radius.

use std::ops::Range;

use thiserror::Error;

use crate::geo::{GeoPoint, LocalPoint, METERS_PER_DEGREE};
use crate::trace::SurveyTrace;

/// Default trailing window length for [`rolling_sigma`], in samples.
pub const DEFAULT_SIGMA_WINDOW: usize = 30;

/// Default minimum run length (identical fixes) for [`detect_stuck_segments`].
pub const DEFAULT_STUCK_MIN_LEN: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DefectError {
    #[error(
        "stuck segment starting at t={t_s} s never resumed; its samples cannot be repositioned"
    )]
    NoResumePoint { t_s: f64 },
    #[error("rolling sigma at sample {index} needs at least 2 window samples, only {available} available")]
    InsufficientWindow { index: usize, available: usize },
}

/// A detected interval of frozen GPS position updates.
///
/// The sample at `frozen.start - 1` is the last genuine fix (time `t_s`);
/// every sample in `frozen` repeats its position bit for bit. `t_f` is the
/// time of the first differing sample after the run, absent when the trace
/// ends still frozen (such segments cannot be repaired).
#[derive(Debug, Clone, PartialEq)]
pub struct StuckSegment {
    /// Time of the last genuine fix before updates stopped.
    pub t_s: f64,
    /// Time of the first updated fix after the freeze, if any.
    pub t_f: Option<f64>,
    /// Contiguous indices of samples whose displayed position did not change.
    pub frozen: Range<usize>,
}

impl StuckSegment {
    /// Index of the last genuine fix (position as of `t_s`).
    pub fn anchor_index(&self) -> usize {
        self.frozen.start - 1
    }

    /// Index of the first updated fix after the freeze, if the trace resumed.
    pub fn resume_index(&self) -> Option<usize> {
        self.t_f.map(|_| self.frozen.end)
    }

    /// Number of measurement epochs with no position update.
    pub fn epochs(&self) -> usize {
        self.frozen.len()
    }
}

/// Finds maximal runs of at least `min_len` consecutive samples with
/// bitwise-identical positions. The first sample of a run is treated as the
/// genuine fix; the rest are the frozen epochs. `min_len` must be >= 2.
///
/// Exact equality is deliberate: a moving 1 Hz receiver essentially never
/// repeats a fix bit for bit, while a frozen one repeats it exactly.
pub fn detect_stuck_segments(trace: &SurveyTrace, min_len: usize) -> Vec<StuckSegment> {
    assert!(min_len >= 2, "min_len must be at least 2, got {min_len}");
    let samples = &trace.samples;
    let mut segments = Vec::new();
    let mut run_start = 0;
    for i in 1..=samples.len() {
        let extends = i < samples.len() && samples[i].pos.bits_eq(&samples[run_start].pos);
        if extends {
            continue;
        }
        let run_len = i - run_start;
        if run_len >= min_len {
            segments.push(StuckSegment {
                t_s: samples[run_start].t,
                t_f: (i < samples.len()).then(|| samples[i].t),
                frozen: run_start + 1..i,
            });
        }
        run_start = i;
    }
    segments
}

/// Constant-speed position interpolation: the point reached `elapsed_s`
/// seconds after leaving `start`, arriving at `end` after `span_s` seconds.
///
/// Evaluated as `start*(1 - u) + end*u` with `u = elapsed_s / span_s`, which
/// equals `start + ((end - start)/span_s)*elapsed_s` and reproduces the
/// endpoints exactly at `u = 0` and `u = 1`.
pub fn lerp_position(
    start: LocalPoint,
    end: LocalPoint,
    span_s: f64,
    elapsed_s: f64,
) -> LocalPoint {
    let u = elapsed_s / span_s;
    LocalPoint::new(
        start.x * (1.0 - u) + end.x * u,
        start.y * (1.0 - u) + end.y * u,
    )
}

fn lerp_f64(a: f64, b: f64, u: f64) -> f64 {
    a * (1.0 - u) + b * u
}

/// Replaces the frozen samples of `seg` with positions interpolated at
/// constant speed between the anchor fix and the resume fix; one point per
/// frozen epoch, RSSI values untouched, endpoints unchanged.
///
/// The interpolation is linear in the local planar frame. In an
/// equirectangular frame anchored anywhere nearby that is the same affine
/// map of (lat, lon), so the blend is applied to the geodetic coordinates
/// directly rather than round-tripping through projection.
pub fn interpolate_stuck_positions(
    trace: &SurveyTrace,
    seg: &StuckSegment,
) -> Result<SurveyTrace, DefectError> {
    let t_f = seg.t_f.ok_or(DefectError::NoResumePoint { t_s: seg.t_s })?;
    let resume = seg
        .resume_index()
        .expect("t_f present implies resume index");
    let anchor = seg.anchor_index();
    let p_s = trace.samples[anchor].pos;
    let p_f = trace.samples[resume].pos;
    let span = t_f - seg.t_s;

    let mut repaired = trace.clone();
    for i in seg.frozen.clone() {
        let elapsed = repaired.samples[i].t - seg.t_s;
        let u = elapsed / span;
        let lat = lerp_f64(p_s.lat(), p_f.lat(), u);
        let lon = lerp_f64(p_s.lon(), p_f.lon(), u);
        repaired.samples[i].pos =
            GeoPoint::new(lat, lon).expect("blend of valid coordinates is valid");
    }
    Ok(repaired)
}

/// Result of repairing every stuck segment in a trace.
#[derive(Debug, Clone)]
pub struct StuckRepair {
    /// Trace with all resumable segments interpolated.
    pub trace: SurveyTrace,
    /// Every segment detected, repaired or not.
    pub segments: Vec<StuckSegment>,
    /// Indices of frozen samples with no resume fix; still at their frozen
    /// positions in `trace` and not usable for map updates.
    pub unusable: Vec<usize>,
}

/// Detects and repairs all stuck segments of a trace. Segments still frozen
/// at the end of the trace have no resume fix; their samples are reported as
/// unusable rather than extrapolated.
pub fn repair_stuck_positions(trace: &SurveyTrace, min_len: usize) -> StuckRepair {
    let segments = detect_stuck_segments(trace, min_len);
    let mut repaired = trace.clone();
    let mut unusable = Vec::new();
    for seg in &segments {
        if seg.t_f.is_some() {
            // Frozen ranges of distinct segments are disjoint, so repairs
            // commute and can be applied one after another.
            repaired =
                interpolate_stuck_positions(&repaired, seg).expect("segment has a resume fix");
        } else {
            unusable.extend(seg.frozen.clone());
        }
    }
    StuckRepair {
        trace: repaired,
        segments,
        unusable,
    }
}

/// Rolling positional spread estimate, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaEstimate {
    /// Root-sum-square of the per-axis standard deviations.
    pub sigma: f64,
    /// Number of samples actually used.
    pub window: usize,
}

impl SigmaEstimate {
    /// A zero-spread estimate; the degenerate single-cell update case.
    pub fn zero() -> Self {
        Self {
            sigma: 0.0,
            window: 0,
        }
    }
}

/// Sample standard deviation of the last `min(window, index + 1)` reported
/// positions ending at `index`, computed per axis in a local planar frame
/// (divisor `N`, not `N - 1`) and combined as `sqrt(sigma_x^2 + sigma_y^2)`.
///
/// At least 2 samples must be available. The local frame is anchored at the
/// sample at `index`; variance does not depend on the anchor.
pub fn rolling_sigma(
    trace: &SurveyTrace,
    index: usize,
    window: usize,
) -> Result<SigmaEstimate, DefectError> {
    assert!(
        index < trace.samples.len(),
        "sample index {index} out of bounds"
    );
    let n = window.min(index + 1);
    if n < 2 {
        return Err(DefectError::InsufficientWindow {
            index,
            available: n,
        });
    }
    let anchor = trace.samples[index].pos;
    let lon_scale = METERS_PER_DEGREE * anchor.lat().to_radians().cos();
    let window_samples = &trace.samples[index + 1 - n..=index];

    let locals: Vec<(f64, f64)> = window_samples
        .iter()
        .map(|s| {
            (
                (s.pos.lon() - anchor.lon()) * lon_scale,
                (s.pos.lat() - anchor.lat()) * METERS_PER_DEGREE,
            )
        })
        .collect();
    let (mut sx, mut sy) = (0.0, 0.0);
    for (x, y) in &locals {
        sx += x;
        sy += y;
    }
    let (mx, my) = (sx / n as f64, sy / n as f64);
    let (mut var_x, mut var_y) = (0.0, 0.0);
    for (x, y) in &locals {
        var_x += (x - mx) * (x - mx);
        var_y += (y - my) * (y - my);
    }
    var_x /= n as f64;
    var_y /= n as f64;
    Ok(SigmaEstimate {
        sigma: (var_x + var_y).sqrt(),
        window: n,
    })
}
