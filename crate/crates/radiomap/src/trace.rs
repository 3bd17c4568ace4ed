//! Survey trace ingestion: parsing, validation, and merging of timestamped
//! (position, RSSI) samples collected by one or more measurement walkers.
//!
//! Trace CSV format: header line `t_s,lat_deg,lon_deg,rssi_dbm`, one sample
//! per line, `.` decimal separator, UTF-8, LF line endings. Timestamps are
//! relative seconds. RSSI values outside generous physical bounds
//! ([-160, 0] dBm) are rejected at parse time as corruption.

use thiserror::Error;

use crate::geo::{GeoPoint, GridSpec};

/// Lower plausibility bound for a parsed RSSI value, in dBm.
pub const RSSI_MIN_DBM: f64 = -160.0;
/// Upper plausibility bound for a parsed RSSI value, in dBm.
pub const RSSI_MAX_DBM: f64 = 0.0;
/// Required header of a trace CSV file.
pub const TRACE_CSV_HEADER: &str = "t_s,lat_deg,lon_deg,rssi_dbm";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("trace `{source_id}` has no data rows")]
    EmptyTrace { source_id: String },
}

/// One timestamped measurement: where the receiver reported being and what
/// signal strength it saw there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurveySample {
    /// Sample timestamp in seconds (relative, monotone within a trace).
    pub t: f64,
    /// Reported receiver position.
    pub pos: GeoPoint,
    /// Measured signal strength in dBm.
    pub rssi: f64,
}

/// An ordered series of samples from a single walker/receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyTrace {
    /// Label of the measurement walker or receiver that produced the trace.
    pub source_id: String,
    pub samples: Vec<SurveySample>,
}

impl SurveyTrace {
    pub fn new(source_id: impl Into<String>, samples: Vec<SurveySample>) -> Self {
        Self {
            source_id: source_id.into(),
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn parse_field<T: std::str::FromStr>(raw: &str, line: usize, what: &str) -> Result<T, TraceError> {
    raw.trim().parse().map_err(|_| TraceError::Parse {
        line,
        reason: format!("cannot parse {what} from `{raw}`"),
    })
}

/// Parses a trace CSV document. Every data row becomes a sample, in file
/// order; any malformed row aborts with its line number, so nothing is
/// silently dropped. Blank lines are ignored.
pub fn parse_trace(input: &str, source_id: impl Into<String>) -> Result<SurveyTrace, TraceError> {
    let source_id = source_id.into();
    let mut lines = input.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((n, raw)) => {
                let line = raw.trim_end_matches('\r').trim();
                if !line.is_empty() {
                    break (n + 1, line);
                }
            }
            None => return Err(TraceError::EmptyTrace { source_id }),
        }
    };
    if header.1 != TRACE_CSV_HEADER {
        return Err(TraceError::Parse {
            line: header.0,
            reason: format!("expected header `{TRACE_CSV_HEADER}`, found `{}`", header.1),
        });
    }

    let mut samples = Vec::new();
    for (n, raw) in lines {
        let line_no = n + 1;
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(TraceError::Parse {
                line: line_no,
                reason: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let t: f64 = parse_field(fields[0], line_no, "timestamp")?;
        let lat: f64 = parse_field(fields[1], line_no, "latitude")?;
        let lon: f64 = parse_field(fields[2], line_no, "longitude")?;
        let rssi: f64 = parse_field(fields[3], line_no, "rssi")?;
        if !t.is_finite() {
            return Err(TraceError::Parse {
                line: line_no,
                reason: format!("timestamp {t} is not finite"),
            });
        }
        let pos = GeoPoint::new(lat, lon).map_err(|e| TraceError::Parse {
            line: line_no,
            reason: e.to_string(),
        })?;
        if !rssi.is_finite() || !(RSSI_MIN_DBM..=RSSI_MAX_DBM).contains(&rssi) {
            return Err(TraceError::Parse {
                line: line_no,
                reason: format!(
                    "rssi {rssi} dBm outside plausible range [{RSSI_MIN_DBM}, {RSSI_MAX_DBM}]"
                ),
            });
        }
        samples.push(SurveySample { t, pos, rssi });
    }
    if samples.is_empty() {
        return Err(TraceError::EmptyTrace { source_id });
    }
    Ok(SurveyTrace { source_id, samples })
}

/// Serializes a trace back to the CSV format accepted by [`parse_trace`].
pub fn write_trace_csv(trace: &SurveyTrace) -> String {
    let mut out = String::from(TRACE_CSV_HEADER);
    out.push('\n');
    for s in &trace.samples {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.t,
            s.pos.lat(),
            s.pos.lon(),
            s.rssi
        ));
    }
    out
}

/// A data-quality finding from [`validate_trace`]. Issues are reported, not
/// raised: the caller decides the drop-vs-fail policy.
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    NonMonotoneTimestamp { index: usize, t: f64, prev: f64 },
    DuplicateTimestamp { index: usize, t: f64 },
    RssiOutOfRange { index: usize, rssi: f64 },
    PositionOutOfGrid { index: usize },
}

impl ValidationIssue {
    pub fn index(&self) -> usize {
        match self {
            ValidationIssue::NonMonotoneTimestamp { index, .. }
            | ValidationIssue::DuplicateTimestamp { index, .. }
            | ValidationIssue::RssiOutOfRange { index, .. }
            | ValidationIssue::PositionOutOfGrid { index } => *index,
        }
    }
}

impl std::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ValidationIssue::NonMonotoneTimestamp { index, t, prev } => {
                write!(
                    f,
                    "sample {index}: timestamp {t} s not after previous {prev} s"
                )
            }
            ValidationIssue::DuplicateTimestamp { index, t } => {
                write!(f, "sample {index}: duplicate timestamp {t} s")
            }
            ValidationIssue::RssiOutOfRange { index, rssi } => {
                write!(f, "sample {index}: rssi {rssi} dBm out of range")
            }
            ValidationIssue::PositionOutOfGrid { index } => {
                write!(f, "sample {index}: position outside the grid")
            }
        }
    }
}

/// Scans a trace for data-quality issues without mutating it. Grid checks
/// run only when a [`GridSpec`] is supplied. An empty result means clean.
pub fn validate_trace(trace: &SurveyTrace, grid: Option<&GridSpec>) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    for (i, s) in trace.samples.iter().enumerate() {
        if i > 0 {
            let prev = trace.samples[i - 1].t;
            if s.t == prev {
                issues.push(ValidationIssue::DuplicateTimestamp { index: i, t: s.t });
            } else if s.t < prev {
                issues.push(ValidationIssue::NonMonotoneTimestamp {
                    index: i,
                    t: s.t,
                    prev,
                });
            }
        }
        if !(RSSI_MIN_DBM..=RSSI_MAX_DBM).contains(&s.rssi) {
            issues.push(ValidationIssue::RssiOutOfRange {
                index: i,
                rssi: s.rssi,
            });
        }
        if let Some(spec) = grid {
            let in_grid = spec
                .to_local(s.pos)
                .and_then(|p| spec.grid_index(p))
                .is_ok();
            if !in_grid {
                issues.push(ValidationIssue::PositionOutOfGrid { index: i });
            }
        }
    }
    issues
}

/// A sample in a merged multi-walker stream, keeping its origin.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedSample {
    /// Index into [`MergedTrace::sources`].
    pub source: usize,
    pub sample: SurveySample,
}

/// Time-ordered interleaving of several traces. Each sample keeps a
/// reference to the walker it came from so downstream smoothing can stay
/// per-source.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedTrace {
    pub sources: Vec<String>,
    pub samples: Vec<MergedSample>,
}

impl MergedTrace {
    pub fn source_id_of(&self, s: &MergedSample) -> &str {
        &self.sources[s.source]
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Interleaves traces by timestamp. Ties break by source id (lexical), then
/// by input order. Output length is the sum of input lengths.
pub fn merge_traces(traces: &[SurveyTrace]) -> MergedTrace {
    let sources: Vec<String> = traces.iter().map(|t| t.source_id.clone()).collect();
    let mut samples: Vec<MergedSample> = Vec::with_capacity(traces.iter().map(|t| t.len()).sum());
    for (si, trace) in traces.iter().enumerate() {
        samples.extend(
            trace
                .samples
                .iter()
                .map(|&sample| MergedSample { source: si, sample }),
        );
    }
    // Stable sort: equal (t, source_id) keys keep push order, which is input
    // order across traces and file order within one.
    samples.sort_by(|a, b| {
        a.sample
            .t
            .total_cmp(&b.sample.t)
            .then_with(|| sources[a.source].cmp(&sources[b.source]))
    });
    MergedTrace { sources, samples }
}
