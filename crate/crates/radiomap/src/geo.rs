//! Coordinate frames and grid geometry for the radio map.
//!
//! Survey positions arrive as WGS84 latitude/longitude and are projected
//! onto a local planar frame (meters east/north of the grid origin) with an
//! equirectangular projection about the origin. Over a survey area of a
//! kilometer or two the curvature error is sub-decimeter, which is far below
//! GPS noise, so no external geodesy library is needed. The projection is
//! only valid near the origin; calls outside a 10 km radius are rejected.
//!
//! Grid convention: row axis points north, column axis points east, the
//! origin is the southwest corner, and cells are squares of `cell_size`
//! meters. Points exactly on the maximum edge clamp inward so a survey
//! endpoint on the map boundary is kept.

use thiserror::Error;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Meters per degree of latitude (and of longitude at the equator).
pub const METERS_PER_DEGREE: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

/// Maximum distance from the grid origin for which the planar projection
/// is accepted.
pub const PROJECTION_DOMAIN_M: f64 = 10_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("coordinate ({lat}, {lon}) outside valid latitude/longitude ranges")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("point {dist_m:.1} m from the grid origin exceeds the {max_m:.0} m projection domain")]
    OutOfProjectionDomain { dist_m: f64, max_m: f64 },
    #[error("local point ({x:.2}, {y:.2}) outside the grid rectangle")]
    OutOfGrid { x: f64, y: f64 },
    #[error("invalid grid spec: {reason}")]
    InvalidGridSpec { reason: String },
}

/// A WGS84 geodetic coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    /// Validates latitude in [-90, 90] and longitude in [-180, 180].
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !(lat.is_finite()
            && lon.is_finite()
            && (-90.0..=90.0).contains(&lat)
            && (-180.0..=180.0).contains(&lon))
        {
            return Err(GeoError::InvalidCoordinate { lat, lon });
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// Bitwise equality of both coordinates; used for frozen-fix detection
    /// where `-0.0 != 0.0` semantics of `==` would be wrong.
    pub fn bits_eq(&self, other: &GeoPoint) -> bool {
        self.lat.to_bits() == other.lat.to_bits() && self.lon.to_bits() == other.lon.to_bits()
    }
}

/// A position in the local planar frame: meters east (`x`) and north (`y`)
/// of the grid origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalPoint {
    pub x: f64,
    pub y: f64,
}

impl LocalPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Euclidean distance in meters.
    pub fn distance(&self, other: &LocalPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Cell address in a [`GridSpec`]: `row` counts north from the origin,
/// `col` counts east.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridIndex {
    pub row: usize,
    pub col: usize,
}

impl GridIndex {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl serde::Serialize for GridIndex {
    /// Serializes as a compact `[row, col]` pair.
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serde::Serialize::serialize(&[self.row, self.col], serializer)
    }
}

/// Geometry of the radio map grid: origin (southwest corner), square cell
/// size in meters, and row/column counts.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    origin: GeoPoint,
    cell_size: f64,
    rows: usize,
    cols: usize,
}

impl GridSpec {
    pub fn new(
        origin: GeoPoint,
        cell_size: f64,
        rows: usize,
        cols: usize,
    ) -> Result<Self, GeoError> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(GeoError::InvalidGridSpec {
                reason: format!("cell_size must be positive, got {cell_size}"),
            });
        }
        if rows == 0 || cols == 0 {
            return Err(GeoError::InvalidGridSpec {
                reason: format!("grid must be at least 1x1, got {rows}x{cols}"),
            });
        }
        // cos(origin.lat) appears in denominators of the inverse projection.
        if origin.lat().abs() > 85.0 {
            return Err(GeoError::InvalidGridSpec {
                reason: format!(
                    "origin latitude {} too close to a pole for a planar grid",
                    origin.lat()
                ),
            });
        }
        Ok(Self {
            origin,
            cell_size,
            rows,
            cols,
        })
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    /// East-west extent in meters.
    pub fn width_m(&self) -> f64 {
        self.cols as f64 * self.cell_size
    }

    /// North-south extent in meters.
    pub fn height_m(&self) -> f64 {
        self.rows as f64 * self.cell_size
    }

    fn meters_per_lon_degree(&self) -> f64 {
        METERS_PER_DEGREE * self.origin.lat().to_radians().cos()
    }

    /// Projects a geodetic point onto the local planar frame.
    ///
    /// Equirectangular about the origin:
    /// `x = (lon - origin.lon) * cos(origin.lat) * R * pi/180`,
    /// `y = (lat - origin.lat) * R * pi/180`.
    pub fn to_local(&self, p: GeoPoint) -> Result<LocalPoint, GeoError> {
        let x = (p.lon() - self.origin.lon()) * self.meters_per_lon_degree();
        let y = (p.lat() - self.origin.lat()) * METERS_PER_DEGREE;
        let dist = x.hypot(y);
        if dist > PROJECTION_DOMAIN_M {
            return Err(GeoError::OutOfProjectionDomain {
                dist_m: dist,
                max_m: PROJECTION_DOMAIN_M,
            });
        }
        Ok(LocalPoint::new(x, y))
    }

    /// Analytic inverse of [`to_local`](Self::to_local). Only meaningful
    /// inside the projection domain.
    pub fn to_geo(&self, p: LocalPoint) -> GeoPoint {
        GeoPoint {
            lat: self.origin.lat() + p.y / METERS_PER_DEGREE,
            lon: self.origin.lon() + p.x / self.meters_per_lon_degree(),
        }
    }

    /// Cell containing a local point: `row = floor(y / cell_size)`,
    /// `col = floor(x / cell_size)`. Points exactly on the maximum edge
    /// clamp to the last cell.
    pub fn grid_index(&self, p: LocalPoint) -> Result<GridIndex, GeoError> {
        let inside = p.x >= 0.0 && p.x <= self.width_m() && p.y >= 0.0 && p.y <= self.height_m();
        if !inside {
            return Err(GeoError::OutOfGrid { x: p.x, y: p.y });
        }
        let col = ((p.x / self.cell_size) as usize).min(self.cols - 1);
        let row = ((p.y / self.cell_size) as usize).min(self.rows - 1);
        Ok(GridIndex { row, col })
    }

    /// Center of a cell: `((col + 0.5) * cell_size, (row + 0.5) * cell_size)`.
    ///
    /// Panics if the index is out of bounds for this grid.
    pub fn cell_center(&self, idx: GridIndex) -> LocalPoint {
        assert!(
            idx.row < self.rows && idx.col < self.cols,
            "grid index ({}, {}) out of bounds for {}x{} grid",
            idx.row,
            idx.col,
            self.rows,
            self.cols
        );
        LocalPoint::new(
            (idx.col as f64 + 0.5) * self.cell_size,
            (idx.row as f64 + 0.5) * self.cell_size,
        )
    }

    /// Row-major linear index of a cell.
    pub fn linear(&self, idx: GridIndex) -> usize {
        idx.row * self.cols + idx.col
    }

    /// Inverse of [`linear`](Self::linear).
    pub fn from_linear(&self, i: usize) -> GridIndex {
        GridIndex {
            row: i / self.cols,
            col: i % self.cols,
        }
    }
}

impl Default for GridSpec {
    /// 70 x 100 grid of 10 m cells (0.7 km x 1 km) with a mid-latitude
    /// origin, the geometry of the survey campaign this tool was built for.
    fn default() -> Self {
        let origin = GeoPoint::new(37.55, 127.04).expect("default origin is valid");
        GridSpec::new(origin, 10.0, 70, 100).expect("default grid spec is valid")
    }
}
