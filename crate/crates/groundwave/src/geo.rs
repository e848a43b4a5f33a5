//! Spherical-earth geodesic math: great-circle distances, interpolation
//! along arcs, and fixed-step path sampling.
//!
//! All distances are surface distances on a sphere of radius
//! [`EARTH_RADIUS_M`]. Ground-wave propagation is a surface phenomenon, so
//! slant range never enters; ellipsoidal corrections are far below the
//! dB-level fidelity of the signal model.

use thiserror::Error;

/// Mean earth radius in meters (spherical model).
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Errors from geodesic operations.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeoError {
    /// Latitude outside [-90, +90] degrees.
    #[error("latitude {0} deg outside [-90, +90]")]
    InvalidLatitude(f64),
    /// Latitude or longitude is NaN or infinite.
    #[error("coordinate is not finite")]
    NonFiniteCoordinate,
    /// Arc fraction outside [0, 1].
    #[error("arc fraction {0} outside [0, 1]")]
    InvalidFraction(f64),
    /// Non-positive or non-finite sampling step.
    #[error("sampling step {0} m must be positive")]
    InvalidStep(f64),
    /// The two endpoints are antipodal; the great circle between them is
    /// not unique.
    #[error("endpoints are antipodal; great-circle path undefined")]
    AntipodalPath,
    /// Start and end of a path coincide.
    #[error("degenerate path: start equals end")]
    DegeneratePath,
}

/// A position on the sphere in degrees.
///
/// Longitude is normalized into [-180, 180) on construction; latitude must
/// lie in [-90, +90].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    lat_deg: f64,
    lon_deg: f64,
}

impl GeoPoint {
    pub fn new(lat_deg: f64, lon_deg: f64) -> Result<Self, GeoError> {
        if !lat_deg.is_finite() || !lon_deg.is_finite() {
            return Err(GeoError::NonFiniteCoordinate);
        }
        if !(-90.0..=90.0).contains(&lat_deg) {
            return Err(GeoError::InvalidLatitude(lat_deg));
        }
        Ok(Self {
            lat_deg,
            lon_deg: normalize_lon_deg(lon_deg),
        })
    }

    pub fn lat_deg(&self) -> f64 {
        self.lat_deg
    }

    pub fn lon_deg(&self) -> f64 {
        self.lon_deg
    }

    fn to_unit_vec(self) -> [f64; 3] {
        let lat = self.lat_deg.to_radians();
        let lon = self.lon_deg.to_radians();
        [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
    }

    fn from_unit_vec(v: [f64; 3]) -> Self {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let lat_deg = (v[2] / norm).asin().to_degrees();
        let lon_deg = v[1].atan2(v[0]).to_degrees();
        Self {
            lat_deg: lat_deg.clamp(-90.0, 90.0),
            lon_deg: normalize_lon_deg(lon_deg),
        }
    }
}

impl std::fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({:.6}, {:.6})", self.lat_deg, self.lon_deg)
    }
}

/// Wrap a longitude into [-180, 180).
fn normalize_lon_deg(lon_deg: f64) -> f64 {
    let wrapped = (lon_deg + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can yield exactly 360.0 - eps artifacts; +180 itself maps to -180
    if wrapped >= 180.0 {
        -180.0
    } else {
        wrapped
    }
}

/// One sample along a great-circle path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub point: GeoPoint,
    /// Meters from the path start; nondecreasing along the path.
    pub cum_dist_m: f64,
}

/// Central angle between two points, in radians, via the haversine form
/// (numerically stable for both small and near-antipodal separations).
fn central_angle_rad(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let lat1 = a.lat_deg.to_radians();
    let lat2 = b.lat_deg.to_radians();
    let dlat = (b.lat_deg - a.lat_deg).to_radians();
    let dlon = (b.lon_deg - a.lon_deg).to_radians();

    let sin_half_dlat = (dlat * 0.5).sin();
    let sin_half_dlon = (dlon * 0.5).sin();
    let h = sin_half_dlat * sin_half_dlat
        + lat1.cos() * lat2.cos() * sin_half_dlon * sin_half_dlon;
    2.0 * h.sqrt().atan2((1.0 - h).max(0.0).sqrt())
}

/// Great-circle (haversine) distance between two points, in meters.
///
/// Symmetric in its arguments and always >= 0.
pub fn great_circle_distance(a: &GeoPoint, b: &GeoPoint) -> f64 {
    EARTH_RADIUS_M * central_angle_rad(a, b)
}

/// Point at fraction `f` of the great-circle arc from `a` to `b`.
///
/// `f = 0` returns `a` exactly and `f = 1` returns `b` exactly. Antipodal
/// endpoints (within 1e-9 rad of pi) are rejected because the connecting
/// great circle is not unique.
pub fn intermediate_point(a: &GeoPoint, b: &GeoPoint, f: f64) -> Result<GeoPoint, GeoError> {
    if !(0.0..=1.0).contains(&f) {
        return Err(GeoError::InvalidFraction(f));
    }
    let delta = central_angle_rad(a, b);
    if std::f64::consts::PI - delta < 1e-9 {
        return Err(GeoError::AntipodalPath);
    }
    if f == 0.0 || delta == 0.0 {
        return Ok(*a);
    }
    if f == 1.0 {
        return Ok(*b);
    }

    let va = a.to_unit_vec();
    let vb = b.to_unit_vec();
    let sin_delta = delta.sin();
    let wa = (((1.0 - f) * delta).sin()) / sin_delta;
    let wb = ((f * delta).sin()) / sin_delta;
    Ok(GeoPoint::from_unit_vec([
        wa * va[0] + wb * vb[0],
        wa * va[1] + wb * vb[1],
        wa * va[2] + wb * vb[2],
    ]))
}

/// Number of uniform intervals needed to keep each step at most
/// `max_step_m` over `distance_m`.
pub(crate) fn step_count(distance_m: f64, max_step_m: f64) -> usize {
    ((distance_m / max_step_m).ceil() as usize).max(1)
}

/// Sample the great circle from `a` to `b` at uniform steps of at most
/// `max_step_m` meters.
///
/// Returns N+1 samples with N = ceil(distance / max_step_m); the first
/// sample is `a`, the last is `b`, and `cum_dist_m` runs from 0 to the
/// total path length.
pub fn sample_path(
    a: &GeoPoint,
    b: &GeoPoint,
    max_step_m: f64,
) -> Result<Vec<PathSample>, GeoError> {
    if a == b {
        return Err(GeoError::DegeneratePath);
    }
    if !(max_step_m > 0.0) {
        return Err(GeoError::InvalidStep(max_step_m));
    }
    let total_m = great_circle_distance(a, b);
    let n = step_count(total_m, max_step_m);

    let mut samples = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let f = i as f64 / n as f64;
        samples.push(PathSample {
            point: intermediate_point(a, b, f)?,
            cum_dist_m: total_m * f,
        });
    }
    Ok(samples)
}
