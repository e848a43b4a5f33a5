//! The ground-wave signal-strength model.
//!
//! Field strength in dB(uV/m) at surface distance `r` meters is
//!
//! ```text
//! C - 10 e log10(r) - sum_i ea_i r_i
//! ```
//!
//! where the sum runs over the conductivity-raster cells the great-circle
//! path crosses, `ea_i` is the extra attenuation per meter in cell `i` and
//! `r_i` the path length inside it. On homogeneous ground the sum
//! collapses to `ea * r` ([`field_strength_homogeneous`]); over a raster,
//! [`PathTracer`] samples the path and attributes each step to the cell
//! containing its midpoint.
//!
//! Two parameter presets ship with the crate: the MF R-Mode constants
//! fitted against GRWAVE reference curves (C = 195.876, e = 2.046, used
//! with [`crate::conductivity::EaTable::mf_rmode`]) and the classic eLoran
//! approximation (C = 189.353, e = 2).

use thiserror::Error;

use crate::conductivity::{ConductivityRaster, EaError, EaPolicy, EaTable, SEA_WATER_SIGMA};
use crate::geo::{great_circle_distance, intermediate_point, step_count, GeoError, GeoPoint};
use crate::raster::CellLookupError;

/// Minimum model range in meters; guards the log singularity at r = 0.
/// The fit is a far-field ground-wave approximation, so anything under
/// ~1 km is advisory regardless.
pub const MIN_RANGE_M: f64 = 1.0;

/// Range below which predictions are flagged advisory (far-field fit).
pub const NEAR_FIELD_M: f64 = 1_000.0;

/// Model constants: intercept C in dB(uV/m) at 1 m and distance exponent e.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationParams {
    pub c_dbuvm: f64,
    pub e_exponent: f64,
}

impl PropagationParams {
    /// Constants fitted for the MF R-Mode signal.
    pub const MF_RMODE: Self = Self {
        c_dbuvm: 195.876,
        e_exponent: 2.046,
    };

    /// The eLoran approximation: inverse-square spreading with C = 189.353.
    pub const ELORAN: Self = Self {
        c_dbuvm: 189.353,
        e_exponent: 2.0,
    };

    pub fn new(c_dbuvm: f64, e_exponent: f64) -> Result<Self, PropagationError> {
        if !c_dbuvm.is_finite() {
            return Err(PropagationError::InvalidParams(format!(
                "C must be finite, got {c_dbuvm}"
            )));
        }
        if !(e_exponent > 0.0 && e_exponent < 4.0) {
            return Err(PropagationError::InvalidParams(format!(
                "exponent must lie in (0, 4), got {e_exponent}"
            )));
        }
        Ok(Self { c_dbuvm, e_exponent })
    }
}

/// A transmitter site.
///
/// `power_offset_db` shifts the whole curve: C encodes a nominal radiated
/// power, so a station running hotter or colder than nominal is modeled as
/// a constant dB offset. Zero reproduces the fitted model as-is.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmitter {
    pub id: String,
    pub location: GeoPoint,
    pub power_offset_db: f64,
}

impl Transmitter {
    pub fn new(id: impl Into<String>, location: GeoPoint, power_offset_db: f64) -> Self {
        Self {
            id: id.into(),
            location,
            power_offset_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PropagationError {
    #[error("range {0} m below minimum {MIN_RANGE_M} m")]
    BelowMinRange(f64),
    #[error("degenerate path: transmitter equals receiver")]
    DegeneratePath,
    #[error("antipodal transmitter/receiver; path undefined")]
    AntipodalPath,
    #[error("path step outside raster and no fallback conductivity configured")]
    OutsideRaster,
    #[error("path step on nodata cell ({row}, {col}) and no fallback conductivity configured")]
    NoDataCell { row: usize, col: usize },
    #[error(transparent)]
    Ea(#[from] EaError),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

impl From<GeoError> for PropagationError {
    fn from(e: GeoError) -> Self {
        match e {
            GeoError::AntipodalPath => PropagationError::AntipodalPath,
            GeoError::DegeneratePath => PropagationError::DegeneratePath,
            _ => PropagationError::InvalidParams(e.to_string()),
        }
    }
}

/// Closed-form field strength over homogeneous ground, dB(uV/m).
pub fn field_strength_homogeneous(
    r_m: f64,
    params: &PropagationParams,
    ea_db_per_m: f64,
) -> Result<f64, PropagationError> {
    if !(r_m >= MIN_RANGE_M) {
        return Err(PropagationError::BelowMinRange(r_m));
    }
    Ok(params.c_dbuvm - 10.0 * params.e_exponent * r_m.log10() - ea_db_per_m * r_m)
}

/// Conductivity resolved at one sampled point.
struct PointSigma {
    sigma: f64,
    cell: Option<(usize, usize)>,
    fallback: bool,
}

/// One run of path steps sharing a conductivity.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSegment {
    /// Raster cell (row, col) of the segment's first step; `None` when
    /// that step used the fallback conductivity for an off-raster point.
    pub cell: Option<(usize, usize)>,
    pub sigma_s_per_m: f64,
    pub ea_db_per_m: f64,
    pub length_m: f64,
}

/// Per-cell decomposition of a transmitter-receiver path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathProfile {
    pub total_r_m: f64,
    pub segments: Vec<PathSegment>,
    /// Total extra attenuation, sum of ea * length over segments.
    pub extra_atten_db: f64,
    /// Number of sampling steps along the path.
    pub steps: usize,
    /// Steps that fell outside the raster or on nodata and used the
    /// fallback conductivity.
    pub fallback_steps: usize,
}

impl PathProfile {
    /// Field strength for this path under `params`, dB(uV/m).
    pub fn field_strength(
        &self,
        params: &PropagationParams,
        power_offset_db: f64,
    ) -> Result<f64, PropagationError> {
        if !(self.total_r_m >= MIN_RANGE_M) {
            return Err(PropagationError::BelowMinRange(self.total_r_m));
        }
        Ok(params.c_dbuvm + power_offset_db
            - 10.0 * params.e_exponent * self.total_r_m.log10()
            - self.extra_atten_db)
    }
}

/// Traces great-circle paths across a conductivity raster.
///
/// Each step of at most `max_step_m` is attributed to the raster cell
/// containing its midpoint; runs of equal conductivity collapse into one
/// segment. Steps outside the raster (or on nodata cells) take the
/// fallback conductivity, sea water by default -- the common case is a
/// land-only raster surrounded by ocean. Set the fallback to `None` to
/// turn those steps into hard errors instead.
#[derive(Debug, Clone)]
pub struct PathTracer<'a> {
    raster: &'a ConductivityRaster,
    table: &'a EaTable,
    policy: EaPolicy,
    max_step_m: f64,
    fallback_sigma: Option<f64>,
}

impl<'a> PathTracer<'a> {
    pub fn new(raster: &'a ConductivityRaster, table: &'a EaTable) -> Self {
        Self {
            raster,
            table,
            policy: EaPolicy::default(),
            max_step_m: raster.default_max_step_m(),
            fallback_sigma: Some(SEA_WATER_SIGMA),
        }
    }

    pub fn with_policy(mut self, policy: EaPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_max_step_m(mut self, max_step_m: f64) -> Self {
        self.max_step_m = max_step_m;
        self
    }

    pub fn with_fallback_sigma(mut self, fallback: Option<f64>) -> Self {
        self.fallback_sigma = fallback;
        self
    }

    pub fn max_step_m(&self) -> f64 {
        self.max_step_m
    }

    pub fn policy(&self) -> EaPolicy {
        self.policy
    }

    pub fn fallback_sigma(&self) -> Option<f64> {
        self.fallback_sigma
    }

    /// Conductivity under a single point, applying the fallback rule.
    fn sigma_at(&self, p: &GeoPoint) -> Result<PointSigma, PropagationError> {
        match self.raster.cell_at(p) {
            Ok((row, col, sigma)) => Ok(PointSigma {
                sigma,
                cell: Some((row, col)),
                fallback: false,
            }),
            Err(CellLookupError::OutsideRaster) => match self.fallback_sigma {
                Some(sigma) => Ok(PointSigma { sigma, cell: None, fallback: true }),
                None => Err(PropagationError::OutsideRaster),
            },
            Err(CellLookupError::NoDataCell { row, col }) => match self.fallback_sigma {
                Some(sigma) => Ok(PointSigma {
                    sigma,
                    cell: Some((row, col)),
                    fallback: true,
                }),
                None => Err(PropagationError::NoDataCell { row, col }),
            },
        }
    }

    /// Extra attenuation per meter at a single point, applying the
    /// fallback rule. Returns (ea, used_fallback).
    pub fn ea_at(&self, p: &GeoPoint) -> Result<(f64, bool), PropagationError> {
        let point = self.sigma_at(p)?;
        Ok((
            self.table.ea_for_sigma(point.sigma, self.policy)?,
            point.fallback,
        ))
    }

    /// Content hash of the attenuation table, for run metadata.
    pub fn table_hash(&self) -> u64 {
        self.table.content_hash()
    }

    /// Decompose the tx -> rx great circle into conductivity segments.
    pub fn trace_path(&self, tx: &GeoPoint, rx: &GeoPoint) -> Result<PathProfile, PropagationError> {
        if tx == rx {
            return Err(PropagationError::DegeneratePath);
        }
        let total_r_m = great_circle_distance(tx, rx);
        let n = step_count(total_r_m, self.max_step_m);
        let step_m = total_r_m / n as f64;

        let mut segments: Vec<PathSegment> = Vec::new();
        let mut fallback_steps = 0usize;
        for i in 0..n {
            let f = (i as f64 + 0.5) / n as f64;
            let midpoint = intermediate_point(tx, rx, f)?;
            let point = self.sigma_at(&midpoint)?;
            if point.fallback {
                fallback_steps += 1;
            }
            match segments.last_mut() {
                Some(seg) if seg.sigma_s_per_m == point.sigma => seg.length_m += step_m,
                _ => {
                    let ea = self.table.ea_for_sigma(point.sigma, self.policy)?;
                    segments.push(PathSegment {
                        cell: point.cell,
                        sigma_s_per_m: point.sigma,
                        ea_db_per_m: ea,
                        length_m: step_m,
                    });
                }
            }
        }

        let extra_atten_db = segments
            .iter()
            .map(|s| s.ea_db_per_m * s.length_m)
            .sum::<f64>();
        Ok(PathProfile {
            total_r_m,
            segments,
            extra_atten_db,
            steps: n,
            fallback_steps,
        })
    }

    /// Field strength at `rx` from `tx` across the raster, dB(uV/m).
    pub fn field_strength_path(
        &self,
        tx: &Transmitter,
        rx: &GeoPoint,
        params: &PropagationParams,
    ) -> Result<f64, PropagationError> {
        let r_m = great_circle_distance(&tx.location, rx);
        if r_m < MIN_RANGE_M && &tx.location != rx {
            return Err(PropagationError::BelowMinRange(r_m));
        }
        let profile = self.trace_path(&tx.location, rx)?;
        profile.field_strength(params, tx.power_offset_db)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::RasterFormat;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    fn approx_eq(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "left={a} right={b} tol={tol}");
    }

    /// Uniform conductivity raster centered on the equator/prime meridian,
    /// wide enough for ~1000 km paths.
    fn uniform_raster(sigma: f64) -> ConductivityRaster {
        let asc = format!(
            "ncols 40\nnrows 40\nxllcorner -10\nyllcorner -10\ncellsize 0.5\nNODATA_value -9999\n{}",
            format!("{}\n", vec![sigma.to_string(); 40].join(" ")).repeat(40)
        );
        ConductivityRaster::read(asc.as_bytes(), RasterFormat::EsriAscii).unwrap()
    }

    /// West half sigma=0.005 (land), east half sigma=4 (sea), cell edge at
    /// lon = 0 exactly; covers the equator band.
    fn two_zone_raster() -> ConductivityRaster {
        let mut rows = String::new();
        for _ in 0..8 {
            let west = vec!["0.005"; 36].join(" ");
            let east = vec!["4"; 36].join(" ");
            rows.push_str(&format!("{west} {east}\n"));
        }
        let asc = format!(
            "ncols 72\nnrows 8\nxllcorner -0.9\nyllcorner -0.1\ncellsize 0.025\nNODATA_value -9999\n{rows}"
        );
        ConductivityRaster::read(asc.as_bytes(), RasterFormat::EsriAscii).unwrap()
    }

    #[test]
    fn homogeneous_hand_value_mf_rmode() {
        // C - 10 e log10(1e5) - ea 1e5 = 195.876 - 102.3 - 4.6 = 88.976
        let f = field_strength_homogeneous(1e5, &PropagationParams::MF_RMODE, 4.60e-5).unwrap();
        approx_eq(f, 88.976, 1e-9);
    }

    #[test]
    fn homogeneous_at_one_meter_is_c() {
        let p = PropagationParams::MF_RMODE;
        assert_eq!(field_strength_homogeneous(1.0, &p, 0.0).unwrap(), p.c_dbuvm);
        let f = field_strength_homogeneous(1.0, &p, 1e-4).unwrap();
        approx_eq(f, p.c_dbuvm - 1e-4, 1e-12);
    }

    #[test]
    fn homogeneous_eloran_hand_value() {
        // 189.353 - 10*2*log10(1e3) = 189.353 - 60 = 129.353
        let f = field_strength_homogeneous(1e3, &PropagationParams::ELORAN, 0.0).unwrap();
        approx_eq(f, 129.353, 1e-9);
    }

    #[test]
    fn eloran_preset_matches_inverse_square_form() {
        // C - 10 log10(r^2) - ea r, checked at 1, 10, 100, 1000 km
        let ea = 2.24e-4;
        for r in [1e3, 1e4, 1e5, 1e6] {
            let f = field_strength_homogeneous(r, &PropagationParams::ELORAN, ea).unwrap();
            let reference = 189.353 - 10.0 * (r * r).log10() - ea * r;
            approx_eq(f, reference, 1e-9);
        }
    }

    #[test]
    fn below_min_range_rejected() {
        let err = field_strength_homogeneous(0.5, &PropagationParams::MF_RMODE, 0.0).unwrap_err();
        assert_eq!(err, PropagationError::BelowMinRange(0.5));
    }

    #[test]
    fn params_validation() {
        assert!(PropagationParams::new(195.876, 2.046).is_ok());
        assert!(PropagationParams::new(195.876, 0.0).is_err());
        assert!(PropagationParams::new(195.876, 4.5).is_err());
        assert!(PropagationParams::new(f64::NAN, 2.0).is_err());
    }

    #[test]
    fn uniform_raster_collapses_to_one_segment() {
        let raster = uniform_raster(0.005);
        let table = EaTable::mf_rmode();
        let tracer = PathTracer::new(&raster, &table);
        // ~100 km east along the equator
        let rx_lon = (1e5 / crate::geo::EARTH_RADIUS_M).to_degrees();
        let profile = tracer.trace_path(&pt(0.0, 0.0), &pt(0.0, rx_lon)).unwrap();
        assert_eq!(profile.segments.len(), 1);
        assert_eq!(profile.fallback_steps, 0);
        approx_eq(profile.total_r_m, 1e5, 1e-6);
        approx_eq(profile.extra_atten_db, 4.60e-5 * 1e5, 1e-9);
    }

    #[test]
    fn two_zone_path_hand_sum() {
        // 200 km along the equator crossing land->sea exactly at midpoint:
        // extra = 4.60e-5 * 1e5 + (-5.40e-7) * 1e5 = 4.546 dB
        let raster = two_zone_raster();
        let table = EaTable::mf_rmode();
        let tracer = PathTracer::new(&raster, &table);
        let half_deg = (1e5 / crate::geo::EARTH_RADIUS_M).to_degrees();
        let profile = tracer
            .trace_path(&pt(0.0, -half_deg), &pt(0.0, half_deg))
            .unwrap();
        assert_eq!(profile.segments.len(), 2);
        approx_eq(profile.extra_atten_db, 4.546, 0.02);
        approx_eq(profile.total_r_m, 2e5, 1e-6);
        // segment lengths sum to the total
        let seg_sum: f64 = profile.segments.iter().map(|s| s.length_m).sum();
        assert!((seg_sum - profile.total_r_m).abs() / profile.total_r_m <= 1e-6);
    }

    #[test]
    fn trace_degenerate_path() {
        let raster = uniform_raster(0.005);
        let table = EaTable::mf_rmode();
        let tracer = PathTracer::new(&raster, &table);
        let a = pt(1.0, 1.0);
        assert_eq!(
            tracer.trace_path(&a, &a).unwrap_err(),
            PropagationError::DegeneratePath
        );
    }

    #[test]
    fn path_reversal_same_attenuation() {
        let raster = two_zone_raster();
        let table = EaTable::mf_rmode();
        let tracer = PathTracer::new(&raster, &table);
        let a = pt(0.03, -0.7);
        let b = pt(-0.04, 0.8);
        let fwd = tracer.trace_path(&a, &b).unwrap();
        let rev = tracer.trace_path(&b, &a).unwrap();
        approx_eq(fwd.extra_atten_db, rev.extra_atten_db, 1e-9);
        assert_eq!(fwd.segments.len(), rev.segments.len());
    }

    #[test]
    fn homogeneous_equivalence_on_uniform_raster() {
        let raster = uniform_raster(0.005);
        let table = EaTable::mf_rmode();
        let tracer = PathTracer::new(&raster, &table);
        let tx = Transmitter::new("tx", pt(0.0, 0.0), 0.0);
        let rx_lon = (1e5 / crate::geo::EARTH_RADIUS_M).to_degrees();
        let via_path = tracer
            .field_strength_path(&tx, &pt(0.0, rx_lon), &PropagationParams::MF_RMODE)
            .unwrap();
        let homogeneous =
            field_strength_homogeneous(1e5, &PropagationParams::MF_RMODE, 4.60e-5).unwrap();
        approx_eq(via_path, homogeneous, 1e-9);
        approx_eq(via_path, 88.976, 1e-6);
    }

    #[test]
    fn sea_water_path_hand_value() {
        // 195.876 - 102.3 - (-0.054) = 93.63
        let raster = uniform_raster(4.0);
        let table = EaTable::mf_rmode();
        let tracer = PathTracer::new(&raster, &table);
        let tx = Transmitter::new("tx", pt(0.0, 0.0), 0.0);
        let rx_lon = (1e5 / crate::geo::EARTH_RADIUS_M).to_degrees();
        let f = tracer
            .field_strength_path(&tx, &pt(0.0, rx_lon), &PropagationParams::MF_RMODE)
            .unwrap();
        approx_eq(f, 93.63, 1e-3);
    }

    #[test]
    fn power_offset_is_additive() {
        let raster = uniform_raster(0.005);
        let table = EaTable::mf_rmode();
        let tracer = PathTracer::new(&raster, &table);
        let rx = pt(0.3, 0.4);
        let base = tracer
            .field_strength_path(
                &Transmitter::new("a", pt(0.0, 0.0), 0.0),
                &rx,
                &PropagationParams::MF_RMODE,
            )
            .unwrap();
        let offset = tracer
            .field_strength_path(
                &Transmitter::new("a", pt(0.0, 0.0), 3.0),
                &rx,
                &PropagationParams::MF_RMODE,
            )
            .unwrap();
        approx_eq(offset - base, 3.0, 1e-12);
    }

    #[test]
    fn fallback_applies_outside_raster() {
        let raster = uniform_raster(0.005); // spans lat/lon -10..10
        let table = EaTable::mf_rmode();
        let tracer = PathTracer::new(&raster, &table);
        // path pokes ~1 deg beyond the eastern edge
        let profile = tracer.trace_path(&pt(0.0, 8.0), &pt(0.0, 11.0)).unwrap();
        assert!(profile.fallback_steps > 0);
        // off-raster steps took sea water
        assert!(profile
            .segments
            .iter()
            .any(|s| s.sigma_s_per_m == SEA_WATER_SIGMA && s.cell.is_none()));

        let strict = tracer.clone().with_fallback_sigma(None);
        assert_eq!(
            strict.trace_path(&pt(0.0, 8.0), &pt(0.0, 11.0)).unwrap_err(),
            PropagationError::OutsideRaster
        );
    }

    #[test]
    fn exact_only_policy_errors_on_off_table_sigma() {
        let raster = uniform_raster(3e-3); // not a table row
        let table = EaTable::mf_rmode();
        let tracer = PathTracer::new(&raster, &table).with_policy(EaPolicy::ExactOnly);
        let err = tracer.trace_path(&pt(0.0, 0.0), &pt(0.0, 1.0)).unwrap_err();
        assert_eq!(err, PropagationError::Ea(EaError::NotInTable(3e-3)));
    }

    #[test]
    fn step_refinement_is_stable() {
        // halving the step changes the two-zone attenuation by well under
        // 0.01 dB when cells are >= 10x the step
        let raster = two_zone_raster();
        let table = EaTable::mf_rmode();
        let cell_m = 0.025f64.to_radians() * crate::geo::EARTH_RADIUS_M;
        let half_deg = (1e5 / crate::geo::EARTH_RADIUS_M).to_degrees();
        let a = pt(0.0, -half_deg);
        let b = pt(0.0, half_deg);
        let coarse = PathTracer::new(&raster, &table)
            .with_max_step_m(cell_m / 10.0)
            .trace_path(&a, &b)
            .unwrap();
        let fine = PathTracer::new(&raster, &table)
            .with_max_step_m(cell_m / 20.0)
            .trace_path(&a, &b)
            .unwrap();
        assert!(
            (coarse.extra_atten_db - fine.extra_atten_db).abs() <= 0.01,
            "coarse={} fine={}",
            coarse.extra_atten_db,
            fine.extra_atten_db
        );
    }

    #[test]
    fn monotone_decreasing_along_homogeneous_path() {
        let p = PropagationParams::MF_RMODE;
        let mut prev = f64::INFINITY;
        for km in 1..=1000 {
            let f = field_strength_homogeneous(km as f64 * 1e3, &p, 4.60e-5).unwrap();
            assert!(f < prev, "field must strictly decrease: {f} at {km} km");
            prev = f;
        }
    }
}
