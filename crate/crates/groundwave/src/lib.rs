//! Ground-wave signal-strength modeling for MF R-Mode navigation signals.
//!
//! The crate covers the full loop from calibration to mapping:
//!
//! - [`fitting`] estimates the model constants `(C, e)` and per-conductivity
//!   extra attenuation `ea` from reference field-strength curves by profile
//!   least squares;
//! - [`conductivity`] loads ground-conductivity rasters (optionally derived
//!   from a land-cover classification) and resolves conductivity to extra
//!   attenuation through a policy-controlled table lookup;
//! - [`propagation`] evaluates `C - 10 e log10(r) - sum_i ea_i r_i`, either
//!   closed-form on homogeneous ground or by tracing the transmitter-receiver
//!   great circle across the raster;
//! - [`coverage`] sweeps the model over an output grid and exports CSV,
//!   ESRI ASCII, or PNG maps.
//!
//! All public operations are pure given immutable inputs and safe for
//! concurrent use; the coverage sweep parallelizes per cell.

// `!(x > 0.0)`-style guards are deliberate: they reject NaN along with the
// out-of-range values, which `x <= 0.0` would not.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conductivity;
pub mod coverage;
pub mod fitting;
pub mod geo;
pub mod propagation;
pub mod raster;

pub use conductivity::{
    apply_landcover_mapping, ConductivityRaster, EaPolicy, EaTable, LandCoverMapping,
    SEA_WATER_SIGMA,
};
pub use coverage::{compute_coverage, export_grid, CoverageGrid, ExportFormat, GridSpec};
pub use fitting::{
    fit_ea_fixed_params, fit_global, synthesize_curve, FitResult, ReferenceCurve, SearchConfig,
};
pub use geo::{great_circle_distance, intermediate_point, sample_path, GeoPoint, EARTH_RADIUS_M};
pub use propagation::{
    field_strength_homogeneous, PathProfile, PathTracer, PropagationParams, Transmitter,
};
pub use raster::{RasterFormat, RasterGrid};
