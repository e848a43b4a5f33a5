//! Field-strength coverage grids: sweep the path model over a lat/lon grid
//! around one transmitter and export the result.
//!
//! Cells are evaluated at their centers. A cell whose evaluation fails
//! (e.g. strict policy and an off-table conductivity) records NaN and
//! increments a failure counter instead of aborting the sweep. The sweep
//! is data-parallel per cell; sequential and parallel runs produce
//! bit-identical grids.

use std::io::Cursor;

use rayon::prelude::*;
use thiserror::Error;

use crate::geo::{great_circle_distance, GeoPoint};
use crate::propagation::{
    PathTracer, PropagationParams, Transmitter, MIN_RANGE_M, NEAR_FIELD_M,
};
use crate::raster::{RasterError, RasterFormat, RasterGrid};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoverageError {
    #[error("invalid grid spec: {0}")]
    InvalidGridSpec(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExportError {
    #[error("encoding error: {0}")]
    Encoding(String),
}

impl From<std::io::Error> for ExportError {
    fn from(e: std::io::Error) -> Self {
        ExportError::Encoding(e.to_string())
    }
}

impl From<image::ImageError> for ExportError {
    fn from(e: image::ImageError) -> Self {
        ExportError::Encoding(e.to_string())
    }
}

/// Output grid geometry: lower-left corner, cell size, and cell counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lat_min_deg: f64,
    pub lon_min_deg: f64,
    pub cell_size_deg: f64,
    pub n_rows: usize,
    pub n_cols: usize,
}

impl GridSpec {
    pub fn new(
        lat_min_deg: f64,
        lon_min_deg: f64,
        cell_size_deg: f64,
        n_rows: usize,
        n_cols: usize,
    ) -> Result<Self, CoverageError> {
        if n_rows == 0 || n_cols == 0 {
            return Err(CoverageError::InvalidGridSpec(
                "grid must have at least one row and one column".into(),
            ));
        }
        if !(cell_size_deg > 0.0) || !cell_size_deg.is_finite() {
            return Err(CoverageError::InvalidGridSpec(format!(
                "cell size must be positive, got {cell_size_deg}"
            )));
        }
        let north = lat_min_deg + n_rows as f64 * cell_size_deg;
        let east = lon_min_deg + n_cols as f64 * cell_size_deg;
        if lat_min_deg < -90.0 || north > 90.0 + 1e-9 {
            return Err(CoverageError::InvalidGridSpec(format!(
                "latitude span [{lat_min_deg}, {north}] outside [-90, 90]"
            )));
        }
        if lon_min_deg < -180.0 || east > 180.0 + 1e-9 {
            return Err(CoverageError::InvalidGridSpec(format!(
                "longitude span [{lon_min_deg}, {east}] outside [-180, 180]"
            )));
        }
        Ok(Self {
            lat_min_deg,
            lon_min_deg,
            cell_size_deg,
            n_rows,
            n_cols,
        })
    }

    /// Grid covering `[lat_min, lat_max] x [lon_min, lon_max]` at the given
    /// cell size (the last row/column may overshoot the upper bounds by a
    /// fraction of a cell).
    pub fn from_bounds(
        lat_min_deg: f64,
        lat_max_deg: f64,
        lon_min_deg: f64,
        lon_max_deg: f64,
        cell_size_deg: f64,
    ) -> Result<Self, CoverageError> {
        if !(lat_max_deg > lat_min_deg) || !(lon_max_deg > lon_min_deg) {
            return Err(CoverageError::InvalidGridSpec(
                "bounds must satisfy min < max".into(),
            ));
        }
        if !(cell_size_deg > 0.0) || !cell_size_deg.is_finite() {
            return Err(CoverageError::InvalidGridSpec(format!(
                "cell size must be positive, got {cell_size_deg}"
            )));
        }
        let count = |span: f64| (((span / cell_size_deg) - 1e-9).ceil().max(1.0)) as usize;
        Self::new(
            lat_min_deg,
            lon_min_deg,
            cell_size_deg,
            count(lat_max_deg - lat_min_deg),
            count(lon_max_deg - lon_min_deg),
        )
    }

    /// Center of cell (row, col); row 0 is the southernmost row.
    pub fn cell_center(&self, row: usize, col: usize) -> GeoPoint {
        GeoPoint::new(
            self.lat_min_deg + (row as f64 + 0.5) * self.cell_size_deg,
            self.lon_min_deg + (col as f64 + 0.5) * self.cell_size_deg,
        )
        .expect("grid spec validated on construction")
    }
}

/// Provenance of a coverage run, carried alongside the values.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMetadata {
    pub transmitter_id: String,
    pub params: PropagationParams,
    pub ea_table_hash: u64,
    pub max_step_m: f64,
    pub policy: &'static str,
    pub fallback_sigma: Option<f64>,
    /// Path steps across all cells that used the fallback conductivity.
    pub fallback_steps: usize,
    /// Cells whose evaluation failed (recorded as NaN).
    pub failed_cells: usize,
    /// Cells closer than 1 km to the transmitter; the far-field fit is
    /// advisory there.
    pub near_field_cells: usize,
}

/// Field strengths over a [`GridSpec`], row-major with row 0 south.
/// NaN marks failed cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub metadata: CoverageMetadata,
}

impl CoverageGrid {
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.spec.n_cols + col]
    }

    /// (min, max) over finite values, if any.
    pub fn finite_range(&self) -> Option<(f64, f64)> {
        let mut range: Option<(f64, f64)> = None;
        for &v in &self.values {
            if v.is_finite() {
                let (lo, hi) = range.get_or_insert((v, v));
                *lo = lo.min(v);
                *hi = hi.max(v);
            }
        }
        range
    }
}

struct CellOutcome {
    value: f64,
    fallback_steps: usize,
    failed: bool,
    near_field: bool,
}

fn evaluate_cell(
    tx: &Transmitter,
    tracer: &PathTracer<'_>,
    params: &PropagationParams,
    rx: GeoPoint,
) -> CellOutcome {
    let r_m = great_circle_distance(&tx.location, &rx);
    let near_field = r_m < NEAR_FIELD_M;
    if r_m < MIN_RANGE_M {
        // Transmitter's own cell: evaluate at the minimum range with the
        // local extra attenuation (log10(1) = 0).
        return match tracer.ea_at(&rx) {
            Ok((ea, used_fallback)) => CellOutcome {
                value: params.c_dbuvm + tx.power_offset_db - ea * MIN_RANGE_M,
                fallback_steps: used_fallback as usize,
                failed: false,
                near_field,
            },
            Err(_) => CellOutcome {
                value: f64::NAN,
                fallback_steps: 0,
                failed: true,
                near_field,
            },
        };
    }
    match tracer.trace_path(&tx.location, &rx) {
        Ok(profile) => match profile.field_strength(params, tx.power_offset_db) {
            Ok(value) => CellOutcome {
                value,
                fallback_steps: profile.fallback_steps,
                failed: false,
                near_field,
            },
            Err(_) => CellOutcome {
                value: f64::NAN,
                fallback_steps: profile.fallback_steps,
                failed: true,
                near_field,
            },
        },
        Err(_) => CellOutcome {
            value: f64::NAN,
            fallback_steps: 0,
            failed: true,
            near_field,
        },
    }
}

/// Sweep the path model over every cell center of `spec`.
///
/// `parallel` fans the per-cell work out over rayon; the result is
/// bit-identical to the sequential sweep because each cell is pure and
/// written independently.
pub fn compute_coverage(
    tx: &Transmitter,
    tracer: &PathTracer<'_>,
    params: &PropagationParams,
    spec: GridSpec,
    parallel: bool,
) -> CoverageGrid {
    let n_cells = spec.n_rows * spec.n_cols;
    let cell = |idx: usize| {
        let rx = spec.cell_center(idx / spec.n_cols, idx % spec.n_cols);
        evaluate_cell(tx, tracer, params, rx)
    };
    let outcomes: Vec<CellOutcome> = if parallel {
        (0..n_cells).into_par_iter().map(cell).collect()
    } else {
        (0..n_cells).map(cell).collect()
    };

    let mut values = Vec::with_capacity(n_cells);
    let mut fallback_steps = 0;
    let mut failed_cells = 0;
    let mut near_field_cells = 0;
    for o in outcomes {
        values.push(o.value);
        fallback_steps += o.fallback_steps;
        failed_cells += o.failed as usize;
        near_field_cells += o.near_field as usize;
    }

    CoverageGrid {
        spec,
        values,
        metadata: CoverageMetadata {
            transmitter_id: tx.id.clone(),
            params: *params,
            ea_table_hash: tracer.table_hash(),
            max_step_m: tracer.max_step_m(),
            policy: tracer.policy().name(),
            fallback_sigma: tracer.fallback_sigma(),
            fallback_steps,
            failed_cells,
            near_field_cells,
        },
    }
}

/// Export formats for a coverage grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExportFormat {
    /// `lat,lon,field_dBuVm` rows (header line first), northernmost row first.
    Csv,
    /// ESRI ASCII grid; NaN cells become NODATA.
    EsriAscii,
    /// 8-bit RGB colormap, one pixel per cell, row 0 = northernmost.
    /// Values are mapped linearly from `vmin_db..vmax_db` onto a fixed
    /// dark-violet-to-yellow ramp; NaN cells render dark gray.
    Png { vmin_db: f64, vmax_db: f64 },
}

impl ExportFormat {
    /// PNG with the default 40..120 dB(uV/m) scale.
    pub fn png_default() -> Self {
        ExportFormat::Png {
            vmin_db: 40.0,
            vmax_db: 120.0,
        }
    }
}

const COVERAGE_NODATA: f64 = -9999.0;

/// Serialize a coverage grid; deterministic for identical inputs.
pub fn export_grid(grid: &CoverageGrid, format: ExportFormat) -> Result<Vec<u8>, ExportError> {
    match format {
        ExportFormat::Csv => {
            let mut out = String::from("lat,lon,field_dBuVm\n");
            for row in (0..grid.spec.n_rows).rev() {
                for col in 0..grid.spec.n_cols {
                    let p = grid.spec.cell_center(row, col);
                    let v = grid.value(row, col);
                    out.push_str(&format!("{},{},{}\n", p.lat_deg(), p.lon_deg(), v));
                }
            }
            Ok(out.into_bytes())
        }
        ExportFormat::EsriAscii => {
            let raster = RasterGrid::new(
                grid.spec.lat_min_deg,
                grid.spec.lon_min_deg,
                grid.spec.cell_size_deg,
                grid.spec.n_rows,
                grid.spec.n_cols,
                COVERAGE_NODATA,
                grid.values.clone(),
            )
            .map_err(|e| ExportError::Encoding(e.to_string()))?;
            let mut buf = Vec::new();
            raster
                .write(&mut buf, RasterFormat::EsriAscii)
                .map_err(|e| ExportError::Encoding(e.to_string()))?;
            Ok(buf)
        }
        ExportFormat::Png { vmin_db, vmax_db } => {
            if !(vmax_db > vmin_db) {
                return Err(ExportError::Encoding(format!(
                    "png scale requires vmin < vmax, got {vmin_db}..{vmax_db}"
                )));
            }
            let mut img =
                image::RgbImage::new(grid.spec.n_cols as u32, grid.spec.n_rows as u32);
            for (y, x, pixel) in img.enumerate_pixels_mut().map(|(x, y, p)| (y, x, p)) {
                let row = grid.spec.n_rows - 1 - y as usize; // image row 0 = north
                let v = grid.value(row, x as usize);
                *pixel = image::Rgb(colormap(v, vmin_db, vmax_db));
            }
            let mut buf = Cursor::new(Vec::new());
            img.write_to(&mut buf, image::ImageFormat::Png)?;
            Ok(buf.into_inner())
        }
    }
}

/// Re-load an exported ESRI ASCII coverage grid's values (NODATA -> NaN).
pub fn read_exported_ascii(bytes: &[u8]) -> Result<Vec<f64>, RasterError> {
    let raster = RasterGrid::read(bytes, RasterFormat::EsriAscii)?;
    Ok(raster
        .cells()
        .iter()
        .map(|&v| if raster.is_nodata(v) { f64::NAN } else { v })
        .collect())
}

/// Fixed color ramp anchors (position in [0,1], rgb).
const RAMP: [(f64, [u8; 3]); 6] = [
    (0.0, [13, 8, 135]),
    (0.2, [84, 2, 163]),
    (0.4, [156, 23, 158]),
    (0.6, [219, 92, 104]),
    (0.8, [249, 164, 63]),
    (1.0, [240, 249, 33]),
];

/// Color for a NaN (failed/nodata) cell.
const NODATA_RGB: [u8; 3] = [40, 40, 40];

fn colormap(value_db: f64, vmin_db: f64, vmax_db: f64) -> [u8; 3] {
    if value_db.is_nan() {
        return NODATA_RGB;
    }
    let t = ((value_db - vmin_db) / (vmax_db - vmin_db)).clamp(0.0, 1.0);
    let mut lo = RAMP[0];
    for hi in RAMP.iter().skip(1) {
        if t <= hi.0 {
            let f = (t - lo.0) / (hi.0 - lo.0);
            let mix = |a: u8, b: u8| (a as f64 + f * (b as f64 - a as f64)).round() as u8;
            return [
                mix(lo.1[0], hi.1[0]),
                mix(lo.1[1], hi.1[1]),
                mix(lo.1[2], hi.1[2]),
            ];
        }
        lo = *hi;
    }
    RAMP[RAMP.len() - 1].1
}
