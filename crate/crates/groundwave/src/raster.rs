//! Lat/lon-gridded rasters and their text serializations.
//!
//! The grid is stored row-major with row 0 at the *southern* edge
//! (lower-left origin). ESRI ASCII files put the northernmost row first on
//! disk; the loader flips into the internal order and the writer flips
//! back. Cell extents are half-open: a point on a shared edge belongs to
//! the cell north/east of it, so every interior point maps to exactly one
//! cell.

use std::io::{BufRead, BufReader, Read, Write};

use thiserror::Error;

use crate::geo::GeoPoint;

/// Default nodata sentinel when a file omits `NODATA_value`.
pub const DEFAULT_NODATA: f64 = -9999.0;

/// On-disk raster dialects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterFormat {
    /// ESRI ASCII grid: 6-line `key value` header, then whitespace-separated
    /// rows, northernmost row first.
    EsriAscii,
    /// Same layout with comma separators: `key,value` header lines, then
    /// comma-separated rows, northernmost row first.
    CsvMatrix,
}

impl RasterFormat {
    pub fn parse(name: &str) -> Option<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "esri_ascii" | "asc" => Some(Self::EsriAscii),
            "csv_matrix" | "csv" => Some(Self::CsvMatrix),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RasterError {
    #[error("raster parse error: {0}")]
    Parse(String),
    #[error("raster value error: {0}")]
    Value(String),
    #[error("raster io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for RasterError {
    fn from(e: std::io::Error) -> Self {
        RasterError::Io(e.to_string())
    }
}

/// Outcome of locating a point in a raster.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum CellLookupError {
    /// The point lies outside the raster bounds.
    #[error("point outside raster bounds")]
    OutsideRaster,
    /// The containing cell holds the nodata sentinel.
    #[error("cell ({row}, {col}) is nodata")]
    NoDataCell { row: usize, col: usize },
}

/// A rectangular lat/lon grid of f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    origin_lat_deg: f64,
    origin_lon_deg: f64,
    cell_size_deg: f64,
    n_rows: usize,
    n_cols: usize,
    nodata_value: f64,
    /// Row-major, row 0 = southernmost.
    cells: Vec<f64>,
}

impl RasterGrid {
    pub fn new(
        origin_lat_deg: f64,
        origin_lon_deg: f64,
        cell_size_deg: f64,
        n_rows: usize,
        n_cols: usize,
        nodata_value: f64,
        cells: Vec<f64>,
    ) -> Result<Self, RasterError> {
        if n_rows == 0 || n_cols == 0 {
            return Err(RasterError::Value("raster dimensions must be positive".into()));
        }
        if !(cell_size_deg > 0.0) || !cell_size_deg.is_finite() {
            return Err(RasterError::Value(format!(
                "cell size must be positive, got {cell_size_deg}"
            )));
        }
        if cells.len() != n_rows * n_cols {
            return Err(RasterError::Value(format!(
                "cell count {} does not match {} rows x {} cols",
                cells.len(),
                n_rows,
                n_cols
            )));
        }
        let north = origin_lat_deg + n_rows as f64 * cell_size_deg;
        let east = origin_lon_deg + n_cols as f64 * cell_size_deg;
        if origin_lat_deg < -90.0 || north > 90.0 + 1e-9 {
            return Err(RasterError::Value(format!(
                "raster latitude span [{origin_lat_deg}, {north}] outside [-90, 90]"
            )));
        }
        if origin_lon_deg < -180.0 || east > 180.0 + 1e-9 {
            return Err(RasterError::Value(format!(
                "raster longitude span [{origin_lon_deg}, {east}] outside [-180, 180]"
            )));
        }
        Ok(Self {
            origin_lat_deg,
            origin_lon_deg,
            cell_size_deg,
            n_rows,
            n_cols,
            nodata_value,
            cells,
        })
    }

    pub fn origin_lat_deg(&self) -> f64 {
        self.origin_lat_deg
    }

    pub fn origin_lon_deg(&self) -> f64 {
        self.origin_lon_deg
    }

    pub fn cell_size_deg(&self) -> f64 {
        self.cell_size_deg
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nodata_value(&self) -> f64 {
        self.nodata_value
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    /// Raw value at (row, col); row 0 is the southernmost row.
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.n_cols + col]
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v.is_nan() || v == self.nodata_value
    }

    /// Center of cell (row, col) in degrees.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_lat_deg + (row as f64 + 0.5) * self.cell_size_deg,
            self.origin_lon_deg + (col as f64 + 0.5) * self.cell_size_deg,
        )
    }

    /// Locate the cell containing `p`.
    ///
    /// Extents are half-open: `[origin + k*cell, origin + (k+1)*cell)` in
    /// both axes, so the lower-left corner of a cell belongs to it and its
    /// upper/right edges belong to the neighbors.
    pub fn cell_at(&self, p: &GeoPoint) -> Result<(usize, usize, f64), CellLookupError> {
        let row_f = (p.lat_deg() - self.origin_lat_deg) / self.cell_size_deg;
        let col_f = (p.lon_deg() - self.origin_lon_deg) / self.cell_size_deg;
        if row_f < 0.0 || col_f < 0.0 {
            return Err(CellLookupError::OutsideRaster);
        }
        let row = row_f.floor() as usize;
        let col = col_f.floor() as usize;
        if row >= self.n_rows || col >= self.n_cols {
            return Err(CellLookupError::OutsideRaster);
        }
        let v = self.value(row, col);
        if self.is_nodata(v) {
            return Err(CellLookupError::NoDataCell { row, col });
        }
        Ok((row, col, v))
    }

    /// Read a raster in the given dialect.
    pub fn read(source: impl Read, format: RasterFormat) -> Result<Self, RasterError> {
        let reader = BufReader::new(source);
        let sep = match format {
            RasterFormat::EsriAscii => None, // any whitespace
            RasterFormat::CsvMatrix => Some(','),
        };

        let mut ncols: Option<usize> = None;
        let mut nrows: Option<usize> = None;
        let mut xllcorner: Option<f64> = None;
        let mut yllcorner: Option<f64> = None;
        let mut cellsize: Option<f64> = None;
        let mut nodata = DEFAULT_NODATA;
        let mut data_rows: Vec<Vec<f64>> = Vec::new();

        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let fields: Vec<&str> = match sep {
                None => trimmed.split_whitespace().collect(),
                Some(c) => trimmed.split(c).map(str::trim).collect(),
            };
            let first = fields[0];
            if first
                .chars()
                .next()
                .map(|c| c.is_ascii_alphabetic())
                .unwrap_or(false)
            {
                if data_rows.is_empty() {
                    let key = first.to_ascii_lowercase();
                    let val = fields.get(1).copied().unwrap_or("");
                    let parse_err = |k: &str| {
                        RasterError::Parse(format!(
                            "line {}: cannot parse {k} value {val:?}",
                            lineno + 1
                        ))
                    };
                    match key.as_str() {
                        "ncols" => ncols = Some(val.parse().map_err(|_| parse_err("ncols"))?),
                        "nrows" => nrows = Some(val.parse().map_err(|_| parse_err("nrows"))?),
                        "xllcorner" => {
                            xllcorner = Some(val.parse().map_err(|_| parse_err("xllcorner"))?)
                        }
                        "yllcorner" => {
                            yllcorner = Some(val.parse().map_err(|_| parse_err("yllcorner"))?)
                        }
                        "cellsize" => {
                            cellsize = Some(val.parse().map_err(|_| parse_err("cellsize"))?)
                        }
                        "nodata_value" => {
                            nodata = val.parse().map_err(|_| parse_err("NODATA_value"))?
                        }
                        other => {
                            return Err(RasterError::Parse(format!(
                                "line {}: unknown header key {other:?}",
                                lineno + 1
                            )))
                        }
                    }
                    continue;
                }
                return Err(RasterError::Parse(format!(
                    "line {}: header line after data began",
                    lineno + 1
                )));
            }
            let mut row = Vec::with_capacity(fields.len());
            for f in &fields {
                if f.is_empty() {
                    continue;
                }
                row.push(f.parse::<f64>().map_err(|_| {
                    RasterError::Parse(format!("line {}: bad value {f:?}", lineno + 1))
                })?);
            }
            data_rows.push(row);
        }

        let n_cols = ncols.ok_or_else(|| RasterError::Parse("missing ncols header".into()))?;
        let n_rows = nrows.ok_or_else(|| RasterError::Parse("missing nrows header".into()))?;
        let origin_lon = xllcorner
            .ok_or_else(|| RasterError::Parse("missing xllcorner header".into()))?;
        let origin_lat = yllcorner
            .ok_or_else(|| RasterError::Parse("missing yllcorner header".into()))?;
        let cell_size = cellsize
            .ok_or_else(|| RasterError::Parse("missing cellsize header".into()))?;

        if data_rows.len() != n_rows {
            return Err(RasterError::Parse(format!(
                "expected {} data rows, found {}",
                n_rows,
                data_rows.len()
            )));
        }
        for (i, row) in data_rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(RasterError::Parse(format!(
                    "data row {} has {} values, expected ncols = {}",
                    i + 1,
                    row.len(),
                    n_cols
                )));
            }
        }

        // File order is north-first; flip into south-origin storage.
        let mut cells = Vec::with_capacity(n_rows * n_cols);
        for row in data_rows.iter().rev() {
            cells.extend_from_slice(row);
        }
        Self::new(origin_lat, origin_lon, cell_size, n_rows, n_cols, nodata, cells)
    }

    /// Write the raster in the given dialect (northernmost row first).
    ///
    /// Values are written with Rust's shortest round-trip float formatting,
    /// so `read(write(r))` reproduces every cell bit-exactly.
    pub fn write(&self, mut w: impl Write, format: RasterFormat) -> Result<(), RasterError> {
        let sep = match format {
            RasterFormat::EsriAscii => ' ',
            RasterFormat::CsvMatrix => ',',
        };
        writeln!(w, "ncols{sep}{}", self.n_cols)?;
        writeln!(w, "nrows{sep}{}", self.n_rows)?;
        writeln!(w, "xllcorner{sep}{}", self.origin_lon_deg)?;
        writeln!(w, "yllcorner{sep}{}", self.origin_lat_deg)?;
        writeln!(w, "cellsize{sep}{}", self.cell_size_deg)?;
        writeln!(w, "NODATA_value{sep}{}", self.nodata_value)?;
        let mut line = String::new();
        for row in (0..self.n_rows).rev() {
            line.clear();
            for col in 0..self.n_cols {
                if col > 0 {
                    line.push(sep);
                }
                let v = self.value(row, col);
                if v.is_nan() {
                    line.push_str(&self.nodata_value.to_string());
                } else {
                    line.push_str(&v.to_string());
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}
