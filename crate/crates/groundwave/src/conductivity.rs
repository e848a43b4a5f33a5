//! Ground-conductivity rasters and the conductivity -> extra-attenuation
//! table.
//!
//! Conductivity dominates ground-wave attenuation: sea water (~4 S/m)
//! barely attenuates the MF signal while poor ground (~5e-4 S/m) costs
//! hundreds of dB per 1000 km. The [`EaTable`] maps conductivity to extra
//! attenuation per meter; off-table conductivities are handled by a
//! caller-selected [`EaPolicy`] so exact-reproduction runs can forbid
//! interpolation.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use thiserror::Error;

use crate::geo::{GeoPoint, EARTH_RADIUS_M};
use crate::raster::{CellLookupError, RasterError, RasterFormat, RasterGrid};

/// Sea-water conductivity in S/m, the usual fallback for cells outside a
/// land-only raster.
pub const SEA_WATER_SIGMA: f64 = 4.0;

/// A validated ground-conductivity raster (all non-nodata cells > 0 S/m).
#[derive(Debug, Clone, PartialEq)]
pub struct ConductivityRaster {
    grid: RasterGrid,
}

impl ConductivityRaster {
    /// Validate a raw grid as conductivities.
    pub fn from_grid(grid: RasterGrid) -> Result<Self, RasterError> {
        for row in 0..grid.n_rows() {
            for col in 0..grid.n_cols() {
                let v = grid.value(row, col);
                if !grid.is_nodata(v) && !(v > 0.0 && v.is_finite()) {
                    return Err(RasterError::Value(format!(
                        "non-positive conductivity {v} S/m at (row {row}, col {col})"
                    )));
                }
            }
        }
        Ok(Self { grid })
    }

    /// Load and validate a conductivity raster from a byte stream.
    pub fn read(source: impl Read, format: RasterFormat) -> Result<Self, RasterError> {
        Self::from_grid(RasterGrid::read(source, format)?)
    }

    pub fn write(&self, w: impl Write, format: RasterFormat) -> Result<(), RasterError> {
        self.grid.write(w, format)
    }

    pub fn grid(&self) -> &RasterGrid {
        &self.grid
    }

    /// Cell containing `p` with its conductivity in S/m; row 0 is the
    /// southernmost row.
    pub fn cell_at(&self, p: &GeoPoint) -> Result<(usize, usize, f64), CellLookupError> {
        self.grid.cell_at(p)
    }

    /// Quarter of the smaller cell dimension (in meters, evaluated at the
    /// raster center): the default path-sampling step. Four samples per
    /// cell keep the midpoint attribution error well under the model's
    /// dB-level fidelity.
    pub fn default_max_step_m(&self) -> f64 {
        let ns_m = self.grid.cell_size_deg().to_radians() * EARTH_RADIUS_M;
        let center_lat =
            self.grid.origin_lat_deg() + 0.5 * self.grid.n_rows() as f64 * self.grid.cell_size_deg();
        let ew_m = ns_m * center_lat.to_radians().cos();
        ns_m.min(ew_m) / 4.0
    }
}

/// Errors from land-cover class substitution.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LandCoverError {
    #[error("land-cover class {0} has no conductivity mapping")]
    UnmappedClass(i64),
    #[error("cell value {0} is not an integer class code")]
    NonIntegerClass(f64),
    #[error("land-cover mapping parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Land-cover class code -> conductivity in S/m.
///
/// Which classes map to which conductivity is survey-specific and
/// user-supplied; see `data/landcover_example.txt` for an illustrative,
/// non-authoritative example.
#[derive(Debug, Clone, PartialEq)]
pub struct LandCoverMapping {
    entries: BTreeMap<i64, f64>,
}

impl LandCoverMapping {
    pub fn new(pairs: impl IntoIterator<Item = (i64, f64)>) -> Result<Self, LandCoverError> {
        let mut entries = BTreeMap::new();
        for (code, sigma) in pairs {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(LandCoverError::Parse(format!(
                    "class {code}: conductivity must be positive, got {sigma}"
                )));
            }
            if entries.insert(code, sigma).is_some() {
                return Err(LandCoverError::Parse(format!("duplicate class code {code}")));
            }
        }
        Ok(Self { entries })
    }

    /// Parse `class_code conductivity_S_per_m` lines; `#` starts a comment.
    pub fn read(source: impl Read) -> Result<Self, LandCoverError> {
        let reader = BufReader::new(source);
        let mut pairs = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| LandCoverError::Parse(e.to_string()))?;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut it = content.split_whitespace();
            let code = it
                .next()
                .and_then(|s| s.parse::<i64>().ok())
                .ok_or_else(|| {
                    LandCoverError::Parse(format!("line {}: expected integer class code", lineno + 1))
                })?;
            let sigma = it
                .next()
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| {
                    LandCoverError::Parse(format!("line {}: expected conductivity value", lineno + 1))
                })?;
            pairs.push((code, sigma));
        }
        Self::new(pairs)
    }

    pub fn get(&self, code: i64) -> Option<f64> {
        self.entries.get(&code).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Replace land-cover class codes with conductivities, preserving geometry
/// and nodata cells.
pub fn apply_landcover_mapping(
    classes: &RasterGrid,
    mapping: &LandCoverMapping,
) -> Result<ConductivityRaster, LandCoverError> {
    let mut cells = Vec::with_capacity(classes.cells().len());
    for &v in classes.cells() {
        if classes.is_nodata(v) {
            cells.push(classes.nodata_value());
            continue;
        }
        let code = v.round();
        if (v - code).abs() > 1e-9 {
            return Err(LandCoverError::NonIntegerClass(v));
        }
        let code = code as i64;
        let sigma = mapping
            .get(code)
            .ok_or(LandCoverError::UnmappedClass(code))?;
        cells.push(sigma);
    }
    let grid = RasterGrid::new(
        classes.origin_lat_deg(),
        classes.origin_lon_deg(),
        classes.cell_size_deg(),
        classes.n_rows(),
        classes.n_cols(),
        classes.nodata_value(),
        cells,
    )?;
    Ok(ConductivityRaster::from_grid(grid)?)
}

/// How to resolve a conductivity that is not an exact table row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EaPolicy {
    /// Error on any conductivity that is not exactly in the table.
    ExactOnly,
    /// Interpolate ea linearly in log10(sigma) between the bracketing
    /// rows; clamp to the end rows outside the table span.
    #[default]
    LogLinInterp,
    /// Use the row whose log10(sigma) is closest (ties toward the smaller
    /// sigma).
    Nearest,
}

impl EaPolicy {
    pub fn parse(name: &str) -> Option<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "exact_only" | "exact" => Some(Self::ExactOnly),
            "loglin_interp" | "loglin" => Some(Self::LogLinInterp),
            "nearest" => Some(Self::Nearest),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::ExactOnly => "exact_only",
            Self::LogLinInterp => "loglin_interp",
            Self::Nearest => "nearest",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EaError {
    #[error("conductivity must be positive, got {0} S/m")]
    InvalidSigma(f64),
    #[error("conductivity {0} S/m not in table (policy exact_only)")]
    NotInTable(f64),
    #[error("ea table error: {0}")]
    Invalid(String),
}

/// Conductivity -> extra attenuation per meter, sorted by conductivity.
///
/// The shipped MF R-Mode table ([`EaTable::mf_rmode`]) covers 5e-4 to
/// 4 S/m; ea decreases monotonically with conductivity and is slightly
/// negative for sea water. ea is treated as dB per meter throughout: the
/// model multiplies it by a path length in meters to get a dB loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EaTable {
    /// (sigma_S_per_m, ea_dB_per_m), strictly increasing sigma.
    rows: Vec<(f64, f64)>,
}

/// The fitted MF R-Mode extra-attenuation rows shipped with the crate,
/// valid for the companion constants C = 195.876 and e = 2.046.
const MF_RMODE_EA_ROWS: [(f64, f64); 7] = [
    (5e-4, 2.24e-4),
    (1e-3, 1.64e-4),
    (2e-3, 1.04e-4),
    (5e-3, 4.60e-5),
    (8e-3, 2.89e-5),
    (1e-2, 2.37e-5),
    (4.0, -5.40e-7),
];

impl EaTable {
    pub fn new(rows: Vec<(f64, f64)>) -> Result<Self, EaError> {
        if rows.is_empty() {
            return Err(EaError::Invalid("table must have at least one row".into()));
        }
        for w in rows.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(EaError::Invalid(format!(
                    "sigmas must be strictly increasing: {} then {}",
                    w[0].0, w[1].0
                )));
            }
        }
        for &(sigma, ea) in &rows {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(EaError::InvalidSigma(sigma));
            }
            if !ea.is_finite() {
                return Err(EaError::Invalid(format!("non-finite ea for sigma {sigma}")));
            }
        }
        Ok(Self { rows })
    }

    /// The built-in MF R-Mode table.
    pub fn mf_rmode() -> Self {
        Self {
            rows: MF_RMODE_EA_ROWS.to_vec(),
        }
    }

    pub fn rows(&self) -> &[(f64, f64)] {
        &self.rows
    }

    /// Parse `sigma_S_per_m ea_dB_per_m` lines; `#` starts a comment.
    pub fn read(source: impl Read) -> Result<Self, EaError> {
        let reader = BufReader::new(source);
        let mut rows = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| EaError::Invalid(e.to_string()))?;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut it = content.split_whitespace();
            let parse = |s: Option<&str>| {
                s.and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| {
                    EaError::Invalid(format!("line {}: expected `sigma ea`", lineno + 1))
                })
            };
            let sigma = parse(it.next())?;
            let ea = parse(it.next())?;
            rows.push((sigma, ea));
        }
        Self::new(rows)
    }

    pub fn write(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "# sigma_S_per_m ea_dB_per_m")?;
        for &(sigma, ea) in &self.rows {
            writeln!(w, "{sigma} {ea}")?;
        }
        Ok(())
    }

    /// Extra attenuation per meter for `sigma` under `policy`.
    pub fn ea_for_sigma(&self, sigma: f64, policy: EaPolicy) -> Result<f64, EaError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(EaError::InvalidSigma(sigma));
        }
        if let Some(&(_, ea)) = self.rows.iter().find(|(s, _)| *s == sigma) {
            return Ok(ea);
        }
        match policy {
            EaPolicy::ExactOnly => Err(EaError::NotInTable(sigma)),
            EaPolicy::LogLinInterp => {
                let log_s = sigma.log10();
                let (first, last) = (self.rows[0], self.rows[self.rows.len() - 1]);
                if sigma <= first.0 {
                    return Ok(first.1);
                }
                if sigma >= last.0 {
                    return Ok(last.1);
                }
                let hi = self.rows.partition_point(|(s, _)| *s < sigma);
                let (s_lo, ea_lo) = self.rows[hi - 1];
                let (s_hi, ea_hi) = self.rows[hi];
                let t = (log_s - s_lo.log10()) / (s_hi.log10() - s_lo.log10());
                Ok(ea_lo + t * (ea_hi - ea_lo))
            }
            EaPolicy::Nearest => {
                let log_s = sigma.log10();
                let mut best = self.rows[0];
                let mut best_d = (log_s - best.0.log10()).abs();
                for &(s, ea) in &self.rows[1..] {
                    let d = (log_s - s.log10()).abs();
                    if d < best_d {
                        best = (s, ea);
                        best_d = d;
                    }
                }
                Ok(best.1)
            }
        }
    }

    /// FNV-1a hash of the table contents, for run metadata.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut mix = |bits: u64| {
            for byte in bits.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for &(sigma, ea) in &self.rows {
            mix(sigma.to_bits());
            mix(ea.to_bits());
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn approx_eq(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "left={a} right={b} tol={tol}");
    }

    #[test]
    fn nonpositive_conductivity_rejected() {
        let asc = "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n-1.0 2\n";
        let err = ConductivityRaster::read(asc.as_bytes(), RasterFormat::EsriAscii).unwrap_err();
        assert!(matches!(err, RasterError::Value(_)), "got {err:?}");
    }

    #[test]
    fn nodata_cells_are_preserved() {
        let asc = "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n-9999 0.005\n";
        let r = ConductivityRaster::read(asc.as_bytes(), RasterFormat::EsriAscii).unwrap();
        assert_eq!(r.grid().value(0, 0), -9999.0);
    }

    #[test]
    fn landcover_substitution_pointwise() {
        let asc = "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1 2\n";
        let classes = RasterGrid::read(asc.as_bytes(), RasterFormat::EsriAscii).unwrap();
        let mapping = LandCoverMapping::new([(1, 4.0), (2, 0.005)]).unwrap();
        let r = apply_landcover_mapping(&classes, &mapping).unwrap();
        assert_eq!(r.grid().value(0, 0), 4.0);
        assert_eq!(r.grid().value(0, 1), 0.005);
    }

    #[test]
    fn landcover_unmapped_class() {
        let asc = "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1 7\n";
        let classes = RasterGrid::read(asc.as_bytes(), RasterFormat::EsriAscii).unwrap();
        let mapping = LandCoverMapping::new([(1, 4.0)]).unwrap();
        assert_eq!(
            apply_landcover_mapping(&classes, &mapping).unwrap_err(),
            LandCoverError::UnmappedClass(7)
        );
    }

    #[test]
    fn landcover_mapping_file_format() {
        let text = "# class sigma\n10 4.0   # water\n20 0.005\n";
        let m = LandCoverMapping::read(text.as_bytes()).unwrap();
        assert_eq!(m.get(10), Some(4.0));
        assert_eq!(m.get(20), Some(0.005));
        assert_eq!(m.get(30), None);
    }

    #[test]
    fn builtin_table_rows_are_exact() {
        let t = EaTable::mf_rmode();
        let expect = [
            (5e-4, 2.24e-4),
            (1e-3, 1.64e-4),
            (2e-3, 1.04e-4),
            (5e-3, 4.60e-5),
            (8e-3, 2.89e-5),
            (1e-2, 2.37e-5),
            (4.0, -5.40e-7),
        ];
        for (sigma, ea) in expect {
            assert_eq!(t.ea_for_sigma(sigma, EaPolicy::ExactOnly).unwrap(), ea);
        }
    }

    #[test]
    fn builtin_table_ea_strictly_decreasing() {
        let t = EaTable::mf_rmode();
        assert_eq!(t.rows().len(), 7);
        for w in t.rows().windows(2) {
            assert!(
                w[1].1 < w[0].1,
                "ea must strictly decrease with sigma: {:?} then {:?}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn exact_only_misses_error() {
        let t = EaTable::mf_rmode();
        assert_eq!(
            t.ea_for_sigma(3e-3, EaPolicy::ExactOnly),
            Err(EaError::NotInTable(3e-3))
        );
    }

    #[test]
    fn invalid_sigma_rejected() {
        let t = EaTable::mf_rmode();
        assert!(matches!(
            t.ea_for_sigma(0.0, EaPolicy::LogLinInterp),
            Err(EaError::InvalidSigma(_))
        ));
        assert!(matches!(
            t.ea_for_sigma(-1.0, EaPolicy::Nearest),
            Err(EaError::InvalidSigma(_))
        ));
    }

    #[test]
    fn loglin_midpoint_between_rows() {
        let t = EaTable::mf_rmode();
        // geometric mean of 1e-3 and 2e-3 sits exactly halfway in log10
        let sigma = (1e-3f64 * 2e-3).sqrt();
        let ea = t.ea_for_sigma(sigma, EaPolicy::LogLinInterp).unwrap();
        approx_eq(ea, (1.64e-4 + 1.04e-4) / 2.0, 1e-12);
        // the hand value 1.414e-3 lands a hair off the true midpoint
        let ea = t.ea_for_sigma(1.414e-3, EaPolicy::LogLinInterp).unwrap();
        approx_eq(ea, 1.34e-4, 1e-7);
    }

    #[test]
    fn loglin_clamps_outside_span() {
        let t = EaTable::mf_rmode();
        assert_eq!(t.ea_for_sigma(1e-5, EaPolicy::LogLinInterp).unwrap(), 2.24e-4);
        assert_eq!(t.ea_for_sigma(10.0, EaPolicy::LogLinInterp).unwrap(), -5.40e-7);
    }

    #[test]
    fn nearest_picks_closest_log_row() {
        let t = EaTable::mf_rmode();
        // 1.2e-3 is nearer 1e-3 than 2e-3 in log space
        assert_eq!(t.ea_for_sigma(1.2e-3, EaPolicy::Nearest).unwrap(), 1.64e-4);
        // 1.9e-3 is nearer 2e-3
        assert_eq!(t.ea_for_sigma(1.9e-3, EaPolicy::Nearest).unwrap(), 1.04e-4);
    }

    #[test]
    fn table_file_round_trip() {
        let t = EaTable::mf_rmode();
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        let t2 = EaTable::read(buf.as_slice()).unwrap();
        assert_eq!(t, t2);
        assert_eq!(t.content_hash(), t2.content_hash());
    }

    #[test]
    fn unsorted_table_rejected() {
        assert!(matches!(
            EaTable::new(vec![(1e-3, 1.0), (1e-3, 2.0)]),
            Err(EaError::Invalid(_))
        ));
    }

    #[test]
    fn default_step_is_quarter_cell() {
        let asc = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1 1\n1 1\n";
        let r = ConductivityRaster::read(asc.as_bytes(), RasterFormat::EsriAscii).unwrap();
        // 1 deg at the equator ~ 111.19 km; EW dimension at center lat 1.0
        let ns = 1f64.to_radians() * EARTH_RADIUS_M;
        let expect = ns * 1f64.to_radians().cos() / 4.0;
        approx_eq(r.default_max_step_m(), expect, 1e-9);
    }

    proptest! {
        /// loglin interpolation is continuous and within the bracketing
        /// rows' ea span everywhere inside the table.
        #[test]
        fn loglin_is_bounded_and_continuous(log_sigma in -3.301f64..0.602) {
            let t = EaTable::mf_rmode();
            let sigma = 10f64.powf(log_sigma);
            let ea = t.ea_for_sigma(sigma, EaPolicy::LogLinInterp).unwrap();
            let (min_ea, max_ea) = (-5.40e-7, 2.24e-4);
            prop_assert!(ea >= min_ea && ea <= max_ea);
            // continuity: a 1e-9 relative nudge moves ea by < 1e-8
            let ea2 = t
                .ea_for_sigma(sigma * (1.0 + 1e-9), EaPolicy::LogLinInterp)
                .unwrap();
            prop_assert!((ea - ea2).abs() < 1e-8);
        }
    }
}
