//! Run configuration: a flat `key = value` text file plus flag overrides.
//!
//! Precedence is flags > config file > built-in defaults. `--dump-config`
//! prints the effective configuration in the same format, so a dumped
//! config re-parses to an equivalent run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use groundwave::conductivity::EaPolicy;
use groundwave::raster::RasterFormat;

/// Grid bounds for the coverage sweep, in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridBounds {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub cell_deg: f64,
}

/// Everything a run needs, resolved from file + flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub tx_id: String,
    pub tx_lat_deg: Option<f64>,
    pub tx_lon_deg: Option<f64>,
    pub tx_power_offset_db: f64,

    /// Conductivity raster path (mutually exclusive with the landcover pair).
    pub raster: Option<PathBuf>,
    pub raster_format: RasterFormat,
    pub landcover_raster: Option<PathBuf>,
    pub landcover_mapping: Option<PathBuf>,

    /// Extra-attenuation table path; built-in MF R-Mode table when absent.
    pub ea_table: Option<PathBuf>,
    /// Model parameter file; built-in MF R-Mode constants when absent.
    pub params: Option<PathBuf>,

    pub policy: EaPolicy,
    pub fallback_sigma: f64,
    /// Path-sampling step in meters; raster-derived default when absent.
    pub max_step_m: Option<f64>,

    pub grid: Option<GridBounds>,

    pub out_prefix: Option<PathBuf>,
    pub formats: Vec<String>,
    pub png_vmin_db: f64,
    pub png_vmax_db: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tx_id: "tx".into(),
            tx_lat_deg: None,
            tx_lon_deg: None,
            tx_power_offset_db: 0.0,
            raster: None,
            raster_format: RasterFormat::EsriAscii,
            landcover_raster: None,
            landcover_mapping: None,
            ea_table: None,
            params: None,
            policy: EaPolicy::LogLinInterp,
            fallback_sigma: groundwave::SEA_WATER_SIGMA,
            max_step_m: None,
            grid: None,
            out_prefix: None,
            formats: vec!["csv".into()],
            png_vmin_db: 40.0,
            png_vmax_db: 120.0,
        }
    }
}

impl RunConfig {
    /// Parse a config file into a RunConfig over the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        let mut grid: BTreeMap<&str, f64> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected `key = value`", origin.display(), lineno + 1))?;
            let key = key.trim();
            let value = value.trim();
            let num = || -> Result<f64> {
                value
                    .parse::<f64>()
                    .map_err(|_| anyhow!("{}:{}: {key} must be a number, got {value:?}", origin.display(), lineno + 1))
            };
            match key {
                "tx_id" => self.tx_id = value.to_string(),
                "tx_lat_deg" => self.tx_lat_deg = Some(num()?),
                "tx_lon_deg" => self.tx_lon_deg = Some(num()?),
                "tx_power_offset_db" => self.tx_power_offset_db = num()?,
                "raster" => self.raster = Some(value.into()),
                "raster_format" => {
                    self.raster_format = RasterFormat::parse(value).ok_or_else(|| {
                        anyhow!("{}:{}: unknown raster format {value:?}", origin.display(), lineno + 1)
                    })?
                }
                "landcover_raster" => self.landcover_raster = Some(value.into()),
                "landcover_mapping" => self.landcover_mapping = Some(value.into()),
                "ea_table" => self.ea_table = Some(value.into()),
                "params" => self.params = Some(value.into()),
                "policy" => {
                    self.policy = EaPolicy::parse(value).ok_or_else(|| {
                        anyhow!("{}:{}: unknown policy {value:?}", origin.display(), lineno + 1)
                    })?
                }
                "fallback_sigma" => self.fallback_sigma = num()?,
                "max_step_m" => self.max_step_m = Some(num()?),
                "grid_lat_min" | "grid_lat_max" | "grid_lon_min" | "grid_lon_max"
                | "grid_cell_deg" => {
                    grid.insert(
                        match key {
                            "grid_lat_min" => "lat_min",
                            "grid_lat_max" => "lat_max",
                            "grid_lon_min" => "lon_min",
                            "grid_lon_max" => "lon_max",
                            _ => "cell_deg",
                        },
                        num()?,
                    );
                }
                "out_prefix" => self.out_prefix = Some(value.into()),
                "formats" => {
                    self.formats = value.split(',').map(|f| f.trim().to_string()).collect()
                }
                "png_vmin_db" => self.png_vmin_db = num()?,
                "png_vmax_db" => self.png_vmax_db = num()?,
                other => bail!("{}:{}: unknown config key {other:?}", origin.display(), lineno + 1),
            }
        }
        if !grid.is_empty() {
            let get = |k: &str| {
                grid.get(k)
                    .copied()
                    .ok_or_else(|| anyhow!("{}: grid_* keys are incomplete: missing grid_{k}", origin.display()))
            };
            self.grid = Some(GridBounds {
                lat_min: get("lat_min")?,
                lat_max: get("lat_max")?,
                lon_min: get("lon_min")?,
                lon_max: get("lon_max")?,
                cell_deg: get("cell_deg")?,
            });
        }
        Ok(())
    }

    /// Check file references and numeric sanity; called before a run.
    pub fn validate(&self) -> Result<()> {
        if self.raster.is_some() && self.landcover_raster.is_some() {
            bail!("config sets both `raster` and `landcover_raster`; choose one");
        }
        if self.landcover_raster.is_some() != self.landcover_mapping.is_some() {
            bail!("`landcover_raster` and `landcover_mapping` must be set together");
        }
        for path in [
            &self.raster,
            &self.landcover_raster,
            &self.landcover_mapping,
            &self.ea_table,
            &self.params,
        ]
        .into_iter()
        .flatten()
        {
            if !path.exists() {
                bail!("referenced file does not exist: {}", path.display());
            }
        }
        if let Some(step) = self.max_step_m {
            if !(step > 0.0) {
                bail!("max_step_m must be positive, got {step}");
            }
        }
        if !(self.fallback_sigma > 0.0) {
            bail!("fallback_sigma must be positive, got {}", self.fallback_sigma);
        }
        Ok(())
    }

    /// Serialize the effective configuration; re-parses to an equal config.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: &str| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("tx_id", &self.tx_id);
        if let Some(v) = self.tx_lat_deg {
            kv("tx_lat_deg", &v.to_string());
        }
        if let Some(v) = self.tx_lon_deg {
            kv("tx_lon_deg", &v.to_string());
        }
        kv("tx_power_offset_db", &self.tx_power_offset_db.to_string());
        if let Some(p) = &self.raster {
            kv("raster", &p.display().to_string());
        }
        kv(
            "raster_format",
            match self.raster_format {
                RasterFormat::EsriAscii => "esri_ascii",
                RasterFormat::CsvMatrix => "csv_matrix",
            },
        );
        if let Some(p) = &self.landcover_raster {
            kv("landcover_raster", &p.display().to_string());
        }
        if let Some(p) = &self.landcover_mapping {
            kv("landcover_mapping", &p.display().to_string());
        }
        if let Some(p) = &self.ea_table {
            kv("ea_table", &p.display().to_string());
        }
        if let Some(p) = &self.params {
            kv("params", &p.display().to_string());
        }
        kv("policy", self.policy.name());
        kv("fallback_sigma", &self.fallback_sigma.to_string());
        if let Some(v) = self.max_step_m {
            kv("max_step_m", &v.to_string());
        }
        if let Some(g) = &self.grid {
            kv("grid_lat_min", &g.lat_min.to_string());
            kv("grid_lat_max", &g.lat_max.to_string());
            kv("grid_lon_min", &g.lon_min.to_string());
            kv("grid_lon_max", &g.lon_max.to_string());
            kv("grid_cell_deg", &g.cell_deg.to_string());
        }
        if let Some(p) = &self.out_prefix {
            kv("out_prefix", &p.display().to_string());
        }
        kv("formats", &self.formats.join(","));
        kv("png_vmin_db", &self.png_vmin_db.to_string());
        kv("png_vmax_db", &self.png_vmax_db.to_string());
        out
    }

    /// Resolve an output path against `GROUNDWAVE_OUT_DIR` (relative paths
    /// are re-rooted there when the variable is set).
    pub fn resolve_out(path: &Path) -> PathBuf {
        match std::env::var_os("GROUNDWAVE_OUT_DIR") {
            Some(dir) if path.is_relative() => PathBuf::from(dir).join(path),
            _ => path.to_path_buf(),
        }
    }
}
