//! Command-line front end: reproducible fit / point / coverage / ea-table
//! runs driven by a config file plus flag overrides.
//!
//! Exit codes are stable for scripting: 0 success, 2 config/input parse
//! failure, 3 fit failure, 4 point-evaluation failure, 5 export failure.

// `!(x > 0.0)`-style guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use groundwave::conductivity::{
    apply_landcover_mapping, ConductivityRaster, EaPolicy, EaTable, LandCoverMapping,
};
use groundwave::coverage::{compute_coverage, export_grid, ExportFormat, GridSpec};
use groundwave::fitting::{fit_global, read_params_kv, ReferenceCurve, SearchConfig};
use groundwave::geo::GeoPoint;
use groundwave::propagation::{PathTracer, PropagationParams, Transmitter, NEAR_FIELD_M};
use groundwave::raster::RasterGrid;

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "groundwave",
    version,
    about = "MF R-Mode ground-wave signal-strength simulator",
    arg_required_else_help = true
)]
struct Cli {
    /// Run configuration file (`key = value` lines)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Model parameter file (c_dbuvm / e_exponent); built-in MF R-Mode
    /// constants when absent
    #[arg(long, global = true, value_name = "FILE")]
    params: Option<PathBuf>,

    /// Extra-attenuation table file; built-in table when absent
    #[arg(long = "ea-table", global = true, value_name = "FILE")]
    ea_table: Option<PathBuf>,

    /// Conductivity lookup policy: exact_only | loglin_interp | nearest
    #[arg(long, global = true, value_name = "POLICY")]
    policy: Option<String>,

    /// Path-sampling step in meters (default: quarter of a raster cell)
    #[arg(long = "step-m", global = true, value_name = "METERS")]
    step_m: Option<f64>,

    /// Output path prefix (overrides out_prefix from the config)
    #[arg(long, global = true, value_name = "PREFIX")]
    out: Option<PathBuf>,

    /// Output formats, comma separated: csv, asc, png
    #[arg(long, global = true, value_name = "LIST")]
    format: Option<String>,

    /// Print the effective configuration and exit
    #[arg(long = "dump-config", global = true)]
    dump_config: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit model constants and per-conductivity attenuation from curve files
    Fit {
        /// Reference curve files (`# sigma=<S/m> units=<m|km>` header,
        /// then `r field` rows)
        #[arg(required = true, value_name = "CURVE_FILE")]
        curves: Vec<PathBuf>,
        /// Lower bound of the C search range, dB(uV/m)
        #[arg(long, default_value_t = 150.0)]
        c_min: f64,
        /// Upper bound of the C search range
        #[arg(long, default_value_t = 250.0)]
        c_max: f64,
        /// Lower bound of the exponent search range
        #[arg(long, default_value_t = 1.5)]
        e_min: f64,
        /// Upper bound of the exponent search range
        #[arg(long, default_value_t = 3.0)]
        e_max: f64,
    },
    /// Predict field strength at one receiver location
    Point {
        /// Receiver latitude in degrees
        #[arg(allow_negative_numbers = true)]
        rx_lat_deg: f64,
        /// Receiver longitude in degrees
        #[arg(allow_negative_numbers = true)]
        rx_lon_deg: f64,
    },
    /// Sweep the configured coverage grid and export it
    Coverage,
    /// Print extra attenuation for conductivities under the active policy
    #[command(name = "ea-table")]
    EaTableCmd {
        /// Conductivities in S/m
        #[arg(required = true, value_name = "SIGMA", allow_negative_numbers = true)]
        sigmas: Vec<f64>,
    },
}

struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn usage(message: impl ToString) -> Self {
        Self { code: 2, message: message.to_string() }
    }
    fn fit(message: impl ToString) -> Self {
        Self { code: 3, message: message.to_string() }
    }
    fn eval(message: impl ToString) -> Self {
        Self { code: 4, message: message.to_string() }
    }
    fn export(message: impl ToString) -> Self {
        Self { code: 5, message: message.to_string() }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = effective_config(&cli)?;
    if cli.dump_config {
        print!("{}", cfg.dump());
        return Ok(());
    }
    match cli.command {
        Command::Fit { ref curves, c_min, c_max, e_min, e_max } => {
            cmd_fit(&cfg, curves, (c_min, c_max), (e_min, e_max))
        }
        Command::Point { rx_lat_deg, rx_lon_deg } => cmd_point(&cfg, rx_lat_deg, rx_lon_deg),
        Command::Coverage => cmd_coverage(&cfg),
        Command::EaTableCmd { ref sigmas } => cmd_ea_table(&cfg, sigmas),
    }
}

/// Config file merged with flag overrides (flags win).
fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path).map_err(CliError::usage)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &cli.params {
        cfg.params = Some(p.clone());
    }
    if let Some(p) = &cli.ea_table {
        cfg.ea_table = Some(p.clone());
    }
    if let Some(name) = &cli.policy {
        cfg.policy = EaPolicy::parse(name)
            .ok_or_else(|| CliError::usage(format!("unknown policy {name:?}")))?;
    }
    if let Some(step) = cli.step_m {
        cfg.max_step_m = Some(step);
    }
    if let Some(out) = &cli.out {
        cfg.out_prefix = Some(out.clone());
    }
    if let Some(formats) = &cli.format {
        cfg.formats = formats.split(',').map(|f| f.trim().to_string()).collect();
    }
    Ok(cfg)
}

fn load_table(cfg: &RunConfig) -> Result<EaTable, CliError> {
    match &cfg.ea_table {
        None => Ok(EaTable::mf_rmode()),
        Some(path) => {
            let file = std::fs::File::open(path)
                .map_err(|e| CliError::usage(format!("ea table {}: {e}", path.display())))?;
            EaTable::read(file)
                .map_err(|e| CliError::usage(format!("ea table {}: {e}", path.display())))
        }
    }
}

fn load_params(cfg: &RunConfig) -> Result<PropagationParams, CliError> {
    match &cfg.params {
        None => Ok(PropagationParams::MF_RMODE),
        Some(path) => {
            let file = std::fs::File::open(path)
                .map_err(|e| CliError::usage(format!("params {}: {e}", path.display())))?;
            read_params_kv(file)
                .map_err(|e| CliError::usage(format!("params {}: {e}", path.display())))
        }
    }
}

fn load_raster(cfg: &RunConfig) -> Result<ConductivityRaster, CliError> {
    if let Some(path) = &cfg.raster {
        let file = std::fs::File::open(path)
            .map_err(|e| CliError::usage(format!("raster {}: {e}", path.display())))?;
        return ConductivityRaster::read(file, cfg.raster_format)
            .map_err(|e| CliError::usage(format!("raster {}: {e}", path.display())));
    }
    if let (Some(classes_path), Some(mapping_path)) = (&cfg.landcover_raster, &cfg.landcover_mapping)
    {
        let classes_file = std::fs::File::open(classes_path)
            .map_err(|e| CliError::usage(format!("landcover raster {}: {e}", classes_path.display())))?;
        let classes = RasterGrid::read(classes_file, cfg.raster_format)
            .map_err(|e| CliError::usage(format!("landcover raster {}: {e}", classes_path.display())))?;
        let mapping_file = std::fs::File::open(mapping_path)
            .map_err(|e| CliError::usage(format!("landcover mapping {}: {e}", mapping_path.display())))?;
        let mapping = LandCoverMapping::read(mapping_file)
            .map_err(|e| CliError::usage(format!("landcover mapping {}: {e}", mapping_path.display())))?;
        return apply_landcover_mapping(&classes, &mapping)
            .map_err(|e| CliError::usage(format!("landcover substitution: {e}")));
    }
    Err(CliError::usage(
        "no conductivity source configured: set `raster` or `landcover_raster` + `landcover_mapping`",
    ))
}

fn transmitter(cfg: &RunConfig) -> Result<Transmitter, CliError> {
    let (lat, lon) = match (cfg.tx_lat_deg, cfg.tx_lon_deg) {
        (Some(lat), Some(lon)) => (lat, lon),
        _ => return Err(CliError::usage("transmitter position not configured (tx_lat_deg / tx_lon_deg)")),
    };
    let location = GeoPoint::new(lat, lon)
        .map_err(|e| CliError::usage(format!("transmitter position: {e}")))?;
    Ok(Transmitter::new(cfg.tx_id.clone(), location, cfg.tx_power_offset_db))
}

/// Tracer honoring the configured policy. `exact_only` is a strict
/// reproduction mode: it also disables the off-raster fallback, so leaving
/// the raster becomes an error instead of silently assuming sea water.
fn tracer<'a>(
    cfg: &RunConfig,
    raster: &'a ConductivityRaster,
    table: &'a EaTable,
) -> PathTracer<'a> {
    let mut tracer = PathTracer::new(raster, table).with_policy(cfg.policy);
    if let Some(step) = cfg.max_step_m {
        tracer = tracer.with_max_step_m(step);
    }
    tracer.with_fallback_sigma(match cfg.policy {
        EaPolicy::ExactOnly => None,
        _ => Some(cfg.fallback_sigma),
    })
}

fn cmd_fit(
    cfg: &RunConfig,
    curve_paths: &[PathBuf],
    c_bounds: (f64, f64),
    e_bounds: (f64, f64),
) -> Result<(), CliError> {
    let mut curves = Vec::with_capacity(curve_paths.len());
    for path in curve_paths {
        let file = std::fs::File::open(path)
            .map_err(|e| CliError::usage(format!("curve file {}: {e}", path.display())))?;
        let label = path.display().to_string();
        let curve = ReferenceCurve::read(file, &label)
            .map_err(|e| CliError::usage(format!("curve file {}: {e}", path.display())))?;
        curves.push(curve);
    }

    let search = SearchConfig {
        c_bounds,
        e_bounds,
        ..SearchConfig::default()
    };
    let fit = fit_global(&curves, &search).map_err(|e| CliError::fit(format!("fit failed: {e}")))?;

    let mut report = Vec::new();
    fit.write_report(&mut report)
        .map_err(|e| CliError::fit(e.to_string()))?;
    print!("{}", String::from_utf8_lossy(&report));

    if let Some(prefix) = &cfg.out_prefix {
        let prefix = RunConfig::resolve_out(prefix);
        let params_path = with_suffix(&prefix, ".params.txt");
        write_with_dirs(&params_path, |w| fit.write_params_kv(w))
            .map_err(|e| CliError::fit(format!("writing {}: {e}", params_path.display())))?;
        eprintln!("wrote {}", params_path.display());

        let mut rows: Vec<(f64, f64)> = fit.ea_by_sigma().collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        match EaTable::new(rows) {
            Ok(table) => {
                let ea_path = with_suffix(&prefix, ".ea.txt");
                write_with_dirs(&ea_path, |w| table.write(w))
                    .map_err(|e| CliError::fit(format!("writing {}: {e}", ea_path.display())))?;
                eprintln!("wrote {}", ea_path.display());
            }
            Err(e) => eprintln!("warning: not writing ea table ({e})"),
        }
    }
    Ok(())
}

fn cmd_point(cfg: &RunConfig, rx_lat_deg: f64, rx_lon_deg: f64) -> Result<(), CliError> {
    cfg.validate().map_err(CliError::usage)?;
    let raster = load_raster(cfg)?;
    let table = load_table(cfg)?;
    let params = load_params(cfg)?;
    let tx = transmitter(cfg)?;
    let rx = GeoPoint::new(rx_lat_deg, rx_lon_deg)
        .map_err(|e| CliError::usage(format!("receiver position: {e}")))?;

    let tracer = tracer(cfg, &raster, &table);
    let profile = tracer
        .trace_path(&tx.location, &rx)
        .map_err(|e| CliError::eval(e.to_string()))?;
    let field = profile
        .field_strength(&params, tx.power_offset_db)
        .map_err(|e| CliError::eval(e.to_string()))?;

    println!(
        "r_m={:.3} extra_atten_db={:.6} field_dbuvm={:.6} fallback_steps={}",
        profile.total_r_m, profile.extra_atten_db, field, profile.fallback_steps
    );
    if profile.total_r_m < NEAR_FIELD_M {
        eprintln!(
            "advisory: receiver is {:.0} m from the transmitter; the model is a far-field fit",
            profile.total_r_m
        );
    }
    Ok(())
}

fn cmd_coverage(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate().map_err(CliError::usage)?;
    let raster = load_raster(cfg)?;
    let table = load_table(cfg)?;
    let params = load_params(cfg)?;
    let tx = transmitter(cfg)?;
    let bounds = cfg
        .grid
        .ok_or_else(|| CliError::usage("coverage grid not configured (grid_* keys)"))?;
    let spec = GridSpec::from_bounds(
        bounds.lat_min,
        bounds.lat_max,
        bounds.lon_min,
        bounds.lon_max,
        bounds.cell_deg,
    )
    .map_err(CliError::usage)?;
    let prefix = cfg
        .out_prefix
        .as_deref()
        .ok_or_else(|| CliError::usage("no output prefix configured (out_prefix or --out)"))?;
    let prefix = RunConfig::resolve_out(prefix);

    let formats: Vec<(ExportFormat, &'static str)> = cfg
        .formats
        .iter()
        .map(|name| match name.as_str() {
            "csv" => Ok((ExportFormat::Csv, ".csv")),
            "asc" | "esri_ascii" => Ok((ExportFormat::EsriAscii, ".asc")),
            "png" => Ok((
                ExportFormat::Png {
                    vmin_db: cfg.png_vmin_db,
                    vmax_db: cfg.png_vmax_db,
                },
                ".png",
            )),
            other => Err(CliError::usage(format!("unknown output format {other:?}"))),
        })
        .collect::<Result<_, _>>()?;

    let start = Instant::now();
    let tracer = tracer(cfg, &raster, &table);
    let grid = compute_coverage(&tx, &tracer, &params, spec, true);

    for (format, ext) in formats {
        let bytes = export_grid(&grid, format).map_err(|e| CliError::export(e.to_string()))?;
        let path = with_suffix(&prefix, ext);
        write_with_dirs(&path, |w| w.write_all(&bytes))
            .map_err(|e| CliError::export(format!("writing {}: {e}", path.display())))?;
        eprintln!("wrote {}", path.display());
    }

    let (min, max) = grid
        .finite_range()
        .unwrap_or((f64::NAN, f64::NAN));
    eprintln!(
        "coverage {}x{} cells: field {:.1}..{:.1} dB(uV/m), {} failed, {} near-field, {} fallback steps, {:.2} s",
        spec.n_rows,
        spec.n_cols,
        min,
        max,
        grid.metadata.failed_cells,
        grid.metadata.near_field_cells,
        grid.metadata.fallback_steps,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_ea_table(cfg: &RunConfig, sigmas: &[f64]) -> Result<(), CliError> {
    let table = load_table(cfg)?;
    for &sigma in sigmas {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(CliError::usage(format!(
                "conductivity must be positive, got {sigma}"
            )));
        }
        let ea = table
            .ea_for_sigma(sigma, cfg.policy)
            .map_err(CliError::usage)?;
        let exact = table.ea_for_sigma(sigma, EaPolicy::ExactOnly).is_ok();
        let source = if exact { "table" } else { cfg.policy.name() };
        println!("sigma={sigma} ea_db_per_m={ea:e} source={source}");
    }
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_with_dirs<E: std::fmt::Display>(
    path: &Path,
    write: impl FnOnce(&mut std::fs::File) -> Result<(), E>,
) -> Result<(), String> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| e.to_string())?;
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| e.to_string())?;
    write(&mut file).map_err(|e| e.to_string())
}
