//! Parameter estimation from reference field-strength curves.
//!
//! Reference curves (typically GRWAVE output, one per ground conductivity)
//! are fitted to the model `C - 10 e log10(r) - ea r`. The extra
//! attenuation `ea` of a single curve has a closed-form least-squares
//! solution for fixed `(C, e)` ([`fit_ea_fixed_params`]); the shared
//! constants are found by profile least squares ([`fit_global`]): a coarse
//! grid over `(C, e)` with the per-curve `ea` profiled out analytically at
//! every candidate, then Nelder-Mead refinement from the best grid cell.
//!
//! Everything here is deterministic for a fixed [`SearchConfig`].

use std::io::{BufRead, BufReader, Read, Write};

use thiserror::Error;

use crate::propagation::PropagationParams;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("no curves supplied")]
    NoCurves,
    #[error("non-finite sample in curve {0:?}")]
    NonFiniteInput(String),
    #[error("degenerate curve: sum of squared distances is zero")]
    DegenerateCurve,
    #[error("invalid distance grid: {0}")]
    InvalidGrid(String),
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("invalid search configuration: {0}")]
    InvalidSearch(String),
    #[error("curve file parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for FitError {
    fn from(e: std::io::Error) -> Self {
        FitError::Io(e.to_string())
    }
}

/// A reference field-strength curve for one ground conductivity.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCurve {
    sigma_s_per_m: f64,
    /// (distance_m, field_dbuvm), strictly increasing distance.
    samples: Vec<(f64, f64)>,
    source_label: String,
}

impl ReferenceCurve {
    pub fn new(
        sigma_s_per_m: f64,
        samples: Vec<(f64, f64)>,
        source_label: impl Into<String>,
    ) -> Result<Self, FitError> {
        if !(sigma_s_per_m > 0.0 && sigma_s_per_m.is_finite()) {
            return Err(FitError::InvalidCurve(format!(
                "conductivity must be positive, got {sigma_s_per_m}"
            )));
        }
        if samples.len() < 3 {
            return Err(FitError::InvalidCurve(format!(
                "need at least 3 samples, got {}",
                samples.len()
            )));
        }
        let mut prev = 0.0;
        for &(r, _) in &samples {
            if !(r > prev && r.is_finite()) {
                return Err(FitError::InvalidCurve(format!(
                    "distances must be strictly increasing and positive (saw {r} after {prev})"
                )));
            }
            prev = r;
        }
        Ok(Self {
            sigma_s_per_m,
            samples,
            source_label: source_label.into(),
        })
    }

    pub fn sigma_s_per_m(&self) -> f64 {
        self.sigma_s_per_m
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }

    fn check_finite(&self) -> Result<(), FitError> {
        for &(r, f) in &self.samples {
            if !r.is_finite() || !f.is_finite() {
                return Err(FitError::NonFiniteInput(self.source_label.clone()));
            }
        }
        Ok(())
    }

    /// Parse a curve file: a `# sigma=<S/m> units=<m|km>` header line, then
    /// `r field_dBuVm` rows. km distances are converted to meters on load.
    pub fn read(source: impl Read, fallback_label: &str) -> Result<Self, FitError> {
        let reader = BufReader::new(source);
        let mut sigma: Option<f64> = None;
        let mut unit_scale: Option<f64> = None;
        let mut label = fallback_label.to_string();
        let mut samples = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('#') {
                for token in rest.split_whitespace() {
                    if let Some(v) = token.strip_prefix("sigma=") {
                        sigma = Some(v.parse().map_err(|_| {
                            FitError::Parse(format!("line {}: bad sigma {v:?}", lineno + 1))
                        })?);
                    } else if let Some(v) = token.strip_prefix("units=") {
                        unit_scale = Some(match v {
                            "m" => 1.0,
                            "km" => 1_000.0,
                            other => {
                                return Err(FitError::Parse(format!(
                                    "line {}: units must be m or km, got {other:?}",
                                    lineno + 1
                                )))
                            }
                        });
                    } else if let Some(v) = token.strip_prefix("label=") {
                        label = v.to_string();
                    }
                }
                continue;
            }
            let mut it = trimmed.split_whitespace();
            let parse = |s: Option<&str>| {
                s.and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| {
                    FitError::Parse(format!("line {}: expected `r field`", lineno + 1))
                })
            };
            let r = parse(it.next())?;
            let f = parse(it.next())?;
            samples.push((r, f));
        }
        let sigma =
            sigma.ok_or_else(|| FitError::Parse("missing `# sigma=... units=...` header".into()))?;
        let scale = unit_scale
            .ok_or_else(|| FitError::Parse("missing units= in curve header".into()))?;
        let samples = samples.into_iter().map(|(r, f)| (r * scale, f)).collect();
        Self::new(sigma, samples, label)
    }

    /// Write in the curve file format with distances in meters.
    pub fn write(&self, mut w: impl Write) -> std::io::Result<()> {
        write!(w, "# sigma={} units=m", self.sigma_s_per_m)?;
        if !self.source_label.is_empty() && !self.source_label.contains(char::is_whitespace) {
            write!(w, " label={}", self.source_label)?;
        }
        writeln!(w)?;
        for &(r, f) in &self.samples {
            writeln!(w, "{r} {f}")?;
        }
        Ok(())
    }
}

/// Model field strength used by the fitting side: no minimum-range clamp,
/// just `C - 10 e log10(r) - ea r` for r > 0.
fn model_db(r_m: f64, params: &PropagationParams, ea_db_per_m: f64) -> f64 {
    params.c_dbuvm - 10.0 * params.e_exponent * r_m.log10() - ea_db_per_m * r_m
}

/// Closed-form least-squares `ea` for one curve at fixed `(C, e)`.
///
/// Minimizes `sum_k (C - 10 e log10(r_k) - ea r_k - F_k)^2`; the optimum
/// is `ea = sum_k d_k r_k / sum_k r_k^2` with
/// `d_k = C - 10 e log10(r_k) - F_k`. Returns `(ea, rms at the optimum)`.
pub fn fit_ea_fixed_params(
    curve: &ReferenceCurve,
    params: &PropagationParams,
) -> Result<(f64, f64), FitError> {
    fit_ea_weighted(curve, params, None)
}

/// [`fit_ea_fixed_params`] with optional per-sample weights (default 1).
pub fn fit_ea_weighted(
    curve: &ReferenceCurve,
    params: &PropagationParams,
    weights: Option<&[f64]>,
) -> Result<(f64, f64), FitError> {
    if let Some(w) = weights {
        if w.len() != curve.samples.len() {
            return Err(FitError::InvalidCurve(format!(
                "{} weights for {} samples",
                w.len(),
                curve.samples.len()
            )));
        }
    }
    let weight = |k: usize| weights.map_or(1.0, |w| w[k]);

    let mut num = 0.0;
    let mut den = 0.0;
    for (k, &(r, f)) in curve.samples.iter().enumerate() {
        let d = params.c_dbuvm - 10.0 * params.e_exponent * r.log10() - f;
        num += weight(k) * d * r;
        den += weight(k) * r * r;
    }
    if den == 0.0 {
        return Err(FitError::DegenerateCurve);
    }
    let ea = num / den;

    let mut sse = 0.0;
    let mut wsum = 0.0;
    for (k, &(r, f)) in curve.samples.iter().enumerate() {
        let resid = model_db(r, params, ea) - f;
        sse += weight(k) * resid * resid;
        wsum += weight(k);
    }
    Ok((ea, (sse / wsum).sqrt()))
}

/// Residuals `model(r_k) - F_k` for a curve under explicit parameters.
pub fn evaluate_residuals(
    curve: &ReferenceCurve,
    params: &PropagationParams,
    ea_db_per_m: f64,
) -> Vec<f64> {
    curve
        .samples
        .iter()
        .map(|&(r, f)| model_db(r, params, ea_db_per_m) - f)
        .collect()
}

/// Evaluate the model exactly on a distance grid, producing a curve usable
/// as a fit-recovery oracle.
pub fn synthesize_curve(
    sigma_s_per_m: f64,
    params: &PropagationParams,
    ea_db_per_m: f64,
    r_grid_m: &[f64],
) -> Result<ReferenceCurve, FitError> {
    if r_grid_m.len() < 3 {
        return Err(FitError::InvalidGrid(format!(
            "need at least 3 grid points, got {}",
            r_grid_m.len()
        )));
    }
    let mut prev = 0.0;
    for &r in r_grid_m {
        if !(r > prev && r.is_finite()) {
            return Err(FitError::InvalidGrid(format!(
                "grid must be strictly increasing and positive (saw {r} after {prev})"
            )));
        }
        prev = r;
    }
    let samples = r_grid_m
        .iter()
        .map(|&r| (r, model_db(r, params, ea_db_per_m)))
        .collect();
    ReferenceCurve::new(sigma_s_per_m, samples, format!("synthetic sigma={sigma_s_per_m}"))
}

/// Outer-search configuration for [`fit_global`].
#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub c_bounds: (f64, f64),
    pub e_bounds: (f64, f64),
    /// Coarse grid resolution over C (points including both bounds).
    pub c_grid: usize,
    /// Coarse grid resolution over e.
    pub e_grid: usize,
    /// Relative SSE spread at which Nelder-Mead stops.
    pub nm_rel_tol: f64,
    pub nm_max_iter: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            c_bounds: (150.0, 250.0),
            e_bounds: (1.5, 3.0),
            c_grid: 41,
            e_grid: 31,
            nm_rel_tol: 1e-9,
            nm_max_iter: 600,
        }
    }
}

impl SearchConfig {
    fn validate(&self) -> Result<(), FitError> {
        let ok_bounds = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo < hi;
        if !ok_bounds(self.c_bounds) || !ok_bounds(self.e_bounds) {
            return Err(FitError::InvalidSearch("bounds must be finite with lo < hi".into()));
        }
        if self.e_bounds.0 <= 0.0 || self.e_bounds.1 >= 4.0 {
            return Err(FitError::InvalidSearch(
                "exponent bounds must lie inside (0, 4)".into(),
            ));
        }
        if self.c_grid < 2 || self.e_grid < 2 {
            return Err(FitError::InvalidSearch("grid must have at least 2 points per axis".into()));
        }
        Ok(())
    }
}

/// Fit of one curve within a [`FitResult`].
#[derive(Debug, Clone, PartialEq)]
pub struct CurveFit {
    pub sigma_s_per_m: f64,
    pub ea_db_per_m: f64,
    pub rms_db: f64,
    pub source_label: String,
}

/// Joint fit output: shared `(C, e)`, per-curve `ea` and residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: PropagationParams,
    pub per_curve: Vec<CurveFit>,
    pub pooled_rms_db: f64,
    /// Objective evaluations spent in the outer search (grid + refinement).
    pub iterations: usize,
}

impl FitResult {
    pub fn ea_by_sigma(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.per_curve.iter().map(|c| (c.sigma_s_per_m, c.ea_db_per_m))
    }

    /// Human-readable fit report.
    pub fn write_report(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "fitted parameters")?;
        writeln!(w, "  C = {:.6} dB(uV/m) at 1 m", self.params.c_dbuvm)?;
        writeln!(w, "  e = {:.6}", self.params.e_exponent)?;
        writeln!(w, "  pooled rms = {:.3e} dB over {} curve(s)", self.pooled_rms_db, self.per_curve.len())?;
        writeln!(w, "  outer-search evaluations = {}", self.iterations)?;
        writeln!(w)?;
        writeln!(w, "  {:>12}  {:>13}  {:>11}  source", "sigma [S/m]", "ea [dB/m]", "rms [dB]")?;
        for c in &self.per_curve {
            writeln!(
                w,
                "  {:>12}  {:>13.6e}  {:>11.3e}  {}",
                c.sigma_s_per_m, c.ea_db_per_m, c.rms_db, c.source_label
            )?;
        }
        Ok(())
    }

    /// Machine-readable `key = value` file; `read_params_kv` reads it back.
    pub fn write_params_kv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "c_dbuvm = {}", self.params.c_dbuvm)?;
        writeln!(w, "e_exponent = {}", self.params.e_exponent)?;
        writeln!(w, "pooled_rms_db = {}", self.pooled_rms_db)?;
        writeln!(w, "iterations = {}", self.iterations)?;
        writeln!(w, "curves = {}", self.per_curve.len())?;
        Ok(())
    }
}

/// Read model parameters from a `key = value` file (unknown keys ignored).
pub fn read_params_kv(source: impl Read) -> Result<PropagationParams, FitError> {
    let reader = BufReader::new(source);
    let mut c: Option<f64> = None;
    let mut e: Option<f64> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| {
            FitError::Parse(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let parse = |v: &str| {
            v.trim().parse::<f64>().map_err(|_| {
                FitError::Parse(format!("line {}: bad number {v:?}", lineno + 1))
            })
        };
        match key.trim() {
            "c_dbuvm" => c = Some(parse(value)?),
            "e_exponent" => e = Some(parse(value)?),
            _ => {}
        }
    }
    let c = c.ok_or_else(|| FitError::Parse("missing c_dbuvm".into()))?;
    let e = e.ok_or_else(|| FitError::Parse("missing e_exponent".into()))?;
    PropagationParams::new(c, e).map_err(|err| FitError::Parse(err.to_string()))
}

/// Per-curve data prepared once for the outer search.
struct CurveCache {
    log10_r: Vec<f64>,
    r: Vec<f64>,
    field: Vec<f64>,
    sum_r2: f64,
}

impl CurveCache {
    fn build(curve: &ReferenceCurve) -> Self {
        let r: Vec<f64> = curve.samples.iter().map(|s| s.0).collect();
        let log10_r = r.iter().map(|&r| r.log10()).collect();
        let field = curve.samples.iter().map(|s| s.1).collect();
        let sum_r2 = r.iter().map(|&r| r * r).sum();
        Self { log10_r, r, field, sum_r2 }
    }

    /// SSE with ea profiled out at the given candidate.
    fn profiled_sse(&self, c: f64, e: f64) -> f64 {
        let mut num = 0.0;
        for k in 0..self.r.len() {
            let d = c - 10.0 * e * self.log10_r[k] - self.field[k];
            num += d * self.r[k];
        }
        let ea = num / self.sum_r2;
        let mut sse = 0.0;
        for k in 0..self.r.len() {
            let resid = c - 10.0 * e * self.log10_r[k] - ea * self.r[k] - self.field[k];
            sse += resid * resid;
        }
        sse
    }
}

/// Joint `(C, e)` fit over one or more curves by profile least squares.
///
/// Deterministic: the coarse grid is scanned in ascending `(C, e)` order
/// with ties resolved toward the smaller candidate, and the Nelder-Mead
/// refinement uses no randomness.
pub fn fit_global(curves: &[ReferenceCurve], search: &SearchConfig) -> Result<FitResult, FitError> {
    if curves.is_empty() {
        return Err(FitError::NoCurves);
    }
    search.validate()?;
    for curve in curves {
        curve.check_finite()?;
    }

    let caches: Vec<CurveCache> = curves.iter().map(CurveCache::build).collect();
    let mut evals = 0usize;
    let mut objective = |c: f64, e: f64| -> f64 {
        evals += 1;
        caches.iter().map(|cc| cc.profiled_sse(c, e)).sum()
    };

    // Coarse grid scan.
    let (c_lo, c_hi) = search.c_bounds;
    let (e_lo, e_hi) = search.e_bounds;
    let c_step = (c_hi - c_lo) / (search.c_grid - 1) as f64;
    let e_step = (e_hi - e_lo) / (search.e_grid - 1) as f64;
    let mut best = (c_lo, e_lo);
    let mut best_sse = f64::INFINITY;
    for i in 0..search.c_grid {
        let c = c_lo + i as f64 * c_step;
        for j in 0..search.e_grid {
            let e = e_lo + j as f64 * e_step;
            let sse = objective(c, e);
            if sse < best_sse {
                best_sse = sse;
                best = (c, e);
            }
        }
    }

    // Nelder-Mead refinement, restarted once with a tighter simplex.
    let clamp = |x: (f64, f64)| (x.0.clamp(c_lo, c_hi), x.1.clamp(e_lo, e_hi));
    let mut x = best;
    let mut fx = best_sse;
    for scale in [1.0, 1e-4] {
        let (nx, nfx) = nelder_mead_2d(
            &mut objective,
            x,
            (c_step * scale, e_step * scale),
            clamp,
            search.nm_rel_tol,
            search.nm_max_iter,
        );
        if nfx <= fx {
            x = nx;
            fx = nfx;
        }
    }

    let params = PropagationParams::new(x.0, x.1)
        .map_err(|e| FitError::InvalidSearch(e.to_string()))?;
    let mut per_curve = Vec::with_capacity(curves.len());
    let mut pooled_sse = 0.0;
    let mut pooled_n = 0usize;
    for curve in curves {
        let (ea, rms) = fit_ea_fixed_params(curve, &params)?;
        pooled_sse += rms * rms * curve.samples.len() as f64;
        pooled_n += curve.samples.len();
        per_curve.push(CurveFit {
            sigma_s_per_m: curve.sigma_s_per_m,
            ea_db_per_m: ea,
            rms_db: rms,
            source_label: curve.source_label.clone(),
        });
    }

    Ok(FitResult {
        params,
        per_curve,
        pooled_rms_db: (pooled_sse / pooled_n as f64).sqrt(),
        iterations: evals,
    })
}

/// Minimal 2-D Nelder-Mead with box clamping (reflection 1, expansion 2,
/// contraction 0.5, shrink 0.5).
fn nelder_mead_2d(
    f: &mut impl FnMut(f64, f64) -> f64,
    start: (f64, f64),
    init_scale: (f64, f64),
    clamp: impl Fn((f64, f64)) -> (f64, f64),
    rel_tol: f64,
    max_iter: usize,
) -> ((f64, f64), f64) {
    let mut simplex = [
        clamp(start),
        clamp((start.0 + init_scale.0, start.1)),
        clamp((start.0, start.1 + init_scale.1)),
    ];
    // A clamped vertex can coincide with the start on the boundary; nudge inward.
    if simplex[1] == simplex[0] {
        simplex[1] = clamp((start.0 - init_scale.0, start.1));
    }
    if simplex[2] == simplex[0] {
        simplex[2] = clamp((start.0, start.1 - init_scale.1));
    }
    let mut values = simplex.map(|(c, e)| f(c, e));

    for _ in 0..max_iter {
        // order: best, middle, worst
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let (b, m, w) = (idx[0], idx[1], idx[2]);

        let spread = values[w] - values[b];
        if spread <= rel_tol * values[b].abs() + 1e-18 {
            break;
        }
        let diam = |a: (f64, f64), c: (f64, f64)| (a.0 - c.0).abs().max((a.1 - c.1).abs());
        if diam(simplex[w], simplex[b]).max(diam(simplex[m], simplex[b])) <= 1e-13 {
            break;
        }

        let centroid = (
            (simplex[b].0 + simplex[m].0) / 2.0,
            (simplex[b].1 + simplex[m].1) / 2.0,
        );
        let reflect = clamp((
            centroid.0 + (centroid.0 - simplex[w].0),
            centroid.1 + (centroid.1 - simplex[w].1),
        ));
        let f_r = f(reflect.0, reflect.1);

        if f_r < values[b] {
            let expand = clamp((
                centroid.0 + 2.0 * (centroid.0 - simplex[w].0),
                centroid.1 + 2.0 * (centroid.1 - simplex[w].1),
            ));
            let f_e = f(expand.0, expand.1);
            if f_e < f_r {
                simplex[w] = expand;
                values[w] = f_e;
            } else {
                simplex[w] = reflect;
                values[w] = f_r;
            }
        } else if f_r < values[m] {
            simplex[w] = reflect;
            values[w] = f_r;
        } else {
            let contract = clamp((
                centroid.0 + 0.5 * (simplex[w].0 - centroid.0),
                centroid.1 + 0.5 * (simplex[w].1 - centroid.1),
            ));
            let f_c = f(contract.0, contract.1);
            if f_c < values[w] {
                simplex[w] = contract;
                values[w] = f_c;
            } else {
                // shrink toward the best vertex
                for i in [m, w] {
                    simplex[i] = clamp((
                        simplex[b].0 + 0.5 * (simplex[i].0 - simplex[b].0),
                        simplex[b].1 + 0.5 * (simplex[i].1 - simplex[b].1),
                    ));
                    values[i] = f(simplex[i].0, simplex[i].1);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..3 {
        if values[i] < values[best] {
            best = i;
        }
    }
    (simplex[best], values[best])
}
