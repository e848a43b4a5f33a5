//! Acceptance suite: every release-gating check in one place, one test per
//! criterion. Each test prints a `PASS criterion N` line (visible with
//! `cargo test --test acceptance -- --nocapture`) and pins the tolerance
//! and runtime budget it must hold.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use groundwave::conductivity::{ConductivityRaster, EaPolicy, EaTable};
use groundwave::coverage::{compute_coverage, export_grid, read_exported_ascii, ExportFormat, GridSpec};
use groundwave::fitting::{fit_global, synthesize_curve, ReferenceCurve, SearchConfig};
use groundwave::geo::{great_circle_distance, intermediate_point, GeoPoint, EARTH_RADIUS_M};
use groundwave::propagation::{field_strength_homogeneous, PathTracer, PropagationParams, Transmitter};
use groundwave::raster::RasterFormat;

const MF_EA_ROWS: [(f64, f64); 7] = [
    (5e-4, 2.24e-4),
    (1e-3, 1.64e-4),
    (2e-3, 1.04e-4),
    (5e-3, 4.60e-5),
    (8e-3, 2.89e-5),
    (1e-2, 2.37e-5),
    (4.0, -5.40e-7),
];

fn pt(lat: f64, lon: f64) -> GeoPoint {
    GeoPoint::new(lat, lon).unwrap()
}

fn uniform_raster(sigma: f64, half_span_deg: usize, cell_deg: f64) -> ConductivityRaster {
    let n = (2 * half_span_deg) as f64 / cell_deg;
    let n = n.round() as usize;
    let row = format!("{}\n", vec![sigma.to_string(); n].join(" "));
    let asc = format!(
        "ncols {n}\nnrows {n}\nxllcorner -{half_span_deg}\nyllcorner -{half_span_deg}\ncellsize {cell_deg}\nNODATA_value -9999\n{}",
        row.repeat(n)
    );
    ConductivityRaster::read(asc.as_bytes(), RasterFormat::EsriAscii).unwrap()
}

/// Criterion 1: the shipped attenuation table returns all seven
/// (conductivity, ea) pairs exactly as stored. Tolerance 0, runtime < 1 s.
#[test]
fn c1_ea_table_regression() {
    let start = Instant::now();
    let table = EaTable::mf_rmode();
    for (sigma, ea) in MF_EA_ROWS {
        let got = table.ea_for_sigma(sigma, EaPolicy::ExactOnly).unwrap();
        assert_eq!(got, ea, "sigma {sigma}: expected {ea}, got {got}");
    }
    assert!(start.elapsed().as_secs_f64() < 1.0);
    println!("PASS criterion 1: ea table exact for all 7 conductivities");
}

/// Criterion 2: closed-form point check, C=195.876, e=2.046, ea=4.60e-5 at
/// 100 km -> 88.976 dB(uV/m) +/- 1e-3. Runtime < 1 s.
#[test]
fn c2_closed_form_point_check() {
    let start = Instant::now();
    let f = field_strength_homogeneous(1e5, &PropagationParams::MF_RMODE, 4.60e-5).unwrap();
    assert!((f - 88.976).abs() <= 1e-3, "got {f}");
    assert!(start.elapsed().as_secs_f64() < 1.0);
    println!("PASS criterion 2: field at 100 km = {f:.6} dB(uV/m) (88.976 +/- 1e-3)");
}

/// Criterion 3: the eLoran preset reproduces
/// 189.353 - 10 log10(r^2) - ea r at 1, 10, 100, 1000 km to 1e-9 dB.
#[test]
fn c3_eloran_preset_regression() {
    let ea = 1.64e-4;
    for r in [1e3, 1e4, 1e5, 1e6] {
        let f = field_strength_homogeneous(r, &PropagationParams::ELORAN, ea).unwrap();
        let reference = 189.353 - 10.0 * (r * r).log10() - ea * r;
        assert!(
            (f - reference).abs() <= 1e-9,
            "r={r}: preset {f} vs reference {reference}"
        );
    }
    println!("PASS criterion 3: eLoran preset matches inverse-square form to 1e-9 dB");
}

/// Criterion 4: fit recovery. Seven curves synthesized from the shipped
/// (sigma, ea) rows with the MF constants over 10..400 km recover C within
/// 0.01, e within 0.001, every ea within 1e-8 dB/m, pooled rms <= 1e-6 dB.
/// Runtime < 30 s.
#[test]
fn c4_fit_recovery() {
    let start = Instant::now();
    let grid: Vec<f64> = (1..=40).map(|k| k as f64 * 10e3).collect();
    let curves: Vec<ReferenceCurve> = MF_EA_ROWS
        .iter()
        .map(|&(sigma, ea)| {
            synthesize_curve(sigma, &PropagationParams::MF_RMODE, ea, &grid).unwrap()
        })
        .collect();

    let fit = fit_global(&curves, &SearchConfig::default()).unwrap();
    let dc = (fit.params.c_dbuvm - 195.876).abs();
    let de = (fit.params.e_exponent - 2.046).abs();
    assert!(dc <= 0.01, "C recovered to {} (delta {dc})", fit.params.c_dbuvm);
    assert!(de <= 0.001, "e recovered to {} (delta {de})", fit.params.e_exponent);
    for (curve_fit, &(sigma, ea)) in fit.per_curve.iter().zip(&MF_EA_ROWS) {
        let dea = (curve_fit.ea_db_per_m - ea).abs();
        assert!(dea <= 1e-8, "sigma {sigma}: ea {} vs {ea}", curve_fit.ea_db_per_m);
    }
    assert!(fit.pooled_rms_db <= 1e-6, "pooled rms {}", fit.pooled_rms_db);
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "fit took {elapsed:.1} s");
    println!(
        "PASS criterion 4: recovered C={:.6}, e={:.6}, 7 ea values to 1e-8, pooled rms {:.2e} dB in {elapsed:.2} s",
        fit.params.c_dbuvm, fit.params.e_exponent, fit.pooled_rms_db
    );
}

/// Criterion 5: on a uniform raster the traced path agrees with the
/// closed form to 1e-6 dB for 100 seeded-random pairs with r in
/// [1 km, 1000 km]. Runtime < 10 s.
#[test]
fn c5_homogeneous_equivalence() {
    let start = Instant::now();
    let raster = uniform_raster(0.005, 15, 0.5);
    let table = EaTable::mf_rmode();
    // no fallback: any accidental off-raster step would fail loudly
    let tracer = PathTracer::new(&raster, &table).with_fallback_sigma(None);
    let params = PropagationParams::MF_RMODE;
    let ea = table.ea_for_sigma(0.005, EaPolicy::ExactOnly).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(20_240_517);
    let mut checked = 0;
    while checked < 100 {
        let tx_loc = pt(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
        let probe = pt(rng.random_range(-14.0..14.0), rng.random_range(-14.0..14.0));
        let d_probe = great_circle_distance(&tx_loc, &probe);
        let r_target = rng.random_range(1e3..1e6);
        if d_probe < r_target {
            continue;
        }
        let rx = intermediate_point(&tx_loc, &probe, r_target / d_probe).unwrap();
        let r = great_circle_distance(&tx_loc, &rx);

        let tx = Transmitter::new("tx", tx_loc, 0.0);
        let via_path = tracer.field_strength_path(&tx, &rx, &params).unwrap();
        let closed_form = field_strength_homogeneous(r, &params, ea).unwrap();
        assert!(
            (via_path - closed_form).abs() <= 1e-6,
            "pair {checked}: path {via_path} vs closed form {closed_form} at r={r}"
        );
        checked += 1;
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "equivalence check took {elapsed:.1} s");
    println!("PASS criterion 5: path = closed form within 1e-6 dB on 100 random pairs ({elapsed:.2} s)");
}

/// Criterion 6: two-zone path oracle. A 200 km equatorial path crossing
/// from 0.005 S/m land to 4 S/m sea at its midpoint accumulates
/// 4.60e-5*1e5 + (-5.40e-7)*1e5 = 4.546 dB of extra attenuation,
/// +/- 0.02 dB at the default step. Runtime < 5 s.
#[test]
fn c6_two_zone_path_oracle() {
    let start = Instant::now();
    let mut rows = String::new();
    for _ in 0..8 {
        rows.push_str(&format!(
            "{} {}\n",
            vec!["0.005"; 36].join(" "),
            vec!["4"; 36].join(" ")
        ));
    }
    let asc = format!(
        "ncols 72\nnrows 8\nxllcorner -0.9\nyllcorner -0.1\ncellsize 0.025\nNODATA_value -9999\n{rows}"
    );
    let raster = ConductivityRaster::read(asc.as_bytes(), RasterFormat::EsriAscii).unwrap();
    let table = EaTable::mf_rmode();
    let tracer = PathTracer::new(&raster, &table);

    let half_deg = (1e5 / EARTH_RADIUS_M).to_degrees();
    let profile = tracer
        .trace_path(&pt(0.0, -half_deg), &pt(0.0, half_deg))
        .unwrap();
    assert!(
        (profile.extra_atten_db - 4.546).abs() <= 0.02,
        "extra attenuation {} dB, expected 4.546 +/- 0.02",
        profile.extra_atten_db
    );
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 5.0);
    println!(
        "PASS criterion 6: two-zone extra attenuation {:.4} dB (4.546 +/- 0.02)",
        profile.extra_atten_db
    );
}

/// Criterion 7: on heterogeneous ground, field strength does not decrease
/// uniformly with distance: with poor ground on one side of the
/// transmitter and sea water on the other, some nearer cell is weaker
/// than some farther cell. Runtime < 10 s.
#[test]
fn c7_heterogeneity_breaks_monotonicity() {
    let start = Instant::now();
    let mut rows = String::new();
    for _ in 0..8 {
        rows.push_str(&format!(
            "{} {}\n",
            vec!["5e-4"; 20].join(" "),
            vec!["4"; 20].join(" ")
        ));
    }
    let asc = format!(
        "ncols 40\nnrows 8\nxllcorner -5\nyllcorner -1\ncellsize 0.25\nNODATA_value -9999\n{rows}"
    );
    let raster = ConductivityRaster::read(asc.as_bytes(), RasterFormat::EsriAscii).unwrap();
    let table = EaTable::mf_rmode();
    let tracer = PathTracer::new(&raster, &table);
    let tx = Transmitter::new("tx", pt(0.0, 0.0), 0.0);
    let spec = GridSpec::new(-0.25, -4.0, 0.5, 1, 16).unwrap();
    let grid = compute_coverage(&tx, &tracer, &PropagationParams::MF_RMODE, spec, true);

    let cells: Vec<(f64, f64)> = (0..16)
        .map(|i| {
            let c = grid.spec.cell_center(0, i);
            (great_circle_distance(&tx.location, &c), grid.values[i])
        })
        .collect();
    let mut witness = None;
    for a in &cells {
        for b in &cells {
            if a.0 < b.0 - 1.0 && a.1 < b.1 {
                witness = Some((*a, *b));
            }
        }
    }
    let (near, far) = witness.expect("no nearer-but-weaker cell pair found");
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0);
    println!(
        "PASS criterion 7: cell at {:.0} km is {:.1} dB, farther cell at {:.0} km is {:.1} dB",
        near.0 / 1e3,
        near.1,
        far.0 / 1e3,
        far.1
    );
}

/// Criterion 8: a 200x200 coverage sweep is bit-identical between the
/// sequential and parallel paths, and exports round-trip. Runtime < 30 s.
#[test]
fn c8_determinism_and_parallel_equivalence() {
    let start = Instant::now();
    let raster = uniform_raster(0.005, 10, 1.0);
    let table = EaTable::mf_rmode();
    let tracer = PathTracer::new(&raster, &table);
    let tx = Transmitter::new("tx", pt(0.1, 0.2), 0.0);
    let spec = GridSpec::new(-5.0, -5.0, 0.05, 200, 200).unwrap();
    let params = PropagationParams::MF_RMODE;

    let sequential = compute_coverage(&tx, &tracer, &params, spec, false);
    let parallel = compute_coverage(&tx, &tracer, &params, spec, true);
    assert_eq!(sequential.values.len(), 200 * 200);
    for (i, (a, b)) in sequential.values.iter().zip(&parallel.values).enumerate() {
        assert_eq!(a.to_bits(), b.to_bits(), "cell {i} differs");
    }
    assert_eq!(sequential.metadata, parallel.metadata);

    // identical inputs -> bit-identical exports
    for format in [ExportFormat::Csv, ExportFormat::EsriAscii, ExportFormat::png_default()] {
        let a = export_grid(&sequential, format).unwrap();
        let b = export_grid(&parallel, format).unwrap();
        assert_eq!(a, b);
    }
    // ESRI ASCII round-trips every value bit-exactly
    let ascii = export_grid(&sequential, ExportFormat::EsriAscii).unwrap();
    let values = read_exported_ascii(&ascii).unwrap();
    for (a, b) in sequential.values.iter().zip(&values) {
        assert_eq!(a.to_bits(), b.to_bits());
    }

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "sweep took {elapsed:.1} s");
    println!("PASS criterion 8: 200x200 sweep deterministic and parallel-equivalent ({elapsed:.2} s)");
}
