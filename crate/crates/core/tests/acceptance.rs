//! End-to-end acceptance criteria. Each criterion prints one line to the real
//! stdout (bypassing the test harness capture) and the test fails if any
//! criterion fails. `ROUGHFLOW_CRITERIA=2,5` restricts the run.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use roughflow::brownian::sample_path;
use roughflow::cli::{self, Command, Config};
use roughflow::decomposition::{compose, identity_suite, lagrangian_flow, FlowOptions, IdentityConfig, PointSet};
use roughflow::fields::MollifierSpec;
use roughflow::flow_analysis::{
    histogram_check, inverse_experiment, pushforward_density_at_images, stability_experiment, InverseConfig,
    PushforwardDensity, StabilityConfig,
};
use roughflow::linalg::dist;
use roughflow::maximal::{
    approx_diff_check, calibrate, lipschitz_set, pointwise_sobolev_check, CalibrationConfig, LipschitzConfig, RadiusLadder,
    ScalarGrid, FROZEN_CONSTANTS,
};
use roughflow::scenario::{additive_linear_solution, scenario, CATALOG};
use roughflow::sde::{direct_flow, DiffusionChart};
use roughflow::transport::{transport_experiment, TransportConfig};
use roughflow::Result;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { passed, detail })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Least-squares slope of `log y` against `log x`.
fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

fn identity_suite_criterion() -> Result<Verdict> {
    let start = Instant::now();
    let r = identity_suite(&IdentityConfig::default())?;
    let secs = start.elapsed().as_secs_f64();
    verdict(
        r.passed && secs < 5.0,
        format!(
            "chain {:.1e}, det-grad {:.1e}, jacobi {:.1e}, liouville {:.1e}, density {:.1e} (≤ 1e-3); {secs:.1}s (< 5s)",
            r.chain_rule.max_residual,
            r.det_identity.gradient_residual,
            r.det_identity.jacobi_residual,
            r.liouville_residual,
            r.density_residual
        ),
    )
}

fn decomposition_criterion() -> Result<Verdict> {
    let start = Instant::now();
    let s = scenario("additive-linear")?;
    let drift = s.drift_field(None, &MollifierSpec::default())?;
    let points = PointSet::ball_grid(2, 1.0, 4);
    let levels = 5;
    let mut errors = vec![Vec::new(); levels];
    for seed in 0..32u64 {
        let mut path = sample_path(seed, s.m(), 1.0, 1.0 / 64.0)?;
        let mut paths = Vec::new();
        for _ in 0..levels {
            paths.push(path.clone());
            path = path.refine();
        }
        // The reference is the closed form on the path refined to 2⁻¹⁴.
        let mut fine = paths[levels - 1].clone();
        for _ in 0..4 {
            fine = fine.refine();
        }
        let reference: Vec<[f64; 2]> = (0..points.len()).map(|p| additive_linear_solution(points.point(p), &fine)).collect();
        for (l, path) in paths.iter().enumerate() {
            let chart = DiffusionChart::new(s.diffusion(), Arc::new(path.clone()))?;
            let opts = FlowOptions { stride: path.steps(), density: false, ..Default::default() };
            let x = compose(&chart, &lagrangian_flow(&points, &chart, drift.as_ref(), &opts)?)?;
            let last = x.last();
            let err = (0..points.len()).map(|p| dist(x.y_at(p, last), &reference[p])).fold(0.0, f64::max);
            errors[l].push(err);
        }
    }
    let means: Vec<f64> = errors.iter().map(|e| mean(e)).collect();
    let hs: Vec<f64> = (0..levels).map(|l| (1.0 / 64.0) / 2f64.powi(l as i32)).collect();
    let order = log_slope(&hs, &means);
    let secs = start.elapsed().as_secs_f64();
    let finest = means[levels - 1];
    verdict(
        finest <= 5e-3 && order >= 0.8 && secs < 60.0,
        format!("error at h=2^-10 {finest:.2e} (≤ 5e-3), strong order {order:.2} (≥ 0.8); {secs:.1}s (< 60s)"),
    )
}

fn oracle_equivalence_criterion() -> Result<Verdict> {
    let start = Instant::now();
    let s = scenario("smooth-nonlinear")?;
    let drift = s.drift_field(None, &MollifierSpec::default())?;
    let dif = s.diffusion();
    let points = PointSet::ball_grid(2, 1.0, 6);
    let mut gaps = [Vec::new(), Vec::new()];
    for seed in 0..2u64 {
        let coarse = sample_path(seed, s.m(), 1.0, 1e-3)?;
        for (l, path) in [coarse.clone(), coarse.refine()].iter().enumerate() {
            let chart = DiffusionChart::new(dif.clone(), Arc::new(path.clone()))?;
            let opts = FlowOptions { stride: path.steps(), density: false, ..Default::default() };
            let x = compose(&chart, &lagrangian_flow(&points, &chart, drift.as_ref(), &opts)?)?;
            let last = x.last();
            let mut gap: f64 = 0.0;
            for p in 0..points.len() {
                let direct = direct_flow(points.point(p), path, &dif, drift.as_ref(), path.steps())?;
                gap = gap.max(dist(x.y_at(p, last), direct.last_state()));
            }
            gaps[l].push(gap);
        }
    }
    let worst = gaps[0].iter().copied().fold(0.0, f64::max);
    let ratio = mean(&gaps[1]) / mean(&gaps[0]);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-2 && ratio <= 0.6 && secs < 120.0,
        format!("sup gap at h=1e-3 {worst:.2e} (≤ 1e-2), halved-step ratio {ratio:.2} (≤ 0.6); {secs:.1}s (< 120s)"),
    )
}

fn quasi_invariance_criterion() -> Result<Verdict> {
    // Divergence-free: the density formula at grid images and at inverted points.
    let mut unit_gap: f64 = 0.0;
    for (name, level) in [("rotation-bv", Some(16)), ("sobolev-log", Some(16))] {
        let s = scenario(name)?;
        let drift = s.drift_field(level, &MollifierSpec::default())?;
        let chart = DiffusionChart::new(s.diffusion(), Arc::new(sample_path(3, s.m(), 0.5, 1.0 / 128.0)?))?;
        let flow = lagrangian_flow(&PointSet::ball_grid(2, 1.0, 10), &chart, drift.as_ref(), &FlowOptions::default())?;
        let composed = compose(&chart, &flow)?;
        let last = flow.last();
        for v in pushforward_density_at_images(&composed, last) {
            unit_gap = unit_gap.max((v - 1.0).abs());
        }
        let q = PushforwardDensity::new(&chart, drift.as_ref(), &flow, last)?;
        for p in (0..composed.points.len()).step_by(9) {
            unit_gap = unit_gap.max((q.at(composed.y_at(p, last))? - 1.0).abs());
        }
    }
    // Contraction A₀ = −x in d = 2: density e^{2t}.
    let s = scenario("ode-only")?;
    let drift = s.drift_field(None, &MollifierSpec::default())?;
    let chart = DiffusionChart::new(s.diffusion(), Arc::new(sample_path(0, 0, 0.5, 1.0 / 64.0)?))?;
    let flow = lagrangian_flow(&PointSet::ball_grid(2, 1.0, 8), &chart, drift.as_ref(), &FlowOptions::default())?;
    let q = PushforwardDensity::new(&chart, drift.as_ref(), &flow, flow.last())?;
    let mut contraction_gap: f64 = 0.0;
    for y in [[0.0, 0.0], [0.2, -0.1], [-0.3, 0.25], [0.4, 0.1]] {
        contraction_gap = contraction_gap.max((q.at(&y)? - 1f64.exp()).abs());
    }
    // Histogram of images against bin integrals of the density.
    let s = scenario("smooth-nonlinear")?;
    let drift = s.drift_field(None, &MollifierSpec::default())?;
    let chart = DiffusionChart::new(s.diffusion(), Arc::new(sample_path(5, s.m(), 0.5, 1.0 / 32.0)?))?;
    let flow = lagrangian_flow(&PointSet::ball_grid(2, 1.5, 160), &chart, drift.as_ref(), &FlowOptions::default())?;
    let composed = compose(&chart, &flow)?;
    let last = flow.last();
    let (mut c, mut wsum) = ([0.0; 2], 0.0);
    for p in 0..composed.points.len() {
        let (x, w) = (composed.y_at(p, last), composed.points.weights[p]);
        c[0] += w * x[0];
        c[1] += w * x[1];
        wsum += w;
    }
    let c = [c[0] / wsum, c[1] / wsum];
    let q = PushforwardDensity::new(&chart, drift.as_ref(), &flow, last)?;
    let hist = histogram_check(&composed, last, [c[0] - 0.5, c[1] - 0.5], [c[0] + 0.5, c[1] + 0.5], 8, 3, |y| q.at(y))?;
    verdict(
        unit_gap <= 1e-2 && contraction_gap <= 1e-3 && hist.relative_l1 <= 0.1,
        format!(
            "divergence-free |ρ−1| {unit_gap:.1e} (≤ 1e-2), contraction |ρ−e| {contraction_gap:.1e} (≤ 1e-3), histogram L¹ {:.3} (≤ 0.1)",
            hist.relative_l1
        ),
    )
}

fn inverse_flow_criterion() -> Result<Verdict> {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in CATALOG {
        let r = inverse_experiment(&InverseConfig { scenario: name.into(), ..Default::default() })?;
        ok &= r.passed;
        let sigma = r.sigma_max_deviation.map_or(String::new(), |v| format!(", |σ−1| {v:.0e}"));
        parts.push(format!("{name} {:.1e}{}{sigma}", r.medians[0], if r.decreasing { "↓" } else { " not decreasing" }));
    }
    verdict(ok, format!("median roundtrip at h=1e-3 (≤ 1e-2): {}", parts.join("; ")))
}

fn stability_criterion() -> Result<Verdict> {
    let start = Instant::now();
    let r = stability_experiment(&StabilityConfig::default())?;
    let secs = start.elapsed().as_secs_f64();
    let ok = r.monotone && r.halved && r.monotone_p.values().all(|&v| v) && r.halved_p.values().all(|&v| v);
    let d1: Vec<String> = r.d1.iter().map(|v| format!("{v:.2e}")).collect();
    verdict(
        ok && secs < 600.0,
        format!(
            "D_n = [{}], monotone {}, D_32/D_4 {:.2} (≤ 0.5), p=2 monotone {} halved {}; {secs:.0}s (< 600s)",
            d1.join(", "),
            r.monotone,
            r.d1[r.d1.len() - 1] / r.d1[0],
            r.monotone_p.values().all(|&v| v),
            r.halved_p.values().all(|&v| v)
        ),
    )
}

fn transport_criterion() -> Result<Verdict> {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["additive-linear", "ode-only"] {
        let cfg = TransportConfig { scenario: name.into(), ..Default::default() };
        let r = transport_experiment(&cfg)?;
        let b = &r.base;
        let within = b.ito_mean <= 5e-2 && b.random_transport_mean <= 5e-2 && b.density_mean <= 5e-2;
        ok &= within && r.halving == Some(true) && r.constant_residual == 0.0;
        parts.push(format!(
            "{name}: itô {:.1e}, random transport {:.1e}, density {:.1e}, ratios {:.2}/{:.2}, constant {:e}",
            b.ito_mean,
            b.random_transport_mean,
            b.density_mean,
            r.ito_ratio.unwrap_or(f64::NAN),
            r.random_transport_ratio.unwrap_or(f64::NAN),
            r.constant_residual
        ));
    }
    verdict(ok, parts.join("; "))
}

fn maximal_criterion() -> Result<Verdict> {
    let start = Instant::now();
    let cal = calibrate(&CalibrationConfig::default())?;
    let stable = (0.67..=1.5).contains(&cal.stability_ratio);
    let c = FROZEN_CONSTANTS.pointwise;
    let linear = ScalarGrid::centered(2.0, 129, |x| 0.6 * x[0] - 0.8 * x[1])?;
    let cone = ScalarGrid::centered(2.0, 129, |x| (x[0] * x[0] + x[1] * x[1]).sqrt())?;
    let pl = pointwise_sobolev_check(&linear, None, 1.0, 1.0, 10_000, 1, c, RadiusLadder::Shells)?;
    let pc = pointwise_sobolev_check(&cone, None, 1.0, 1.0, 10_000, 2, c, RadiusLadder::Shells)?;
    let set = lipschitz_set(&LipschitzConfig::default())?;
    let diff = approx_diff_check(&set, set.flow.last())?;
    let r = &set.report;
    let secs = start.elapsed().as_secs_f64();
    verdict(
        stable && pl.passed && pc.passed && r.measure_ok && r.lipschitz_ok && diff.fraction >= 0.9 && secs < 600.0,
        format!(
            "calibration ratio {:.3} (∈ [0.67, 1.5]), pointwise linear {:.3} / |x| {:.3} (≤ {c:.3}), excluded {:.2e} (≤ ε {:.2e} + cell), \
             log Lip {:.2} (≤ {:.3e}), stabilized {:.1}% (≥ 90%); {secs:.0}s (< 600s)",
            cal.stability_ratio,
            pl.max_ratio,
            pc.max_ratio,
            r.excluded_measure,
            r.eps,
            r.empirical_lipschitz.ln(),
            r.log_lipschitz_bound,
            100.0 * diff.fraction
        ),
    )
}

fn reproducibility_criterion() -> Result<Verdict> {
    let cfg = Config::from_json(
        r#"{ "seed_base": 7,
             "simulate": { "paths": 2, "grid": 4 },
             "invert": { "scenario": "additive-linear", "h": 0.0078125, "halvings": 2 },
             "transport": { "paths": 2, "cells": 9, "refine": false },
             "identities": { "grid": 9, "liouville_h": 0.0078125 },
             "calibrate": { "grid": 33, "catalog_size": 4, "pairs": 500 } }"#,
    )?;
    let dirs = [tempfile::tempdir().expect("tempdir"), tempfile::tempdir().expect("tempdir")];
    let commands = [Command::Simulate, Command::Invert, Command::Transport, Command::Identities, Command::Calibrate];
    let mut identical = true;
    for command in commands {
        let runs: Vec<cli::Outcome> = dirs.iter().map(|d| cli::run(command, &cfg, d.path())).collect::<Result<_>>()?;
        identical &= runs[0].summary == runs[1].summary;
        for (a, b) in runs[0].files.iter().zip(&runs[1].files) {
            if a.to_string_lossy().ends_with(".timings.json") {
                continue;
            }
            identical &= std::fs::read(a)? == std::fs::read(b)?;
        }
    }
    verdict(identical, format!("{} commands rerun: summaries and tables byte-identical = {identical}", commands.len()))
}

#[test]
fn acceptance_criteria() {
    let criteria: [(u32, &str, fn() -> Result<Verdict>); 9] = [
        (1, "identity suite", identity_suite_criterion),
        (2, "decomposition consistency", decomposition_criterion),
        (3, "oracle equivalence", oracle_equivalence_criterion),
        (4, "quasi-invariance", quasi_invariance_criterion),
        (5, "inverse flow", inverse_flow_criterion),
        (6, "stability", stability_criterion),
        (7, "transport", transport_criterion),
        (8, "maximal functions", maximal_criterion),
        (9, "reproducibility", reproducibility_criterion),
    ];
    let selected: Option<Vec<u32>> = std::env::var("ROUGHFLOW_CRITERIA")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if selected.as_ref().is_some_and(|s| !s.contains(&id)) {
            continue;
        }
        let line = match run() {
            Ok(v) => {
                if !v.passed {
                    failed.push(id);
                }
                format!("criterion {id} ({name}): {} | {}", if v.passed { "PASS" } else { "FAIL" }, v.detail)
            }
            Err(e) => {
                failed.push(id);
                format!("criterion {id} ({name}): FAIL | error: {e}")
            }
        };
        let mut out = std::io::stdout().lock();
        writeln!(out, "{line}").unwrap();
        out.flush().unwrap();
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
