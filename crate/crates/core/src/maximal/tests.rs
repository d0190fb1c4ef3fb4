use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::brownian::sample_path;
use crate::decomposition::transformed_drift;
use crate::scenario::scenario;
use crate::sde::DiffusionChart;

fn indicator_unit_disc(x: &[f64; 2]) -> f64 {
    if x[0] * x[0] + x[1] * x[1] <= 1.0 {
        1.0
    } else {
        0.0
    }
}

fn nearest(grid: &ScalarGrid, x: [f64; 2]) -> usize {
    let i = ((x[0] - grid.lo[0]) / grid.spacing).round() as usize;
    let j = ((x[1] - grid.lo[1]) / grid.spacing).round() as usize;
    grid.index(i, j)
}

/// Fraction of uniform samples of `B(c, r)` that land in the unit disc.
fn disc_overlap(c: [f64; 2], r: f64, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut hits = 0;
    for _ in 0..samples {
        let (rad, ang) = (r * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..std::f64::consts::TAU));
        if indicator_unit_disc(&[c[0] + rad * ang.cos(), c[1] + rad * ang.sin()]) == 1.0 {
            hits += 1;
        }
    }
    hits as f64 / samples as f64
}

fn small_lipschitz(name: &str) -> LipschitzConfig {
    LipschitzConfig { scenario: name.into(), grid: 65, gradient_grid: 97, h: 1.0 / 64.0, times: 4, ..Default::default() }
}

#[test]
fn lens_ratio_matches_sampled_overlap() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 1_000_000;
    let mut hits = 0;
    for _ in 0..n {
        let (rad, ang) = (rng.gen::<f64>().sqrt(), rng.gen_range(0.0..std::f64::consts::TAU));
        let (x, y) = (rad * ang.cos(), rad * ang.sin());
        if (x - 1.0).powi(2) + y * y <= 1.0 {
            hits += 1;
        }
    }
    let sampled = n as f64 / hits as f64;
    assert!((lens_ratio(2).unwrap() - sampled).abs() < 1e-2, "{sampled}");
    assert_eq!(lens_ratio(1).unwrap(), 2.0);
    assert!(lens_ratio(5).is_err());
}

#[test]
fn stencil_prefixes_match_brute_force_counts() {
    let s = BallStencil::new(0.1, 1.0);
    for r in [0.05, 0.1, 0.25, 0.5, 0.73, 1.0] {
        let mut count = 0;
        for i in -10i32..=10 {
            for j in -10i32..=10 {
                if (i * i + j * j) as f64 * 0.01 <= r * r * (1.0 + 1e-9) {
                    count += 1;
                }
            }
        }
        assert_eq!(s.prefix(r), count, "r={r}");
    }
    let shells = s.shells();
    assert_eq!(*shells.last().unwrap(), s.offsets.len());
    assert!(shells.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn bilinear_interpolation_is_exact_for_affine_data() {
    let g = ScalarGrid::centered(1.0, 11, |x| 2.0 * x[0] - 0.5 * x[1] + 0.3).unwrap();
    for x in [[0.13, -0.71], [0.99, 0.99], [-1.0, 0.5]] {
        let v = g.interpolate(&x).unwrap();
        assert!((v - (2.0 * x[0] - 0.5 * x[1] + 0.3)).abs() < 1e-12);
    }
    assert!(g.interpolate(&[1.2, 0.0]).is_none());
}

#[test]
fn constant_function_is_its_own_maximal_function() {
    let g = ScalarGrid::centered(2.0, 41, |_| 3.5).unwrap();
    for ladder in [RadiusLadder::Uniform(4), RadiusLadder::Shells, RadiusLadder::Geometric { count: 6, min: 0.1 }] {
        let m = local_max_on_ball(&g, 1.0, 1.0, ladder).unwrap();
        let inner = g.ball_nodes(1.0);
        assert!(inner.iter().all(|&i| (m.values[i] - 3.5).abs() < 1e-12));
    }
}

#[test]
fn unit_disc_indicator_has_full_average_inside() {
    let g = ScalarGrid::centered(2.0, 81, indicator_unit_disc).unwrap();
    let v = max_function_at(&g, nearest(&g, [0.0, 0.0]), 0.9, RadiusLadder::Uniform(8)).unwrap();
    assert_eq!(v, 1.0);
}

#[test]
fn far_point_matches_sampled_disc_overlap() {
    // x = (2, 0), R = 2: the averages over B(x, r_j) are overlap fractions
    // with the unit disc.
    let g = ScalarGrid::centered(4.0, 1025, indicator_unit_disc).unwrap();
    let k = 8;
    let grid_value = max_function_at(&g, nearest(&g, [2.0, 0.0]), 2.0, RadiusLadder::Uniform(k)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sampled = (1..=k)
        .map(|j| disc_overlap([2.0, 0.0], 2.0 * j as f64 / k as f64, 1_000_000, &mut rng))
        .fold(0.0, f64::max);
    assert!((grid_value - sampled).abs() < 2e-2, "{grid_value} vs {sampled}");
}

#[test]
fn uniform_ladder_needs_four_radii() {
    let g = ScalarGrid::centered(1.0, 11, |_| 1.0).unwrap();
    assert!(local_max_function(&g, 0.5, RadiusLadder::Uniform(3)).is_err());
}

#[test]
fn balls_leaving_the_grid_are_reported() {
    let g = ScalarGrid::centered(1.0, 21, |_| 1.0).unwrap();
    assert!(matches!(
        local_max_on_ball(&g, 0.8, 0.5, RadiusLadder::Shells),
        Err(crate::error::RoughFlowError::Coverage(_))
    ));
    let m = local_max_function(&g, 0.5, RadiusLadder::Shells).unwrap();
    assert!(m.values[0].is_nan());
    assert_eq!(m.values[nearest(&g, [0.0, 0.0])], 1.0);
}

#[test]
fn weak_type_trivial_levels() {
    let zero = ScalarGrid::centered(2.0, 41, |_| 0.0).unwrap();
    let rep = weak_type_check(&zero, 1.0, 1.0, &[0.5, 1.0], RadiusLadder::Shells).unwrap();
    assert!(rep.measures.iter().all(|&m| m == 0.0));
    let one = ScalarGrid::centered(2.0, 41, |_| 1.0).unwrap();
    let rep = weak_type_check(&one, 1.0, 1.0, &[2.0, 0.5], RadiusLadder::Shells).unwrap();
    assert_eq!(rep.measures[0], 0.0);
    let inner = one.ball_nodes(1.0).len() as f64 * one.cell_area();
    let outer = one.ball_nodes(2.0).len() as f64 * one.cell_area();
    assert!((rep.measures[1] - inner).abs() < 1e-12);
    assert!((rep.implied[1] - 0.5 * inner / outer).abs() < 1e-12);
}

#[test]
fn independent_catalog_respects_frozen_weak_type_constant() {
    let cfg = CalibrationConfig::default();
    for f in random_catalog(0x7465_7374, 20, 2.0) {
        let g = ScalarGrid::centered(2.0, cfg.grid, |x| f.value(x)).unwrap();
        let rep = weak_type_check(&g, 1.0, 1.0, &cfg.alphas, RadiusLadder::Shells).unwrap();
        assert!(rep.max_implied <= FROZEN_CONSTANTS.weak_type, "{rep:?}");
        let log = log_integral_check(&g, 1.0, 1.0, RadiusLadder::Shells).unwrap();
        assert!(log.ratio <= FROZEN_CONSTANTS.log_integral, "{log:?}");
    }
}

#[test]
fn pointwise_estimate_on_constant_and_linear_functions() {
    let c = ScalarGrid::centered(2.0, 81, |_| 4.0).unwrap();
    let rep = pointwise_sobolev_check(&c, None, 1.0, 1.0, 10_000, 1, FROZEN_CONSTANTS.pointwise, RadiusLadder::Shells).unwrap();
    assert_eq!(rep.max_ratio, 0.0);
    let lin = ScalarGrid::centered(2.0, 81, |x| 0.7 * x[0] - 1.3 * x[1]).unwrap();
    let rep = pointwise_sobolev_check(&lin, None, 1.0, 1.0, 10_000, 2, FROZEN_CONSTANTS.pointwise, RadiusLadder::Shells).unwrap();
    assert!(rep.max_ratio <= 0.5 + 1e-9 && rep.passed, "{rep:?}");
    let cone = ScalarGrid::centered(2.0, 81, |x| (x[0] * x[0] + x[1] * x[1]).sqrt()).unwrap();
    let rep = pointwise_sobolev_check(&cone, None, 1.0, 1.0, 10_000, 3, FROZEN_CONSTANTS.pointwise, RadiusLadder::Shells).unwrap();
    assert!(rep.passed, "{rep:?}");
}

#[test]
fn calibration_reproduces_frozen_constants() {
    let rep = calibrate(&CalibrationConfig::default()).unwrap();
    assert_eq!(rep.constants, FROZEN_CONSTANTS);
    assert!((0.67..=1.5).contains(&rep.stability_ratio), "{}", rep.stability_ratio);
    assert!(rep.single_constant_suffices);
}

#[test]
fn raster_roundtrip_and_csv_header() {
    let g = ScalarGrid::from_fn([-1.0, 0.5], 0.25, [3, 4], |x| x[0] * 10.0 + x[1]).unwrap();
    let mut buf = Vec::new();
    g.write_raster(&mut buf).unwrap();
    assert_eq!(&buf[..4], b"RFGR");
    assert_eq!(ScalarGrid::read_raster(&buf[..]).unwrap(), g);
    assert!(ScalarGrid::read_raster(&b"XXXX"[..]).is_err());
    let mut csv = Vec::new();
    g.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("x,y,value\n"));
    assert_eq!(text.lines().count(), 13);
}

#[test]
fn transformed_gradient_matches_differences_of_the_transformed_drift() {
    let s = scenario("smooth-nonlinear").unwrap();
    let drift = s.drift_field(None, &Default::default()).unwrap();
    let path = sample_path(4, 1, 0.5, 1.0 / 64.0).unwrap();
    let chart = DiffusionChart::new(s.diffusion(), Arc::new(path)).unwrap();
    let x = [0.3, -0.4];
    let (_, g) = transformed_gradient(&chart, drift.as_ref(), 32, &x).unwrap();
    let eps = 1e-5;
    for b in 0..2 {
        let (mut xp, mut xm) = (x, x);
        xp[b] += eps;
        xm[b] -= eps;
        let fp = transformed_drift(&chart, drift.as_ref(), 32, &xp).unwrap();
        let fm = transformed_drift(&chart, drift.as_ref(), 32, &xm).unwrap();
        for a in 0..2 {
            let fd = (fp[a] - fm[a]) / (2.0 * eps);
            assert!((fd - g[a * 2 + b]).abs() < 1e-6 * (1.0 + fd.abs()), "a={a} b={b} fd={fd} g={}", g[a * 2 + b]);
        }
    }
}

#[test]
fn zero_drift_lipschitz_set_is_the_whole_ball() {
    let set = lipschitz_set(&small_lipschitz("zero")).unwrap();
    let r = &set.report;
    assert_eq!(r.excluded_measure, 0.0);
    assert!(r.q_sup_max <= std::f64::consts::LN_2);
    assert!(r.lipschitz_by_time.iter().all(|&l| (l - 1.0).abs() < 1e-12));
    let ad = approx_diff_check(&set, set.flow.last()).unwrap();
    assert_eq!(ad.fraction, 1.0);
}

#[test]
fn contraction_lipschitz_constant_is_exponential() {
    let set = lipschitz_set(&small_lipschitz("ode-only")).unwrap();
    let r = &set.report;
    assert!(r.q_sup_max <= std::f64::consts::LN_2);
    for (l, t) in r.lipschitz_by_time.iter().zip(&set.flow.times) {
        assert!((l - (-t).exp()).abs() < 1e-8, "t={t} {l}");
    }
    let ad = approx_diff_check(&set, set.flow.last()).unwrap();
    assert_eq!(ad.stabilized, ad.interior);
    assert!(ad.product_ok);
}

#[test]
fn sobolev_drift_meets_the_lipschitz_set_bounds() {
    let set = lipschitz_set(&small_lipschitz("sobolev-log")).unwrap();
    let r = &set.report;
    assert!(r.measure_ok && r.lipschitz_ok && r.tight_ok, "{r:?}");
    assert_eq!(r.q_bound_violations, 0);
    assert!(r.tight_excluded_measure <= r.eps + r.cell_area);
    let ad = approx_diff_check(&set, set.flow.last()).unwrap();
    assert!(ad.product_ok, "{ad:?}");
}

fn catalog_grid(seed: u64) -> ScalarGrid {
    let f = random_catalog(seed, 1, 1.5).remove(0);
    ScalarGrid::centered(2.0, 41, |x| f.value(x)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn maximal_function_is_monotone_in_the_radius(seed in 0u64..10_000, small in 0.1f64..0.9) {
        let g = catalog_grid(seed);
        let big = local_max_on_ball(&g, 1.0, 1.0, RadiusLadder::Shells).unwrap();
        let less = local_max_on_ball(&g, small, 1.0, RadiusLadder::Shells).unwrap();
        for idx in g.ball_nodes(1.0) {
            prop_assert!(less.values[idx] <= big.values[idx]);
            let plain = ball_average(&g, idx, 1.0, f64::abs).unwrap();
            prop_assert!(plain <= big.values[idx] + 1e-12);
        }
    }

    #[test]
    fn maximal_function_is_sublinear(a in 0u64..10_000, b in 0u64..10_000) {
        let (f, g) = (catalog_grid(a), catalog_grid(b));
        let sum = f.with_values(f.values.iter().zip(&g.values).map(|(u, v)| u + v).collect()).unwrap();
        let ladder = RadiusLadder::Uniform(6);
        let (mf, mg, ms) = (
            local_max_on_ball(&f, 1.0, 1.0, ladder).unwrap(),
            local_max_on_ball(&g, 1.0, 1.0, ladder).unwrap(),
            local_max_on_ball(&sum, 1.0, 1.0, ladder).unwrap(),
        );
        for idx in f.ball_nodes(1.0) {
            prop_assert!(ms.values[idx] <= mf.values[idx] + mg.values[idx] + 1e-12);
        }
    }
}
