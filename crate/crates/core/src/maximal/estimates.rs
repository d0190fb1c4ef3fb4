use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::{local_max_on_ball, BallStencil, RadiusLadder, ScalarGrid};
use crate::error::{Result, RoughFlowError};

/// Constants of the maximal-function estimates. The dimensional constants
/// are not explicit, so they are calibrated on random catalogs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibratedConstants {
    /// Weak-type constant: `L(M_R f > α) ≤ (C/α)∫|f|`.
    pub weak_type: f64,
    /// `∫_{B(ρ)} M_R f ≤ C_ρ + C ∫|f| log(2+|f|)`, with `C_ρ = 0`.
    pub log_integral: f64,
    /// Pointwise Sobolev estimate
    /// `|f(x)−f(y)| ≤ C|x−y|(M_R|∇f|(x) + M_R|∇f|(y))`.
    pub pointwise: f64,
}

/// Output of [`calibrate`] for the default configuration, times the 1.5
/// safety factor. Regenerate with the `calibrate` command.
pub const FROZEN_CONSTANTS: CalibratedConstants = CalibratedConstants {
    weak_type: 1.395125310560829,
    log_integral: 2.3235731250700686,
    pointwise: 1.395125310560829,
};

impl Default for CalibratedConstants {
    fn default() -> Self {
        FROZEN_CONSTANTS
    }
}

/// `L_d(B(x,r)) / L_d(B(x,r) ∩ B(y,r))` for `|x − y| = r`.
pub fn lens_ratio(d: usize) -> Result<f64> {
    use std::f64::consts::PI;
    match d {
        1 => Ok(2.0),
        2 => Ok(PI / (2.0 * PI / 3.0 - 3f64.sqrt() / 2.0)),
        // two caps of height r/2: 2·(5π/24)r³ against (4π/3)r³
        3 => Ok(16.0 / 5.0),
        _ => Err(RoughFlowError::InvalidArgument(format!("lens ratio is tabulated for d ≤ 3, got {d}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakTypeReport {
    pub alphas: Vec<f64>,
    /// `L_d({x ∈ B(ρ) : M_R f(x) > α})` per level.
    pub measures: Vec<f64>,
    /// `∫_{B(R+ρ)} |f|`.
    pub integral: f64,
    /// `α·measure / ∫|f|`; zero when the superlevel set is empty.
    pub implied: Vec<f64>,
    pub max_implied: f64,
}

/// Superlevel sets of `M_R f` on `B(ρ)` against the weak-type bound.
pub fn weak_type_check(f: &ScalarGrid, rho: f64, radius: f64, alphas: &[f64], ladder: RadiusLadder) -> Result<WeakTypeReport> {
    let maxf = local_max_on_ball(f, radius, rho, ladder)?;
    weak_type_from(f, &maxf, rho, radius, alphas)
}

fn weak_type_from(f: &ScalarGrid, maxf: &ScalarGrid, rho: f64, radius: f64, alphas: &[f64]) -> Result<WeakTypeReport> {
    if alphas.iter().any(|&a| !(a > 0.0)) {
        return Err(RoughFlowError::InvalidArgument("levels must be positive".into()));
    }
    let inner = f.ball_nodes(rho);
    let integral = f.integral_over(&f.ball_nodes(rho + radius), f64::abs);
    let measures: Vec<f64> = alphas
        .iter()
        .map(|&a| inner.iter().filter(|&&idx| maxf.values[idx] > a).count() as f64 * f.cell_area())
        .collect();
    let implied: Vec<f64> = alphas
        .iter()
        .zip(&measures)
        .map(|(&a, &m)| if m == 0.0 { 0.0 } else { a * m / integral })
        .collect();
    let max_implied = implied.iter().copied().fold(0.0, f64::max);
    Ok(WeakTypeReport { alphas: alphas.to_vec(), measures, integral, implied, max_implied })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogIntegralReport {
    /// `∫_{B(ρ)} M_R f`.
    pub max_integral: f64,
    /// `∫_{B(R+ρ)} |f| log(2 + |f|)`.
    pub log_integral: f64,
    pub ratio: f64,
}

pub fn log_integral_check(f: &ScalarGrid, rho: f64, radius: f64, ladder: RadiusLadder) -> Result<LogIntegralReport> {
    let maxf = local_max_on_ball(f, radius, rho, ladder)?;
    Ok(log_integral_from(f, &maxf, rho, radius))
}

fn log_integral_from(f: &ScalarGrid, maxf: &ScalarGrid, rho: f64, radius: f64) -> LogIntegralReport {
    let max_integral = maxf.integral_over(&f.ball_nodes(rho), |v| v);
    let log_integral = f.integral_over(&f.ball_nodes(rho + radius), |v| v.abs() * (2.0 + v.abs()).ln());
    let ratio = if max_integral == 0.0 { 0.0 } else { max_integral / log_integral };
    LogIntegralReport { max_integral, log_integral, ratio }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointwiseReport {
    pub pairs: usize,
    /// Largest `|f(x)−f(y)| / (|x−y|(M_R|∇f|(x) + M_R|∇f|(y)))`; a zero
    /// numerator counts as ratio 0.
    pub max_ratio: f64,
    pub constant: f64,
    pub passed: bool,
}

/// Central differences of grid values, one-sided at the boundary.
pub fn gradient_norm(f: &ScalarGrid) -> ScalarGrid {
    let s = f.spacing;
    let values = (0..f.len())
        .map(|idx| {
            let mut g2 = 0.0;
            for (di, dj) in [(1, 0), (0, 1)] {
                let fwd = f.offset(idx, di, dj);
                let bwd = f.offset(idx, -di, -dj);
                let d = match (fwd, bwd) {
                    (Some(a), Some(b)) => (f.values[a] - f.values[b]) / (2.0 * s),
                    (Some(a), None) => (f.values[a] - f.values[idx]) / s,
                    (None, Some(b)) => (f.values[idx] - f.values[b]) / s,
                    (None, None) => 0.0,
                };
                g2 += d * d;
            }
            g2.sqrt()
        })
        .collect();
    ScalarGrid { lo: f.lo, spacing: s, n: f.n, values }
}

/// Random node pairs in `B(ρ)` at distance at most `R`, scored against the
/// pointwise Sobolev estimate with constant `constant`.
pub fn pointwise_sobolev_check(
    f: &ScalarGrid,
    gradient: Option<&ScalarGrid>,
    rho: f64,
    radius: f64,
    pairs: usize,
    seed: u64,
    constant: f64,
    ladder: RadiusLadder,
) -> Result<PointwiseReport> {
    let owned;
    let grad = match gradient {
        Some(g) => g,
        None => {
            owned = gradient_norm(f);
            &owned
        }
    };
    let maxg = local_max_on_ball(grad, radius, rho, ladder)?;
    let inner = f.ball_nodes(rho);
    if inner.is_empty() {
        return Err(RoughFlowError::Resolution("no grid nodes inside B(ρ)".into()));
    }
    let stencil = BallStencil::new(f.spacing, radius);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio: f64 = 0.0;
    let mut drawn = 0;
    while drawn < pairs {
        let x = inner[rng.gen_range(0..inner.len())];
        let (di, dj, _) = stencil.offsets[rng.gen_range(0..stencil.offsets.len())];
        let Some(y) = f.offset(x, di, dj) else { continue };
        if maxg.values[y].is_nan() {
            continue;
        }
        drawn += 1;
        let num = (f.values[x] - f.values[y]).abs();
        if num == 0.0 {
            continue;
        }
        let sep = ((di * di + dj * dj) as f64).sqrt() * f.spacing;
        let ratio = num / (sep * (maxg.values[x] + maxg.values[y]));
        max_ratio = max_ratio.max(ratio);
    }
    Ok(PointwiseReport { pairs, max_ratio, constant, passed: max_ratio <= constant })
}

/// Random piecewise-constant function: up to four discs or rectangles with
/// heights in `[0.2, 5]`, centred in `B(extent)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseFunction {
    pub pieces: Vec<Piece>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Piece {
    Disc { center: [f64; 2], radius: f64, height: f64 },
    Rectangle { lo: [f64; 2], hi: [f64; 2], height: f64 },
}

impl PiecewiseFunction {
    pub fn random(rng: &mut ChaCha8Rng, extent: f64) -> Self {
        let count = rng.gen_range(1..=4);
        let pieces = (0..count)
            .map(|_| {
                let r = extent * rng.gen::<f64>().sqrt();
                let a = rng.gen_range(0.0..std::f64::consts::TAU);
                let center = [r * a.cos(), r * a.sin()];
                let size = extent * rng.gen_range(0.05..0.6);
                let height = rng.gen_range(0.2..5.0);
                if rng.gen_bool(0.5) {
                    Piece::Disc { center, radius: size, height }
                } else {
                    let aspect = rng.gen_range(0.3..1.0);
                    let half = [size, size * aspect];
                    Piece::Rectangle {
                        lo: [center[0] - half[0], center[1] - half[1]],
                        hi: [center[0] + half[0], center[1] + half[1]],
                        height,
                    }
                }
            })
            .collect();
        Self { pieces }
    }

    pub fn value(&self, x: &[f64; 2]) -> f64 {
        self.pieces
            .iter()
            .map(|p| match p {
                Piece::Disc { center, radius, height } => {
                    let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                    if r2 <= radius * radius {
                        *height
                    } else {
                        0.0
                    }
                }
                Piece::Rectangle { lo, hi, height } => {
                    if (0..2).all(|a| x[a] >= lo[a] && x[a] <= hi[a]) {
                        *height
                    } else {
                        0.0
                    }
                }
            })
            .sum()
    }
}

pub fn random_catalog(seed: u64, count: usize, extent: f64) -> Vec<PiecewiseFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| PiecewiseFunction::random(&mut rng, extent)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Nodes per axis on `[−(R+ρ), R+ρ]²`.
    pub grid: usize,
    pub rho: f64,
    pub radius: f64,
    pub catalog_size: usize,
    pub alphas: Vec<f64>,
    /// Seeds of the two disjoint catalogs; the first sets the constants.
    pub seeds: [u64; 2],
    pub pairs: usize,
    pub safety: f64,
    pub ladder: RadiusLadder,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            grid: 129,
            rho: 1.0,
            radius: 1.0,
            catalog_size: 20,
            alphas: vec![0.5, 1.0, 2.0],
            seeds: [0x6361_6c31, 0x6361_6c32],
            pairs: 10_000,
            safety: 1.5,
            ladder: RadiusLadder::Shells,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogCalibration {
    pub seed: u64,
    /// Largest implied weak-type constant per function.
    pub weak_type: Vec<f64>,
    pub log_integral: Vec<f64>,
    pub max_weak_type: f64,
    pub max_log_integral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub catalogs: Vec<CatalogCalibration>,
    /// Second catalog's weak-type constant over the first's.
    pub stability_ratio: f64,
    /// Largest pointwise ratio over the smooth test family.
    pub pointwise_max: f64,
    pub pointwise_by_function: Vec<(String, f64)>,
    /// Whether the weak-type constant also bounds the pointwise ratios.
    pub single_constant_suffices: bool,
    /// Safety factor times the first catalog's maxima.
    pub constants: CalibratedConstants,
    pub lens_ratio: f64,
}

fn calibrate_catalog(cfg: &CalibrationConfig, seed: u64) -> Result<CatalogCalibration> {
    let extent = cfg.rho + cfg.radius;
    let mut weak_type = Vec::new();
    let mut log_integral = Vec::new();
    for f in random_catalog(seed, cfg.catalog_size, extent) {
        let grid = ScalarGrid::centered(extent, cfg.grid, |x| f.value(x))?;
        let maxf = local_max_on_ball(&grid, cfg.radius, cfg.rho, cfg.ladder)?;
        weak_type.push(weak_type_from(&grid, &maxf, cfg.rho, cfg.radius, &cfg.alphas)?.max_implied);
        log_integral.push(log_integral_from(&grid, &maxf, cfg.rho, cfg.radius).ratio);
    }
    Ok(CatalogCalibration {
        seed,
        max_weak_type: weak_type.iter().copied().fold(0.0, f64::max),
        max_log_integral: log_integral.iter().copied().fold(0.0, f64::max),
        weak_type,
        log_integral,
    })
}

/// Smooth and Lipschitz functions for the pointwise estimate: linear, the
/// cone `|x|`, a steep ramp and an off-centre bump.
pub fn pointwise_family() -> Vec<(&'static str, fn(&[f64; 2]) -> f64)> {
    fn linear(x: &[f64; 2]) -> f64 {
        0.7 * x[0] - 1.3 * x[1]
    }
    fn cone(x: &[f64; 2]) -> f64 {
        (x[0] * x[0] + x[1] * x[1]).sqrt()
    }
    fn ramp(x: &[f64; 2]) -> f64 {
        (8.0 * (x[0] - 0.2)).tanh()
    }
    fn bump(x: &[f64; 2]) -> f64 {
        let s = 1.0 - ((x[0] - 0.3).powi(2) + (x[1] + 0.2).powi(2)) / 0.25;
        if s > 0.0 {
            s * s * s
        } else {
            0.0
        }
    }
    vec![("linear", linear), ("cone", cone), ("ramp", ramp), ("bump", bump)]
}

/// Calibrates the weak-type and log-integral constants on two disjoint
/// random piecewise-constant catalogs and scores the pointwise estimate on
/// [`pointwise_family`].
pub fn calibrate(cfg: &CalibrationConfig) -> Result<CalibrationReport> {
    if cfg.catalog_size == 0 || !(cfg.safety >= 1.0) {
        return Err(RoughFlowError::InvalidArgument("need a non-empty catalog and safety ≥ 1".into()));
    }
    let catalogs = cfg.seeds.iter().map(|&s| calibrate_catalog(cfg, s)).collect::<Result<Vec<_>>>()?;
    let stability_ratio = catalogs[1].max_weak_type / catalogs[0].max_weak_type;
    let extent = cfg.rho + cfg.radius;
    let mut pointwise_by_function = Vec::new();
    for (k, (name, f)) in pointwise_family().into_iter().enumerate() {
        let grid = ScalarGrid::centered(extent, cfg.grid, f)?;
        let rep = pointwise_sobolev_check(&grid, None, cfg.rho, cfg.radius, cfg.pairs, cfg.seeds[0] + k as u64, f64::INFINITY, cfg.ladder)?;
        pointwise_by_function.push((name.to_string(), rep.max_ratio));
    }
    let pointwise_max = pointwise_by_function.iter().map(|p| p.1).fold(0.0, f64::max);
    let weak = cfg.safety * catalogs[0].max_weak_type;
    let constants = CalibratedConstants {
        weak_type: weak,
        log_integral: cfg.safety * catalogs[0].max_log_integral,
        pointwise: weak.max(cfg.safety * pointwise_max),
    };
    Ok(CalibrationReport {
        stability_ratio,
        pointwise_max,
        pointwise_by_function,
        single_constant_suffices: pointwise_max <= weak,
        constants,
        lens_ratio: lens_ratio(2)?,
        catalogs,
    })
}
