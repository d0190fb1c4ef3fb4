use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::brownian::sample_path;
use crate::decomposition::{lagrangian_flow, FlowField, FlowOptions, PointSet};
use crate::error::{Result, RoughFlowError};
use crate::fields::{MollifierSpec, VectorField};
use crate::linalg::dist;
use crate::scenario::scenario;
use crate::sde::DiffusionChart;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub scenario: String,
    /// Ascending mollification levels compared with the reference.
    pub levels: Vec<u32>,
    /// Reference level for rough drifts; smooth drifts are their own reference.
    pub reference: u32,
    pub paths: usize,
    pub seed_base: u64,
    pub t_final: f64,
    pub h: f64,
    pub radius: f64,
    /// Grid cells per axis over `[−R, R]^d`, restricted to `B(R)`.
    pub grid: usize,
    /// Exponents of the `∫ sup_t |·|^p` variants.
    pub p: Vec<f64>,
    pub mollifier: MollifierSpec,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            scenario: "rotation-bv".into(),
            levels: vec![4, 8, 16, 32],
            reference: 64,
            paths: 32,
            seed_base: 0,
            t_final: 0.5,
            h: 1.0 / 128.0,
            radius: 1.0,
            grid: 20,
            p: vec![2.0],
            mollifier: MollifierSpec::default(),
        }
    }
}

/// `D_n = ∫_{B(R)} sup_{t≤T} |X_tⁿ(x) − X_t^{ref}(x)| dx` per level, averaged
/// over paths. The wall times are kept out of the serialized form so that
/// reruns produce identical summaries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub scenario: String,
    pub seed_base: u64,
    pub levels: Vec<u32>,
    /// `None` when the drift is smooth and serves as its own reference.
    pub reference_level: Option<u32>,
    #[serde(rename = "D1")]
    pub d1: Vec<f64>,
    #[serde(rename = "D1_stderr")]
    pub d1_stderr: Vec<f64>,
    /// `p ↦ [∫ sup_t |·|^p per level]`, keyed by the exponent's display form.
    #[serde(rename = "Dp")]
    pub dp: BTreeMap<String, Vec<f64>>,
    /// `D_{next} ≤ D_n + 3·SE` for every consecutive pair, SE of the paired
    /// per-path differences.
    pub monotone: bool,
    pub monotone_p: BTreeMap<String, bool>,
    /// `D_{last level} ≤ ½·D_{first level}`.
    pub halved: bool,
    pub halved_p: BTreeMap<String, bool>,
    /// `[path][level]` values of `D_n`.
    pub per_path: Vec<Vec<f64>>,
    #[serde(skip)]
    pub wall_time_s: Vec<f64>,
}

impl StabilityReport {
    /// CSV with columns `path, n_<level>...`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["path".to_string()];
        header.extend(self.levels.iter().map(|n| format!("n_{n}")));
        writeln!(w, "{}", header.join(","))?;
        for (i, row) in self.per_path.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{i},{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, file: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(file)?))
    }
}

fn p_key(p: f64) -> String {
    format!("{p}")
}

/// `sup_t |X_t^a(x) − X_t^b(x)|` per point, using the chart values `φ_t(Y_t)`.
fn sup_gaps(a: &FlowField, b: &FlowField) -> Vec<f64> {
    (0..a.points.len())
        .map(|p| (0..a.outputs()).map(|o| dist(a.x_at(p, o), b.x_at(p, o))).fold(0.0, f64::max))
        .collect()
}

fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monotone within noise and halved flags for a `[path][level]` table.
fn flags(table: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>, bool, bool) {
    let levels = table.first().map_or(0, Vec::len);
    let column = |l: usize| table.iter().map(|r| r[l]).collect::<Vec<f64>>();
    let (means, errs): (Vec<f64>, Vec<f64>) = (0..levels).map(|l| mean_and_stderr(&column(l))).unzip();
    let monotone = (1..levels).all(|l| {
        let diffs: Vec<f64> = table.iter().map(|r| r[l] - r[l - 1]).collect();
        let (m, se) = mean_and_stderr(&diffs);
        m <= 3.0 * se
    });
    let halved = levels == 0 || means[levels - 1] <= 0.5 * means[0];
    (means, errs, monotone, halved)
}

pub fn stability_experiment(cfg: &StabilityConfig) -> Result<StabilityReport> {
    if cfg.levels.is_empty() || cfg.paths == 0 {
        return Err(RoughFlowError::InvalidArgument("need at least one level and one path".into()));
    }
    if cfg.levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(RoughFlowError::InvalidArgument("levels must be strictly ascending".into()));
    }
    let s = scenario(&cfg.scenario)?;
    let reference_level = if s.is_smooth() {
        None
    } else {
        if cfg.reference <= *cfg.levels.last().unwrap() {
            return Err(RoughFlowError::InvalidArgument("reference level must exceed every level".into()));
        }
        Some(cfg.reference)
    };
    let drifts: Vec<Arc<dyn VectorField>> =
        cfg.levels.iter().map(|&n| s.drift_field(Some(n), &cfg.mollifier)).collect::<Result<_>>()?;
    let reference = s.drift_field(reference_level, &cfg.mollifier)?;
    let grid = PointSet::ball_grid(s.dim, cfg.radius, cfg.grid);
    let opts = FlowOptions { stride: 1, density: false, ..Default::default() };
    let mut per_path = Vec::with_capacity(cfg.paths);
    let mut per_path_p: Vec<Vec<Vec<f64>>> = vec![Vec::new(); cfg.p.len()];
    let mut wall = vec![0.0; cfg.levels.len()];
    for i in 0..cfg.paths {
        let path = sample_path(cfg.seed_base + i as u64, s.m(), cfg.t_final, cfg.h)?;
        let chart = DiffusionChart::new(s.diffusion(), Arc::new(path))?;
        let truth = lagrangian_flow(&grid, &chart, reference.as_ref(), &opts)?;
        let mut row = Vec::with_capacity(cfg.levels.len());
        let mut rows_p = vec![Vec::with_capacity(cfg.levels.len()); cfg.p.len()];
        for (l, drift) in drifts.iter().enumerate() {
            let start = Instant::now();
            let approx = lagrangian_flow(&grid, &chart, drift.as_ref(), &opts)?;
            let gaps = sup_gaps(&approx, &truth);
            wall[l] += start.elapsed().as_secs_f64();
            row.push(gaps.iter().zip(&grid.weights).map(|(g, w)| g * w).sum());
            for (q, &p) in cfg.p.iter().enumerate() {
                rows_p[q].push(gaps.iter().zip(&grid.weights).map(|(g, w)| g.powf(p) * w).sum());
            }
        }
        per_path.push(row);
        for (q, r) in rows_p.into_iter().enumerate() {
            per_path_p[q].push(r);
        }
    }
    let (d1, d1_stderr, monotone, halved) = flags(&per_path);
    let (mut dp, mut monotone_p, mut halved_p) = (BTreeMap::new(), BTreeMap::new(), BTreeMap::new());
    for (q, &p) in cfg.p.iter().enumerate() {
        let (m, _, mono, half) = flags(&per_path_p[q]);
        dp.insert(p_key(p), m);
        monotone_p.insert(p_key(p), mono);
        halved_p.insert(p_key(p), half);
    }
    Ok(StabilityReport {
        scenario: cfg.scenario.clone(),
        seed_base: cfg.seed_base,
        levels: cfg.levels.clone(),
        reference_level,
        d1,
        d1_stderr,
        dp,
        monotone,
        monotone_p,
        halved,
        halved_p,
        per_path,
        wall_time_s: wall,
    })
}
