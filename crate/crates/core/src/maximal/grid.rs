use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, RoughFlowError};

const RASTER_MAGIC: &[u8; 4] = b"RFGR";

/// Node-centred samples on a uniform planar grid. Node `(i, j)` sits at
/// `lo + (i, j)·spacing` and stands for a cell of area `spacing²`.
/// Values are row-major in `i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarGrid {
    pub lo: [f64; 2],
    pub spacing: f64,
    pub n: [usize; 2],
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(lo: [f64; 2], spacing: f64, n: [usize; 2], values: Vec<f64>) -> Result<Self> {
        if !(spacing > 0.0) || n[0] == 0 || n[1] == 0 {
            return Err(RoughFlowError::InvalidArgument("grid needs positive spacing and nodes".into()));
        }
        if values.len() != n[0] * n[1] {
            return Err(RoughFlowError::InvalidArgument("value count does not match the grid".into()));
        }
        Ok(Self { lo, spacing, n, values })
    }

    /// `n × n` nodes spanning `[−half_width, half_width]²`, endpoints included.
    pub fn centered(half_width: f64, n: usize, f: impl Fn(&[f64; 2]) -> f64 + Sync) -> Result<Self> {
        if n < 2 || !(half_width > 0.0) {
            return Err(RoughFlowError::InvalidArgument("centered grid needs n ≥ 2 and a positive width".into()));
        }
        let spacing = 2.0 * half_width / (n - 1) as f64;
        Self::from_fn([-half_width; 2], spacing, [n, n], f)
    }

    pub fn from_fn(lo: [f64; 2], spacing: f64, n: [usize; 2], f: impl Fn(&[f64; 2]) -> f64 + Sync) -> Result<Self> {
        let values = (0..n[0] * n[1])
            .into_par_iter()
            .map(|idx| f(&[lo[0] + (idx / n[1]) as f64 * spacing, lo[1] + (idx % n[1]) as f64 * spacing]))
            .collect();
        Self::new(lo, spacing, n, values)
    }

    /// Same geometry, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.lo, self.spacing, self.n, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing * self.spacing
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n[1] + j
    }

    pub fn node(&self, idx: usize) -> [f64; 2] {
        [
            self.lo[0] + (idx / self.n[1]) as f64 * self.spacing,
            self.lo[1] + (idx % self.n[1]) as f64 * self.spacing,
        ]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[self.index(i, j)]
    }

    /// Index of the node at `idx` shifted by `(di, dj)`, if it exists.
    pub fn offset(&self, idx: usize, di: isize, dj: isize) -> Option<usize> {
        let i = (idx / self.n[1]) as isize + di;
        let j = (idx % self.n[1]) as isize + dj;
        (i >= 0 && j >= 0 && (i as usize) < self.n[0] && (j as usize) < self.n[1])
            .then(|| self.index(i as usize, j as usize))
    }

    /// Nodes with `|x| ≤ radius` (plus a relative slack of 1e-9).
    pub fn ball_nodes(&self, radius: f64) -> Vec<usize> {
        let r2 = radius * radius * (1.0 + 1e-9);
        (0..self.len()).filter(|&idx| norm2(&self.node(idx)) <= r2).collect()
    }

    /// Whether `B(0, radius)` lies inside the grid box.
    pub fn covers(&self, radius: f64) -> bool {
        let slack = 1e-9 * self.spacing;
        (0..2).all(|a| {
            self.lo[a] <= -radius + slack && self.lo[a] + (self.n[a] - 1) as f64 * self.spacing >= radius - slack
        })
    }

    /// Bilinear interpolation; `None` outside the grid or next to a
    /// non-finite value.
    pub fn interpolate(&self, x: &[f64]) -> Option<f64> {
        let mut base = [0usize; 2];
        let mut frac = [0.0; 2];
        for a in 0..2 {
            let s = (x[a] - self.lo[a]) / self.spacing;
            if !(s >= 0.0) || s > (self.n[a] - 1) as f64 {
                return None;
            }
            let i = (s.floor() as usize).min(self.n[a].saturating_sub(2));
            base[a] = i;
            frac[a] = s - i as f64;
        }
        let (i, j) = (base[0], base[1]);
        let (i1, j1) = ((i + 1).min(self.n[0] - 1), (j + 1).min(self.n[1] - 1));
        let v = (1.0 - frac[0]) * (1.0 - frac[1]) * self.value(i, j)
            + (1.0 - frac[0]) * frac[1] * self.value(i, j1)
            + frac[0] * (1.0 - frac[1]) * self.value(i1, j)
            + frac[0] * frac[1] * self.value(i1, j1);
        v.is_finite().then_some(v)
    }

    /// `Σ value·spacing²` over the listed nodes.
    pub fn integral_over(&self, nodes: &[usize], f: impl Fn(f64) -> f64) -> f64 {
        nodes.iter().map(|&idx| f(self.values[idx])).sum::<f64>() * self.cell_area()
    }

    /// Columns `x,y,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y,value")?;
        for (idx, v) in self.values.iter().enumerate() {
            let x = self.node(idx);
            writeln!(w, "{:e},{:e},{:e}", x[0], x[1], v)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, file: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(file)?))
    }

    /// Binary raster: `RFGR`, `u32` rank (2), `u64` node counts, `f64`
    /// origin, `f64` spacing, then the values; all little-endian.
    pub fn write_raster<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(RASTER_MAGIC)?;
        w.write_all(&2u32.to_le_bytes())?;
        for n in self.n {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for v in self.lo.iter().chain(std::iter::once(&self.spacing)).chain(&self.values) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_raster<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != RASTER_MAGIC {
            return Err(RoughFlowError::InvalidArgument("not a raster file".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != 2 {
            return Err(RoughFlowError::InvalidArgument("only planar rasters are supported".into()));
        }
        let mut b8 = [0u8; 8];
        let mut n = [0usize; 2];
        for v in n.iter_mut() {
            r.read_exact(&mut b8)?;
            *v = u64::from_le_bytes(b8) as usize;
        }
        let mut read_f64 = || -> Result<f64> {
            r.read_exact(&mut b8)?;
            Ok(f64::from_le_bytes(b8))
        };
        let lo = [read_f64()?, read_f64()?];
        let spacing = read_f64()?;
        let values = (0..n[0] * n[1]).map(|_| read_f64()).collect::<Result<_>>()?;
        Self::new(lo, spacing, n, values)
    }

    pub fn save_raster(&self, file: &Path) -> Result<()> {
        self.write_raster(std::io::BufWriter::new(std::fs::File::create(file)?))
    }
}

fn norm2(x: &[f64; 2]) -> f64 {
    x[0] * x[0] + x[1] * x[1]
}

/// Node offsets of a discrete ball, sorted by distance. A cell belongs to
/// `B(x, r)` when its centre does (midpoint rule), so every ball of radius
/// `r ≤ max_radius` is a prefix of the list.
#[derive(Debug, Clone)]
pub struct BallStencil {
    pub spacing: f64,
    pub max_radius: f64,
    /// `(di, dj, squared distance in cells)`.
    pub offsets: Vec<(isize, isize, i64)>,
    /// Largest `|di|` in the stencil.
    pub reach: usize,
}

impl BallStencil {
    pub fn new(spacing: f64, max_radius: f64) -> Self {
        let reach = (max_radius / spacing * (1.0 + 1e-9)).floor() as isize;
        let limit = (max_radius / spacing).powi(2) * (1.0 + 1e-9);
        let mut offsets = Vec::new();
        for di in -reach..=reach {
            for dj in -reach..=reach {
                let s = (di * di + dj * dj) as i64;
                if s as f64 <= limit {
                    offsets.push((di, dj, s));
                }
            }
        }
        offsets.sort_by_key(|&(di, dj, s)| (s, di, dj));
        Self { spacing, max_radius, offsets, reach: reach.max(0) as usize }
    }

    /// Number of offsets with distance at most `r`.
    pub fn prefix(&self, r: f64) -> usize {
        let limit = (r / self.spacing).powi(2) * (1.0 + 1e-9);
        self.offsets.partition_point(|&(_, _, s)| s as f64 <= limit)
    }

    /// Prefix lengths at which the discrete ball changes, up to `max_radius`.
    pub fn shells(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for k in 1..=self.offsets.len() {
            if k == self.offsets.len() || self.offsets[k].2 != self.offsets[k - 1].2 {
                out.push(k);
            }
        }
        out
    }

    pub fn radius_of_prefix(&self, len: usize) -> f64 {
        (self.offsets[len - 1].2 as f64).sqrt() * self.spacing
    }
}

/// Radii over which the supremum in a maximal function is taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusLadder {
    /// `r_j = R·j/k`, `j = 1..k`.
    Uniform(usize),
    /// `count` log-uniform radii from `min` to `R`.
    Geometric { count: usize, min: f64 },
    /// Every radius at which the discrete ball changes: the exact supremum
    /// over `0 < r ≤ R` of the discrete averages.
    Shells,
}

impl RadiusLadder {
    /// Stencil prefix lengths for cap `radius`, ascending and deduplicated.
    pub fn prefixes(&self, stencil: &BallStencil, radius: f64) -> Result<Vec<usize>> {
        let mut out: Vec<usize> = match *self {
            RadiusLadder::Uniform(k) => {
                if k < 4 {
                    return Err(RoughFlowError::InvalidArgument("a uniform ladder needs at least 4 radii".into()));
                }
                (1..=k).map(|j| stencil.prefix(radius * j as f64 / k as f64)).collect()
            }
            RadiusLadder::Geometric { count, min } => {
                if count < 2 || !(min > 0.0) || min >= radius {
                    return Err(RoughFlowError::InvalidArgument("geometric ladder needs 0 < min < R and 2 radii".into()));
                }
                let q = (radius / min).powf(1.0 / (count - 1) as f64);
                (0..count).map(|j| stencil.prefix(min * q.powi(j as i32))).collect()
            }
            RadiusLadder::Shells => {
                let cap = stencil.prefix(radius);
                stencil.shells().into_iter().filter(|&k| k <= cap).collect()
            }
        };
        out.retain(|&k| k > 0);
        out.dedup();
        Ok(out)
    }
}

/// Prefix averages of `g(f)` around node `idx`, one per cutoff. `None` if
/// the largest ball leaves the grid.
fn ball_averages(
    f: &ScalarGrid,
    idx: usize,
    stencil: &BallStencil,
    cutoffs: &[usize],
    g: impl Fn(f64) -> f64,
    out: &mut Vec<f64>,
) -> bool {
    out.clear();
    let (i, j) = ((idx / f.n[1]) as isize, (idx % f.n[1]) as isize);
    let reach = stencil.reach as isize;
    if i < reach || j < reach || i + reach >= f.n[0] as isize || j + reach >= f.n[1] as isize {
        // The stencil may still fit when the last cutoff is short.
        let last = match cutoffs.last() {
            Some(&k) => k,
            None => return true,
        };
        if stencil.offsets[..last].iter().any(|&(di, dj, _)| f.offset(idx, di, dj).is_none()) {
            return false;
        }
    }
    let mut sum = 0.0;
    let mut k = 0;
    for &cut in cutoffs {
        while k < cut {
            let (di, dj, _) = stencil.offsets[k];
            let at = ((i + di) as usize) * f.n[1] + (j + dj) as usize;
            sum += g(f.values[at]);
            k += 1;
        }
        out.push(sum / cut as f64);
    }
    true
}

/// `max_j` of the discrete averages of `|f|` over `B(x, r_j)` at one node.
pub fn max_function_at(f: &ScalarGrid, idx: usize, radius: f64, ladder: RadiusLadder) -> Result<f64> {
    let stencil = BallStencil::new(f.spacing, radius);
    let cutoffs = ladder.prefixes(&stencil, radius)?;
    let mut avg = Vec::new();
    if !ball_averages(f, idx, &stencil, &cutoffs, f64::abs, &mut avg) {
        return Err(RoughFlowError::Coverage(format!("ball of radius {radius} leaves the grid")));
    }
    Ok(avg.iter().copied().fold(0.0, f64::max))
}

/// Local maximal function `M_R f` at every node whose largest ball fits in
/// the grid; other nodes hold NaN.
pub fn local_max_function(f: &ScalarGrid, radius: f64, ladder: RadiusLadder) -> Result<ScalarGrid> {
    let nodes: Vec<usize> = (0..f.len()).collect();
    max_on_nodes(f, radius, ladder, &nodes, false)
}

/// `M_R f` on the nodes of `B(0, rho)`, NaN elsewhere. Fails when a ball
/// around one of those nodes leaves the grid.
pub fn local_max_on_ball(f: &ScalarGrid, radius: f64, rho: f64, ladder: RadiusLadder) -> Result<ScalarGrid> {
    if !f.covers(rho + radius) {
        return Err(RoughFlowError::Coverage(format!("grid does not contain B({})", rho + radius)));
    }
    max_on_nodes(f, radius, ladder, &f.ball_nodes(rho), true)
}

fn max_on_nodes(f: &ScalarGrid, radius: f64, ladder: RadiusLadder, nodes: &[usize], strict: bool) -> Result<ScalarGrid> {
    let stencil = BallStencil::new(f.spacing, radius);
    let cutoffs = ladder.prefixes(&stencil, radius)?;
    let computed: Vec<Option<f64>> = nodes
        .par_iter()
        .map_init(Vec::new, |avg, &idx| {
            ball_averages(f, idx, &stencil, &cutoffs, f64::abs, avg).then(|| avg.iter().copied().fold(0.0, f64::max))
        })
        .collect();
    let mut values = vec![f64::NAN; f.len()];
    for (&idx, v) in nodes.iter().zip(computed) {
        match v {
            Some(v) => values[idx] = v,
            None if strict => {
                return Err(RoughFlowError::Coverage(format!("ball of radius {radius} leaves the grid")));
            }
            None => {}
        }
    }
    f.with_values(values)
}

/// Plain discrete average of `g(f)` over `B(x, r)` at one node.
pub fn ball_average(f: &ScalarGrid, idx: usize, r: f64, g: impl Fn(f64) -> f64) -> Option<f64> {
    let stencil = BallStencil::new(f.spacing, r);
    let mut avg = Vec::new();
    ball_averages(f, idx, &stencil, &[stencil.offsets.len()], g, &mut avg).then(|| avg[0])
}
