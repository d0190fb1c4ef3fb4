//! Seeded Brownian increments on uniform grids, with bridge refinement and
//! exact time reversal.
//!
//! Every increment is addressed by `(level, global index, component)`. Level-0
//! increments are `√h·z(0, k, c)`; refining coarse increment `Δ` at level `ℓ`
//! draws the first half as `Δ/2 + √(h_ℓ/4)·z(ℓ+1, k, c)` and sets the second
//! half to `Δ − first`. Reversed and truncated paths keep their addressing, so
//! refinement commutes with both exactly.

mod io;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, RoughFlowError};

pub use io::{read_cache, write_cache, write_csv};

/// Number of steps for `t_final / h`, or an error when it is not a positive
/// integer (relative tolerance 1e-9).
pub fn step_count(t_final: f64, h: f64) -> Result<usize> {
    if !(h > 0.0) || !(t_final > 0.0) || h > t_final || !h.is_finite() || !t_final.is_finite() {
        return Err(RoughFlowError::NonIntegralSteps { t: t_final, h });
    }
    let n = (t_final / h).round();
    if (n * h - t_final).abs() > 1e-9 * t_final {
        return Err(RoughFlowError::NonIntegralSteps { t: t_final, h });
    }
    Ok(n as usize)
}

/// Counter-based standard normals: one ChaCha stream per `(level, component)`,
/// four 32-bit words per index, Box–Muller on two 53-bit uniforms.
fn normals(seed: u64, level: u32, component: usize, start: u64, out: &mut [f64]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((level as u64) << 32) | component as u64);
    rng.set_word_pos(start as u128 * 4);
    for z in out.iter_mut() {
        let u1 = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        *z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
    }
}

/// Increments are stored as multiples of this quantum. Sums and differences
/// of quantized values below 16 in magnitude are then exact, which is what
/// makes refinement reproduce coarse increments bit for bit.
pub const QUANTUM: f64 = 1.0 / (1u64 << 49) as f64;

fn quantize(v: f64) -> f64 {
    (v / QUANTUM).round() * QUANTUM
}

/// Splits `delta` into `(a, b)` with `a ≈ first` and `a + b == delta`.
fn split(delta: f64, first: f64) -> (f64, f64) {
    let a = quantize(first);
    let b = delta - a;
    if a + b == delta && b - quantize(b) == 0.0 {
        (a, b)
    } else {
        let a = quantize(delta * 0.5);
        (a, delta - a)
    }
}

/// An `m`-dimensional Brownian path on `[0, t_final]` with step `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    m: usize,
    t_final: f64,
    h: f64,
    seed: u64,
    level: u32,
    /// Global index of the first stored increment at this level.
    start: u64,
    reversed: bool,
    /// Row-major `steps × m`.
    increments: Vec<f64>,
}

pub fn sample_path(seed: u64, m: usize, t_final: f64, h: f64) -> Result<BrownianPath> {
    let steps = step_count(t_final, h)?;
    let mut increments = vec![0.0; steps * m];
    let mut z = vec![0.0; steps];
    let sh = h.sqrt();
    for c in 0..m {
        normals(seed, 0, c, 0, &mut z);
        for (k, zk) in z.iter().enumerate() {
            increments[k * m + c] = quantize(sh * zk);
        }
    }
    Ok(BrownianPath { m, t_final, h, seed, level: 0, start: 0, reversed: false, increments })
}

impl BrownianPath {
    /// A path with explicitly given increments, addressed as level 0 of `seed`.
    /// Values are rounded to [`QUANTUM`].
    pub fn from_increments(seed: u64, m: usize, h: f64, mut increments: Vec<f64>) -> Result<Self> {
        increments.iter_mut().for_each(|v| *v = quantize(*v));
        if m > 0 && increments.len() % m != 0 {
            return Err(RoughFlowError::InvalidArgument("increment count not a multiple of m".into()));
        }
        if !(h > 0.0) {
            return Err(RoughFlowError::NonIntegralSteps { t: 0.0, h });
        }
        let steps = if m == 0 { 0 } else { increments.len() / m };
        Ok(Self { m, t_final: steps as f64 * h, h, seed, level: 0, start: 0, reversed: false, increments })
    }

    /// Deterministic zero-noise path with `m` components (useful with `m = 0`).
    pub fn silent(m: usize, t_final: f64, h: f64) -> Result<Self> {
        let steps = step_count(t_final, h)?;
        Ok(Self { m, t_final, h, seed: 0, level: 0, start: 0, reversed: false, increments: vec![0.0; steps * m] })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn is_reversed(&self) -> bool {
        self.reversed
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.h).round() as usize
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Increments of step `k` (all components).
    pub fn step(&self, k: usize) -> &[f64] {
        &self.increments[k * self.m..(k + 1) * self.m]
    }

    /// `w` at every grid node, row-major `(steps + 1) × m`, starting at 0.
    pub fn cumulative(&self) -> Vec<f64> {
        let m = self.m;
        let n = self.steps();
        let mut w = vec![0.0; (n + 1) * m];
        for k in 0..n {
            for c in 0..m {
                w[(k + 1) * m + c] = w[k * m + c] + self.increments[k * m + c];
            }
        }
        w
    }

    /// Bridge refinement to step `h/2`.
    pub fn refine(&self) -> BrownianPath {
        let m = self.m;
        let n = self.steps();
        let mut out = vec![0.0; 2 * n * m];
        let scale = (self.h / 4.0).sqrt();
        let mut z = vec![0.0; n];
        for c in 0..m {
            // Global coarse indices covered by this path are start..start+n.
            normals(self.seed, self.level + 1, c, self.start, &mut z);
            for i in 0..n {
                let g = i; // offset of the global index from `start`
                let local = if self.reversed { n - 1 - g } else { g };
                let delta = self.increments[local * m + c];
                let (first, second) = split(delta, delta * 0.5 + scale * z[g]);
                if self.reversed {
                    out[(2 * local) * m + c] = second;
                    out[(2 * local + 1) * m + c] = first;
                } else {
                    out[(2 * local) * m + c] = first;
                    out[(2 * local + 1) * m + c] = second;
                }
            }
        }
        BrownianPath {
            m,
            t_final: self.t_final,
            h: self.h / 2.0,
            seed: self.seed,
            level: self.level + 1,
            start: 2 * self.start,
            reversed: self.reversed,
            increments: out,
        }
    }

    /// Pairwise sums of consecutive increments (inverse of [`Self::refine`]).
    pub fn coarsen(&self) -> Result<BrownianPath> {
        let n = self.steps();
        if n % 2 != 0 || self.level == 0 || self.start % 2 != 0 {
            return Err(RoughFlowError::InvalidArgument("path cannot be coarsened".into()));
        }
        let m = self.m;
        let mut out = vec![0.0; n / 2 * m];
        for k in 0..n / 2 {
            for c in 0..m {
                out[k * m + c] = self.increments[2 * k * m + c] + self.increments[(2 * k + 1) * m + c];
            }
        }
        Ok(BrownianPath {
            m,
            t_final: self.t_final,
            h: self.h * 2.0,
            seed: self.seed,
            level: self.level - 1,
            start: self.start / 2,
            reversed: self.reversed,
            increments: out,
        })
    }

    /// The path restricted to its first `steps` increments.
    pub fn truncate(&self, steps: usize) -> Result<BrownianPath> {
        let n = self.steps();
        if steps == 0 || steps > n {
            return Err(RoughFlowError::InvalidArgument(format!("cannot truncate {n} steps to {steps}")));
        }
        let m = self.m;
        // For a reversed path the dropped tail holds the lowest global indices.
        let start = if self.reversed { self.start + (n - steps) as u64 } else { self.start };
        Ok(BrownianPath {
            m,
            t_final: steps as f64 * self.h,
            h: self.h,
            seed: self.seed,
            level: self.level,
            start,
            reversed: self.reversed,
            increments: self.increments[..steps * m].to_vec(),
        })
    }

    /// Time reversal over the whole path: `ŵ_t = w_T − w_{T−t}`.
    pub fn reverse(&self) -> BrownianPath {
        let m = self.m;
        let n = self.steps();
        let mut out = vec![0.0; n * m];
        for k in 0..n {
            out[k * m..(k + 1) * m].copy_from_slice(&self.increments[(n - 1 - k) * m..(n - k) * m]);
        }
        BrownianPath { increments: out, reversed: !self.reversed, ..self.clone() }
    }

    /// The path of `−w`.
    pub fn negate(&self) -> BrownianPath {
        BrownianPath { increments: self.increments.iter().map(|v| -v).collect(), ..self.clone() }
    }

    /// Time reversal at `t`, a grid time in `(0, T]`: the reversed driver of
    /// the restriction to `[0, t]`.
    pub fn reverse_at(&self, t: f64) -> Result<BrownianPath> {
        let steps = step_count(t, self.h)?;
        Ok(self.truncate(steps)?.reverse())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn deterministic_and_seed_dependent() {
        let a = sample_path(7, 1, 1.0, 0.5).unwrap();
        let b = sample_path(7, 1, 1.0, 0.5).unwrap();
        let c = sample_path(8, 1, 1.0, 0.5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.increments(), c.increments());
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(sample_path(1, 1, 1.0, 0.3).is_err());
        assert!(sample_path(1, 1, 1.0, 0.0).is_err());
        assert!(sample_path(1, 1, 1.0, -0.1).is_err());
        assert!(sample_path(1, 1, 1.0, 2.0).is_err());
        assert_eq!(sample_path(1, 1, 1.0, 1.0).unwrap().steps(), 1);
    }

    #[test]
    fn prefix_of_longer_path_is_identical() {
        let a = sample_path(3, 2, 0.5, 1.0 / 64.0).unwrap();
        let b = sample_path(3, 2, 1.0, 1.0 / 64.0).unwrap();
        assert_eq!(a.increments(), &b.increments()[..a.increments().len()]);
    }

    #[test]
    fn increment_variance_matches_step() {
        let h = 1e-3;
        let (mut s, mut s2, mut n) = ([0.0; 2], [0.0; 2], 0.0);
        for seed in 0..10u64 {
            let p = sample_path(seed, 2, 1.0, h).unwrap();
            for k in 0..p.steps() {
                for c in 0..2 {
                    let v = p.step(k)[c];
                    s[c] += v;
                    s2[c] += v * v;
                }
            }
            n += p.steps() as f64;
        }
        for c in 0..2 {
            let mean = s[c] / n;
            let var = s2[c] / n - mean * mean;
            assert!((0.9e-3..=1.1e-3).contains(&var), "component {c}: {var}");
        }
    }

    #[test]
    fn refined_variance_is_half_step() {
        let p = sample_path(5, 1, 10.0, 1e-3).unwrap().refine();
        let v: f64 = p.increments().iter().map(|x| x * x).sum::<f64>() / p.increments().len() as f64;
        assert!((0.45e-3..=0.55e-3).contains(&v), "{v}");
    }

    #[test]
    fn two_refinements_quadruple_steps() {
        let p = sample_path(1, 2, 1.0, 0.125).unwrap();
        let q = p.refine().refine();
        assert_eq!(q.steps(), 32);
        assert_eq!(q.h(), 0.125 / 4.0);
        assert_eq!(q.coarsen().unwrap().coarsen().unwrap().increments(), p.increments());
    }

    #[test]
    fn single_increment_reverses_to_itself() {
        let p = BrownianPath::from_increments(0, 1, 0.1, vec![0.37]).unwrap();
        assert_eq!(p.reverse().increments(), &[quantize(0.37)]);
    }

    #[test]
    fn reversed_cumulative_sums() {
        let p = sample_path(11, 2, 1.0, 1.0 / 32.0).unwrap();
        let r = p.reverse();
        let (w, wh) = (p.cumulative(), r.cumulative());
        let n = p.steps();
        for k in 0..=n {
            for c in 0..2 {
                let expect = w[n * 2 + c] - w[(n - k) * 2 + c];
                assert!((wh[k * 2 + c] - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn reverse_at_uses_prefix() {
        let p = sample_path(2, 1, 1.0, 0.25).unwrap();
        let r = p.reverse_at(0.5).unwrap();
        assert_eq!(r.increments(), &[p.step(1)[0], p.step(0)[0]]);
    }

    proptest! {
        #[test]
        fn split_is_exact(delta in -4.0f64..4.0, first in -6.0f64..6.0) {
            let delta = quantize(delta);
            let (a, b) = split(delta, first);
            prop_assert_eq!(a + b, delta);
            prop_assert!((a - first).abs() <= QUANTUM);
        }

        #[test]
        fn refine_pairs_sum_to_coarse(seed in any::<u64>(), steps in 1usize..40, m in 0usize..3) {
            let p = sample_path(seed, m, steps as f64 * 0.01, 0.01).unwrap();
            let q = p.refine();
            for k in 0..steps {
                for c in 0..m {
                    prop_assert_eq!(q.step(2 * k)[c] + q.step(2 * k + 1)[c], p.step(k)[c]);
                }
            }
        }

        #[test]
        fn reverse_is_an_involution(seed in any::<u64>(), steps in 1usize..40) {
            let p = sample_path(seed, 2, steps as f64 * 0.01, 0.01).unwrap();
            prop_assert_eq!(p.reverse().reverse(), p);
        }

        #[test]
        fn refinement_commutes_with_reversal(seed in any::<u64>(), steps in 1usize..30, cut in 1usize..30) {
            let p = sample_path(seed, 2, steps as f64 * 0.02, 0.02).unwrap();
            let p = p.truncate(cut.min(steps)).unwrap();
            prop_assert_eq!(p.reverse().refine(), p.refine().reverse());
            prop_assert_eq!(p.reverse().refine().refine(), p.refine().refine().reverse());
        }

        #[test]
        fn truncation_commutes_with_refinement(seed in any::<u64>(), steps in 2usize..30, cut in 1usize..30) {
            let p = sample_path(seed, 1, steps as f64 * 0.02, 0.02).unwrap();
            let cut = cut.min(steps);
            prop_assert_eq!(p.truncate(cut).unwrap().refine(), p.refine().truncate(2 * cut).unwrap());
            let r = p.reverse();
            prop_assert_eq!(r.truncate(cut).unwrap().refine(), r.refine().truncate(2 * cut).unwrap());
        }
    }
}
