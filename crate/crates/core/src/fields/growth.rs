use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::VectorField;
use crate::linalg::{norm, MAX_DIM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    /// `max |F(x)| / (1 + |x|^{1−ε₀})` over the samples.
    pub max_ratio: f64,
    pub argmax: Vec<f64>,
    pub c: f64,
    pub eps0: f64,
    pub within: bool,
    pub samples: usize,
}

/// `count` points, even-indexed ones uniform in `B(radius)` and odd-indexed
/// ones on the sphere `|x| = radius`. Deterministic in `seed`.
pub(crate) fn ball_samples(d: usize, count: usize, radius: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count * d);
    let mut x = [0.0; MAX_DIM];
    for k in 0..count {
        loop {
            for xi in x[..d].iter_mut() {
                *xi = rng.gen_range(-1.0..1.0);
            }
            let r = norm(&x[..d]);
            if r <= 1.0 && r > 1e-12 {
                let s = if k % 2 == 0 { rng.gen::<f64>().powf(1.0 / d as f64) } else { 1.0 };
                for xi in x[..d].iter_mut() {
                    *xi *= radius * s / r;
                }
                break;
            }
        }
        out.extend_from_slice(&x[..d]);
    }
    out
}

/// Samples half of the points uniformly in `B(radius)` and half on the sphere
/// `|x| = radius`, where sublinear violations are largest. The sample stream is
/// fixed so reports are reproducible.
pub fn growth_report(
    field: &dyn VectorField,
    c: f64,
    eps0: f64,
    sample_count: usize,
    radius: f64,
) -> GrowthReport {
    let d = field.dim();
    let count = sample_count.max(1);
    let mut best = (0.0f64, vec![0.0; d]);
    let mut v = [0.0; MAX_DIM];
    for x in ball_samples(d, count, radius, 0x6772_6f77).chunks(d) {
        field.value(x, &mut v);
        let ratio = norm(&v[..d]) / (1.0 + norm(x).powf(1.0 - eps0));
        if ratio > best.0 {
            best = (ratio, x.to_vec());
        }
    }
    GrowthReport { max_ratio: best.0, argmax: best.1, c, eps0, within: best.0 <= c, samples: count }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::SmoothVectorField;

    #[derive(Debug)]
    struct Damped;

    impl VectorField for Damped {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, x: &[f64], out: &mut [f64]) {
            let r = norm(x);
            let s = (1.0 + r).sqrt() / (1.0 + r);
            out[0] = x[0] * s;
            out[1] = x[1] * s;
        }
        fn jacobian(&self, _x: &[f64], _out: &mut [f64]) {
            unimplemented!()
        }
    }

    #[test]
    fn zero_field_has_zero_ratio() {
        let r = growth_report(&SmoothVectorField::zero(2), 0.0, 0.5, 100, 10.0);
        assert_eq!(r.max_ratio, 0.0);
        assert!(r.within);
    }

    #[test]
    fn damped_identity_ratio_at_most_one() {
        // |F| = r/√(1+r) ≤ 1 + √r for every r ≥ 0.
        let r = growth_report(&Damped, 1.0, 0.5, 2000, 100.0);
        assert!(r.within && r.max_ratio <= 1.0);
    }

    #[test]
    fn linear_field_ratio_matches_grid_maximum() {
        let b = [-1.0, 0.5, -0.5, -1.0];
        let f = SmoothVectorField::linear(2, b.to_vec());
        // B = −I + 0.5·rotation so |Bx| = √1.25·|x| for all x.
        let op = 1.25f64.sqrt();
        let oracle = (0..=10_000)
            .map(|k| 10.0 * k as f64 / 10_000.0)
            .map(|r| op * r / (1.0 + r.sqrt()))
            .fold(0.0, f64::max);
        let rep = growth_report(&f, 100.0, 0.5, 2000, 10.0);
        assert!((rep.max_ratio - oracle).abs() <= 1e-9 * oracle, "{} vs {}", rep.max_ratio, oracle);
    }
}
