//! Small dense helpers on row-major slices.
//!
//! Every matrix in the crate is a row-major `d × d` slice with `d ≤ MAX_DIM`;
//! these routines avoid heap traffic in the time-stepping loops.

pub const MAX_DIM: usize = 4;

pub fn identity(d: usize, out: &mut [f64]) {
    out[..d * d].iter_mut().for_each(|v| *v = 0.0);
    for i in 0..d {
        out[i * d + i] = 1.0;
    }
}

/// `out = a · b` for `d × d` matrices.
pub fn matmul(d: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += a[i * d + k] * b[k * d + j];
            }
            out[i * d + j] = s;
        }
    }
}

/// `out = a · v`.
pub fn matvec(d: usize, a: &[f64], v: &[f64], out: &mut [f64]) {
    for i in 0..d {
        let mut s = 0.0;
        for k in 0..d {
            s += a[i * d + k] * v[k];
        }
        out[i] = s;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn trace(d: usize, a: &[f64]) -> f64 {
    (0..d).map(|i| a[i * d + i]).sum()
}

pub fn frobenius(a: &[f64]) -> f64 {
    norm(a)
}

/// Spectral norm via power iteration on `aᵀa`; exact enough for diagnostics.
pub fn operator_norm(d: usize, a: &[f64]) -> f64 {
    if d == 1 {
        return a[0].abs();
    }
    let mut ata = [0.0; MAX_DIM * MAX_DIM];
    for i in 0..d {
        for j in 0..d {
            ata[i * d + j] = (0..d).map(|k| a[k * d + i] * a[k * d + j]).sum();
        }
    }
    if d == 2 {
        let (p, q, r) = (ata[0], ata[1], ata[3]);
        let mid = 0.5 * (p + r);
        let disc = (0.25 * (p - r) * (p - r) + q * q).sqrt();
        return (mid + disc).max(0.0).sqrt();
    }
    let mut v = [1.0; MAX_DIM];
    let mut lambda = 0.0;
    for _ in 0..200 {
        let mut w = [0.0; MAX_DIM];
        matvec(d, &ata, &v, &mut w);
        let n = norm(&w[..d]);
        if n == 0.0 {
            return 0.0;
        }
        for i in 0..d {
            v[i] = w[i] / n;
        }
        lambda = n;
    }
    lambda.sqrt()
}

/// Determinant and inverse by Gauss–Jordan elimination with partial pivoting.
/// Returns the determinant; `inv` is left unspecified when it is zero.
pub fn invert(d: usize, a: &[f64], inv: &mut [f64]) -> f64 {
    match d {
        1 => {
            inv[0] = 1.0 / a[0];
            a[0]
        }
        2 => {
            let det = a[0] * a[3] - a[1] * a[2];
            inv[0] = a[3] / det;
            inv[1] = -a[1] / det;
            inv[2] = -a[2] / det;
            inv[3] = a[0] / det;
            det
        }
        _ => {
            let mut m = [0.0; MAX_DIM * MAX_DIM];
            m[..d * d].copy_from_slice(&a[..d * d]);
            identity(d, inv);
            let mut det = 1.0;
            for col in 0..d {
                let pivot = (col..d)
                    .max_by(|&i, &j| m[i * d + col].abs().total_cmp(&m[j * d + col].abs()))
                    .unwrap();
                if m[pivot * d + col] == 0.0 {
                    return 0.0;
                }
                if pivot != col {
                    for k in 0..d {
                        m.swap(pivot * d + k, col * d + k);
                        inv.swap(pivot * d + k, col * d + k);
                    }
                    det = -det;
                }
                let p = m[col * d + col];
                det *= p;
                for k in 0..d {
                    m[col * d + k] /= p;
                    inv[col * d + k] /= p;
                }
                for row in 0..d {
                    if row != col {
                        let f = m[row * d + col];
                        if f != 0.0 {
                            for k in 0..d {
                                m[row * d + k] -= f * m[col * d + k];
                                inv[row * d + k] -= f * inv[col * d + k];
                            }
                        }
                    }
                }
            }
            det
        }
    }
}

pub fn determinant(d: usize, a: &[f64]) -> f64 {
    let mut inv = [0.0; MAX_DIM * MAX_DIM];
    invert(d, a, &mut inv)
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    // V_d = π^{d/2} / Γ(d/2 + 1), via V_d = 2π/d · V_{d-2}.
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / d as f64 * unit_ball_volume(d - 2),
    }
}

/// Surface area of the unit sphere `S^{d-1}`.
pub fn unit_sphere_area(d: usize) -> f64 {
    d as f64 * unit_ball_volume(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_three_by_three() {
        let a = [2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0];
        let mut inv = [0.0; 9];
        let det = invert(3, &a, &mut inv);
        assert!((det - 18.0).abs() < 1e-12);
        let mut prod = [0.0; 9];
        matmul(3, &a, &inv, &mut prod);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((prod[i * 3 + j] - e).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn operator_norm_of_diagonal() {
        assert!((operator_norm(2, &[2.0, 0.0, 0.0, -3.0]) - 3.0).abs() < 1e-12);
        assert!((operator_norm(3, &[1.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 2.0]) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-14);
        assert!((unit_sphere_area(2) - 2.0 * std::f64::consts::PI).abs() < 1e-14);
    }
}
