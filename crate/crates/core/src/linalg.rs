//! Small dense linear algebra on row-major square/rectangular matrices.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Determinant via LU factorization with partial pivoting.
pub fn determinant(a: &[f64], n: usize) -> f64 {
    let mut m = a.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap();
        if m[pivot * n + col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            det = -det;
        }
        let p = m[col * n + col];
        det *= p;
        for row in col + 1..n {
            let f = m[row * n + col] / p;
            for k in col..n {
                m[row * n + k] -= f * m[col * n + k];
            }
        }
    }
    det
}

/// Inverse via Gauss-Jordan elimination with partial pivoting; `None` when
/// a zero pivot is met.
pub fn inverse(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap();
        if m[pivot * n + col] == 0.0 {
            return None;
        }
        for k in 0..n {
            m.swap(col * n + k, pivot * n + k);
            inv.swap(col * n + k, pivot * n + k);
        }
        let p = m[col * n + col];
        for k in 0..n {
            m[col * n + k] /= p;
            inv[col * n + k] /= p;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = m[row * n + col];
            if f == 0.0 {
                continue;
            }
            for k in 0..n {
                m[row * n + k] -= f * m[col * n + k];
                inv[row * n + k] -= f * inv[col * n + k];
            }
        }
    }
    Some(inv)
}

/// `u^T M v` for row-major `M` of shape `u.len() x v.len()`.
pub fn bilinear(u: &[f64], m: &[f64], v: &[f64]) -> f64 {
    let cols = v.len();
    u.iter()
        .enumerate()
        .map(|(r, ur)| {
            ur * m[r * cols..(r + 1) * cols]
                .iter()
                .zip(v)
                .map(|(a, b)| a * b)
                .sum::<f64>()
        })
        .sum()
}

pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            for j in 0..n {
                out[i * n + j] += aip * b[p * n + j];
            }
        }
    }
    out
}

pub fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

pub(crate) fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// `v <- normalize(M^T u)`, `u <- normalize(M v)` for row-major `rows x cols`.
pub fn power_iteration_step(m: &[f64], rows: usize, cols: usize, u: &mut [f64], v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = 0.0);
    for r in 0..rows {
        let ur = u[r];
        for (vc, mc) in v.iter_mut().zip(&m[r * cols..(r + 1) * cols]) {
            *vc += ur * mc;
        }
    }
    normalize(v);
    for (r, ur) in u.iter_mut().enumerate() {
        *ur = m[r * cols..(r + 1) * cols]
            .iter()
            .zip(v.iter())
            .map(|(a, b)| a * b)
            .sum();
    }
    normalize(u);
}

/// Largest singular value estimated by `iters` power-iteration steps from a
/// deterministic all-ones start.
pub fn top_singular_value(m: &[f64], rows: usize, cols: usize, iters: usize) -> f64 {
    if m.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    let mut u = vec![1.0 / (rows as f64).sqrt(); rows];
    let mut v = vec![0.0; cols];
    for _ in 0..iters.max(1) {
        power_iteration_step(m, rows, cols, &mut u, &mut v);
    }
    bilinear(&u, m, &v).abs()
}

/// Random orthogonal `n x n` matrix: Gram-Schmidt QR of a Gaussian sample
/// with the sign convention `diag(R) > 0`.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let a: Vec<f64> = (0..n * n)
            .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect();
        // columns of a -> orthonormal columns of q
        let mut q = vec![0.0; n * n];
        let mut ok = true;
        for j in 0..n {
            let mut col: Vec<f64> = (0..n).map(|i| a[i * n + j]).collect();
            for _ in 0..2 {
                for k in 0..j {
                    let dot: f64 = (0..n).map(|i| q[i * n + k] * col[i]).sum();
                    for i in 0..n {
                        col[i] -= dot * q[i * n + k];
                    }
                }
            }
            if normalize(&mut col) < 1e-8 {
                ok = false;
                break;
            }
            for i in 0..n {
                q[i * n + j] = col[i];
            }
        }
        if ok {
            return q;
        }
    }
}
