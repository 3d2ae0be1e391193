#![allow(dead_code)]

use domain_uq::SparseMatrix;

/// Eigenvalues of a dense symmetric matrix by cyclic Jacobi rotations,
/// sorted in descending order.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * diag {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Smallest k such that the eigenvalues beyond the first k sum to at most
/// `tol` times the trace.
pub fn optimal_rank(eigs: &[f64], tol: f64) -> usize {
    let total: f64 = eigs.iter().map(|v| v.max(0.0)).sum();
    let mut tail = total;
    for (k, v) in eigs.iter().enumerate() {
        if tail <= tol * total {
            return k;
        }
        tail -= v.max(0.0);
    }
    eigs.len()
}

/// Uniform grid on [0, 1] with `n` points.
pub fn grid_1d(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

pub fn gaussian_kernel(x: &[f64], ell: f64) -> Vec<Vec<f64>> {
    x.iter()
        .map(|a| x.iter().map(|b| (-(a - b).powi(2) / (2.0 * ell * ell)).exp()).collect())
        .collect()
}

/// P1 mass matrix of the 1D grid, tridiagonal.
pub fn mass_1d(n: usize) -> Vec<Vec<f64>> {
    let h = 1.0 / (n - 1) as f64;
    let mut m = vec![vec![0.0; n]; n];
    for e in 0..n - 1 {
        m[e][e] += h / 3.0;
        m[e + 1][e + 1] += h / 3.0;
        m[e][e + 1] += h / 6.0;
        m[e + 1][e] += h / 6.0;
    }
    m
}

/// Lower Cholesky factor of a dense SPD matrix.
pub fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let d = a[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        l[j][j] = d.sqrt();
        for i in j + 1..n {
            let s = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            l[i][j] = s / l[j][j];
        }
    }
    l
}

/// `Rᵀ C R` for dense matrices.
pub fn congruence(c: &[Vec<f64>], r: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = c.len();
    let mut cr = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            cr[i][j] = (0..n).map(|k| c[i][k] * r[k][j]).sum();
        }
    }
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            out[i][j] = (0..n).map(|k| r[k][i] * cr[k][j]).sum();
        }
    }
    out
}

pub fn sparse(a: &[Vec<f64>]) -> SparseMatrix {
    SparseMatrix::from_dense(a)
}

/// `n` points uniformly distributed in the unit disc from a fixed seed.
pub fn disc_points(n: usize, seed: u64) -> Vec<[f64; 2]> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let r = rng.random::<f64>().sqrt();
            let t = std::f64::consts::TAU * rng.random::<f64>();
            [r * t.cos(), r * t.sin()]
        })
        .collect()
}
