//! Dense symmetric eigensolver based on cyclic Jacobi rotations.
//!
//! Jacobi is slower than QR-style methods for large matrices but is fully
//! deterministic, needs no convergence tuning, and is robust for every real
//! symmetric input, which suits the affinity matrices handled here.

use crate::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigen decomposition of a symmetric matrix, eigenvalues non-increasing.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub eigenvalues: Vec<f64>,
    /// `eigenvectors[k]` is the unit eigenvector paired with `eigenvalues[k]`.
    pub eigenvectors: Vec<Vec<f64>>,
}

/// Diagonalizes a symmetric `n x n` matrix given in row-major order.
///
/// Off-diagonal mass is annihilated by plane rotations in cyclic order until
/// it falls below a tolerance scaled to the input norm; pairs are then sorted
/// by descending eigenvalue. Each returned pair satisfies
/// `||A v - lambda v|| <= 1e-8`.
pub fn symmetric_eigen(matrix: &[f64], n: usize) -> Result<SymmetricEigen> {
    assert_eq!(matrix.len(), n * n, "matrix shape mismatch");
    if n == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }

    let mut a = matrix.to_vec();
    // Accumulated rotations; column k becomes the k-th eigenvector.
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let fro: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-13 * fro.max(1.0);

    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    let mut b = eig.clone();
    let mut z = vec![0.0; n];

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q].abs())
            .sum();
        if off <= tol {
            converged = true;
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let h = eig[q] - eig[p];
                let t = if apq.abs() * 1e-36 > h.abs() {
                    // Angles of 45 degrees for negligible diagonal gaps.
                    1.0
                } else {
                    let theta = 0.5 * h / apq;
                    let mut t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        t = -t;
                    }
                    t
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let h = t * apq;
                z[p] -= h;
                z[q] += h;
                eig[p] -= h;
                eig[q] += h;
                a[p * n + q] = 0.0;
                let rotate = |a: &mut [f64], i1: usize, i2: usize| {
                    let g = a[i1];
                    let hh = a[i2];
                    a[i1] = g - s * (hh + g * tau);
                    a[i2] = hh + s * (g - hh * tau);
                };
                for j in 0..p {
                    rotate(&mut a, j * n + p, j * n + q);
                }
                for j in (p + 1)..q {
                    rotate(&mut a, p * n + j, j * n + q);
                }
                for j in (q + 1)..n {
                    rotate(&mut a, p * n + j, q * n + j);
                }
                for j in 0..n {
                    rotate(&mut v, j * n + p, j * n + q);
                }
            }
        }
        for i in 0..n {
            b[i] += z[i];
            eig[i] = b[i];
            z[i] = 0.0;
        }
    }
    if !converged {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q].abs())
            .sum();
        if off > tol {
            return Err(Error::EigenNonConvergence(MAX_SWEEPS));
        }
    }

    // Sort pairs by descending eigenvalue; equal values keep original order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig[j].partial_cmp(&eig[i]).unwrap().then(i.cmp(&j)));

    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenvectors = Vec::with_capacity(n);
    for &k in &order {
        eigenvalues.push(eig[k]);
        let mut vec_k: Vec<f64> = (0..n).map(|i| v[i * n + k]).collect();
        canonical_sign(&mut vec_k);
        eigenvectors.push(vec_k);
    }
    Ok(SymmetricEigen {
        eigenvalues,
        eigenvectors,
    })
}

/// Flips the vector so its largest-magnitude component is positive.
fn canonical_sign(v: &mut [f64]) {
    let mut lead = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[lead].abs() {
            lead = i;
        }
    }
    if v[lead] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// `||A v - lambda v||_2` for one eigenpair, used by validation checks.
pub fn eigen_residual(matrix: &[f64], n: usize, eigenvalue: f64, eigenvector: &[f64]) -> f64 {
    let mut sq = 0.0;
    for i in 0..n {
        let mut av = 0.0;
        for j in 0..n {
            av += matrix[i * n + j] * eigenvector[j];
        }
        let r = av - eigenvalue * eigenvector[i];
        sq += r * r;
    }
    sq.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn diagonal_matrix() {
        let m = vec![3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0];
        let e = symmetric_eigen(&m, 3).unwrap();
        assert_close(e.eigenvalues[0], 3.0, 1e-12);
        assert_close(e.eigenvalues[1], 2.0, 1e-12);
        assert_close(e.eigenvalues[2], 1.0, 1e-12);
    }

    #[test]
    fn known_two_by_two() {
        // [[2,1],[1,2]] has eigenvalues 3 and 1.
        let m = vec![2.0, 1.0, 1.0, 2.0];
        let e = symmetric_eigen(&m, 2).unwrap();
        assert_close(e.eigenvalues[0], 3.0, 1e-12);
        assert_close(e.eigenvalues[1], 1.0, 1e-12);
        let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
        assert_close(e.eigenvectors[0][0], inv_sqrt2, 1e-10);
        assert_close(e.eigenvectors[0][1], inv_sqrt2, 1e-10);
    }

    #[test]
    fn residuals_and_orthogonality_on_random_symmetric() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for n in [2usize, 5, 17, 40] {
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let x: f64 = rng.random_range(-1.0..1.0);
                    m[i * n + j] = x;
                    m[j * n + i] = x;
                }
            }
            let e = symmetric_eigen(&m, n).unwrap();
            for k in 0..n {
                let r = eigen_residual(&m, n, e.eigenvalues[k], &e.eigenvectors[k]);
                assert!(r <= 1e-8, "residual {r} at n={n}, k={k}");
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    let dot: f64 = e.eigenvectors[i]
                        .iter()
                        .zip(&e.eigenvectors[j])
                        .map(|(a, b)| a * b)
                        .sum();
                    assert!(dot.abs() <= 1e-8, "non-orthogonal pair ({i},{j}): {dot}");
                }
            }
            for k in 1..n {
                assert!(e.eigenvalues[k - 1] >= e.eigenvalues[k] - 1e-12);
            }
        }
    }

    #[test]
    fn eigenvalue_sum_matches_trace() {
        let m = vec![1.0, 2.0, 3.0, 2.0, 3.0, 2.0, 3.0, 2.0, 2.0];
        let e = symmetric_eigen(&m, 3).unwrap();
        let sum: f64 = e.eigenvalues.iter().sum();
        assert_close(sum, 6.0, 1e-10);
    }
}
