//! Seeded K-means: k-means++ initialisation plus Lloyd iterations.
//!
//! Single-threaded and fully deterministic for a given seed; nearest-centroid
//! ties resolve to the lowest centroid index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    /// `k` centroids; clusters that lost all members keep their last position.
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
}

/// Clusters `n` points of dimension `dim` (row-major) into `k` groups.
pub fn kmeans(points: &[f64], n: usize, dim: usize, k: usize, seed: u64) -> Result<KMeansResult> {
    assert_eq!(points.len(), n * dim, "point buffer shape mismatch");
    if k == 0 {
        return Err(Error::InvalidInput("cluster count must be positive".into()));
    }
    if k > n {
        return Err(Error::InvalidInput(format!(
            "cluster count {k} exceeds sample count {n}"
        )));
    }
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids = plus_plus_init(points, n, dim, k, &mut rng);
    let mut assignments: Vec<usize> = (0..n).map(|i| nearest(row(i), &centroids)).collect();
    let mut iterations = 0;

    for iter in 0..MAX_ITERATIONS {
        iterations = iter + 1;
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignments[i];
            counts[c] += 1;
            for (s, x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            for d in 0..dim {
                centroids[c][d] = sums[c * dim + d] / counts[c] as f64;
            }
        }
        let next: Vec<usize> = (0..n).map(|i| nearest(row(i), &centroids)).collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }

    Ok(KMeansResult {
        assignments,
        centroids,
        iterations,
    })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = squared_distance(point, &centroids[0]);
    for (c, centroid) in centroids.iter().enumerate().skip(1) {
        let d = squared_distance(point, centroid);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn plus_plus_init(points: &[f64], n: usize, dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    centroids.push(row(first).to_vec());

    let mut dist: Vec<f64> = (0..n)
        .map(|i| squared_distance(row(i), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All remaining points coincide with a centroid.
            rng.random_range(0..n)
        };
        centroids.push(row(next).to_vec());
        for i in 0..n {
            let d = squared_distance(row(i), centroids.last().unwrap());
            if d < dist[i] {
                dist[i] = d;
            }
        }
    }
    centroids
}
