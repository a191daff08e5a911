//! Lloyd's k-means with k-means++ seeding and parallel restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::Embedding;
use crate::error::{Error, Result};

pub const DEFAULT_RESTARTS: usize = 10;
pub const MAX_ITERATIONS: usize = 300;

/// Outcome of the best restart.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<u32>,
    /// Row-major `k x dim` centroids.
    pub centroids: Vec<f64>,
    /// Within-cluster sum of squares.
    pub wcss: f64,
    /// WCSS after every Lloyd iteration of the chosen restart.
    pub history: Vec<f64>,
    pub restart: usize,
}

/// Clusters the rows of `points` into `k` groups; keeps the restart with
/// the lowest WCSS (ties to the lower restart index).
pub fn kmeans_cluster(
    points: &Embedding,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<KMeansResult> {
    let n = points.n_points();
    if k == 0 || restarts == 0 {
        return Err(Error::InvalidArgument(
            "k and restarts must be positive".into(),
        ));
    }
    let distinct = distinct_rows(points);
    if k > distinct {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {distinct} distinct points (of {n})"
        )));
    }
    let runs: Vec<KMeansResult> = (0..restarts)
        .into_par_iter()
        .map(|r| lloyd(points, k, seed, r))
        .collect();
    Ok(runs
        .into_iter()
        .reduce(|best, run| if run.wcss < best.wcss { run } else { best })
        .expect("at least one restart"))
}

fn distinct_rows(points: &Embedding) -> usize {
    let mut rows: Vec<&[f64]> = (0..points.n_points()).map(|i| points.row(i)).collect();
    let cmp = |a: &&[f64], b: &&[f64]| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    };
    rows.sort_by(cmp);
    rows.dedup_by(|a, b| cmp(&&**a, &&**b).is_eq());
    rows.len()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid (lowest index on ties) and its squared distance.
fn nearest(p: &[f64], centroids: &[f64], dim: usize) -> (u32, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(p, centroid);
        if d < best.1 {
            best = (c as u32, d);
        }
    }
    best
}

fn seed_plus_plus(points: &Embedding, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.n_points();
    let dim = points.dim();
    let mut centroids = Vec::with_capacity(k * dim);
    centroids.extend_from_slice(points.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), &centroids[..dim]))
        .collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // never pick a point that coincides with an existing center
            if d2[chosen] == 0.0 {
                chosen = (0..n).rev().find(|&i| d2[i] > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let start = centroids.len();
        centroids.extend_from_slice(points.row(pick));
        let c = &centroids[start..];
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), c));
        }
    }
    centroids
}

fn lloyd(points: &Embedding, k: usize, seed: u64, restart: usize) -> KMeansResult {
    let n = points.n_points();
    let dim = points.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    let mut centroids = seed_plus_plus(points, k, &mut rng);
    let mut labels = vec![u32::MAX; n];
    let mut dist = vec![0.0; n];
    let mut history = Vec::new();

    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for i in 0..n {
            let (c, d) = nearest(points.row(i), &centroids, dim);
            changed |= labels[i] != c;
            labels[i] = c;
            dist[i] = d;
        }

        // Re-seed empty clusters with the point farthest from its centroid.
        let mut sizes = vec![0usize; k];
        for &l in &labels {
            sizes[l as usize] += 1;
        }
        for c in 0..k {
            if sizes[c] == 0 {
                let far = (0..n)
                    .filter(|&i| sizes[labels[i] as usize] > 1)
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                    .expect("k <= distinct points leaves a splittable cluster");
                sizes[labels[far] as usize] -= 1;
                labels[far] = c as u32;
                dist[far] = 0.0;
                sizes[c] = 1;
                changed = true;
            }
        }

        centroids.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            let c = labels[i] as usize;
            for (acc, &x) in centroids[c * dim..(c + 1) * dim]
                .iter_mut()
                .zip(points.row(i))
            {
                *acc += x;
            }
        }
        for c in 0..k {
            let inv = 1.0 / sizes[c] as f64;
            centroids[c * dim..(c + 1) * dim]
                .iter_mut()
                .for_each(|x| *x *= inv);
        }
        let wcss: f64 = (0..n)
            .map(|i| sq_dist(points.row(i), &centroids[labels[i] as usize * dim..][..dim]))
            .sum();
        history.push(wcss);
        if !changed {
            break;
        }
    }
    let wcss = *history.last().unwrap();
    KMeansResult {
        labels,
        centroids,
        wcss,
        history,
        restart,
    }
}
