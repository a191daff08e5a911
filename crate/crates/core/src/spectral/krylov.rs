//! Smallest eigenpairs of a normalized Laplacian.
//!
//! The kernel is known in closed form (one `D^{1/2} 1` vector per component,
//! a unit vector per isolated vertex) and is deflated exactly. The rest of
//! the wanted spectrum comes from a thick-restart block Krylov iteration on
//! the shift-inverted operator `(L + delta I)^{-1}`, restricted to the
//! complement of the kernel, with full reorthogonalization. Convergence is
//! judged on true residuals `||L u - lambda u||`, and the result is checked
//! against an inertia count so that no eigenvalue below the last returned
//! one can be missed.

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::jacobi::symmetric_eigen;
use super::ldlt::LdltAnalysis;
use super::{EigenpairSet, InertiaCounter};
use crate::error::{Error, Result};
use crate::graph::{components_from_adjacency, SparseSymLaplacian};

/// Knobs of [`smallest_eigenpairs_with`].
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Residual bound `||L u - lambda u||` for every returned pair.
    pub tol: f64,
    /// Seed of the random start block.
    pub seed: u64,
    pub max_restarts: usize,
    pub block_size: usize,
    /// `delta` of the shift-inverted operator `(L + delta I)^{-1}`.
    pub shift: f64,
    /// Confirm with an inertia count that no eigenvalue was skipped.
    pub verify_inertia: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            seed: 42,
            max_restarts: 400,
            block_size: 4,
            shift: 1e-3,
            verify_inertia: true,
        }
    }
}

/// The `k` algebraically smallest eigenpairs of `lap`.
pub fn smallest_eigenpairs(lap: &SparseSymLaplacian, k: usize, tol: f64) -> Result<EigenpairSet> {
    smallest_eigenpairs_with(
        lap,
        k,
        &SolverOptions {
            tol,
            ..SolverOptions::default()
        },
    )
}

pub fn smallest_eigenpairs_with(
    lap: &SparseSymLaplacian,
    k: usize,
    opts: &SolverOptions,
) -> Result<EigenpairSet> {
    let n = lap.n();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must lie in 1..={n}"
        )));
    }
    if !(opts.tol > 0.0) || !(opts.shift > 0.0) || opts.block_size == 0 {
        return Err(Error::InvalidArgument(
            "tolerance, shift and block size must be positive".into(),
        ));
    }

    let kernel = kernel_basis(lap);
    let c = kernel.len();
    if k <= c {
        let vectors: Vec<f64> = kernel[..k].iter().flatten().copied().collect();
        return Ok(EigenpairSet::from_columns(
            lap,
            vec![0.0; k],
            vectors,
            opts.tol,
        ));
    }

    let counter = InertiaCounter::from_analysis(LdltAnalysis::new(lap));
    let factor = counter.analysis().factor(-opts.shift)?;
    let op = |x: &mut [f64]| {
        project_out(&kernel, x);
        factor.solve_in_place(x);
        project_out(&kernel, x);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut want = k - c;
    let mut pairs = block_krylov(lap, &op, &kernel, want, opts, Vec::new(), &mut rng)?;

    if opts.verify_inertia {
        for _round in 0..8 {
            let lambda_k = pairs[k - c - 1].0;
            let sigma = lambda_k + 1e-6;
            let expected = counter.count_below(sigma)?;
            let found = c + pairs.iter().filter(|p| p.0 < sigma).count();
            if expected <= found {
                break;
            }
            warn!(
                "eigensolver missed {} eigenvalue(s) below {sigma:.3e}; extending the search",
                expected - found
            );
            want += expected - found;
            let init = pairs.into_iter().map(|p| p.1).collect();
            pairs = block_krylov(lap, &op, &kernel, want, opts, init, &mut rng)?;
        }
    }

    let mut values = vec![0.0; c];
    let mut vectors: Vec<f64> = kernel.iter().flatten().copied().collect();
    for (lambda, u, _) in pairs.into_iter().take(k - c) {
        values.push(lambda);
        vectors.extend(u);
    }
    Ok(EigenpairSet::from_columns(lap, values, vectors, opts.tol))
}

/// Orthonormal basis of the kernel of `lap`, one vector per component in
/// component-label order.
pub(crate) fn kernel_basis(lap: &SparseSymLaplacian) -> Vec<Vec<f64>> {
    let n = lap.n();
    let comps = components_from_adjacency(n, |i| lap.row(i).0);
    let mut norms = vec![0.0; comps.count];
    for i in 0..n {
        norms[comps.labels[i] as usize] += lap.degree()[i].max(1) as f64;
    }
    let mut basis = vec![vec![0.0; n]; comps.count];
    for i in 0..n {
        let l = comps.labels[i] as usize;
        basis[l][i] = (lap.degree()[i].max(1) as f64 / norms[l]).sqrt();
    }
    basis
}

type Ritz = (f64, Vec<f64>, f64);

/// Finds the `want` smallest eigenpairs of `lap` outside span(`deflate`),
/// where `op` applies the shift-inverted operator. Returns `(lambda, u,
/// residual)` ascending by `lambda`.
fn block_krylov(
    lap: &SparseSymLaplacian,
    op: &(dyn Fn(&mut [f64]) + Sync),
    deflate: &[Vec<f64>],
    want: usize,
    opts: &SolverOptions,
    init: Vec<Vec<f64>>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Ritz>> {
    let n = lap.n();
    let dim = n - deflate.len();
    let b = opts.block_size.min(dim);
    let m_max = (2 * want + 2 * b).max(want + 3 * b).max(24).min(dim);
    let keep = (want + b).min(m_max.saturating_sub(b)).max(want);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m_max + b);
    let mut images: Vec<Vec<f64>> = Vec::with_capacity(m_max + b);
    let mut h: Vec<f64> = Vec::new(); // row-major, leading dimension m_max + b
    let ld = m_max + b;
    h.resize(ld * ld, 0.0);

    let mut pending: Vec<Vec<f64>> = init;
    while pending.len() < b {
        pending.push(random_vector(n, rng));
    }

    let mut restarts = 0;
    let mut worst = Vec::new();
    loop {
        // Expand the basis with the pending block.
        let first_new = basis.len();
        for mut x in std::mem::take(&mut pending) {
            if basis.len() == dim {
                break;
            }
            let mut accepted = false;
            for _attempt in 0..4 {
                let before = norm(&x);
                project_out(deflate, &mut x);
                project_out(&basis, &mut x);
                project_out(deflate, &mut x);
                project_out(&basis, &mut x);
                let after = norm(&x);
                if after > 1e-8 * before && after > 0.0 {
                    scale(&mut x, 1.0 / after);
                    accepted = true;
                    break;
                }
                debug!("Krylov block lost rank; injecting a random direction");
                x = random_vector(n, rng);
            }
            if !accepted {
                continue;
            }
            let mut w = x.clone();
            op(&mut w);
            let j = basis.len();
            basis.push(x);
            images.push(w);
            let coeffs = dots(&basis, &images[j]);
            for (i, cij) in coeffs.into_iter().enumerate() {
                h[i * ld + j] = cij;
                h[j * ld + i] = cij;
            }
        }
        let m = basis.len();
        if m == first_new && m < dim {
            return Err(Error::NotConverged {
                iterations: restarts,
                worst_residual: f64::INFINITY,
                residuals: worst,
            });
        }

        // Rayleigh-Ritz on the current basis.
        let mut hm: Vec<f64> = (0..m)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .map(|(i, j)| 0.5 * (h[i * ld + j] + h[j * ld + i]))
            .collect();
        let (theta, s) = symmetric_eigen(&mut hm, m);
        if m >= want {
            let mut ritz = Vec::with_capacity(want);
            for j in 0..want {
                let coef: Vec<f64> = (0..m).map(|i| s[i * m + j]).collect();
                let mut u = combine(&basis, &coef);
                let nu = norm(&u);
                scale(&mut u, 1.0 / nu);
                let mut lu = vec![0.0; n];
                lap.mul_vec(&u, &mut lu);
                let lambda = dot(&u, &lu);
                let res = lu
                    .iter()
                    .zip(&u)
                    .map(|(a, b)| (a - lambda * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                ritz.push((lambda, u, res));
            }
            worst = ritz.iter().map(|r| r.2).collect();
            if ritz.iter().all(|r| r.2 <= opts.tol) {
                ritz.sort_by(|a, b| a.0.total_cmp(&b.0));
                debug!("Krylov converged: {want} pairs, basis {m}, {restarts} restarts");
                return Ok(ritz);
            }
            if m == dim {
                let worst_residual = worst.iter().copied().fold(0.0, f64::max);
                return Err(Error::NotConverged {
                    iterations: restarts,
                    worst_residual,
                    residuals: worst,
                });
            }
        }

        // Continuation block: the images of the newest basis vectors.
        let newest = first_new.max(m.saturating_sub(b)).min(m - 1);
        pending = images[newest..m].to_vec();
        while pending.len() < b {
            pending.push(random_vector(n, rng));
        }

        if m_max < dim && m + b > m_max {
            restarts += 1;
            if restarts > opts.max_restarts {
                let worst_residual = worst.iter().copied().fold(0.0, f64::max);
                return Err(Error::NotConverged {
                    iterations: restarts,
                    worst_residual,
                    residuals: worst,
                });
            }
            for x in pending.iter_mut() {
                project_out(&basis, x);
            }
            let kept: Vec<(Vec<f64>, Vec<f64>)> = (0..keep.min(m))
                .into_par_iter()
                .map(|j| {
                    let coef: Vec<f64> = (0..m).map(|i| s[i * m + j]).collect();
                    (combine(&basis, &coef), combine(&images, &coef))
                })
                .collect();
            basis.clear();
            images.clear();
            h.iter_mut().for_each(|x| *x = 0.0);
            for (j, (v, w)) in kept.into_iter().enumerate() {
                basis.push(v);
                images.push(w);
                h[j * ld + j] = theta[j];
            }
        }
    }
}

const CHUNK: usize = 4096;

fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
}

/// Dot product with a fixed summation order, independent of thread count.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn scale(a: &mut [f64], s: f64) {
    a.iter_mut().for_each(|x| *x *= s);
}

/// `[v_0 . x, v_1 . x, ...]` with deterministic summation.
fn dots(vs: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let k = vs.len();
    if k == 0 {
        return Vec::new();
    }
    let partial: Vec<Vec<f64>> = x
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, xc)| {
            let off = c * CHUNK;
            vs.iter()
                .map(|v| {
                    v[off..off + xc.len()]
                        .iter()
                        .zip(xc)
                        .map(|(p, q)| p * q)
                        .sum::<f64>()
                })
                .collect()
        })
        .collect();
    let mut out = vec![0.0; k];
    for p in partial {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out
}

/// `x -= V (V^T x)`, one classical Gram-Schmidt pass.
fn project_out(vs: &[Vec<f64>], x: &mut [f64]) {
    if vs.is_empty() {
        return;
    }
    let coef = dots(vs, x);
    x.par_chunks_mut(CHUNK).enumerate().for_each(|(c, xc)| {
        let off = c * CHUNK;
        for (v, &a) in vs.iter().zip(&coef) {
            let len = xc.len();
            for (xi, vi) in xc.iter_mut().zip(&v[off..off + len]) {
                *xi -= a * vi;
            }
        }
    });
}

/// `sum_j coef[j] * vs[j]`.
fn combine(vs: &[Vec<f64>], coef: &[f64]) -> Vec<f64> {
    let n = vs[0].len();
    let mut out = vec![0.0; n];
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, oc)| {
        let off = c * CHUNK;
        for (v, &a) in vs.iter().zip(coef) {
            let len = oc.len();
            for (o, vi) in oc.iter_mut().zip(&v[off..off + len]) {
                *o += a * vi;
            }
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_voxel_graph, normalized_laplacian, Connectivity};
    use crate::spectral::dense_spectrum;
    use crate::volume_io::VoxelMask;

    fn lap_of(dims: [usize; 3], voxels: Vec<[u32; 3]>) -> SparseSymLaplacian {
        let mask = VoxelMask::new(dims, [1.0; 3], voxels).unwrap();
        normalized_laplacian(&build_voxel_graph(&mask, Connectivity::TwentySix))
    }

    fn random_lap(
        seed: u64,
        dims: [usize; 3],
        density: f64,
        conn: Connectivity,
    ) -> SparseSymLaplacian {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total = dims[0] * dims[1] * dims[2];
        let mut cells: Vec<bool> = (0..total).map(|_| rng.random::<f64>() < density).collect();
        cells[0] = true;
        let mask = VoxelMask::from_dense(dims, [1.0; 3], &cells).unwrap();
        normalized_laplacian(&build_voxel_graph(&mask, conn))
    }

    #[test]
    fn path_of_three() {
        let lap = lap_of([3, 1, 1], vec![[0, 0, 0], [1, 0, 0], [2, 0, 0]]);
        let s = smallest_eigenpairs(&lap, 2, 1e-8).unwrap();
        assert!(s.eigenvalues()[0].abs() < 1e-12);
        assert!((s.eigenvalues()[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn complete_graph_degenerate_eigenspace() {
        let lap = lap_of(
            [2, 2, 2],
            (0..8u32).map(|i| [i & 1, (i >> 1) & 1, i >> 2]).collect(),
        );
        let s = smallest_eigenpairs(&lap, 3, 1e-8).unwrap();
        assert!(s.eigenvalues()[0].abs() < 1e-12);
        assert!((s.eigenvalues()[1] - 8.0 / 7.0).abs() < 1e-8);
        assert!((s.eigenvalues()[2] - 8.0 / 7.0).abs() < 1e-8);
        let full = smallest_eigenpairs(&lap, 8, 1e-8).unwrap();
        assert_eq!(full.k(), 8);
    }

    #[test]
    fn kernel_vector_is_sqrt_degree() {
        let lap = random_lap(3, [6, 6, 4], 0.9, Connectivity::TwentySix);
        let s = smallest_eigenpairs(&lap, 1, 1e-8).unwrap();
        let u = s.eigenvector(0);
        let ratio = u[0] / (lap.degree()[0] as f64).sqrt();
        for i in 0..lap.n() {
            assert!((u[i] - ratio * (lap.degree()[i] as f64).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_dense_on_random_masks() {
        let conns = [
            Connectivity::Six,
            Connectivity::Eighteen,
            Connectivity::TwentySix,
        ];
        for seed in 0..10u64 {
            let lap = random_lap(
                seed,
                [8, 7, 5],
                0.5 + 0.04 * seed as f64,
                conns[seed as usize % 3],
            );
            let k = lap.n().min(25);
            let dense = dense_spectrum(&lap).unwrap();
            let s = smallest_eigenpairs(&lap, k, 1e-8).unwrap();
            for j in 0..k {
                assert!(
                    (s.eigenvalues()[j] - dense.eigenvalues()[j]).abs() < 1e-8,
                    "seed {seed} j {j}"
                );
                assert!(s.residual_norms()[j] <= 1e-8);
            }
        }
    }

    #[test]
    fn deterministic() {
        let lap = random_lap(11, [9, 9, 4], 0.7, Connectivity::TwentySix);
        let a = smallest_eigenpairs(&lap, 6, 1e-8).unwrap();
        let b = smallest_eigenpairs(&lap, 6, 1e-8).unwrap();
        assert_eq!(a.vectors(), b.vectors());
    }

    #[test]
    fn rejects_bad_k() {
        let lap = lap_of([2, 1, 1], vec![[0, 0, 0], [1, 0, 0]]);
        assert!(smallest_eigenpairs(&lap, 0, 1e-8).is_err());
        assert!(smallest_eigenpairs(&lap, 3, 1e-8).is_err());
    }
}
