//! Full dense eigendecomposition, the reference for everything iterative.

use nalgebra::SymmetricEigen;

use super::EigenpairSet;
use crate::error::{Error, Result};
use crate::graph::SparseSymLaplacian;

/// Largest matrix [`dense_spectrum`] accepts by default.
pub const DENSE_CAP: usize = 2000;

/// All eigenpairs of `lap`, ascending. Limited to `n <= DENSE_CAP`.
pub fn dense_spectrum(lap: &SparseSymLaplacian) -> Result<EigenpairSet> {
    dense_spectrum_capped(lap, DENSE_CAP)
}

pub fn dense_spectrum_capped(lap: &SparseSymLaplacian, cap: usize) -> Result<EigenpairSet> {
    let n = lap.n();
    if n > cap {
        return Err(Error::TooLarge { n, cap });
    }
    let eig = SymmetricEigen::new(lap.to_dense());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n * n);
    for &j in &order {
        values.push(eig.eigenvalues[j]);
        vectors.extend(eig.eigenvectors.column(j).iter());
    }
    Ok(EigenpairSet::from_columns(lap, values, vectors, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_voxel_graph, normalized_laplacian, Connectivity};
    use crate::volume_io::VoxelMask;

    fn lap_of(dims: [usize; 3], voxels: Vec<[u32; 3]>) -> SparseSymLaplacian {
        let mask = VoxelMask::new(dims, [1.0; 3], voxels).unwrap();
        normalized_laplacian(&build_voxel_graph(&mask, Connectivity::TwentySix))
    }

    #[test]
    fn closed_forms() {
        let p2 = dense_spectrum(&lap_of([2, 1, 1], vec![[0, 0, 0], [1, 0, 0]])).unwrap();
        assert!((p2.eigenvalues()[0]).abs() < 1e-12);
        assert!((p2.eigenvalues()[1] - 2.0).abs() < 1e-12);

        let p3 = dense_spectrum(&lap_of([1, 1, 3], vec![[0, 0, 0], [0, 0, 1], [0, 0, 2]])).unwrap();
        for (got, want) in p3.eigenvalues().iter().zip([0.0, 1.0, 2.0]) {
            assert!((got - want).abs() < 1e-12);
        }

        let k8 = lap_of(
            [2, 2, 2],
            (0..8u32).map(|i| [i & 1, (i >> 1) & 1, i >> 2]).collect(),
        );
        let s = dense_spectrum(&k8).unwrap();
        assert!(s.eigenvalues()[0].abs() < 1e-12);
        for &l in &s.eigenvalues()[1..] {
            assert!((l - 8.0 / 7.0).abs() < 1e-12);
        }
        assert!(s.residual_norms().iter().all(|&r| r < 1e-12));
    }

    #[test]
    fn disjoint_union_spectrum() {
        let s = dense_spectrum(&lap_of(
            [5, 1, 1],
            vec![[0, 0, 0], [1, 0, 0], [3, 0, 0], [4, 0, 0]],
        ))
        .unwrap();
        for (got, want) in s.eigenvalues().iter().zip([0.0, 0.0, 2.0, 2.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn over_cap_is_rejected() {
        let lap = lap_of([3, 1, 1], vec![[0, 0, 0], [1, 0, 0], [2, 0, 0]]);
        assert!(matches!(
            dense_spectrum_capped(&lap, 2),
            Err(Error::TooLarge { n: 3, cap: 2 })
        ));
    }
}
