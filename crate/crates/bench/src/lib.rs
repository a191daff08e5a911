//! Shared fixtures for the criterion benchmarks.

use cortigraph::phantom::{generate_folded_sheet, PhantomParams};
use cortigraph::VoxelMask;

/// Folded sheet on an `nx × ny × 16` grid.
pub fn sheet(nx: usize, ny: usize) -> VoxelMask {
    generate_folded_sheet(&PhantomParams {
        dims: [nx, ny, 16],
        ..PhantomParams::default()
    })
    .expect("valid phantom")
}

/// Two overlapping integer samples of length `n`.
pub fn samples(n: usize) -> (Vec<f64>, Vec<f64>) {
    let a = (0..n).map(|i| ((i * 7) % 13) as f64).collect();
    let b = (0..n).map(|i| ((i * 5) % 11) as f64 + 1.5).collect();
    (a, b)
}
