//! Spectral graph descriptors of voxelized cortical ribbons.
//!
//! Masks become unweighted voxel graphs ([`graph`]), whose normalized
//! Laplacian spectra are summarized as eigenvalue counts per spectral band
//! ([`spectral`]), computed for whole hemispheres and for equal-volume
//! parcels ([`parcellation`]), and compared across cohorts with Wilcoxon
//! rank-sum tests ([`stats`]). [`phantom`] generates synthetic folded-sheet
//! cohorts and [`pipeline`] runs everything end to end.

pub mod error;
pub mod geometry;
pub mod graph;
pub mod parcellation;
pub mod phantom;
pub mod pipeline;
pub mod spectral;
pub mod stats;
pub mod textfmt;
pub mod volume_io;

pub use error::{Error, Result};
pub use graph::{
    build_voxel_graph, connected_components, extract_subgraph, normalized_laplacian,
    prune_edges_by_surface, Connectivity, SparseSymLaplacian, VoxelGraph,
};
pub use spectral::{
    band_histogram, count_eigenvalues_below, dense_spectrum, smallest_eigenpairs, BandSpec,
    EigenpairSet, SpectralBandHistogram,
};
pub use volume_io::{load_mask, load_surface, MaskFormat, TriangleMesh, VoxelMask};
