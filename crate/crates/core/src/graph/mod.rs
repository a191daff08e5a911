//! Unweighted voxel graphs: construction from masks, surface pruning,
//! induced subgraphs, connected components and the normalized Laplacian.

mod format;
mod laplacian;
mod prune;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume_io::{linear_key, VoxelMask};

pub use format::{read_graph_json, read_grf, write_graph_json, write_grf, GRAPH_JSON_MAX_VERTICES};
pub use laplacian::{normalized_laplacian, SparseSymLaplacian};
pub use prune::{prune_edges_by_surface, voxel_center, PruneOutcome};

/// Voxel neighborhood used to connect vertices.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Six,
    Eighteen,
    #[default]
    TwentySix,
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            6 => Ok(Self::Six),
            18 => Ok(Self::Eighteen),
            26 => Ok(Self::TwentySix),
            _ => Err(Error::InvalidArgument(format!(
                "connectivity must be 6, 18 or 26, got {v}"
            ))),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }
}

impl Connectivity {
    /// Neighbor offsets `[dx, dy, dz]` in ascending linear-index order.
    pub fn offsets(self) -> Vec<[i64; 3]> {
        let mut out = Vec::with_capacity(26);
        for dz in -1..=1i64 {
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let manhattan = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        _ if manhattan == 0 => false,
                        Connectivity::Six => manhattan == 1,
                        Connectivity::Eighteen => manhattan <= 2,
                        Connectivity::TwentySix => true,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

/// Undirected unweighted graph over voxels in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGraph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    coords: Vec<[u32; 3]>,
    pub tag: Option<String>,
}

pub const MAX_DEGREE: usize = 26;

impl VoxelGraph {
    /// Assembles a graph from CSR parts and checks every invariant:
    /// symmetric adjacency, sorted neighbor lists, no self-loops, degree at
    /// most 26 and unique coordinates.
    pub fn from_parts(
        offsets: Vec<usize>,
        neighbors: Vec<u32>,
        coords: Vec<[u32; 3]>,
    ) -> Result<Self> {
        let n = coords.len();
        if n == 0 {
            return Err(Error::InvalidArgument("graph has no vertices".into()));
        }
        if offsets.len() != n + 1 || offsets[0] != 0 || offsets[n] != neighbors.len() {
            return Err(Error::InvalidArgument("inconsistent CSR offsets".into()));
        }
        let g = Self {
            offsets,
            neighbors,
            coords,
            tag: None,
        };
        for i in 0..n {
            if g.offsets[i] > g.offsets[i + 1] {
                return Err(Error::InvalidArgument("CSR offsets decrease".into()));
            }
            let nb = g.neighbors(i);
            if nb.len() > MAX_DEGREE {
                return Err(Error::InvalidArgument(format!(
                    "vertex {i} has degree {}",
                    nb.len()
                )));
            }
            for (k, &j) in nb.iter().enumerate() {
                let j = j as usize;
                if j >= n {
                    return Err(Error::IndexOutOfRange { index: j, len: n });
                }
                if j == i {
                    return Err(Error::InvalidArgument(format!("self-loop at {i}")));
                }
                if k > 0 && nb[k - 1] as usize >= j {
                    return Err(Error::InvalidArgument(format!(
                        "neighbors of {i} not strictly ascending"
                    )));
                }
                if g.neighbors(j).binary_search(&(i as u32)).is_err() {
                    return Err(Error::InvalidArgument(format!(
                        "edge ({i}, {j}) has no reverse"
                    )));
                }
            }
        }
        let mut sorted = g.coords.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(
                "duplicate vertex coordinates".into(),
            ));
        }
        Ok(g)
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }

    pub fn n_vertices(&self) -> usize {
        self.coords.len()
    }

    /// Number of undirected edges.
    pub fn n_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn neighbor_array(&self) -> &[u32] {
        &self.neighbors
    }

    pub fn coords(&self) -> &[[u32; 3]] {
        &self.coords
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&(j as u32)).is_ok()
    }

    /// Undirected edges `(i, j)` with `i < j`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_vertices()).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .filter(move |&&j| j as usize > i)
                .map(move |&j| (i, j as usize))
        })
    }

    /// Builds a graph from per-vertex neighbor lists that are already
    /// symmetric and sorted.
    pub(crate) fn from_lists_unchecked(lists: Vec<Vec<u32>>, coords: Vec<[u32; 3]>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let mut neighbors = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        for l in lists {
            neighbors.extend_from_slice(&l);
            offsets.push(neighbors.len());
        }
        Self {
            offsets,
            neighbors,
            coords,
            tag: None,
        }
    }
}

/// Connects every pair of mask voxels that are neighbors under
/// `connectivity`. Vertex `i` is the `i`-th voxel in canonical mask order.
pub fn build_voxel_graph(mask: &VoxelMask, connectivity: Connectivity) -> VoxelGraph {
    let dims = mask.dims();
    let voxels = mask.voxels();
    let keys: Vec<u64> = voxels.iter().map(|&v| linear_key(dims, v)).collect();
    let offsets_3d = connectivity.offsets();

    let mut offsets = Vec::with_capacity(voxels.len() + 1);
    offsets.push(0);
    let mut neighbors = Vec::with_capacity(voxels.len() * offsets_3d.len() / 2);
    for v in voxels {
        for d in &offsets_3d {
            let c = [v[0] as i64 + d[0], v[1] as i64 + d[1], v[2] as i64 + d[2]];
            if (0..3).any(|a| c[a] < 0 || c[a] >= dims[a] as i64) {
                continue;
            }
            let key = linear_key(dims, [c[0] as u32, c[1] as u32, c[2] as u32]);
            if let Ok(j) = keys.binary_search(&key) {
                neighbors.push(j as u32);
            }
        }
        offsets.push(neighbors.len());
    }
    VoxelGraph {
        offsets,
        neighbors,
        coords: voxels.to_vec(),
        tag: None,
    }
}

/// Induced subgraph on `subset`; vertices keep ascending original order.
pub fn extract_subgraph(graph: &VoxelGraph, subset: &[usize]) -> Result<VoxelGraph> {
    let n = graph.n_vertices();
    if subset.is_empty() {
        return Err(Error::InvalidArgument("empty vertex subset".into()));
    }
    let mut sorted = subset.to_vec();
    sorted.sort_unstable();
    if let Some(&bad) = sorted.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: bad, len: n });
    }
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument(
            "duplicate index in vertex subset".into(),
        ));
    }
    let mut new_index = vec![u32::MAX; n];
    for (k, &i) in sorted.iter().enumerate() {
        new_index[i] = k as u32;
    }
    let mut offsets = Vec::with_capacity(sorted.len() + 1);
    offsets.push(0);
    let mut neighbors = Vec::new();
    for &i in &sorted {
        // the old->new map is monotone, so lists stay sorted
        neighbors.extend(
            graph
                .neighbors(i)
                .iter()
                .map(|&j| new_index[j as usize])
                .filter(|&j| j != u32::MAX),
        );
        offsets.push(neighbors.len());
    }
    let coords = sorted.iter().map(|&i| graph.coords[i]).collect();
    Ok(VoxelGraph {
        offsets,
        neighbors,
        coords,
        tag: None,
    })
}

/// Per-vertex component labels and the component count. The component of
/// the smallest vertex index gets label 0, and so on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    pub labels: Vec<u32>,
    pub count: usize,
}

pub fn connected_components(graph: &VoxelGraph) -> Components {
    components_from_adjacency(graph.n_vertices(), |i| graph.neighbors(i))
}

pub(crate) fn components_from_adjacency<'a>(
    n: usize,
    adj: impl Fn(usize) -> &'a [u32],
) -> Components {
    let mut labels = vec![u32::MAX; n];
    let mut count = 0usize;
    let mut stack = Vec::new();
    for s in 0..n {
        if labels[s] != u32::MAX {
            continue;
        }
        labels[s] = count as u32;
        stack.push(s);
        while let Some(u) = stack.pop() {
            for &v in adj(u) {
                let v = v as usize;
                if labels[v] == u32::MAX {
                    labels[v] = count as u32;
                    stack.push(v);
                }
            }
        }
        count += 1;
    }
    Components { labels, count }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(dims: [usize; 3], voxels: Vec<[u32; 3]>) -> VoxelMask {
        VoxelMask::new(dims, [1.0; 3], voxels).unwrap()
    }

    fn block(origin: [u32; 3], dims: [usize; 3]) -> Vec<[u32; 3]> {
        let mut v = Vec::new();
        for z in 0..2 {
            for y in 0..2 {
                for x in 0..2 {
                    v.push([origin[0] + x, origin[1] + y, origin[2] + z]);
                }
            }
        }
        let _ = dims;
        v
    }

    /// Brute-force edge count over all voxel pairs.
    fn brute_force_edges(voxels: &[[u32; 3]], conn: Connectivity) -> usize {
        let mut count = 0;
        for a in 0..voxels.len() {
            for b in a + 1..voxels.len() {
                let d: Vec<i64> = (0..3)
                    .map(|k| (voxels[a][k] as i64 - voxels[b][k] as i64).abs())
                    .collect();
                let cheb = *d.iter().max().unwrap();
                let manhattan: i64 = d.iter().sum();
                let adjacent = cheb == 1
                    && match conn {
                        Connectivity::Six => manhattan == 1,
                        Connectivity::Eighteen => manhattan <= 2,
                        Connectivity::TwentySix => true,
                    };
                count += adjacent as usize;
            }
        }
        count
    }

    #[test]
    fn offsets_counts() {
        assert_eq!(Connectivity::Six.offsets().len(), 6);
        assert_eq!(Connectivity::Eighteen.offsets().len(), 18);
        assert_eq!(Connectivity::TwentySix.offsets().len(), 26);
    }

    #[test]
    fn row_of_three_is_a_path() {
        let g = build_voxel_graph(
            &mask([1, 1, 3], vec![[0, 0, 0], [0, 0, 1], [0, 0, 2]]),
            Connectivity::TwentySix,
        );
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
        assert_eq!(
            (0..3).map(|i| g.degree(i)).collect::<Vec<_>>(),
            vec![1, 2, 1]
        );
    }

    #[test]
    fn block_is_k8() {
        let v = block([0, 0, 0], [2, 2, 2]);
        assert_eq!(brute_force_edges(&v, Connectivity::TwentySix), 28);
        let g = build_voxel_graph(&mask([2, 2, 2], v), Connectivity::TwentySix);
        assert_eq!(g.n_edges(), 28);
        assert!((0..8).all(|i| g.degree(i) == 7));
    }

    #[test]
    fn separated_blocks() {
        let mut v = block([0, 0, 0], [5, 2, 2]);
        v.extend(block([3, 0, 0], [5, 2, 2]));
        assert_eq!(brute_force_edges(&v, Connectivity::TwentySix), 56);
        let g = build_voxel_graph(&mask([5, 2, 2], v), Connectivity::TwentySix);
        assert_eq!(g.n_vertices(), 16);
        assert_eq!(g.n_edges(), 56);
        assert_eq!(connected_components(&g).count, 2);
    }

    #[test]
    fn matches_brute_force_for_all_connectivities() {
        let voxels: Vec<[u32; 3]> = (0..60u32)
            .filter(|i| (i * 37 + 11) % 5 < 3)
            .map(|i| [i % 4, (i / 4) % 5, i / 20])
            .collect();
        let m = mask([4, 5, 3], voxels);
        for conn in [
            Connectivity::Six,
            Connectivity::Eighteen,
            Connectivity::TwentySix,
        ] {
            let g = build_voxel_graph(&m, conn);
            assert_eq!(g.n_edges(), brute_force_edges(m.voxels(), conn));
            let checked =
                VoxelGraph::from_parts(g.offsets.clone(), g.neighbors.clone(), g.coords.clone());
            assert!(checked.is_ok());
        }
    }

    #[test]
    fn from_parts_rejects_broken_graphs() {
        let coords = vec![[0, 0, 0], [1, 0, 0]];
        assert!(VoxelGraph::from_parts(vec![0, 1, 1], vec![1], coords.clone()).is_err());
        assert!(VoxelGraph::from_parts(vec![0, 1, 2], vec![0, 0], coords.clone()).is_err());
        assert!(
            VoxelGraph::from_parts(vec![0, 1, 2], vec![1, 0], vec![[0, 0, 0], [0, 0, 0]]).is_err()
        );
        assert!(VoxelGraph::from_parts(vec![0, 1, 2], vec![1, 0], coords).is_ok());
    }

    #[test]
    fn subgraph_examples() {
        let k8 = build_voxel_graph(
            &mask([2, 2, 2], block([0, 0, 0], [2, 2, 2])),
            Connectivity::TwentySix,
        );
        let all: Vec<usize> = (0..8).collect();
        assert_eq!(extract_subgraph(&k8, &all).unwrap(), k8);
        let k4 = extract_subgraph(&k8, &[6, 0, 3, 5]).unwrap();
        assert_eq!(k4.n_edges(), 6);
        assert_eq!(k4.coords()[0], k8.coords()[0]);

        let path = build_voxel_graph(
            &mask([3, 1, 1], vec![[0, 0, 0], [1, 0, 0], [2, 0, 0]]),
            Connectivity::TwentySix,
        );
        let ends = extract_subgraph(&path, &[0, 2]).unwrap();
        assert_eq!(ends.n_vertices(), 2);
        assert_eq!(ends.n_edges(), 0);

        assert!(matches!(
            extract_subgraph(&path, &[0, 3]),
            Err(Error::IndexOutOfRange { index: 3, .. })
        ));
        assert!(extract_subgraph(&path, &[]).is_err());
        assert!(extract_subgraph(&path, &[1, 1]).is_err());
    }

    #[test]
    fn component_examples() {
        let path5 = build_voxel_graph(
            &mask([5, 1, 1], (0..5).map(|x| [x, 0, 0]).collect()),
            Connectivity::TwentySix,
        );
        assert_eq!(connected_components(&path5).count, 1);
        let isolated = build_voxel_graph(
            &mask([20, 1, 1], (0..10).map(|x| [2 * x, 0, 0]).collect()),
            Connectivity::TwentySix,
        );
        let c = connected_components(&isolated);
        assert_eq!(c.count, 10);
        assert_eq!(c.labels, (0..10).collect::<Vec<u32>>());
    }
}
