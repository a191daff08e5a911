use rayon::prelude::*;

use super::VoxelGraph;
use crate::geometry::{segment_intersects_triangle, GEOMETRY_EPS};
use crate::volume_io::TriangleMesh;

/// Result of surface-based edge pruning.
#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub graph: VoxelGraph,
    /// Number of undirected edges removed.
    pub removed: usize,
    /// Set when the mesh had no triangles and the graph was returned as is.
    pub empty_mesh: bool,
}

/// Physical center of a voxel: `(coord + 0.5) * spacing`.
pub fn voxel_center(c: [u32; 3], spacing: [f64; 3]) -> [f64; 3] {
    [
        (c[0] as f64 + 0.5) * spacing[0],
        (c[1] as f64 + 0.5) * spacing[1],
        (c[2] as f64 + 0.5) * spacing[2],
    ]
}

/// Removes every edge whose open center-to-center segment crosses or grazes
/// a mesh triangle. The vertex set is unchanged.
pub fn prune_edges_by_surface(
    graph: &VoxelGraph,
    mesh: &TriangleMesh,
    spacing: [f64; 3],
) -> PruneOutcome {
    if mesh.is_empty() {
        log::warn!("pruning mesh has no triangles; graph left unchanged");
        return PruneOutcome {
            graph: graph.clone(),
            removed: 0,
            empty_mesh: true,
        };
    }
    let index = TriangleGrid::new(mesh, spacing);
    let n = graph.n_vertices();
    let coords = graph.coords();

    // For each vertex, the higher-indexed neighbors whose edge is cut.
    let cut: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = voxel_center(coords[i], spacing);
            let mut candidates = Vec::new();
            graph
                .neighbors(i)
                .iter()
                .copied()
                .filter(|&j| j as usize > i)
                .filter(|&j| {
                    let q = voxel_center(coords[j as usize], spacing);
                    index.candidates(p, q, &mut candidates);
                    candidates.iter().any(|&t| {
                        segment_intersects_triangle(p, q, mesh.triangle(t as usize), GEOMETRY_EPS)
                    })
                })
                .collect()
        })
        .collect();

    let removed: usize = cut.iter().map(Vec::len).sum();
    let mut is_cut: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (i, js) in cut.iter().enumerate() {
        for &j in js {
            is_cut[i].push(j);
            is_cut[j as usize].push(i as u32);
        }
    }
    let lists: Vec<Vec<u32>> = (0..n)
        .map(|i| {
            let mut drop = std::mem::take(&mut is_cut[i]);
            drop.sort_unstable();
            graph
                .neighbors(i)
                .iter()
                .copied()
                .filter(|j| drop.binary_search(j).is_err())
                .collect()
        })
        .collect();
    let mut pruned = VoxelGraph::from_lists_unchecked(lists, coords.to_vec());
    pruned.tag = graph.tag.clone();
    PruneOutcome {
        graph: pruned,
        removed,
        empty_mesh: false,
    }
}

/// Uniform grid bucketing triangles by their (eps-expanded) bounding boxes.
struct TriangleGrid {
    origin: [f64; 3],
    cell: f64,
    res: [usize; 3],
    starts: Vec<u32>,
    items: Vec<u32>,
}

const MAX_GRID_CELLS: usize = 1 << 22;

impl TriangleGrid {
    fn new(mesh: &TriangleMesh, spacing: [f64; 3]) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for t in 0..mesh.triangles.len() {
            for p in mesh.triangle(t) {
                for a in 0..3 {
                    lo[a] = lo[a].min(p[a]);
                    hi[a] = hi[a].max(p[a]);
                }
            }
        }
        let pad = 2.0 * GEOMETRY_EPS;
        for a in 0..3 {
            lo[a] -= pad;
            hi[a] += pad;
        }
        let extent: Vec<f64> = (0..3).map(|a| hi[a] - lo[a]).collect();
        let mut cell = spacing.iter().cloned().fold(0.0, f64::max) * 2.0;
        let res_for = |cell: f64| -> [usize; 3] {
            [0, 1, 2].map(|a| ((extent[a] / cell).ceil() as usize).max(1))
        };
        while res_for(cell).iter().product::<usize>() > MAX_GRID_CELLS {
            cell *= 2.0;
        }
        let res = res_for(cell);

        let cell_range = |lo_p: [f64; 3], hi_p: [f64; 3]| -> [[usize; 2]; 3] {
            [0, 1, 2].map(|a| {
                let c0 = ((lo_p[a] - pad - lo[a]) / cell).floor().max(0.0) as usize;
                let c1 = ((hi_p[a] + pad - lo[a]) / cell).floor().max(0.0) as usize;
                [c0.min(res[a] - 1), c1.min(res[a] - 1)]
            })
        };

        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); res.iter().product()];
        for t in 0..mesh.triangles.len() {
            let tri = mesh.triangle(t);
            let tlo = [0, 1, 2].map(|a| tri.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min));
            let thi = [0, 1, 2].map(|a| tri.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max));
            let r = cell_range(tlo, thi);
            for z in r[2][0]..=r[2][1] {
                for y in r[1][0]..=r[1][1] {
                    for x in r[0][0]..=r[0][1] {
                        buckets[x + res[0] * (y + res[1] * z)].push(t as u32);
                    }
                }
            }
        }
        let mut starts = Vec::with_capacity(buckets.len() + 1);
        let mut items = Vec::new();
        starts.push(0);
        for b in buckets {
            items.extend(b);
            starts.push(items.len() as u32);
        }
        Self {
            origin: lo,
            cell,
            res,
            starts,
            items,
        }
    }

    /// Triangle ids whose buckets overlap the segment's bounding box,
    /// deduplicated and ascending.
    fn candidates(&self, p: [f64; 3], q: [f64; 3], out: &mut Vec<u32>) {
        out.clear();
        let mut r = [[0usize; 2]; 3];
        for a in 0..3 {
            let lo = (p[a].min(q[a]) - self.origin[a]) / self.cell;
            let hi = (p[a].max(q[a]) - self.origin[a]) / self.cell;
            if hi < 0.0 || lo >= self.res[a] as f64 {
                return;
            }
            r[a] = [
                (lo.floor().max(0.0) as usize).min(self.res[a] - 1),
                (hi.floor().max(0.0) as usize).min(self.res[a] - 1),
            ];
        }
        for z in r[2][0]..=r[2][1] {
            for y in r[1][0]..=r[1][1] {
                for x in r[0][0]..=r[0][1] {
                    let b = x + self.res[0] * (y + self.res[1] * z);
                    out.extend_from_slice(
                        &self.items[self.starts[b] as usize..self.starts[b + 1] as usize],
                    );
                }
            }
        }
        out.sort_unstable();
        out.dedup();
    }
}
