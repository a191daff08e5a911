//! Equal-volume parcellation by spectral embedding and k-means, and the
//! local graphs induced by the parcels.

mod kmeans;

use std::io::{BufRead, Read, Write};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    connected_components, extract_subgraph, normalized_laplacian, SparseSymLaplacian, VoxelGraph,
};
use crate::spectral::{smallest_eigenpairs_with, SolverOptions};

pub use kmeans::{kmeans_cluster, KMeansResult, DEFAULT_RESTARTS, MAX_ITERATIONS};

/// Row `i` holds the embedding coordinates of vertex `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    points: Vec<f64>,
    dim: usize,
}

impl Embedding {
    /// `points` is row-major with `dim` columns.
    pub fn from_rows(points: Vec<f64>, dim: usize) -> Self {
        assert!(
            dim > 0 && points.len().is_multiple_of(dim),
            "ragged embedding"
        );
        Self { points, dim }
    }

    pub fn n_points(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n_points())
            .map(|i| self.points[i * self.dim + k])
            .collect()
    }

    /// Scales every nonzero row to unit length.
    pub fn row_normalize(&mut self) {
        for row in self.points.chunks_exact_mut(self.dim) {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
    }
}

/// Flips `v` so that its first entry of (near-)largest magnitude is positive.
pub fn canonicalize_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(&pivot) = v.iter().find(|x| x.abs() >= max * (1.0 - 1e-9)) {
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// The first `dim` Laplacian eigenvectors as vertex coordinates, signs
/// canonicalized.
pub fn spectral_embedding(
    lap: &SparseSymLaplacian,
    dim: usize,
    opts: &SolverOptions,
) -> Result<Embedding> {
    let pairs = smallest_eigenpairs_with(lap, dim, opts)?;
    let n = lap.n();
    let mut points = vec![0.0; n * dim];
    for k in 0..dim {
        let mut v = pairs.eigenvector(k).to_vec();
        canonicalize_sign(&mut v);
        for (i, x) in v.into_iter().enumerate() {
            points[i * dim + k] = x;
        }
    }
    Ok(Embedding { points, dim })
}

#[derive(Debug, Clone)]
pub struct ParcellationOptions {
    pub restarts: usize,
    pub row_normalize: bool,
    pub solver: SolverOptions,
}

impl Default for ParcellationOptions {
    fn default() -> Self {
        Self {
            restarts: DEFAULT_RESTARTS,
            row_normalize: false,
            solver: SolverOptions::default(),
        }
    }
}

/// A labeling of graph vertices into `n_parcels` non-empty parcels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parcellation {
    pub n_vertices: usize,
    #[serde(rename = "N")]
    pub n_parcels: usize,
    pub seed: u64,
    pub target_size: usize,
    pub labels: Vec<u32>,
    pub sizes: Vec<usize>,
}

/// Parcel count for a graph of `n` vertices: `round(n / target)`, at least 1.
pub fn parcel_count(n: usize, target_size: usize) -> usize {
    ((n as f64 / target_size as f64).round() as usize).max(1)
}

impl Parcellation {
    /// Builds the record from raw labels, renumbering parcels by first
    /// occurrence in vertex order.
    pub fn from_labels(raw: &[u32], seed: u64, target_size: usize) -> Result<Self> {
        let mut map: Vec<u32> = Vec::new();
        let mut labels = Vec::with_capacity(raw.len());
        for &l in raw {
            let l = l as usize;
            if l >= map.len() {
                map.resize(l + 1, u32::MAX);
            }
            if map[l] == u32::MAX {
                map[l] = (map.iter().filter(|&&m| m != u32::MAX).count()) as u32;
            }
            labels.push(map[l]);
        }
        let n_parcels = map.iter().filter(|&&m| m != u32::MAX).count();
        let mut sizes = vec![0; n_parcels];
        for &l in &labels {
            sizes[l as usize] += 1;
        }
        let p = Self {
            n_vertices: raw.len(),
            n_parcels,
            seed,
            target_size,
            labels,
            sizes,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("invalid parcellation: {m}")));
        if self.labels.len() != self.n_vertices || self.sizes.len() != self.n_parcels {
            return bad("length mismatch");
        }
        let mut sizes = vec![0; self.n_parcels];
        for &l in &self.labels {
            match sizes.get_mut(l as usize) {
                Some(s) => *s += 1,
                None => return bad("label out of range"),
            }
        }
        if sizes != self.sizes {
            return bad("sizes do not match labels");
        }
        if sizes.contains(&0) {
            return bad("empty parcel");
        }
        Ok(())
    }

    /// `max(sizes) / min(sizes)`.
    pub fn balance_ratio(&self) -> f64 {
        let max = self.sizes.iter().max().copied().unwrap_or(0);
        let min = self.sizes.iter().min().copied().unwrap_or(1);
        max as f64 / min as f64
    }

    /// Vertex indices of every parcel, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i);
        }
        out
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let p: Self = serde_json::from_reader(r)?;
        p.validate()?;
        Ok(p)
    }

    /// `vertex,label` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<parcellation csv>", e);
        writeln!(w, "vertex,label").map_err(io)?;
        for (i, l) in self.labels.iter().enumerate() {
            writeln!(w, "{i},{l}").map_err(io)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, seed: u64, target_size: usize) -> Result<Self> {
        let mut labels = Vec::new();
        for (k, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<parcellation csv>", e))?;
            if k == 0 {
                if line.trim() != "vertex,label" {
                    return Err(Error::Parse("missing parcellation CSV header".into()));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Parse(format!("parcellation CSV line {}: {line:?}", k + 1));
            let (v, l) = line.split_once(',').ok_or_else(bad)?;
            let v: usize = v.trim().parse().map_err(|_| bad())?;
            if v != labels.len() {
                return Err(bad());
            }
            labels.push(l.trim().parse::<u32>().map_err(|_| bad())?);
        }
        let n_parcels = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        let mut sizes = vec![0; n_parcels];
        for &l in &labels {
            sizes[l as usize] += 1;
        }
        let p = Self {
            n_vertices: labels.len(),
            n_parcels,
            seed,
            target_size,
            labels,
            sizes,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Splits `graph` into `round(n / target_size)` parcels.
pub fn parcellate(graph: &VoxelGraph, target_size: usize, seed: u64) -> Result<Parcellation> {
    parcellate_with(graph, target_size, seed, &ParcellationOptions::default())
}

pub fn parcellate_with(
    graph: &VoxelGraph,
    target_size: usize,
    seed: u64,
    opts: &ParcellationOptions,
) -> Result<Parcellation> {
    let n = graph.n_vertices();
    if target_size == 0 || target_size > n {
        return Err(Error::InvalidArgument(format!(
            "target size {target_size} must lie in 1..={n}"
        )));
    }
    let n_parcels = parcel_count(n, target_size);
    if n_parcels == 1 {
        return Parcellation::from_labels(&vec![0; n], seed, target_size);
    }
    let components = connected_components(graph);
    if components.count == 1 {
        return cluster_connected(graph, n_parcels, seed, target_size, opts);
    }
    warn!(
        "graph has {} components; parcellating each separately",
        components.count
    );
    let mut members = vec![Vec::new(); components.count];
    for (i, &c) in components.labels.iter().enumerate() {
        members[c as usize].push(i);
    }
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let shares = allocate_parcels(&sizes, n_parcels);

    let mut raw = vec![u32::MAX; n];
    let mut next = 0u32;
    for (verts, &k) in members.iter().zip(&shares) {
        if k == 0 {
            continue;
        }
        let labels = if k == 1 {
            vec![0; verts.len()]
        } else {
            let sub = extract_subgraph(graph, verts)?;
            cluster_connected(&sub, k, seed, target_size, opts)?.labels
        };
        for (&v, &l) in verts.iter().zip(&labels) {
            raw[v] = next + l;
        }
        next += k as u32;
    }
    // components too small for a parcel of their own join the parcel of the
    // nearest clustered voxel
    let placed: Vec<usize> = (0..n).filter(|&i| raw[i] != u32::MAX).collect();
    let coords = graph.coords();
    for (verts, _) in members.iter().zip(&shares).filter(|(_, &k)| k == 0) {
        let mut best = (u64::MAX, 0usize);
        for &v in verts {
            for &p in &placed {
                let d = sq_dist(coords[v], coords[p]);
                if d < best.0 || (d == best.0 && p < best.1) {
                    best = (d, p);
                }
            }
        }
        let label = raw[best.1];
        verts.iter().for_each(|&v| raw[v] = label);
    }
    Parcellation::from_labels(&raw, seed, target_size)
}

fn cluster_connected(
    graph: &VoxelGraph,
    n_parcels: usize,
    seed: u64,
    target_size: usize,
    opts: &ParcellationOptions,
) -> Result<Parcellation> {
    let lap = normalized_laplacian(graph);
    let mut embedding = spectral_embedding(&lap, n_parcels, &opts.solver)?;
    if opts.row_normalize {
        embedding.row_normalize();
    }
    let km = kmeans_cluster(&embedding, n_parcels, seed, opts.restarts)?;
    Parcellation::from_labels(&km.labels, seed, target_size)
}

/// Splits `total` parcels over components in proportion to their sizes
/// (largest remainder; ties go to the earlier component).
pub fn allocate_parcels(sizes: &[usize], total: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let mut shares: Vec<usize> = sizes.iter().map(|&s| s * total / n).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    // remainder of s * total / n, compared exactly in integers
    order.sort_by_key(|&c| (std::cmp::Reverse(sizes[c] * total % n), c));
    let mut left = total - shares.iter().sum::<usize>();
    for &c in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if shares[c] < sizes[c] {
            shares[c] += 1;
            left -= 1;
        }
    }
    shares
}

fn sq_dist(a: [u32; 3], b: [u32; 3]) -> u64 {
    a.iter()
        .zip(&b)
        .map(|(&x, &y)| (x as i64 - y as i64).pow(2) as u64)
        .sum()
}

/// The induced subgraph of every parcel, tagged `<graph tag>/p<id>` (or
/// `p<id>` for untagged graphs).
pub fn local_graphs(graph: &VoxelGraph, parc: &Parcellation) -> Result<Vec<VoxelGraph>> {
    if parc.n_vertices != graph.n_vertices() {
        return Err(Error::InvalidArgument(format!(
            "parcellation covers {} vertices, graph has {}",
            parc.n_vertices,
            graph.n_vertices()
        )));
    }
    parc.validate()?;
    parc.members()
        .iter()
        .enumerate()
        .map(|(p, members)| {
            let tag = match &graph.tag {
                Some(t) => format!("{t}/p{p:03}"),
                None => format!("p{p:03}"),
            };
            Ok(extract_subgraph(graph, members)?.with_tag(tag))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_voxel_graph, Connectivity};
    use crate::spectral::dense_spectrum;
    use crate::volume_io::VoxelMask;

    fn graph_of(dims: [usize; 3], voxels: Vec<[u32; 3]>) -> VoxelGraph {
        build_voxel_graph(
            &VoxelMask::new(dims, [1.0; 3], voxels).unwrap(),
            Connectivity::TwentySix,
        )
    }

    fn k8() -> VoxelGraph {
        graph_of(
            [2, 2, 2],
            (0..8u32).map(|i| [i & 1, (i >> 1) & 1, i >> 2]).collect(),
        )
    }

    #[test]
    fn sign_canonicalization() {
        let mut v = vec![0.1, -0.5, 0.5];
        canonicalize_sign(&mut v);
        assert_eq!(v, vec![-0.1, 0.5, -0.5]);
        let mut w = vec![0.0, 0.2, -0.1];
        canonicalize_sign(&mut w);
        assert_eq!(w, vec![0.0, 0.2, -0.1]);
    }

    #[test]
    fn kernel_column_has_one_sign() {
        let g = graph_of([3, 3, 1], (0..9u32).map(|i| [i % 3, i / 3, 0]).collect());
        let emb =
            spectral_embedding(&normalized_laplacian(&g), 1, &SolverOptions::default()).unwrap();
        assert!(emb.column(0).iter().all(|&x| x > 0.0));
    }

    #[test]
    fn path_embedding_matches_dense() {
        let g = graph_of([3, 1, 1], vec![[0, 0, 0], [1, 0, 0], [2, 0, 0]]);
        let lap = normalized_laplacian(&g);
        let emb = spectral_embedding(&lap, 2, &SolverOptions::default()).unwrap();
        let dense = dense_spectrum(&lap).unwrap();
        let mut oracle = dense.eigenvector(1).to_vec();
        canonicalize_sign(&mut oracle);
        for (a, b) in emb.column(1).iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-7);
        }
        let dot: f64 = emb
            .column(0)
            .iter()
            .zip(emb.column(1))
            .map(|(a, b)| a * b)
            .sum();
        assert!(dot.abs() < 1e-8);
        assert!(oracle[0] > 0.0);
    }

    #[test]
    fn k8_second_column_is_orthogonal_unit() {
        let emb =
            spectral_embedding(&normalized_laplacian(&k8()), 2, &SolverOptions::default()).unwrap();
        let (c0, c1) = (emb.column(0), emb.column(1));
        assert!((c1.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(c0.iter().zip(&c1).map(|(a, b)| a * b).sum::<f64>().abs() < 1e-8);
    }

    #[test]
    fn whole_graph_when_target_equals_n() {
        let g = k8();
        let p = parcellate(&g, 8, 1).unwrap();
        assert_eq!(p.n_parcels, 1);
        let locals = local_graphs(&g, &p).unwrap();
        assert_eq!(locals.len(), 1);
        assert_eq!(locals[0].n_edges(), 28);
        assert!(parcellate(&g, 9, 1).is_err());
    }

    #[test]
    fn parcel_count_rounding() {
        assert_eq!(parcel_count(336_000, 8_000), 42);
        assert_eq!(parcel_count(10_800, 1_000), 11);
        assert_eq!(parcel_count(100, 1_000), 1);
    }

    #[test]
    fn local_graphs_of_path_and_block() {
        let path = graph_of([4, 1, 1], (0..4u32).map(|x| [x, 0, 0]).collect()).with_tag("lh");
        let p = Parcellation::from_labels(&[0, 0, 1, 1], 0, 2).unwrap();
        let locals = local_graphs(&path, &p).unwrap();
        assert_eq!(locals.len(), 2);
        assert!(locals
            .iter()
            .all(|g| g.n_vertices() == 2 && g.n_edges() == 1));
        assert_eq!(locals[1].tag.as_deref(), Some("lh/p001"));

        let p = Parcellation::from_labels(&[0, 1, 0, 1, 0, 1, 0, 1], 0, 4).unwrap();
        let locals = local_graphs(&k8(), &p).unwrap();
        assert!(locals
            .iter()
            .all(|g| g.n_vertices() == 4 && g.n_edges() == 6));
    }

    #[test]
    fn labels_renumbered_by_first_occurrence() {
        let p = Parcellation::from_labels(&[3, 3, 0, 7, 0], 0, 2).unwrap();
        assert_eq!(p.labels, vec![0, 0, 1, 2, 1]);
        assert_eq!(p.sizes, vec![2, 2, 1]);
    }

    #[test]
    fn io_round_trips() {
        let p = Parcellation::from_labels(&[0, 1, 1, 2, 0], 4, 2).unwrap();
        let mut json = Vec::new();
        p.write_json(&mut json).unwrap();
        assert!(String::from_utf8_lossy(&json).contains("\"N\":3"));
        assert_eq!(Parcellation::read_json(&json[..]).unwrap(), p);
        let mut csv = Vec::new();
        p.write_csv(&mut csv).unwrap();
        assert_eq!(Parcellation::read_csv(&csv[..], 4, 2).unwrap(), p);
        let broken =
            br#"{"n_vertices":2,"N":2,"seed":0,"target_size":1,"labels":[0,0],"sizes":[2,0]}"#;
        assert!(Parcellation::read_json(&broken[..]).is_err());
    }

    #[test]
    fn sheet_parcellation_is_balanced_and_deterministic() {
        let mut cells = vec![false; 40 * 30 * 4];
        for y in 0..30 {
            for x in 0..40 {
                for z in 1..3 {
                    cells[x + 40 * (y + 30 * z)] = true;
                }
            }
        }
        let mask = VoxelMask::from_dense([40, 30, 4], [1.0; 3], &cells).unwrap();
        let g = build_voxel_graph(&mask, Connectivity::TwentySix);
        let p = parcellate(&g, 400, 3).unwrap();
        assert_eq!(p.n_parcels, 6);
        assert_eq!(p.sizes.iter().sum::<usize>(), 2400);
        let mean = 400.0;
        assert!(
            p.sizes
                .iter()
                .all(|&s| (s as f64) >= 0.5 * mean && (s as f64) <= 2.0 * mean),
            "{:?}",
            p.sizes
        );
        assert_eq!(parcellate(&g, 400, 3).unwrap(), p);
    }

    #[test]
    fn allocation_is_proportional() {
        assert_eq!(allocate_parcels(&[1000, 3, 1000], 4), vec![2, 0, 2]);
        assert_eq!(allocate_parcels(&[500, 500], 3), vec![2, 1]);
        assert_eq!(allocate_parcels(&[1, 1, 1], 3), vec![1, 1, 1]);
        assert_eq!(allocate_parcels(&[7], 1), vec![1]);
    }

    #[test]
    fn stray_voxels_join_the_nearest_parcel() {
        // two 12x12 slabs two voxels apart, plus one detached voxel next to the first
        let mut voxels = Vec::new();
        for x in 0..12u32 {
            for y in 0..12u32 {
                voxels.push([x, y, 0]);
                voxels.push([x, y, 3]);
            }
        }
        voxels.push([14, 0, 0]);
        let g = graph_of([15, 12, 4], voxels);
        assert_eq!(connected_components(&g).count, 3);
        let p = parcellate(&g, 72, 5).unwrap();
        assert_eq!(p.n_parcels, 4);
        assert!(p.sizes.iter().all(|&s| s >= 50), "{:?}", p.sizes);
        let stray = g.coords().iter().position(|c| *c == [14, 0, 0]).unwrap();
        let near = g.coords().iter().position(|c| *c == [11, 0, 0]).unwrap();
        assert_eq!(p.labels[stray], p.labels[near]);
        // parcels never straddle the two slabs
        for (i, c) in g.coords().iter().enumerate() {
            for (j, d) in g.coords().iter().enumerate() {
                if p.labels[i] == p.labels[j] && i != stray && j != stray {
                    assert_eq!(c[2], d[2]);
                }
            }
        }
    }
}
