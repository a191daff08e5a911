//! Graph serialization: the `GRF1` binary layout and a JSON form for small
//! graphs.
//!
//! `GRF1` (all integers little-endian):
//! magic `GRF1`, u64 vertex count, u64 directed edge count, `n + 1` u64 CSR
//! offsets, u32 neighbor indices, then three u32 coordinates per vertex.

use serde::{Deserialize, Serialize};

use super::VoxelGraph;
use crate::error::{Error, Result};

pub const GRF_MAGIC: &[u8; 4] = b"GRF1";

/// Largest graph written as JSON.
pub const GRAPH_JSON_MAX_VERTICES: usize = 10_000;

pub fn write_grf(graph: &VoxelGraph) -> Vec<u8> {
    let n = graph.n_vertices();
    let nnz = graph.neighbor_array().len();
    let mut out = Vec::with_capacity(4 + 16 + 8 * (n + 1) + 4 * nnz + 12 * n);
    out.extend_from_slice(GRF_MAGIC);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(nnz as u64).to_le_bytes());
    for &o in graph.offsets() {
        out.extend_from_slice(&(o as u64).to_le_bytes());
    }
    for &j in graph.neighbor_array() {
        out.extend_from_slice(&j.to_le_bytes());
    }
    for c in graph.coords() {
        for v in c {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_grf(bytes: &[u8]) -> Result<VoxelGraph> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != GRF_MAGIC {
        return Err(Error::Parse("missing GRF1 magic".into()));
    }
    let n = cur.u64()? as usize;
    let nnz = cur.u64()? as usize;
    let expected = 20usize
        .checked_add(
            n.checked_add(1)
                .and_then(|m| m.checked_mul(8))
                .unwrap_or(usize::MAX),
        )
        .and_then(|s| s.checked_add(nnz.checked_mul(4)?))
        .and_then(|s| s.checked_add(n.checked_mul(12)?));
    if expected != Some(bytes.len()) {
        return Err(Error::Parse(format!(
            "GRF1 size mismatch: header implies {expected:?} bytes, file has {}",
            bytes.len()
        )));
    }
    let offsets = (0..=n)
        .map(|_| cur.u64().map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let neighbors = (0..nnz).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?;
    let coords = (0..n)
        .map(|_| Ok([cur.u32()?, cur.u32()?, cur.u32()?]))
        .collect::<Result<Vec<_>>>()?;
    VoxelGraph::from_parts(offsets, neighbors, coords)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + k)
            .ok_or_else(|| Error::Parse("unexpected end of GRF1 data".into()))?;
        self.pos += k;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    n_vertices: usize,
    n_edges: usize,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    coords: Vec<[u32; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tag: Option<String>,
}

pub fn write_graph_json(graph: &VoxelGraph) -> Result<String> {
    if graph.n_vertices() > GRAPH_JSON_MAX_VERTICES {
        return Err(Error::InvalidArgument(format!(
            "JSON export is limited to {GRAPH_JSON_MAX_VERTICES} vertices, graph has {}",
            graph.n_vertices()
        )));
    }
    let doc = GraphJson {
        n_vertices: graph.n_vertices(),
        n_edges: graph.n_edges(),
        offsets: graph.offsets().to_vec(),
        neighbors: graph.neighbor_array().to_vec(),
        coords: graph.coords().to_vec(),
        tag: graph.tag.clone(),
    };
    Ok(serde_json::to_string(&doc)?)
}

pub fn read_graph_json(text: &str) -> Result<VoxelGraph> {
    let doc: GraphJson = serde_json::from_str(text)?;
    if doc.n_vertices != doc.coords.len() || doc.n_edges * 2 != doc.neighbors.len() {
        return Err(Error::Parse(
            "graph JSON counts disagree with arrays".into(),
        ));
    }
    let mut g = VoxelGraph::from_parts(doc.offsets, doc.neighbors, doc.coords)?;
    g.tag = doc.tag;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_voxel_graph, Connectivity};
    use crate::volume_io::VoxelMask;
    use proptest::prelude::*;

    fn sample_graph(bits: u64) -> VoxelGraph {
        let voxels: Vec<[u32; 3]> = (0..64u32)
            .filter(|&i| (bits >> i) & 1 == 1 || i == 0)
            .map(|i| [i % 4, (i / 4) % 4, i / 16])
            .collect();
        build_voxel_graph(
            &VoxelMask::new([4, 4, 4], [1.0; 3], voxels).unwrap(),
            Connectivity::TwentySix,
        )
    }

    #[test]
    fn header_layout() {
        let g = sample_graph(0b11);
        let bytes = write_grf(&g);
        assert_eq!(&bytes[..4], b"GRF1");
        assert_eq!(u64::from_le_bytes(bytes[4..12].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 20 + 3 * 8 + 2 * 4 + 2 * 12);
    }

    #[test]
    fn rejects_corrupt_input() {
        let mut bytes = write_grf(&sample_graph(0xffff));
        assert!(read_grf(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(read_grf(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn binary_and_json_round_trip(bits in any::<u64>()) {
            let g = sample_graph(bits).with_tag("parcel-3");
            let back = read_grf(&write_grf(&g)).unwrap();
            prop_assert_eq!(back.offsets(), g.offsets());
            prop_assert_eq!(back.neighbor_array(), g.neighbor_array());
            prop_assert_eq!(back.coords(), g.coords());
            let json = read_graph_json(&write_graph_json(&g).unwrap()).unwrap();
            prop_assert_eq!(json, g);
        }
    }
}
