//! Voxel masks and triangle meshes: in-memory forms plus the NIfTI-1,
//! VOXTEXT and OFF readers/writers.

mod nifti;
mod off;
mod voxtext;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use nifti::{read_nifti_mask, write_nifti_mask};
pub use off::{read_off, write_off};
pub use voxtext::{read_voxtext, write_voxtext};

/// Set of in-mask voxels on a regular grid.
///
/// Voxels are kept in canonical order: lexicographic by `(z, y, x)`, which is
/// also ascending order of the linear index `x + dx * (y + dy * z)`. Vertex
/// numbering of every graph built from the mask follows this order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelMask {
    dims: [usize; 3],
    spacing: [f64; 3],
    voxels: Vec<[u32; 3]>,
}

impl VoxelMask {
    /// Validates and canonicalizes a voxel set. Duplicates are rejected.
    pub fn new(dims: [usize; 3], spacing: [f64; 3], mut voxels: Vec<[u32; 3]>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "dims must be positive, got {dims:?}"
            )));
        }
        if dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::InvalidArgument(format!(
                "dims {dims:?} exceed u32 range"
            )));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "spacing must be positive and finite, got {spacing:?}"
            )));
        }
        if voxels.is_empty() {
            return Err(Error::EmptyMask);
        }
        for v in &voxels {
            if (0..3).any(|a| v[a] as usize >= dims[a]) {
                return Err(Error::OutOfBounds {
                    x: v[0] as i64,
                    y: v[1] as i64,
                    z: v[2] as i64,
                    dims,
                });
            }
        }
        voxels.sort_unstable_by_key(|v| linear_key(dims, *v));
        if let Some(w) = voxels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!(
                "duplicate voxel {:?}",
                w[0]
            )));
        }
        Ok(Self {
            dims,
            spacing,
            voxels,
        })
    }

    /// Builds a mask from a dense x-fastest volume; every `true` cell is in-mask.
    pub fn from_dense(dims: [usize; 3], spacing: [f64; 3], cells: &[bool]) -> Result<Self> {
        if cells.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::InvalidArgument(format!(
                "dense volume has {} cells, dims {dims:?} need {}",
                cells.len(),
                dims[0] * dims[1] * dims[2]
            )));
        }
        let voxels = cells
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(i, _)| {
                let x = i % dims[0];
                let y = (i / dims[0]) % dims[1];
                let z = i / (dims[0] * dims[1]);
                [x as u32, y as u32, z as u32]
            })
            .collect();
        Self::new(dims, spacing, voxels)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    /// Voxel coordinates `[x, y, z]` in canonical order.
    pub fn voxels(&self) -> &[[u32; 3]] {
        &self.voxels
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    /// Dense x-fastest occupancy volume.
    pub fn to_dense(&self) -> Vec<bool> {
        let mut cells = vec![false; self.dims[0] * self.dims[1] * self.dims[2]];
        for v in &self.voxels {
            cells[linear_key(self.dims, *v) as usize] = true;
        }
        cells
    }
}

/// Linear index of a voxel in an x-fastest layout.
pub fn linear_key(dims: [usize; 3], v: [u32; 3]) -> u64 {
    v[0] as u64 + dims[0] as u64 * (v[1] as u64 + dims[1] as u64 * v[2] as u64)
}

/// Triangle surface in physical (mm) coordinates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

/// Twice the triangle area below which a face counts as degenerate.
pub const DEGENERATE_AREA_EPS: f64 = 1e-12;

impl TriangleMesh {
    /// Validates indices and drops zero-area faces. Returns the mesh and the
    /// number of faces dropped.
    pub fn new(vertices: Vec<[f64; 3]>, triangles: Vec<[u32; 3]>) -> Result<(Self, usize)> {
        let n = vertices.len();
        for t in &triangles {
            for &i in t {
                if i as usize >= n {
                    return Err(Error::IndexOutOfRange {
                        index: i as usize,
                        len: n,
                    });
                }
            }
        }
        let before = triangles.len();
        let triangles: Vec<[u32; 3]> = triangles
            .into_iter()
            .filter(|t| {
                let [a, b, c] = t.map(|i| vertices[i as usize]);
                let cr = cross(sub(b, a), sub(c, a));
                norm(cr) > DEGENERATE_AREA_EPS
            })
            .collect();
        let dropped = before - triangles.len();
        Ok((
            Self {
                vertices,
                triangles,
            },
            dropped,
        ))
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, t: usize) -> [[f64; 3]; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// On-disk mask encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskFormat {
    Nifti,
    Voxtext,
    /// Decide from the file extension, falling back to content sniffing.
    Auto,
}

/// Loads a binary mask. Any nonzero NIfTI value counts as in-mask.
pub fn load_mask(path: impl AsRef<Path>, format: MaskFormat) -> Result<VoxelMask> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = match format {
        MaskFormat::Auto => sniff_format(path, &bytes),
        f => f,
    };
    match format {
        MaskFormat::Nifti => read_nifti_mask(&bytes),
        MaskFormat::Voxtext => {
            let text = std::str::from_utf8(&bytes)
                .map_err(|_| Error::Parse("VOXTEXT file is not valid UTF-8".into()))?;
            read_voxtext(text)
        }
        MaskFormat::Auto => unreachable!(),
    }
}

/// Writes a mask; `Auto` picks NIfTI for `.nii` paths and VOXTEXT otherwise.
pub fn save_mask(mask: &VoxelMask, path: impl AsRef<Path>, format: MaskFormat) -> Result<()> {
    let path = path.as_ref();
    let format = match format {
        MaskFormat::Auto if has_extension(path, "nii") => MaskFormat::Nifti,
        MaskFormat::Auto => MaskFormat::Voxtext,
        f => f,
    };
    let bytes = match format {
        MaskFormat::Nifti => write_nifti_mask(mask),
        _ => write_voxtext(mask).into_bytes(),
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads an OFF surface, returning the mesh and the count of dropped
/// degenerate faces.
pub fn load_surface(path: impl AsRef<Path>) -> Result<(TriangleMesh, usize)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (mesh, dropped) = read_off(&text)?;
    if dropped > 0 {
        log::warn!(
            "{}: dropped {dropped} degenerate triangle(s)",
            path.display()
        );
    }
    Ok((mesh, dropped))
}

pub fn save_surface(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_off(mesh)).map_err(|e| Error::io(path, e))
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn sniff_format(path: &Path, bytes: &[u8]) -> MaskFormat {
    if bytes.starts_with(b"VOXMASK") {
        MaskFormat::Voxtext
    } else if has_extension(path, "nii") || has_extension(path, "gz") || bytes.len() >= 348 {
        MaskFormat::Nifti
    } else {
        MaskFormat::Voxtext
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_is_z_then_y_then_x() {
        let m = VoxelMask::new(
            [2, 2, 2],
            [1.0; 3],
            vec![[1, 0, 1], [0, 1, 0], [1, 0, 0], [0, 0, 1]],
        )
        .unwrap();
        assert_eq!(m.voxels(), &[[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1]]);
    }

    #[test]
    fn rejects_duplicates_out_of_bounds_and_empty() {
        assert!(VoxelMask::new([2, 2, 2], [1.0; 3], vec![[0, 0, 0], [0, 0, 0]]).is_err());
        assert!(matches!(
            VoxelMask::new([2, 2, 2], [1.0; 3], vec![[2, 0, 0]]),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(matches!(
            VoxelMask::new([2, 2, 2], [1.0; 3], vec![]),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn dense_round_trip() {
        let mut cells = vec![false; 27];
        cells[0] = true;
        cells[13] = true;
        cells[26] = true;
        let m = VoxelMask::from_dense([3, 3, 3], [1.0; 3], &cells).unwrap();
        assert_eq!(m.voxels(), &[[0, 0, 0], [1, 1, 1], [2, 2, 2]]);
        assert_eq!(m.to_dense(), cells);
    }

    #[test]
    fn mesh_drops_degenerate_faces() {
        let verts = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [2.0, 0.0, 0.0],
        ];
        let (mesh, dropped) = TriangleMesh::new(verts.clone(), vec![[0, 1, 2], [0, 1, 3]]).unwrap();
        assert_eq!(mesh.triangles.len(), 1);
        assert_eq!(dropped, 1);
        assert!(matches!(
            TriangleMesh::new(verts, vec![[0, 1, 9]]),
            Err(Error::IndexOutOfRange { index: 9, .. })
        ));
    }
}
