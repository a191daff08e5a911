//! Synthetic folded-sheet masks standing in for cortical ribbons.
//!
//! The sheet is the slab of (vertical) half-width
//! `h = thickness / 2 * sqrt(1 + |grad f|^2)` around the surface
//! `z = f(x, y) = z0 + A sin(2 pi fx x / Lx + px) sin(2 pi fy y / Ly + py)`,
//! which approximates constant thickness measured along the normal.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume_io::{save_mask, MaskFormat, TriangleMesh, VoxelMask};

pub const MAX_NOISE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomParams {
    pub dims: [usize; 3],
    /// Sheet thickness in voxels.
    pub thickness: usize,
    /// Fold amplitude in voxels.
    pub amplitude: f64,
    /// Fold cycles per grid length along x and y.
    pub frequency: [f64; 2],
    /// Fold phases before jitter, radians.
    pub phase: [f64; 2],
    /// Half-width of the uniform per-subject phase jitter, radians.
    pub phase_jitter: f64,
    /// Flip probability for voxels on the sheet boundary shell.
    pub noise: f64,
    pub seed: u64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            dims: [64, 64, 16],
            thickness: 3,
            amplitude: 4.0,
            frequency: [2.0, 2.0],
            phase: [0.0, 0.0],
            phase_jitter: 0.0,
            noise: 0.0,
            seed: 0,
        }
    }
}

impl PhantomParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.dims.contains(&0) {
            return bad(format!("grid dims must be positive, got {:?}", self.dims));
        }
        if self.thickness == 0 {
            return bad("sheet thickness must be at least one voxel".into());
        }
        if !(self.amplitude >= 0.0)
            || 2.0 * self.amplitude + self.thickness as f64 > self.dims[2] as f64
        {
            return bad(format!(
                "amplitude {} and thickness {} do not fit {} slices",
                self.amplitude, self.thickness, self.dims[2]
            ));
        }
        if !(0.0..=MAX_NOISE).contains(&self.noise) {
            return bad(format!("noise {} outside [0, {MAX_NOISE}]", self.noise));
        }
        if !(self.phase_jitter >= 0.0) || self.frequency.iter().any(|f| !f.is_finite()) {
            return bad("phase jitter and frequencies must be finite, jitter non-negative".into());
        }
        Ok(())
    }
}

/// Voxelizes the folded sheet described by `params`.
pub fn generate_folded_sheet(params: &PhantomParams) -> Result<VoxelMask> {
    params.validate()?;
    let [nx, ny, nz] = params.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let j = params.phase_jitter;
    let mut jitter = || {
        if j > 0.0 {
            rng.random_range(-j..=j)
        } else {
            0.0
        }
    };
    let px = params.phase[0] + jitter();
    let py = params.phase[1] + jitter();
    let kx = 2.0 * PI * params.frequency[0] / nx as f64;
    let ky = 2.0 * PI * params.frequency[1] / ny as f64;
    let z0 = nz as f64 / 2.0;
    let a = params.amplitude;
    let half = params.thickness as f64 / 2.0;

    let columns: Vec<(usize, usize)> = (0..ny).flat_map(|y| (0..nx).map(move |x| (x, y))).collect();
    let intervals: Vec<(f64, f64)> = columns
        .par_iter()
        .map(|&(x, y)| {
            let (sx, cx) = (kx * (x as f64 + 0.5) + px).sin_cos();
            let (sy, cy) = (ky * (y as f64 + 0.5) + py).sin_cos();
            let f = z0 + a * sx * sy;
            let gx = a * kx * cx * sy;
            let gy = a * ky * sx * cy;
            let h = half * (1.0 + gx * gx + gy * gy).sqrt();
            (f - h, f + h)
        })
        .collect();

    let mut cells = vec![false; nx * ny * nz];
    for (c, &(lo, hi)) in intervals.iter().enumerate() {
        for z in 0..nz {
            let zc = z as f64 + 0.5;
            if lo <= zc && zc < hi {
                cells[c + nx * ny * z] = true;
            }
        }
    }

    if params.noise > 0.0 {
        let shell = boundary_shell(&cells, params.dims);
        let mut flipped = cells.clone();
        for (i, &on_shell) in shell.iter().enumerate() {
            if on_shell && rng.random::<f64>() < params.noise {
                flipped[i] = !flipped[i];
            }
        }
        cells = flipped;
    }

    if !cells.iter().any(|&c| c) {
        return Err(Error::EmptyMask);
    }
    VoxelMask::from_dense(params.dims, [1.0; 3], &cells)
}

/// Cells that differ from at least one of their 26 neighbors.
fn boundary_shell(cells: &[bool], dims: [usize; 3]) -> Vec<bool> {
    let [nx, ny, nz] = dims;
    let at = |x: i64, y: i64, z: i64| -> Option<bool> {
        if x < 0 || y < 0 || z < 0 || x >= nx as i64 || y >= ny as i64 || z >= nz as i64 {
            None
        } else {
            Some(cells[x as usize + nx * (y as usize + ny * z as usize)])
        }
    };
    (0..cells.len())
        .into_par_iter()
        .map(|i| {
            let (x, y, z) = (
                (i % nx) as i64,
                ((i / nx) % ny) as i64,
                (i / (nx * ny)) as i64,
            );
            let me = cells[i];
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        if let Some(other) = at(x + dx, y + dy, z + dz) {
                            if other != me {
                                return true;
                            }
                        }
                    }
                }
            }
            false
        })
        .collect()
}

/// Left and right hemisphere labels, in processing order.
pub const HEMISPHERES: [&str; 2] = ["lh", "rh"];

/// One hemisphere mask of a synthetic subject.
#[derive(Debug, Clone)]
pub struct CohortMember {
    pub id: String,
    pub class: String,
    pub hemisphere: String,
    pub seed: u64,
    pub mask: VoxelMask,
}

/// Seed of subject `index` (0-based across the whole cohort), hemisphere
/// `hemi`, derived from the cohort seed by a SplitMix64 step.
pub fn subject_seed(seed: u64, index: usize, hemi: usize) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(1 + 2 * index as u64 + hemi as u64));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n_per_class` subjects of class "A" then class "B", two hemispheres each.
/// Subjects differ only through their seeds, i.e. phase jitter and noise.
pub fn generate_cohort(
    class_a: &PhantomParams,
    class_b: &PhantomParams,
    n_per_class: usize,
    seed: u64,
) -> Result<Vec<CohortMember>> {
    if n_per_class < 2 {
        return Err(Error::InvalidArgument(
            "a cohort needs at least two subjects per class".into(),
        ));
    }
    class_a.validate()?;
    class_b.validate()?;
    let jobs: Vec<(usize, usize, &str, &PhantomParams)> = (0..2 * n_per_class)
        .flat_map(|i| {
            let (label, params) = if i < n_per_class {
                ("A", class_a)
            } else {
                ("B", class_b)
            };
            (0..HEMISPHERES.len()).map(move |h| (i, h, label, params))
        })
        .collect();
    jobs.into_par_iter()
        .map(|(i, h, label, params)| {
            let s = subject_seed(seed, i, h);
            let mask = generate_folded_sheet(&PhantomParams {
                seed: s,
                ..params.clone()
            })?;
            Ok(CohortMember {
                id: format!("{label}{:02}", i % n_per_class + 1),
                class: label.to_string(),
                hemisphere: HEMISPHERES[h].to_string(),
                seed: s,
                mask,
            })
        })
        .collect()
}

/// Manifest row; rows sharing an `id` are the hemispheres of one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub class: String,
    pub mask_path: PathBuf,
    pub seed: u64,
    #[serde(default = "default_hemisphere")]
    pub hemisphere: String,
    /// Optional pruning surface.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface_path: Option<PathBuf>,
}

fn default_hemisphere() -> String {
    HEMISPHERES[0].to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortManifest {
    pub subjects: Vec<ManifestEntry>,
}

impl CohortManifest {
    /// Reads a manifest; relative paths are resolved against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: CohortManifest = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for e in &mut m.subjects {
            if e.mask_path.is_relative() {
                e.mask_path = base.join(&e.mask_path);
            }
            if let Some(s) = e.surface_path.as_mut().filter(|s| s.is_relative()) {
                *s = base.join(&*s);
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Writes every mask into `dir` and a `cohort.json` manifest with paths
/// relative to it. Returns the manifest path.
pub fn write_cohort(
    members: &[CohortMember],
    dir: impl AsRef<Path>,
    format: MaskFormat,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ext = match format {
        MaskFormat::Voxtext => "voxtext",
        _ => "nii",
    };
    let mut subjects = Vec::with_capacity(members.len());
    for m in members {
        let name = format!("{}_{}.{ext}", m.id, m.hemisphere);
        save_mask(&m.mask, dir.join(&name), format)?;
        subjects.push(ManifestEntry {
            id: m.id.clone(),
            class: m.class.clone(),
            mask_path: name.into(),
            seed: m.seed,
            hemisphere: m.hemisphere.clone(),
            surface_path: None,
        });
    }
    let path = dir.join("cohort.json");
    CohortManifest { subjects }.save(&path)?;
    Ok(path)
}

/// Axis-aligned rectangle `coord[axis] = offset` spanning `lo..hi` in the
/// other two axes (in increasing axis order), as two triangles. A pruning
/// test fixture.
pub fn planar_mesh(axis: usize, offset: f64, lo: [f64; 2], hi: [f64; 2]) -> TriangleMesh {
    assert!(axis < 3, "axis must be 0, 1 or 2");
    let (u, v) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let corner = |a: f64, b: f64| {
        let mut p = [0.0; 3];
        p[axis] = offset;
        p[u] = a;
        p[v] = b;
        p
    };
    let vertices = vec![
        corner(lo[0], lo[1]),
        corner(hi[0], lo[1]),
        corner(hi[0], hi[1]),
        corner(lo[0], hi[1]),
    ];
    TriangleMesh::new(vertices, vec![[0, 1, 2], [0, 2, 3]])
        .expect("valid rectangle")
        .0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_voxel_graph, connected_components, Connectivity};
    use proptest::prelude::*;

    fn flat(thickness: usize) -> PhantomParams {
        PhantomParams {
            dims: [20, 20, 8],
            thickness,
            amplitude: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn flat_sheets() {
        assert_eq!(generate_folded_sheet(&flat(1)).unwrap().len(), 400);
        assert_eq!(generate_folded_sheet(&flat(3)).unwrap().len(), 1200);
    }

    #[test]
    fn deterministic_per_seed() {
        let p = PhantomParams {
            noise: 0.03,
            phase_jitter: 0.4,
            seed: 9,
            ..Default::default()
        };
        assert_eq!(
            generate_folded_sheet(&p).unwrap(),
            generate_folded_sheet(&p).unwrap()
        );
        let q = PhantomParams {
            seed: 10,
            ..p.clone()
        };
        assert_ne!(
            generate_folded_sheet(&p).unwrap(),
            generate_folded_sheet(&q).unwrap()
        );
    }

    #[test]
    fn rejects_bad_params() {
        assert!(generate_folded_sheet(&PhantomParams {
            thickness: 0,
            ..Default::default()
        })
        .is_err());
        assert!(generate_folded_sheet(&PhantomParams {
            noise: 0.2,
            ..Default::default()
        })
        .is_err());
        assert!(generate_folded_sheet(&PhantomParams {
            amplitude: 7.0,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn cohort_shape_and_manifest() {
        let a = PhantomParams {
            dims: [16, 16, 8],
            amplitude: 1.5,
            phase_jitter: 0.3,
            ..Default::default()
        };
        let b = PhantomParams {
            frequency: [3.0, 3.0],
            ..a.clone()
        };
        let cohort = generate_cohort(&a, &b, 3, 5).unwrap();
        assert_eq!(cohort.len(), 12);
        assert_eq!(cohort.iter().filter(|m| m.class == "B").count(), 6);
        assert_eq!(cohort[0].id, "A01");
        assert_eq!(cohort[11].id, "B03");
        assert!(generate_cohort(&a, &b, 1, 5).is_err());

        let dir = tempfile::tempdir().unwrap();
        let manifest = write_cohort(&cohort, dir.path(), MaskFormat::Nifti).unwrap();
        let loaded = CohortManifest::load(&manifest).unwrap();
        assert_eq!(loaded.subjects.len(), 12);
        let back =
            crate::volume_io::load_mask(&loaded.subjects[3].mask_path, MaskFormat::Auto).unwrap();
        assert_eq!(back, cohort[3].mask);
    }

    #[test]
    fn planar_mesh_geometry() {
        let m = planar_mesh(2, 1.0, [0.0, 0.0], [2.0, 3.0]);
        assert_eq!(m.triangles.len(), 2);
        assert!(m.vertices.iter().all(|v| v[2] == 1.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn thicker_sheets_have_more_voxels(amp in 0.0f64..3.0, fx in 0.5f64..3.0, fy in 0.5f64..3.0, t in 1usize..4, seed in 0u64..1000) {
            let p = PhantomParams { dims: [24, 20, 14], thickness: t, amplitude: amp, frequency: [fx, fy], phase_jitter: 0.5, seed, ..Default::default() };
            let thin = generate_folded_sheet(&p).unwrap();
            let thick = generate_folded_sheet(&PhantomParams { thickness: t + 1, ..p.clone() }).unwrap();
            prop_assert!(thick.len() > thin.len());
            let g = build_voxel_graph(&thin, Connectivity::TwentySix);
            prop_assert_eq!(connected_components(&g).count, 1);
        }
    }
}
