//! Content-addressed on-disk cache for built graphs and parcellations.

use std::path::{Path, PathBuf};

use log::{debug, warn};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{read_grf, write_grf, VoxelGraph};
use crate::parcellation::Parcellation;

/// Environment variable that overrides the cache location.
pub const CACHE_DIR_ENV: &str = "CORTIGRAPH_CACHE_DIR";

/// Incremental key builder; every part is length-prefixed.
#[derive(Clone, Default)]
pub struct CacheKey(Sha256);

impl CacheKey {
    pub fn new(kind: &str) -> Self {
        let mut k = Self(Sha256::new());
        k.push(kind.as_bytes());
        k
    }

    pub fn push(&mut self, part: &[u8]) -> &mut Self {
        self.0.update((part.len() as u64).to_le_bytes());
        self.0.update(part);
        self
    }

    pub fn hex(&self) -> String {
        self.0
            .clone()
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// `CORTIGRAPH_CACHE_DIR` if set, `default` otherwise.
    pub fn from_env_or(default: impl Into<PathBuf>) -> Self {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Self::new(dir),
            _ => Self::new(default),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, kind: &str, key: &str, ext: &str) -> PathBuf {
        self.root.join(kind).join(format!("{key}.{ext}"))
    }

    fn store(&self, path: &Path, bytes: &[u8]) -> Result<()> {
        let dir = path.parent().expect("cache paths have a parent");
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        // write-then-rename so concurrent readers never see partial files
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    /// A cached graph and the number of edges pruning removed from it.
    pub fn load_graph(&self, key: &str) -> Option<(VoxelGraph, usize)> {
        let path = self.path("graphs", key, "grf");
        let pruned = std::fs::read_to_string(self.path("graphs", key, "pruned"))
            .ok()?
            .trim()
            .parse()
            .ok()?;
        let bytes = std::fs::read(&path).ok()?;
        match read_grf(&bytes) {
            Ok(g) => {
                debug!("graph cache hit {key}");
                Some((g, pruned))
            }
            Err(e) => {
                warn!("ignoring corrupt cache entry {}: {e}", path.display());
                None
            }
        }
    }

    pub fn store_graph(&self, key: &str, graph: &VoxelGraph, pruned_edges: usize) -> Result<()> {
        self.store(&self.path("graphs", key, "grf"), &write_grf(graph))?;
        self.store(
            &self.path("graphs", key, "pruned"),
            pruned_edges.to_string().as_bytes(),
        )
    }

    pub fn load_parcellation(&self, key: &str) -> Option<Parcellation> {
        let path = self.path("parcels", key, "json");
        let bytes = std::fs::read(&path).ok()?;
        Parcellation::read_json(&bytes[..]).ok()
    }

    pub fn store_parcellation(&self, key: &str, parc: &Parcellation) -> Result<()> {
        let mut buf = Vec::new();
        parc.write_json(&mut buf)?;
        self.store(&self.path("parcels", key, "json"), &buf)
    }
}
