//! End-to-end runs: masks to graphs, parcels, band features and statistics.

mod cache;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    build_voxel_graph, connected_components, normalized_laplacian, prune_edges_by_surface,
    Connectivity, VoxelGraph,
};
use crate::parcellation::{
    local_graphs, parcellate_with, Parcellation, ParcellationOptions, DEFAULT_RESTARTS,
};
use crate::phantom::CohortManifest;
use crate::spectral::{band_histogram, BandSpec, SolverOptions, SpectralBandHistogram};
use crate::stats::{
    group_mean_test, pairwise_test_matrix, significant_fraction, GroupTestResult,
    HemisphereFeatures, PairClass, SignificantFraction, SubjectFeatureSet, Table1Row, Table2Row,
    TestMatrix,
};
use crate::volume_io::{load_mask, load_surface, MaskFormat};

pub use cache::{Cache, CacheKey, CACHE_DIR_ENV};
pub use report::{emit_report, histogram_svg, read_comparison_csv, ComparisonRow};

/// Subjects may fail individually; more than this fraction aborts the run.
pub const MAX_ABORT_FRACTION: f64 = 0.10;

fn default_targets() -> Vec<usize> {
    vec![5000, 6000, 7000, 8000, 9000, 10000]
}
fn default_seed() -> u64 {
    42
}
fn default_alpha() -> f64 {
    0.05
}
fn default_restarts() -> usize {
    DEFAULT_RESTARTS
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Cohort manifest (JSON); optional surfaces are given per entry.
    pub manifest: PathBuf,
    #[serde(default)]
    pub connectivity: Connectivity,
    #[serde(default = "default_targets")]
    pub target_sizes: Vec<usize>,
    #[serde(default)]
    pub bands: BandSpec,
    /// k-means seed.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Start-vector seed of the eigensolver.
    #[serde(default = "default_seed")]
    pub solver_seed: u64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub row_normalize: bool,
    /// Remove the zero eigenvalues (one per component) from the first band.
    #[serde(default)]
    pub exclude_zero: bool,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub out_dir: PathBuf,
    /// Worker threads; all cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default = "default_true")]
    pub use_cache: bool,
}

impl PipelineConfig {
    pub fn new(manifest: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            manifest: manifest.into(),
            connectivity: Connectivity::default(),
            target_sizes: default_targets(),
            bands: BandSpec::default(),
            seed: default_seed(),
            solver_seed: default_seed(),
            restarts: DEFAULT_RESTARTS,
            row_normalize: false,
            exclude_zero: false,
            alpha: default_alpha(),
            out_dir: out_dir.into(),
            threads: None,
            use_cache: true,
        }
    }

    /// Reads a JSON config; relative paths are taken from its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c: Self = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if c.manifest.is_relative() {
            c.manifest = base.join(&c.manifest);
        }
        if c.out_dir.is_relative() {
            c.out_dir = base.join(&c.out_dir);
        }
        Ok(c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")
            .map_err(|e| Error::io(path, e))
    }

    fn parcellation_options(&self) -> ParcellationOptions {
        ParcellationOptions {
            restarts: self.restarts,
            row_normalize: self.row_normalize,
            solver: SolverOptions {
                seed: self.solver_seed,
                ..SolverOptions::default()
            },
        }
    }

    /// Checks everything that can be checked before computing.
    pub fn validate(&self) -> Result<Vec<SubjectInput>> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.target_sizes.is_empty() || self.target_sizes.contains(&0) {
            return bad("at least one positive target parcel size is required".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} outside (0, 1)", self.alpha));
        }
        if self.restarts == 0 || self.threads == Some(0) {
            return bad("restarts and threads must be positive".into());
        }
        let manifest = CohortManifest::load(&self.manifest)?;
        let subjects = group_subjects(&manifest)?;
        if subjects.is_empty() {
            return bad("the cohort manifest lists no subjects".into());
        }
        for s in &subjects {
            for h in &s.hemispheres {
                for p in std::iter::once(&h.mask_path).chain(&h.surface_path) {
                    if !p.is_file() {
                        return bad(format!("subject {}: missing file {}", s.id, p.display()));
                    }
                }
            }
        }
        Ok(subjects)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HemisphereInput {
    pub hemisphere: String,
    pub mask_path: PathBuf,
    pub surface_path: Option<PathBuf>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectInput {
    pub id: String,
    pub class: String,
    pub hemispheres: Vec<HemisphereInput>,
}

/// Groups manifest rows by subject id, keeping first-appearance order.
pub fn group_subjects(manifest: &CohortManifest) -> Result<Vec<SubjectInput>> {
    let mut out: Vec<SubjectInput> = Vec::new();
    for e in &manifest.subjects {
        if e.id.is_empty() || e.id.contains([',', '/', '\\', '\n']) {
            return Err(Error::InvalidArgument(format!(
                "unusable subject id {:?}",
                e.id
            )));
        }
        let hemi = HemisphereInput {
            hemisphere: e.hemisphere.clone(),
            mask_path: e.mask_path.clone(),
            surface_path: e.surface_path.clone(),
            seed: e.seed,
        };
        match out.iter_mut().find(|s| s.id == e.id) {
            Some(s) => {
                if s.class != e.class {
                    return Err(Error::InvalidArgument(format!(
                        "subject {} has two classes",
                        e.id
                    )));
                }
                if s.hemispheres.iter().any(|h| h.hemisphere == e.hemisphere) {
                    return Err(Error::InvalidArgument(format!(
                        "subject {} repeats {}",
                        e.id, e.hemisphere
                    )));
                }
                s.hemispheres.push(hemi);
            }
            None => out.push(SubjectInput {
                id: e.id.clone(),
                class: e.class.clone(),
                hemispheres: vec![hemi],
            }),
        }
    }
    Ok(out)
}

/// A hemisphere graph after optional pruning.
#[derive(Debug, Clone)]
pub struct BuiltGraph {
    pub graph: VoxelGraph,
    /// Content hash of the inputs.
    pub key: String,
    pub pruned_edges: usize,
}

/// Loads, builds and prunes one hemisphere graph, consulting the cache.
pub fn build_hemisphere_graph(
    mask_path: &Path,
    surface_path: Option<&Path>,
    connectivity: Connectivity,
    cache: Option<&Cache>,
) -> Result<BuiltGraph> {
    let mask_bytes = std::fs::read(mask_path).map_err(|e| Error::io(mask_path, e))?;
    let mut key = CacheKey::new("graph-v1");
    key.push(&mask_bytes).push(&[connectivity.into()]);
    if let Some(s) = surface_path {
        key.push(&std::fs::read(s).map_err(|e| Error::io(s, e))?);
    }
    let key = key.hex();

    if let Some(c) = cache {
        if let Some((graph, pruned_edges)) = c.load_graph(&key) {
            return Ok(BuiltGraph {
                graph,
                key,
                pruned_edges,
            });
        }
    }
    let mask = load_mask(mask_path, MaskFormat::Auto)?;
    let mut graph = build_voxel_graph(&mask, connectivity);
    let mut pruned_edges = 0;
    if let Some(s) = surface_path {
        let (mesh, _) = load_surface(s)?;
        let outcome = prune_edges_by_surface(&graph, &mesh, mask.spacing());
        graph = outcome.graph;
        pruned_edges = outcome.removed;
    }
    if let Some(c) = cache {
        c.store_graph(&key, &graph, pruned_edges)?;
    }
    Ok(BuiltGraph {
        graph,
        key,
        pruned_edges,
    })
}

/// Band histogram of `graph`, optionally without its zero eigenvalues.
pub fn graph_histogram(
    graph: &VoxelGraph,
    bands: &BandSpec,
    exclude_zero: bool,
) -> Result<SpectralBandHistogram> {
    let mut h = band_histogram(&normalized_laplacian(graph), bands)?;
    if exclude_zero {
        h.exclude_zero(connected_components(graph).count);
    }
    h.graph_id = graph.tag.clone().unwrap_or_default();
    Ok(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetResult {
    pub target_size: usize,
    pub parcellation: Parcellation,
    /// Connected components inside every parcel.
    pub parcel_components: Vec<usize>,
    pub local: Vec<SpectralBandHistogram>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HemisphereResult {
    pub hemisphere: String,
    pub mask_path: PathBuf,
    pub seed: u64,
    pub n_vertices: usize,
    pub n_edges: usize,
    pub pruned_edges: usize,
    pub components: usize,
    pub global: SpectralBandHistogram,
    pub targets: Vec<TargetResult>,
}

/// Global and per-target local features of one hemisphere graph.
pub fn hemisphere_features(
    built: &BuiltGraph,
    graph_id: &str,
    config: &PipelineConfig,
    cache: Option<&Cache>,
) -> Result<(SpectralBandHistogram, usize, Vec<TargetResult>)> {
    let graph = built.graph.clone().with_tag(graph_id);
    let components = connected_components(&graph).count;
    let global = graph_histogram(&graph, &config.bands, config.exclude_zero)?;
    let opts = config.parcellation_options();
    let mut targets = Vec::with_capacity(config.target_sizes.len());
    for &target in &config.target_sizes {
        let mut key = CacheKey::new("parcellation-v1");
        key.push(built.key.as_bytes())
            .push(&(target as u64).to_le_bytes())
            .push(&config.seed.to_le_bytes())
            .push(&config.solver_seed.to_le_bytes())
            .push(&(config.restarts as u64).to_le_bytes())
            .push(&[config.row_normalize as u8]);
        let key = key.hex();
        let parcellation = match cache.and_then(|c| c.load_parcellation(&key)) {
            Some(p) if p.n_vertices == graph.n_vertices() => p,
            _ => {
                let p = parcellate_with(&graph, target, config.seed, &opts)?;
                if let Some(c) = cache {
                    c.store_parcellation(&key, &p)?;
                }
                p
            }
        };
        let locals = local_graphs(&graph, &parcellation)?;
        let results: Vec<(SpectralBandHistogram, usize)> = locals
            .par_iter()
            .map(|g| {
                Ok((
                    graph_histogram(g, &config.bands, config.exclude_zero)?,
                    connected_components(g).count,
                ))
            })
            .collect::<Result<_>>()?;
        let (local, parcel_components) = results.into_iter().unzip();
        targets.push(TargetResult {
            target_size: target,
            parcellation,
            parcel_components,
            local,
        });
    }
    Ok((global, components, targets))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectResult {
    pub id: String,
    pub class: String,
    pub hemispheres: Vec<HemisphereResult>,
}

impl SubjectResult {
    /// Features at the `t`-th target size.
    pub fn features(&self, t: usize) -> SubjectFeatureSet {
        SubjectFeatureSet {
            subject_id: self.id.clone(),
            class: self.class.clone(),
            hemispheres: self
                .hemispheres
                .iter()
                .map(|h| HemisphereFeatures {
                    hemisphere: h.hemisphere.clone(),
                    local: h.targets[t].local.clone(),
                    global: h.global.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetStats {
    pub target_size: usize,
    /// One matrix per band.
    pub matrices: Vec<TestMatrix>,
    pub fractions: Vec<SignificantFraction>,
    pub group: GroupTestResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub config: PipelineConfig,
    pub subjects: Vec<SubjectResult>,
    /// `(subject id, reason)`.
    pub aborted: Vec<(String, String)>,
    pub targets: Vec<TargetStats>,
    pub table1: Vec<Table1Row>,
    pub table2: Vec<Table2Row>,
}

/// Runs the whole pipeline and returns the results without writing them.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport> {
    let subjects = config.validate()?;
    match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(|| run_validated(config, subjects)),
        None => run_validated(config, subjects),
    }
}

fn run_validated(config: &PipelineConfig, subjects: Vec<SubjectInput>) -> Result<PipelineReport> {
    let cache = config
        .use_cache
        .then(|| Cache::from_env_or(config.out_dir.join("cache")));
    let jobs: Vec<(usize, usize)> = subjects
        .iter()
        .enumerate()
        .flat_map(|(s, subj)| (0..subj.hemispheres.len()).map(move |h| (s, h)))
        .collect();
    let outcomes: Vec<Result<HemisphereResult>> = jobs
        .par_iter()
        .map(|&(s, h)| {
            let subj = &subjects[s];
            let input = &subj.hemispheres[h];
            let built = build_hemisphere_graph(
                &input.mask_path,
                input.surface_path.as_deref(),
                config.connectivity,
                cache.as_ref(),
            )?;
            let graph_id = format!("{}_{}", subj.id, input.hemisphere);
            let (global, components, targets) =
                hemisphere_features(&built, &graph_id, config, cache.as_ref())?;
            info!(
                "{graph_id}: {} vertices, {} parcel sizes done",
                built.graph.n_vertices(),
                targets.len()
            );
            Ok(HemisphereResult {
                hemisphere: input.hemisphere.clone(),
                mask_path: input.mask_path.clone(),
                seed: input.seed,
                n_vertices: built.graph.n_vertices(),
                n_edges: built.graph.n_edges(),
                pruned_edges: built.pruned_edges,
                components,
                global,
                targets,
            })
        })
        .collect();

    let mut by_subject: BTreeMap<usize, Vec<Result<HemisphereResult>>> = BTreeMap::new();
    for (&(s, _), outcome) in jobs.iter().zip(outcomes) {
        by_subject.entry(s).or_default().push(outcome);
    }
    let mut done = Vec::new();
    let mut aborted = Vec::new();
    for (s, hemis) in by_subject {
        let subj = &subjects[s];
        match hemis.into_iter().collect::<Result<Vec<_>>>() {
            Ok(hemispheres) => done.push(SubjectResult {
                id: subj.id.clone(),
                class: subj.class.clone(),
                hemispheres,
            }),
            Err(e) => {
                warn!("subject {} aborted: {e}", subj.id);
                aborted.push((subj.id.clone(), e.to_string()));
            }
        }
    }
    if aborted.len() as f64 > MAX_ABORT_FRACTION * subjects.len() as f64 {
        return Err(Error::InvalidArgument(format!(
            "{} of {} subjects failed (first: {} - {})",
            aborted.len(),
            subjects.len(),
            aborted[0].0,
            aborted[0].1
        )));
    }

    let mut targets = Vec::new();
    let mut table1 = Vec::new();
    let mut table2 = Vec::new();
    let mut global_group = None;
    for (t, &target_size) in config.target_sizes.iter().enumerate() {
        let cohort: Vec<SubjectFeatureSet> = done.iter().map(|s| s.features(t)).collect();
        let matrices: Vec<TestMatrix> = (0..config.bands.n_bands)
            .map(|b| pairwise_test_matrix(&cohort, b))
            .collect::<Result<_>>()?;
        let fractions: Vec<SignificantFraction> = matrices
            .iter()
            .map(|m| significant_fraction(m, config.alpha))
            .collect::<Result<_>>()?;
        let group = group_mean_test(&cohort)?;
        let os: Vec<f64> = fractions.iter().map(|f| f.opposite).collect();
        let ss: Vec<f64> = fractions.iter().map(|f| f.same).collect();
        table1.push(Table1Row::from_percents(
            target_size,
            PairClass::Opposite,
            &os,
        ));
        table1.push(Table1Row::from_percents(target_size, PairClass::Same, &ss));
        if global_group.is_none() {
            global_group = Some(group.global.clone());
        }
        targets.push(TargetStats {
            target_size,
            matrices,
            fractions,
            group,
        });
    }
    let global_group = global_group.expect("at least one target size");
    for band in 0..config.bands.n_bands {
        for ts in &targets {
            table2.push(Table2Row {
                band: band + 1,
                feature_source: format!("local:{}", ts.target_size),
                p_value: ts.group.local[band].p_two_sided,
            });
        }
        table2.push(Table2Row {
            band: band + 1,
            feature_source: "global".into(),
            p_value: global_group[band].p_two_sided,
        });
    }
    Ok(PipelineReport {
        config: config.clone(),
        subjects: done,
        aborted,
        targets,
        table1,
        table2,
    })
}
