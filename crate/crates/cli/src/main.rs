//! `cortigraph` command-line driver.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use cortigraph::graph::{
    read_graph_json, read_grf, write_graph_json, write_grf, GRAPH_JSON_MAX_VERTICES,
};
use cortigraph::parcellation::{
    local_graphs, parcellate_with, Parcellation, ParcellationOptions, DEFAULT_RESTARTS,
};
use cortigraph::phantom::{generate_cohort, generate_folded_sheet, write_cohort, PhantomParams};
use cortigraph::pipeline::{
    build_hemisphere_graph, emit_report, graph_histogram, hemisphere_features, histogram_svg,
    run_pipeline, Cache, HemisphereResult, PipelineConfig, SubjectResult,
};
use cortigraph::spectral::{write_histogram_csv, SolverOptions};
use cortigraph::stats::{
    group_mean_test, pairwise_test_matrix, significant_fraction, write_pairwise_csv,
    write_table1_csv, write_table2_csv, PairClass, SubjectFeatureSet, Table1Row, Table2Row,
};
use cortigraph::textfmt::{sci, sig6};
use cortigraph::volume_io::save_mask;
use cortigraph::{
    build_voxel_graph, connected_components, load_mask, load_surface, prune_edges_by_surface,
    BandSpec, Connectivity, MaskFormat, VoxelGraph,
};

const DEFAULT_SEED: u64 = 42;

/// Spectral band descriptors of voxelized cortical sheets.
///
/// Voxel (i, j, k) has its center at ((i, j, k) + 0.5) * spacing; surfaces
/// used for pruning live in the same physical frame.
#[derive(Parser, Debug)]
#[command(name = "cortigraph", version)]
struct Cli {
    /// Seed for phantom generation, k-means and the eigensolver [default: 42].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads [default: all cores].
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory [default: current directory].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthetic folded-sheet masks.
    #[command(subcommand)]
    Phantom(PhantomCmd),
    /// Voxel graph construction and surface pruning.
    #[command(subcommand)]
    Graph(GraphCmd),
    /// Equal-volume spectral parcellation of a graph.
    Parcellate(ParcellateArgs),
    /// Eigenvalue counts per band.
    #[command(subcommand)]
    Spectrum(SpectrumCmd),
    /// Per-subject local and global band features of a cohort.
    Features(FeaturesArgs),
    /// Rank-sum comparisons of feature files.
    #[command(subcommand)]
    Stats(StatsCmd),
    /// Full cohort runs driven by a JSON config.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
}

#[derive(Subcommand, Debug)]
enum PhantomCmd {
    /// Write one phantom mask, or a two-class cohort with `--per-class`.
    Gen(PhantomArgs),
}

#[derive(Args, Debug)]
struct PhantomArgs {
    /// Subjects per class; writes a cohort and its manifest.
    #[arg(long)]
    per_class: Option<usize>,
    /// Grid size X,Y,Z.
    #[arg(long, value_delimiter = ',', default_values_t = [64, 64, 16])]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    thickness: usize,
    #[arg(long, default_value_t = 4.0)]
    amplitude: f64,
    /// Fold cycles per grid length along X,Y.
    #[arg(long, value_delimiter = ',', default_values_t = [2.0, 2.0])]
    frequency: Vec<f64>,
    /// Class B fold frequency as a multiple of class A's.
    #[arg(long, default_value_t = 1.5)]
    ratio: f64,
    /// Half-width of the per-subject phase jitter (radians).
    #[arg(long, default_value_t = 0.0)]
    phase_jitter: f64,
    /// Flip probability on the sheet boundary shell (at most 0.05).
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, value_enum, default_value_t = FormatArg::Nii)]
    format: FormatArg,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FormatArg {
    Nii,
    Voxtext,
}

impl From<FormatArg> for MaskFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Nii => MaskFormat::Nifti,
            FormatArg::Voxtext => MaskFormat::Voxtext,
        }
    }
}

#[derive(Subcommand, Debug)]
enum GraphCmd {
    /// Build the voxel graph of a mask and write it as GRF1 (or JSON).
    Build(GraphBuildArgs),
    /// Remove graph edges that cross a surface mesh.
    Prune(GraphPruneArgs),
}

#[derive(Args, Debug)]
struct GraphBuildArgs {
    /// NIfTI-1 or VOXTEXT mask.
    mask: PathBuf,
    /// 6, 18 or 26.
    #[arg(long, default_value_t = 26)]
    connectivity: u8,
    /// Also write a JSON copy (graphs up to 10,000 vertices).
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct GraphPruneArgs {
    /// Graph file (.grf / .json) or mask.
    graph: PathBuf,
    /// OFF surface mesh.
    #[arg(long)]
    surface: PathBuf,
    /// Voxel spacing X,Y,Z for graph files (masks carry their own).
    #[arg(long, value_delimiter = ',')]
    spacing: Option<Vec<f64>>,
    #[arg(long, default_value_t = 26)]
    connectivity: u8,
}

#[derive(Args, Debug)]
struct ParcellateArgs {
    /// Graph file (.grf / .json) or mask.
    graph: PathBuf,
    /// Target parcel size in vertices; N = round(n / target).
    #[arg(long)]
    target: usize,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    restarts: usize,
    /// Row-normalize the spectral embedding before k-means.
    #[arg(long)]
    row_normalize: bool,
    #[arg(long, default_value_t = 26)]
    connectivity: u8,
}

#[derive(Args, Debug, Clone, Copy)]
struct BandArgs {
    #[arg(long, default_value_t = 0.0)]
    lo: f64,
    #[arg(long, default_value_t = 0.1)]
    hi: f64,
    #[arg(long, default_value_t = 10)]
    bands: usize,
    /// Remove the zero eigenvalues (one per connected component) from band 1.
    #[arg(long)]
    exclude_zero: bool,
}

impl BandArgs {
    fn spec(&self) -> Result<BandSpec> {
        Ok(BandSpec::new(self.lo, self.hi, self.bands)?)
    }
}

#[derive(Subcommand, Debug)]
enum SpectrumCmd {
    /// Histogram of a graph's eigenvalues over equal bands; with
    /// `--parcellation`, also one histogram per parcel.
    Bands(SpectrumArgs),
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    /// Graph file (.grf / .json) or mask.
    graph: PathBuf,
    #[command(flatten)]
    bands: BandArgs,
    /// Parcellation JSON from `parcellate`.
    #[arg(long)]
    parcellation: Option<PathBuf>,
    #[arg(long, default_value_t = 26)]
    connectivity: u8,
}

#[derive(Args, Debug)]
struct FeaturesArgs {
    /// Cohort manifest JSON.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    target: usize,
    #[command(flatten)]
    bands: BandArgs,
    #[arg(long, default_value_t = 26)]
    connectivity: u8,
    #[arg(long)]
    row_normalize: bool,
}

#[derive(Subcommand, Debug)]
enum StatsCmd {
    /// Subject-pair tests of local features per band, and the share of
    /// significant opposite- and same-class pairs.
    Pairwise(PairwiseArgs),
    /// Class comparison of hemisphere-mean local features and of global
    /// features per band.
    Group(GroupArgs),
}

#[derive(Args, Debug)]
struct PairwiseArgs {
    /// Feature JSON files or directories of them.
    #[arg(required = true)]
    features: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Graph-size label for the summary table.
    #[arg(long, default_value_t = 0)]
    graph_size: usize,
}

#[derive(Args, Debug)]
struct GroupArgs {
    /// Feature JSON files or directories of them.
    #[arg(required = true)]
    features: Vec<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum PipelineCmd {
    /// Run every stage and write the report.
    Run(RunArgs),
    /// Write a config with default settings for a manifest.
    Init(InitArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Pipeline config JSON.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args, Debug)]
struct InitArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Where to write the config.
    #[arg(long, default_value = "pipeline.json")]
    config: PathBuf,
    /// Target parcel sizes.
    #[arg(long, value_delimiter = ',')]
    targets: Option<Vec<usize>>,
}

struct Ctx {
    seed: u64,
    out: PathBuf,
    seed_given: bool,
    out_given: bool,
    threads: Option<usize>,
}

impl Ctx {
    fn out_file(&self, name: impl AsRef<Path>) -> Result<PathBuf> {
        fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        Ok(self.out.join(name))
    }
}

fn connectivity(c: u8) -> Result<Connectivity> {
    Ok(Connectivity::try_from(c)?)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "graph".into())
}

fn ext_is(path: &Path, ext: &str) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

/// A graph file, or a mask turned into a graph. Also returns the mask
/// spacing when there is one.
fn load_graph_input(path: &Path, conn: u8) -> Result<(VoxelGraph, Option<[f64; 3]>)> {
    let graph = if ext_is(path, "grf") {
        read_grf(&fs::read(path).with_context(|| format!("reading {}", path.display()))?)?
    } else if ext_is(path, "json") {
        read_graph_json(
            &fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        )?
    } else {
        let mask = load_mask(path, MaskFormat::Auto)?;
        let spacing = mask.spacing();
        return Ok((
            build_voxel_graph(&mask, connectivity(conn)?).with_tag(stem(path)),
            Some(spacing),
        ));
    };
    Ok((graph.with_tag(stem(path)), None))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn phantom_gen(ctx: &Ctx, a: &PhantomArgs) -> Result<()> {
    if a.dims.len() != 3 || a.frequency.len() != 2 {
        bail!("--dims takes X,Y,Z and --frequency takes FX,FY");
    }
    let params = PhantomParams {
        dims: [a.dims[0], a.dims[1], a.dims[2]],
        thickness: a.thickness,
        amplitude: a.amplitude,
        frequency: [a.frequency[0], a.frequency[1]],
        phase: [0.0, 0.0],
        phase_jitter: a.phase_jitter,
        noise: a.noise,
        seed: ctx.seed,
    };
    match a.per_class {
        None => {
            let mask = generate_folded_sheet(&params)?;
            let name = match a.format {
                FormatArg::Nii => "phantom.nii",
                FormatArg::Voxtext => "phantom.voxtext",
            };
            let path = ctx.out_file(name)?;
            save_mask(&mask, &path, a.format.into())?;
            println!("wrote {} ({} voxels)", path.display(), mask.len());
        }
        Some(n) => {
            let b = PhantomParams {
                frequency: params.frequency.map(|f| f * a.ratio),
                ..params.clone()
            };
            let members = generate_cohort(&params, &b, n, ctx.seed)?;
            let manifest = write_cohort(&members, &ctx.out, a.format.into())?;
            let voxels: usize = members.iter().map(|m| m.mask.len()).sum();
            println!(
                "wrote {} masks ({} voxels on average) and {}",
                members.len(),
                voxels / members.len().max(1),
                manifest.display()
            );
        }
    }
    Ok(())
}

fn graph_build(ctx: &Ctx, a: &GraphBuildArgs) -> Result<()> {
    let mask = load_mask(&a.mask, MaskFormat::Auto)?;
    let graph = build_voxel_graph(&mask, connectivity(a.connectivity)?);
    let comps = connected_components(&graph).count;
    println!(
        "{}: {} vertices, {} edges, {} components",
        a.mask.display(),
        graph.n_vertices(),
        graph.n_edges(),
        comps
    );
    let name = stem(&a.mask);
    write_bytes(&ctx.out_file(format!("{name}.grf"))?, &write_grf(&graph))?;
    if a.json {
        if graph.n_vertices() > GRAPH_JSON_MAX_VERTICES {
            bail!(
                "graph has {} vertices; JSON output is limited to {GRAPH_JSON_MAX_VERTICES}",
                graph.n_vertices()
            );
        }
        write_bytes(
            &ctx.out_file(format!("{name}.json"))?,
            write_graph_json(&graph)?.as_bytes(),
        )?;
    }
    Ok(())
}

fn graph_prune(ctx: &Ctx, a: &GraphPruneArgs) -> Result<()> {
    let (graph, mask_spacing) = load_graph_input(&a.graph, a.connectivity)?;
    let spacing = match (&a.spacing, mask_spacing) {
        (Some(s), _) if s.len() == 3 => [s[0], s[1], s[2]],
        (Some(_), _) => bail!("--spacing takes X,Y,Z"),
        (None, Some(s)) => s,
        (None, None) => [1.0; 3],
    };
    let (mesh, _) = load_surface(&a.surface)?;
    let before = connected_components(&graph).count;
    let outcome = prune_edges_by_surface(&graph, &mesh, spacing);
    let after = connected_components(&outcome.graph).count;
    println!(
        "removed {} edges; components {before} -> {after}",
        outcome.removed
    );
    write_bytes(
        &ctx.out_file(format!("{}_pruned.grf", stem(&a.graph)))?,
        &write_grf(&outcome.graph),
    )
}

fn parcellate(ctx: &Ctx, a: &ParcellateArgs) -> Result<()> {
    let (graph, _) = load_graph_input(&a.graph, a.connectivity)?;
    let opts = ParcellationOptions {
        restarts: a.restarts,
        row_normalize: a.row_normalize,
        solver: SolverOptions {
            seed: ctx.seed,
            ..SolverOptions::default()
        },
    };
    let parc = parcellate_with(&graph, a.target, ctx.seed, &opts)?;
    println!(
        "{} vertices -> {} parcels, sizes {}..{} (balance {})",
        parc.n_vertices,
        parc.n_parcels,
        parc.sizes.iter().min().unwrap_or(&0),
        parc.sizes.iter().max().unwrap_or(&0),
        sig6(parc.balance_ratio())
    );
    let name = format!("{}_t{}", stem(&a.graph), a.target);
    let json = ctx.out_file(format!("{name}.json"))?;
    parc.write_json(create(&json)?)?;
    println!("wrote {}", json.display());
    let csv = ctx.out_file(format!("{name}.csv"))?;
    parc.write_csv(create(&csv)?)?;
    println!("wrote {}", csv.display());
    Ok(())
}

fn spectrum_bands(ctx: &Ctx, a: &SpectrumArgs) -> Result<()> {
    let (graph, _) = load_graph_input(&a.graph, a.connectivity)?;
    let spec = a.bands.spec()?;
    let name = stem(&a.graph);
    let global = graph_histogram(&graph, &spec, a.bands.exclude_zero)?;
    println!("{}: {:?}", global.graph_id, global.counts);
    let csv = ctx.out_file(format!("{name}_bands.csv"))?;
    write_histogram_csv(create(&csv)?, [&global])?;
    println!("wrote {}", csv.display());
    write_bytes(
        &ctx.out_file(format!("{name}_bands.svg"))?,
        histogram_svg(&global).as_bytes(),
    )?;

    if let Some(p) = &a.parcellation {
        let parc = Parcellation::read_json(BufReader::new(
            File::open(p).with_context(|| format!("opening {}", p.display()))?,
        ))?;
        let locals = local_graphs(&graph, &parc)?;
        let hists = locals
            .iter()
            .map(|g| graph_histogram(g, &spec, a.bands.exclude_zero))
            .collect::<Result<Vec<_>, _>>()?;
        let csv = ctx.out_file(format!("{name}_local_bands.csv"))?;
        write_histogram_csv(create(&csv)?, &hists)?;
        println!("wrote {} ({} local graphs)", csv.display(), hists.len());
    }
    Ok(())
}

fn features(ctx: &Ctx, a: &FeaturesArgs) -> Result<()> {
    let mut config = PipelineConfig::new(&a.manifest, &ctx.out);
    config.connectivity = connectivity(a.connectivity)?;
    config.target_sizes = vec![a.target];
    config.bands = a.bands.spec()?;
    config.exclude_zero = a.bands.exclude_zero;
    config.row_normalize = a.row_normalize;
    config.seed = ctx.seed;
    config.solver_seed = ctx.seed;
    let subjects = config.validate()?;
    let cache = Cache::from_env_or(ctx.out.join("cache"));
    for subj in &subjects {
        let mut hemispheres = Vec::new();
        for h in &subj.hemispheres {
            let built = build_hemisphere_graph(
                &h.mask_path,
                h.surface_path.as_deref(),
                config.connectivity,
                Some(&cache),
            )?;
            let graph_id = format!("{}_{}", subj.id, h.hemisphere);
            let (global, components, targets) =
                hemisphere_features(&built, &graph_id, &config, Some(&cache))?;
            info!("{graph_id}: {} parcels", targets[0].parcellation.n_parcels);
            hemispheres.push(HemisphereResult {
                hemisphere: h.hemisphere.clone(),
                mask_path: h.mask_path.clone(),
                seed: h.seed,
                n_vertices: built.graph.n_vertices(),
                n_edges: built.graph.n_edges(),
                pruned_edges: built.pruned_edges,
                components,
                global,
                targets,
            });
        }
        let result = SubjectResult {
            id: subj.id.clone(),
            class: subj.class.clone(),
            hemispheres,
        };
        let path = ctx.out_file(format!("{}_t{}.json", subj.id, a.target))?;
        result.features(0).write_json(create(&path)?)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn load_features(paths: &[PathBuf]) -> Result<Vec<SubjectFeatureSet>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut inner: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            inner.retain(|f| ext_is(f, "json"));
            inner.sort();
            files.extend(inner);
        } else {
            files.push(p.clone());
        }
    }
    let mut out = Vec::with_capacity(files.len());
    for f in files {
        let file = File::open(&f).with_context(|| format!("opening {}", f.display()))?;
        out.push(
            SubjectFeatureSet::read_json(BufReader::new(file))
                .with_context(|| format!("reading {}", f.display()))?,
        );
    }
    if out.is_empty() {
        bail!("no feature files found");
    }
    Ok(out)
}

fn stats_pairwise(ctx: &Ctx, a: &PairwiseArgs) -> Result<()> {
    let cohort = load_features(&a.features)?;
    let n_bands = cohort[0].band_spec()?.n_bands;
    let matrices = (0..n_bands)
        .map(|b| pairwise_test_matrix(&cohort, b))
        .collect::<Result<Vec<_>, _>>()?;
    let fractions = matrices
        .iter()
        .map(|m| significant_fraction(m, a.alpha))
        .collect::<Result<Vec<_>, _>>()?;
    let os: Vec<f64> = fractions.iter().map(|f| f.opposite).collect();
    let ss: Vec<f64> = fractions.iter().map(|f| f.same).collect();
    let rows = vec![
        Table1Row::from_percents(a.graph_size, PairClass::Opposite, &os),
        Table1Row::from_percents(a.graph_size, PairClass::Same, &ss),
    ];
    for r in &rows {
        println!(
            "{}: {:?} average {}%",
            r.class.label(),
            r.percents,
            r.average
        );
    }
    let path = ctx.out_file("pairwise.csv")?;
    write_pairwise_csv(create(&path)?, &matrices)?;
    println!("wrote {}", path.display());
    let path = ctx.out_file("table1.csv")?;
    write_table1_csv(create(&path)?, &rows)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn stats_group(ctx: &Ctx, a: &GroupArgs) -> Result<()> {
    let cohort = load_features(&a.features)?;
    let g = group_mean_test(&cohort)?;
    let mut rows = Vec::new();
    for (band, (l, gl)) in g.local.iter().zip(&g.global).enumerate() {
        println!(
            "band {}: local p = {}, global p = {}",
            band + 1,
            sci(l.p_two_sided),
            sci(gl.p_two_sided)
        );
        rows.push(Table2Row {
            band: band + 1,
            feature_source: "local".into(),
            p_value: l.p_two_sided,
        });
        rows.push(Table2Row {
            band: band + 1,
            feature_source: "global".into(),
            p_value: gl.p_two_sided,
        });
    }
    let path = ctx.out_file("group.csv")?;
    write_table2_csv(create(&path)?, &rows)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn pipeline_run(ctx: &Ctx, a: &RunArgs) -> Result<()> {
    let mut config = PipelineConfig::load(&a.config)?;
    if ctx.seed_given {
        config.seed = ctx.seed;
        config.solver_seed = ctx.seed;
    }
    if ctx.threads.is_some() {
        config.threads = ctx.threads;
    }
    if ctx.out_given {
        config.out_dir = ctx.out.clone();
    }
    let report = run_pipeline(&config)?;
    for (id, reason) in &report.aborted {
        eprintln!("aborted {id}: {reason}");
    }
    let files = emit_report(&report, &config.out_dir)?;
    for r in &report.table1 {
        println!(
            "{} {}: average {}% significant",
            r.graph_size,
            r.class.label(),
            r.average
        );
    }
    println!(
        "wrote {} files under {}",
        files.len(),
        config.out_dir.display()
    );
    Ok(())
}

fn pipeline_init(ctx: &Ctx, a: &InitArgs) -> Result<()> {
    let mut config = PipelineConfig::new(&a.manifest, &ctx.out);
    config.seed = ctx.seed;
    config.solver_seed = ctx.seed;
    config.threads = ctx.threads;
    if let Some(t) = &a.targets {
        config.target_sizes = t.clone();
    }
    config.save(&a.config)?;
    println!("wrote {}", a.config.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx {
        seed: cli.seed.unwrap_or(DEFAULT_SEED),
        seed_given: cli.seed.is_some(),
        out: cli.out.clone().unwrap_or_else(|| PathBuf::from(".")),
        out_given: cli.out.is_some(),
        threads: cli.threads,
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()?;
    }
    match &cli.command {
        Command::Phantom(PhantomCmd::Gen(a)) => phantom_gen(&ctx, a),
        Command::Graph(GraphCmd::Build(a)) => graph_build(&ctx, a),
        Command::Graph(GraphCmd::Prune(a)) => graph_prune(&ctx, a),
        Command::Parcellate(a) => parcellate(&ctx, a),
        Command::Spectrum(SpectrumCmd::Bands(a)) => spectrum_bands(&ctx, a),
        Command::Features(a) => features(&ctx, a),
        Command::Stats(StatsCmd::Pairwise(a)) => stats_pairwise(&ctx, a),
        Command::Stats(StatsCmd::Group(a)) => stats_group(&ctx, a),
        Command::Pipeline(PipelineCmd::Run(a)) => pipeline_run(&ctx, a),
        Command::Pipeline(PipelineCmd::Init(a)) => pipeline_init(&ctx, a),
    }
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        let _ = std::io::stderr().flush();
        std::process::exit(1);
    }
}
