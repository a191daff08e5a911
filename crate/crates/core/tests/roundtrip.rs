use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use cortigraph::graph::{read_graph_json, read_grf, write_graph_json, write_grf};
use cortigraph::parcellation::{parcellate, Parcellation};
use cortigraph::phantom::{generate_cohort, generate_folded_sheet, write_cohort, PhantomParams};
use cortigraph::pipeline::{emit_report, read_comparison_csv, run_pipeline, PipelineConfig};
use cortigraph::spectral::read_histogram_csv;
use cortigraph::stats::{read_pairwise_csv, read_table1_csv, read_table2_csv, SubjectFeatureSet};
use cortigraph::{build_voxel_graph, Connectivity, MaskFormat};

fn small() -> PhantomParams {
    PhantomParams {
        dims: [24, 24, 10],
        thickness: 2,
        amplitude: 2.0,
        phase_jitter: 0.4,
        ..PhantomParams::default()
    }
}

fn open(p: &Path) -> BufReader<File> {
    BufReader::new(File::open(p).unwrap_or_else(|e| panic!("{}: {e}", p.display())))
}

#[test]
fn every_report_file_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let b = PhantomParams {
        frequency: [3.0, 3.0],
        ..small()
    };
    let members = generate_cohort(&small(), &b, 2, 7).unwrap();
    let manifest = write_cohort(&members, dir.path().join("cohort"), MaskFormat::Voxtext).unwrap();
    let mut config = PipelineConfig::new(manifest, dir.path().join("out"));
    config.target_sizes = vec![300, 450];
    config.use_cache = false;
    let report = run_pipeline(&config).unwrap();
    let out = dir.path().join("out");
    let files = emit_report(&report, &out).unwrap();
    assert_eq!(files.last().unwrap(), Path::new("manifest.json"));

    let t1 = read_table1_csv(open(&out.join("table1.csv"))).unwrap();
    assert_eq!(t1, report.table1);
    let t2 = read_table2_csv(open(&out.join("table2.csv"))).unwrap();
    assert_eq!(t2.len(), 10 * (2 + 1));
    for (a, b) in t2.iter().zip(&report.table2) {
        assert_eq!((a.band, &a.feature_source), (b.band, &b.feature_source));
        // p-values are written with six significant digits
        assert!((a.p_value - b.p_value).abs() <= 1e-5 * b.p_value);
    }

    for t in [300, 450] {
        let rows =
            read_pairwise_csv(open(&out.join(format!("pairwise/pairwise_t{t}.csv")))).unwrap();
        // C(4, 2) pairs x 10 bands
        assert_eq!(rows.len(), 6 * 10);
        let heat = fs::read_to_string(out.join(format!("heatmap/heatmap_t{t}.csv"))).unwrap();
        assert_eq!(heat.lines().count(), 1 + 6);
        assert_eq!(heat.lines().next().unwrap().split(',').count(), 3 + 10);
    }

    for s in &report.subjects {
        for (ti, &t) in config.target_sizes.iter().enumerate() {
            let f = SubjectFeatureSet::read_json(open(
                &out.join(format!("features/{}_t{t}.json", s.id)),
            ))
            .unwrap();
            assert_eq!(f, s.features(ti));
        }
        for h in &s.hemispheres {
            let stem = format!("{}_{}", s.id, h.hemisphere);
            let g = read_histogram_csv(open(&out.join(format!("histograms/{stem}_global.csv"))))
                .unwrap();
            assert_eq!(g, vec![h.global.clone()]);
            assert!(out.join(format!("histograms/{stem}_global.svg")).is_file());
            for tr in &h.targets {
                let t = tr.target_size;
                let local = read_histogram_csv(open(
                    &out.join(format!("histograms/{stem}_t{t}_local.csv")),
                ))
                .unwrap();
                assert_eq!(local, tr.local);
                let cmp = read_comparison_csv(open(
                    &out.join(format!("histograms/{stem}_t{t}_comparison.csv")),
                ))
                .unwrap();
                let n = tr.parcellation.n_parcels as f64;
                for (row, &count) in cmp.iter().zip(&h.global.counts) {
                    assert_eq!(row.count, count);
                    assert!(
                        (row.global_div_n - count as f64 / n).abs()
                            <= 1e-5 * row.global_div_n.max(1.0)
                    );
                }
                let p =
                    Parcellation::read_json(open(&out.join(format!("parcels/{stem}_t{t}.json"))))
                        .unwrap();
                assert_eq!(p, tr.parcellation);
            }
        }
    }
    let manifest: serde_json::Value =
        serde_json::from_reader(open(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["config"]["seed"], 42);
    assert_eq!(manifest["files"].as_array().unwrap().len(), files.len() - 1);

    // identical config, fresh directory: byte-identical reports
    let again = dir.path().join("again");
    emit_report(&run_pipeline(&config).unwrap(), &again).unwrap();
    for f in files
        .iter()
        .filter(|f| f.extension().is_some_and(|e| e == "csv"))
    {
        assert_eq!(
            fs::read(out.join(f)).unwrap(),
            fs::read(again.join(f)).unwrap(),
            "{}",
            f.display()
        );
    }
}

#[test]
fn graph_formats_round_trip_on_a_phantom() {
    let mask = generate_folded_sheet(&small()).unwrap();
    let g = build_voxel_graph(&mask, Connectivity::Eighteen);
    assert_eq!(read_grf(&write_grf(&g)).unwrap(), g);
    assert_eq!(read_graph_json(&write_graph_json(&g).unwrap()).unwrap(), g);
}

#[test]
fn folded_phantom_parcels_stay_within_soft_balance_bound() {
    let params = PhantomParams {
        dims: [56, 56, 16],
        thickness: 3,
        amplitude: 3.0,
        ..PhantomParams::default()
    };
    let mask = generate_folded_sheet(&params).unwrap();
    assert!(mask.len() >= 10_000);
    let g = build_voxel_graph(&mask, Connectivity::TwentySix);
    let p = parcellate(&g, 1000, 42).unwrap();
    let mean = g.n_vertices() as f64 / p.n_parcels as f64;
    assert!(
        p.sizes
            .iter()
            .all(|&s| s as f64 >= 0.5 * mean && s as f64 <= 2.0 * mean),
        "sizes {:?}, mean {mean}",
        p.sizes
    );
}
