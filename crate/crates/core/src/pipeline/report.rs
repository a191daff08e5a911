//! Report files: histogram CSVs and bar charts, p-value heat maps, the two
//! summary tables and a run manifest.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{PipelineConfig, PipelineReport};
use crate::error::{Error, Result};
use crate::spectral::{write_histogram_csv, SpectralBandHistogram};
use crate::stats::{write_pairwise_csv, write_table1_csv, write_table2_csv};
use crate::textfmt::{sci, sig6};

struct Writer<'a> {
    root: &'a Path,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn write(&mut self, rel: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
        let rel = rel.as_ref();
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.push(rel.to_path_buf());
        Ok(())
    }

    fn write_with(
        &mut self,
        rel: impl AsRef<Path>,
        f: impl FnOnce(&mut Vec<u8>) -> Result<()>,
    ) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(rel, &buf)
    }
}

/// Global histogram next to the per-parcel view of one hemisphere.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub graph_id: String,
    pub band_lo: f64,
    pub band_hi: f64,
    pub count: usize,
    /// Global count divided by the number of parcels.
    pub global_div_n: f64,
    /// Mean count over the local graphs.
    pub local_mean: f64,
}

const COMPARISON_HEADER: &str = "graph_id,band_lo,band_hi,count,global_div_n,local_mean";

fn write_comparison(
    w: &mut Vec<u8>,
    global: &SpectralBandHistogram,
    local: &[SpectralBandHistogram],
) -> Result<()> {
    let io = |e| Error::io("<comparison csv>", e);
    writeln!(w, "{COMPARISON_HEADER}").map_err(io)?;
    let b = global.spec.boundaries();
    let n = local.len().max(1) as f64;
    for (k, &count) in global.counts.iter().enumerate() {
        let mean = local.iter().map(|h| h.counts[k] as f64).sum::<f64>() / n;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            global.graph_id,
            sig6(b[k]),
            sig6(b[k + 1]),
            count,
            sig6(count as f64 / n),
            sig6(mean)
        )
        .map_err(io)?;
    }
    Ok(())
}

pub fn read_comparison_csv<R: BufRead>(r: R) -> Result<Vec<ComparisonRow>> {
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<comparison csv>", e))?;
        if k == 0 {
            if line.trim() != COMPARISON_HEADER {
                return Err(Error::Parse("missing comparison CSV header".into()));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Parse(format!("comparison CSV line {}: {line:?}", k + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad());
        }
        out.push(ComparisonRow {
            graph_id: f[0].to_string(),
            band_lo: f[1].parse().map_err(|_| bad())?,
            band_hi: f[2].parse().map_err(|_| bad())?,
            count: f[3].parse().map_err(|_| bad())?,
            global_div_n: f[4].parse().map_err(|_| bad())?,
            local_mean: f[5].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Bar chart of one or two series over the bands of `labels`.
fn bar_chart_svg(title: &str, labels: &[String], series: &[(&str, Vec<f64>)]) -> String {
    let (w, h, left, bottom, top) = (640.0, 360.0, 60.0, 60.0, 40.0);
    let plot_w = w - left - 20.0;
    let plot_h = h - bottom - top;
    let max = series
        .iter()
        .flat_map(|s| s.1.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let colors = ["#222222", "#999999"];
    let slot = plot_w / labels.len().max(1) as f64;
    let bar = slot * 0.8 / series.len().max(1) as f64;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        w / 2.0,
        escape(title)
    );
    let y0 = top + plot_h;
    svg += &format!(
        "<line x1=\"{left}\" y1=\"{y0}\" x2=\"{}\" y2=\"{y0}\" stroke=\"black\"/>\n",
        left + plot_w
    );
    svg +=
        &format!("<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{y0}\" stroke=\"black\"/>\n");
    svg += &format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{}</text>\n",
        left - 4.0,
        top + 4.0,
        sig6(max)
    );
    for (k, label) in labels.iter().enumerate() {
        let x = left + slot * (k as f64 + 0.1);
        for (s, (_, values)) in series.iter().enumerate() {
            let bh = values[k] / max * plot_h;
            svg += &format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n",
                sig6(x + bar * s as f64),
                sig6(y0 - bh),
                sig6(bar),
                sig6(bh),
                colors[s % colors.len()]
            );
        }
        svg += &format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"9\" text-anchor=\"middle\">{}</text>\n",
            sig6(left + slot * (k as f64 + 0.5)),
            y0 + 14.0,
            escape(label)
        );
    }
    for (s, (name, _)) in series.iter().enumerate() {
        let y = h - 16.0 - 14.0 * (series.len() - 1 - s) as f64;
        svg += &format!(
            "<rect x=\"{left}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
            y - 9.0,
            colors[s % colors.len()],
            left + 14.0,
            escape(name)
        );
    }
    svg += "</svg>\n";
    svg
}

fn band_labels(h: &SpectralBandHistogram) -> Vec<String> {
    let b = h.spec.boundaries();
    (0..h.spec.n_bands)
        .map(|k| format!("{}-{}", sig6(b[k]), sig6(b[k + 1])))
        .collect()
}

/// Bar chart of one histogram.
pub fn histogram_svg(h: &SpectralBandHistogram) -> String {
    let counts = h.counts.iter().map(|&c| c as f64).collect();
    bar_chart_svg(
        &h.graph_id,
        &band_labels(h),
        &[("eigenvalue count", counts)],
    )
}

#[derive(Serialize)]
struct ManifestHemisphere<'a> {
    hemisphere: &'a str,
    mask_path: &'a Path,
    seed: u64,
    n_vertices: usize,
    n_edges: usize,
    pruned_edges: usize,
    components: usize,
    parcels: Vec<(usize, usize)>,
}

#[derive(Serialize)]
struct ManifestSubject<'a> {
    id: &'a str,
    class: &'a str,
    hemispheres: Vec<ManifestHemisphere<'a>>,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a PipelineConfig,
    subjects: Vec<ManifestSubject<'a>>,
    aborted: &'a [(String, String)],
    files: Vec<String>,
}

/// Writes every report file under `out_dir`; returns their relative paths
/// (the run manifest last).
pub fn emit_report(report: &PipelineReport, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let root = out_dir.as_ref();
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut w = Writer {
        root,
        files: Vec::new(),
    };

    w.write_with("table1.csv", |b| write_table1_csv(b, &report.table1))?;
    w.write_with("table2.csv", |b| write_table2_csv(b, &report.table2))?;

    for ts in &report.targets {
        let t = ts.target_size;
        w.write_with(format!("pairwise/pairwise_t{t}.csv"), |b| {
            write_pairwise_csv(b, &ts.matrices)
        })?;
        w.write_with(format!("heatmap/heatmap_t{t}.csv"), |b| {
            let io = |e| Error::io("<heatmap csv>", e);
            let bands: Vec<String> = (1..=ts.matrices.len())
                .map(|k| format!("band_{k}"))
                .collect();
            writeln!(b, "subject_a,subject_b,class,{}", bands.join(",")).map_err(io)?;
            let first = &ts.matrices[0];
            for (i, pair) in first.pairs.iter().enumerate() {
                let ps: Vec<String> = ts.matrices.iter().map(|m| sci(m.pairs[i].p)).collect();
                writeln!(
                    b,
                    "{},{},{},{}",
                    first.subjects[pair.a],
                    first.subjects[pair.b],
                    pair.class.label(),
                    ps.join(",")
                )
                .map_err(io)?;
            }
            Ok(())
        })?;
    }

    let mut parcel_rows = vec![String::new(); report.config.target_sizes.len()];
    for s in &report.subjects {
        for h in &s.hemispheres {
            let stem = format!("{}_{}", s.id, h.hemisphere);
            w.write_with(format!("histograms/{stem}_global.csv"), |b| {
                write_histogram_csv(b, [&h.global])
            })?;
            w.write(
                format!("histograms/{stem}_global.svg"),
                histogram_svg(&h.global).as_bytes(),
            )?;
            for (ti, tr) in h.targets.iter().enumerate() {
                let t = tr.target_size;
                w.write_with(format!("histograms/{stem}_t{t}_local.csv"), |b| {
                    write_histogram_csv(b, &tr.local)
                })?;
                w.write_with(format!("histograms/{stem}_t{t}_comparison.csv"), |b| {
                    write_comparison(b, &h.global, &tr.local)
                })?;
                let n = tr.local.len().max(1) as f64;
                let mean: Vec<f64> = (0..h.global.counts.len())
                    .map(|k| tr.local.iter().map(|x| x.counts[k] as f64).sum::<f64>() / n)
                    .collect();
                let div: Vec<f64> = h.global.counts.iter().map(|&c| c as f64 / n).collect();
                let title = format!("{stem}, {} parcels of target size {t}", tr.local.len());
                let svg = bar_chart_svg(
                    &title,
                    &band_labels(&h.global),
                    &[("global / N", div), ("local mean", mean)],
                );
                w.write(format!("histograms/{stem}_t{t}_local.svg"), svg.as_bytes())?;
                w.write_with(format!("parcels/{stem}_t{t}.json"), |b| {
                    tr.parcellation.write_json(b)
                })?;
                for (p, (&size, &comps)) in tr
                    .parcellation
                    .sizes
                    .iter()
                    .zip(&tr.parcel_components)
                    .enumerate()
                {
                    parcel_rows[ti] += &format!("{},{},{p},{size},{comps}\n", s.id, h.hemisphere);
                }
            }
        }
        for (ti, &t) in report.config.target_sizes.iter().enumerate() {
            w.write_with(format!("features/{}_t{t}.json", s.id), |b| {
                s.features(ti).write_json(b)
            })?;
        }
    }
    for (ti, &t) in report.config.target_sizes.iter().enumerate() {
        let text = format!(
            "subject,hemisphere,parcel,size,components\n{}",
            parcel_rows[ti]
        );
        w.write(format!("parcels/parcels_t{t}.csv"), text.as_bytes())?;
    }

    let manifest = RunManifest {
        tool: "cortigraph",
        version: env!("CARGO_PKG_VERSION"),
        config: &report.config,
        subjects: report
            .subjects
            .iter()
            .map(|s| ManifestSubject {
                id: &s.id,
                class: &s.class,
                hemispheres: s
                    .hemispheres
                    .iter()
                    .map(|h| ManifestHemisphere {
                        hemisphere: &h.hemisphere,
                        mask_path: &h.mask_path,
                        seed: h.seed,
                        n_vertices: h.n_vertices,
                        n_edges: h.n_edges,
                        pruned_edges: h.pruned_edges,
                        components: h.components,
                        parcels: h
                            .targets
                            .iter()
                            .map(|t| (t.target_size, t.parcellation.n_parcels))
                            .collect(),
                    })
                    .collect(),
            })
            .collect(),
        aborted: &report.aborted,
        files: w.files.iter().map(|p| p.display().to_string()).collect(),
    };
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    w.write("manifest.json", text.as_bytes())?;
    Ok(w.files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::BandSpec;

    #[test]
    fn comparison_round_trip() {
        let g = SpectralBandHistogram {
            graph_id: "A01_lh".into(),
            spec: BandSpec::new(0.0, 0.1, 2).unwrap(),
            counts: vec![84, 6],
        };
        let l: Vec<SpectralBandHistogram> = (0..42)
            .map(|i| SpectralBandHistogram {
                counts: vec![i % 3, 1],
                ..g.clone()
            })
            .collect();
        let mut buf = Vec::new();
        write_comparison(&mut buf, &g, &l).unwrap();
        let rows = read_comparison_csv(&buf[..]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].global_div_n, 2.0);
        assert_eq!(rows[0].local_mean, 1.0);
        assert_eq!(rows[1].band_hi, 0.1);
    }

    #[test]
    fn svg_is_well_formed() {
        let svg = bar_chart_svg(
            "a<b",
            &["0-0.01".into(), "0.01-0.02".into()],
            &[("x", vec![1.0, 3.0])],
        );
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&lt;b"));
        assert_eq!(svg.matches("<rect").count(), 1 + 2 + 1);
    }
}
