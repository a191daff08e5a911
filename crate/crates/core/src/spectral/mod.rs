//! Spectra of normalized Laplacians: a dense reference, an iterative solver
//! for the low end, and band-wise eigenvalue counting by inertia.

mod dense;
mod jacobi;
mod krylov;
pub mod ldlt;
mod ordering;

use std::io::{BufRead, Read, Write};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseSymLaplacian;
use crate::textfmt::sig6;
use ldlt::LdltAnalysis;

pub use dense::{dense_spectrum, dense_spectrum_capped, DENSE_CAP};
pub use krylov::{smallest_eigenpairs, smallest_eigenpairs_with, SolverOptions};
pub use ordering::nested_dissection;

/// Added to a shift whose factorization hits a near-singular pivot.
pub const SHIFT_PERTURBATION: f64 = 1e-8;
const MAX_SHIFT_RETRIES: usize = 8;

/// Eigenvalues (ascending) with unit eigenvectors and their residuals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenpairSet {
    n: usize,
    eigenvalues: Vec<f64>,
    residual_norms: Vec<f64>,
    tolerance: f64,
    #[serde(skip)]
    vectors: Vec<f64>,
}

impl EigenpairSet {
    /// Builds the set from column-major eigenvectors, measuring residuals
    /// against `lap`. `tolerance` is raised to the worst residual if needed.
    pub(crate) fn from_columns(
        lap: &SparseSymLaplacian,
        eigenvalues: Vec<f64>,
        vectors: Vec<f64>,
        tolerance: f64,
    ) -> Self {
        let n = lap.n();
        debug_assert_eq!(vectors.len(), n * eigenvalues.len());
        let residual_norms: Vec<f64> = eigenvalues
            .par_iter()
            .enumerate()
            .map(|(j, &lambda)| {
                let u = &vectors[j * n..(j + 1) * n];
                let mut lu = vec![0.0; n];
                lap.mul_vec(u, &mut lu);
                lu.iter()
                    .zip(u)
                    .map(|(a, b)| (a - lambda * b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let tolerance = residual_norms.iter().copied().fold(tolerance, f64::max);
        Self {
            n,
            eigenvalues,
            residual_norms,
            tolerance,
            vectors,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn residual_norms(&self) -> &[f64] {
        &self.residual_norms
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn eigenvector(&self, j: usize) -> &[f64] {
        &self.vectors[j * self.n..(j + 1) * self.n]
    }

    /// All eigenvectors, column-major `n x k`. Empty after a JSON round trip.
    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        Ok(serde_json::from_reader(r)?)
    }

    /// Eigenvectors as raw little-endian f64, column-major.
    pub fn write_eigenvectors<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for x in &self.vectors {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    /// Attaches eigenvectors written by [`write_eigenvectors`](Self::write_eigenvectors).
    pub fn read_eigenvectors<R: Read>(&mut self, mut r: R) -> Result<()> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::Parse(e.to_string()))?;
        if bytes.len() != 8 * self.n * self.k() {
            return Err(Error::Parse(format!(
                "eigenvector file holds {} bytes, expected {}",
                bytes.len(),
                8 * self.n * self.k()
            )));
        }
        self.vectors = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(())
    }
}

/// Counts eigenvalues below arbitrary shifts, reusing one symbolic analysis.
#[derive(Debug, Clone)]
pub struct InertiaCounter {
    analysis: LdltAnalysis,
}

impl InertiaCounter {
    pub fn new(lap: &SparseSymLaplacian) -> Self {
        Self {
            analysis: LdltAnalysis::new(lap),
        }
    }

    pub fn from_analysis(analysis: LdltAnalysis) -> Self {
        Self { analysis }
    }

    pub fn analysis(&self) -> &LdltAnalysis {
        &self.analysis
    }

    /// `|{lambda < sigma}|`. A near-singular pivot moves the shift up by
    /// [`SHIFT_PERTURBATION`] and retries.
    pub fn count_below(&self, sigma: f64) -> Result<usize> {
        let n = self.analysis.n();
        if sigma <= 0.0 {
            return Ok(0);
        }
        if sigma > 2.0 {
            return Ok(n);
        }
        let mut shift = sigma;
        let mut last = None;
        for _ in 0..=MAX_SHIFT_RETRIES {
            match self.analysis.inertia(shift) {
                Ok(count) => return Ok(count),
                Err(e @ Error::FactorizationBreakdown { .. }) => {
                    warn!(
                        "near-singular pivot at shift {shift:e}; retrying at {:e}",
                        shift + SHIFT_PERTURBATION
                    );
                    shift += SHIFT_PERTURBATION;
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap())
    }
}

/// Number of eigenvalues of `lap` strictly below `sigma`.
pub fn count_eigenvalues_below(lap: &SparseSymLaplacian, sigma: f64) -> Result<usize> {
    InertiaCounter::new(lap).count_below(sigma)
}

/// Equal-width bands over `[range_lo, range_hi]`; each band is half-open
/// except the last, which includes `range_hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBandSpec")]
pub struct BandSpec {
    pub range_lo: f64,
    pub range_hi: f64,
    pub n_bands: usize,
}

#[derive(Deserialize)]
struct RawBandSpec {
    range_lo: f64,
    range_hi: f64,
    n_bands: usize,
}

impl TryFrom<RawBandSpec> for BandSpec {
    type Error = Error;
    fn try_from(r: RawBandSpec) -> Result<Self> {
        BandSpec::new(r.range_lo, r.range_hi, r.n_bands)
    }
}

impl Default for BandSpec {
    fn default() -> Self {
        Self {
            range_lo: 0.0,
            range_hi: 0.1,
            n_bands: 10,
        }
    }
}

impl BandSpec {
    pub fn new(range_lo: f64, range_hi: f64, n_bands: usize) -> Result<Self> {
        if !(range_lo.is_finite() && range_hi.is_finite() && range_lo < range_hi) {
            return Err(Error::InvalidArgument(format!(
                "band range [{range_lo}, {range_hi}] is empty"
            )));
        }
        if n_bands == 0 {
            return Err(Error::InvalidArgument(
                "at least one band is required".into(),
            ));
        }
        Ok(Self {
            range_lo,
            range_hi,
            n_bands,
        })
    }

    /// `n_bands + 1` boundaries, `b_0 = range_lo`, `b_n = range_hi`.
    pub fn boundaries(&self) -> Vec<f64> {
        let w = self.range_hi - self.range_lo;
        (0..=self.n_bands)
            .map(|k| {
                if k == self.n_bands {
                    self.range_hi
                } else {
                    self.range_lo + w * k as f64 / self.n_bands as f64
                }
            })
            .collect()
    }
}

/// Eigenvalue counts per band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralBandHistogram {
    pub graph_id: String,
    pub spec: BandSpec,
    pub counts: Vec<usize>,
}

impl SpectralBandHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Removes `zero_eigenvalues` (the component count) from the band that
    /// contains 0, if any.
    pub fn exclude_zero(&mut self, zero_eigenvalues: usize) {
        let b = self.spec.boundaries();
        let last = self.spec.n_bands - 1;
        let holds_zero =
            |k: usize| b[k] <= 0.0 && (0.0 < b[k + 1] || (k == last && 0.0 <= b[k + 1]));
        if let Some(k) = (0..self.spec.n_bands).find(|&k| holds_zero(k)) {
            self.counts[k] = self.counts[k].saturating_sub(zero_eigenvalues);
        }
    }
}

/// Shift just above `hi`, so that counting below it includes `hi` itself.
fn closed_upper(hi: f64) -> f64 {
    hi + 1e-12 * hi.abs().max(1.0)
}

/// Band counts of the spectrum of `lap`, from inertia counts at the band
/// boundaries.
pub fn band_histogram(lap: &SparseSymLaplacian, spec: &BandSpec) -> Result<SpectralBandHistogram> {
    InertiaCounter::new(lap).histogram(spec)
}

impl InertiaCounter {
    pub fn histogram(&self, spec: &BandSpec) -> Result<SpectralBandHistogram> {
        let mut shifts = spec.boundaries();
        let last = shifts.len() - 1;
        shifts[last] = closed_upper(shifts[last]);
        let below: Vec<usize> = shifts
            .par_iter()
            .map(|&s| self.count_below(s))
            .collect::<Result<_>>()?;
        let counts = below
            .windows(2)
            .map(|w| w[1].saturating_sub(w[0]))
            .collect();
        Ok(SpectralBandHistogram {
            graph_id: String::new(),
            spec: *spec,
            counts,
        })
    }
}

/// Writes `graph_id,band_lo,band_hi,count` rows for every histogram.
pub fn write_histogram_csv<'a, W: Write>(
    mut w: W,
    hists: impl IntoIterator<Item = &'a SpectralBandHistogram>,
) -> Result<()> {
    let io = |e| Error::io("<histogram csv>", e);
    writeln!(w, "graph_id,band_lo,band_hi,count").map_err(io)?;
    for h in hists {
        if h.graph_id.contains([',', '\n', '\r']) {
            return Err(Error::InvalidArgument(format!(
                "graph id {:?} cannot be written to CSV",
                h.graph_id
            )));
        }
        let b = h.spec.boundaries();
        for (k, c) in h.counts.iter().enumerate() {
            writeln!(w, "{},{},{},{}", h.graph_id, sig6(b[k]), sig6(b[k + 1]), c).map_err(io)?;
        }
    }
    Ok(())
}

/// Reads histograms written by [`write_histogram_csv`]; consecutive rows
/// with the same id form one histogram.
pub fn read_histogram_csv<R: BufRead>(r: R) -> Result<Vec<SpectralBandHistogram>> {
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == "graph_id,band_lo,band_hi,count" => {}
        _ => return Err(Error::Parse("missing histogram CSV header".into())),
    }
    let mut out: Vec<(String, f64, f64, Vec<usize>)> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io("<histogram csv>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Parse(format!("histogram CSV line {}: {line:?}", lineno + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad());
        }
        let lo: f64 = f[1].parse().map_err(|_| bad())?;
        let hi: f64 = f[2].parse().map_err(|_| bad())?;
        let count: usize = f[3].parse().map_err(|_| bad())?;
        match out.last_mut() {
            Some(cur) if cur.0 == f[0] => {
                cur.2 = hi;
                cur.3.push(count);
            }
            _ => out.push((f[0].to_string(), lo, hi, vec![count])),
        }
    }
    out.into_iter()
        .map(|(graph_id, lo, hi, counts)| {
            let spec = BandSpec::new(lo, hi, counts.len())?;
            Ok(SpectralBandHistogram {
                graph_id,
                spec,
                counts,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_voxel_graph, normalized_laplacian, Connectivity};
    use crate::volume_io::VoxelMask;
    use proptest::prelude::*;

    fn lap_of(dims: [usize; 3], voxels: Vec<[u32; 3]>) -> SparseSymLaplacian {
        let mask = VoxelMask::new(dims, [1.0; 3], voxels).unwrap();
        normalized_laplacian(&build_voxel_graph(&mask, Connectivity::TwentySix))
    }

    fn k8() -> SparseSymLaplacian {
        lap_of(
            [2, 2, 2],
            (0..8u32).map(|i| [i & 1, (i >> 1) & 1, i >> 2]).collect(),
        )
    }

    #[test]
    fn k8_counts() {
        let lap = k8();
        assert_eq!(count_eigenvalues_below(&lap, 1.0).unwrap(), 1);
        assert_eq!(count_eigenvalues_below(&lap, 1.2).unwrap(), 8);
        assert_eq!(count_eigenvalues_below(&lap, 2.5).unwrap(), 8);
        let h = band_histogram(&lap, &BandSpec::default()).unwrap();
        assert_eq!(h.counts, vec![1, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn isolated_and_p2_histograms() {
        let iso = lap_of([20, 1, 1], (0..10u32).map(|x| [2 * x, 0, 0]).collect());
        let h = band_histogram(&iso, &BandSpec::default()).unwrap();
        assert_eq!(h.counts, vec![10, 0, 0, 0, 0, 0, 0, 0, 0, 0]);

        let p2 = lap_of([2, 1, 1], vec![[0, 0, 0], [1, 0, 0]]);
        let h = band_histogram(&p2, &BandSpec::default()).unwrap();
        assert_eq!(h.counts, vec![1, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn closed_last_band_includes_two() {
        let p2 = lap_of([2, 1, 1], vec![[0, 0, 0], [1, 0, 0]]);
        let h = band_histogram(&p2, &BandSpec::new(0.0, 2.0, 4).unwrap()).unwrap();
        assert_eq!(h.counts, vec![1, 0, 0, 1]);
    }

    #[test]
    fn exclude_zero_subtracts_components() {
        let iso = lap_of([20, 1, 1], (0..10u32).map(|x| [2 * x, 0, 0]).collect());
        let mut h = band_histogram(&iso, &BandSpec::default()).unwrap();
        h.exclude_zero(10);
        assert_eq!(h.total(), 0);
    }

    #[test]
    fn band_spec_validation() {
        assert!(BandSpec::new(0.1, 0.1, 3).is_err());
        assert!(BandSpec::new(0.0, 0.1, 0).is_err());
        let b = BandSpec::default().boundaries();
        assert_eq!(b.len(), 11);
        assert_eq!(b[10], 0.1);
        assert!(b.windows(2).all(|w| w[0] < w[1]));
        assert!(
            serde_json::from_str::<BandSpec>(r#"{"range_lo":1,"range_hi":0,"n_bands":2}"#).is_err()
        );
    }

    #[test]
    fn histogram_csv_round_trip() {
        let a = SpectralBandHistogram {
            graph_id: "s01_lh".into(),
            spec: BandSpec::default(),
            counts: (0..10).collect(),
        };
        let b = SpectralBandHistogram {
            graph_id: "s01_rh".into(),
            spec: BandSpec::new(0.0, 2.0, 3).unwrap(),
            counts: vec![4, 0, 9],
        };
        let mut buf = Vec::new();
        write_histogram_csv(&mut buf, [&a, &b]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("graph_id,band_lo,band_hi,count\ns01_lh,0,0.01,0\n"));
        let back = read_histogram_csv(&buf[..]).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn eigenpair_json_and_vectors() {
        let lap = k8();
        let s = dense_spectrum(&lap).unwrap();
        let mut json = Vec::new();
        s.write_json(&mut json).unwrap();
        let mut back = EigenpairSet::read_json(&json[..]).unwrap();
        assert_eq!(back.eigenvalues(), s.eigenvalues());
        let mut bin = Vec::new();
        s.write_eigenvectors(&mut bin).unwrap();
        back.read_eigenvectors(&bin[..]).unwrap();
        assert_eq!(back.vectors(), s.vectors());
        assert!(back.read_eigenvectors(&bin[..8]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn counts_are_monotone_in_shift(cells in proptest::collection::vec(any::<bool>(), 60), shifts in proptest::collection::vec(0.0f64..2.2, 6)) {
            let mut cells = cells;
            cells[0] = true;
            let mask = VoxelMask::from_dense([5, 4, 3], [1.0; 3], &cells).unwrap();
            let lap = normalized_laplacian(&build_voxel_graph(&mask, Connectivity::TwentySix));
            let counter = InertiaCounter::new(&lap);
            let mut shifts = shifts;
            shifts.sort_by(f64::total_cmp);
            let counts: Vec<usize> = shifts.iter().map(|&s| counter.count_below(s).unwrap()).collect();
            prop_assert!(counts.windows(2).all(|w| w[0] <= w[1]));
            let all = counter.histogram(&BandSpec::new(0.0, 2.0 + 1e-9, 1).unwrap()).unwrap();
            prop_assert_eq!(all.total(), lap.n());
        }
    }
}
