//! Rank-sum comparisons of spectral band features between subjects and
//! between classes.

mod ranksum;
mod tables;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{BandSpec, SpectralBandHistogram};

pub use ranksum::{
    ranksum_test, ranksum_test_with, MethodChoice, RankSumResult, TestMethod, EXACT_MAX_TOTAL,
};
pub use tables::{
    read_pairwise_csv, read_table1_csv, read_table2_csv, round_percent, write_pairwise_csv,
    write_table1_csv, write_table2_csv, PairwiseRow, Table1Row, Table2Row,
};

/// Band histograms of one hemisphere: one per local graph plus the global one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HemisphereFeatures {
    pub hemisphere: String,
    pub local: Vec<SpectralBandHistogram>,
    pub global: SpectralBandHistogram,
}

/// Features of one subject at one parcel size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectFeatureSet {
    pub subject_id: String,
    /// Sex or class label; subjects with different labels form
    /// opposite-class pairs.
    pub class: String,
    pub hemispheres: Vec<HemisphereFeatures>,
}

impl SubjectFeatureSet {
    /// The band layout shared by every histogram, or an error.
    pub fn band_spec(&self) -> Result<BandSpec> {
        let first = self.hemispheres.first().ok_or_else(|| {
            Error::Stats(format!("subject {} has no hemispheres", self.subject_id))
        })?;
        let spec = first.global.spec;
        for h in &self.hemispheres {
            if h.local.is_empty() {
                return Err(Error::Stats(format!(
                    "subject {} {} has no local graphs",
                    self.subject_id, h.hemisphere
                )));
            }
            if h.local
                .iter()
                .chain([&h.global])
                .any(|x| x.spec != spec || x.counts.len() != spec.n_bands)
            {
                return Err(Error::Stats(format!(
                    "subject {} mixes band layouts",
                    self.subject_id
                )));
            }
        }
        Ok(spec)
    }

    /// Counts at `band` over every local graph of both hemispheres.
    pub fn local_sample(&self, band: usize) -> Vec<f64> {
        self.hemispheres
            .iter()
            .flat_map(|h| h.local.iter().map(move |x| x.counts[band] as f64))
            .collect()
    }

    pub fn write_json<W: std::io::Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn read_json<R: std::io::Read>(r: R) -> Result<Self> {
        let s: Self = serde_json::from_reader(r)?;
        s.band_spec()?;
        Ok(s)
    }
}

fn common_spec(cohort: &[SubjectFeatureSet]) -> Result<BandSpec> {
    let mut spec = None;
    for s in cohort {
        let this = s.band_spec()?;
        match spec {
            None => spec = Some(this),
            Some(prev) if prev != this => {
                return Err(Error::Stats("subjects use different band layouts".into()))
            }
            _ => {}
        }
    }
    spec.ok_or_else(|| Error::Stats("empty cohort".into()))
}

/// Same-class or opposite-class subject pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PairClass {
    #[serde(rename = "OS")]
    Opposite,
    #[serde(rename = "SS")]
    Same,
}

impl PairClass {
    pub fn label(self) -> &'static str {
        match self {
            PairClass::Opposite => "OS",
            PairClass::Same => "SS",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "OS" => Ok(PairClass::Opposite),
            "SS" => Ok(PairClass::Same),
            _ => Err(Error::Parse(format!("unknown pair class {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub a: usize,
    pub b: usize,
    pub class: PairClass,
    pub p: f64,
}

/// Rank-sum p-values between every pair of subjects at one band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestMatrix {
    pub subjects: Vec<String>,
    pub band: usize,
    /// Pairs `a < b`, in lexicographic order.
    pub pairs: Vec<PairTest>,
}

impl TestMatrix {
    /// p-value of the pair, in either order; `None` on the diagonal.
    pub fn p(&self, a: usize, b: usize) -> Option<f64> {
        let n = self.subjects.len();
        if a == b || a >= n || b >= n {
            return None;
        }
        let (a, b) = (a.min(b), a.max(b));
        // row-major index into the strict upper triangle
        let idx = a * (2 * n - a - 1) / 2 + (b - a - 1);
        Some(self.pairs[idx].p)
    }

    pub fn count(&self, class: PairClass) -> usize {
        self.pairs.iter().filter(|t| t.class == class).count()
    }
}

pub fn pairwise_test_matrix(cohort: &[SubjectFeatureSet], band: usize) -> Result<TestMatrix> {
    if cohort.len() < 2 {
        return Err(Error::Stats(
            "pairwise tests need at least two subjects".into(),
        ));
    }
    let spec = common_spec(cohort)?;
    if band >= spec.n_bands {
        return Err(Error::IndexOutOfRange {
            index: band,
            len: spec.n_bands,
        });
    }
    let samples: Vec<Vec<f64>> = cohort.iter().map(|s| s.local_sample(band)).collect();
    let n = cohort.len();
    let index: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .collect();
    let pairs = index
        .into_par_iter()
        .map(|(a, b)| {
            let r = ranksum_test(&samples[a], &samples[b])?;
            let class = if cohort[a].class == cohort[b].class {
                PairClass::Same
            } else {
                PairClass::Opposite
            };
            Ok(PairTest {
                a,
                b,
                class,
                p: r.p_two_sided,
            })
        })
        .collect::<Result<_>>()?;
    Ok(TestMatrix {
        subjects: cohort.iter().map(|s| s.subject_id.clone()).collect(),
        band,
        pairs,
    })
}

/// Percentage of tests with `p < alpha`, per pair class (unrounded).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificantFraction {
    pub opposite: f64,
    pub same: f64,
}

pub fn significant_fraction(matrix: &TestMatrix, alpha: f64) -> Result<SignificantFraction> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} outside (0, 1)"
        )));
    }
    let pct = |class: PairClass| {
        let tests: Vec<f64> = matrix
            .pairs
            .iter()
            .filter(|t| t.class == class)
            .map(|t| t.p)
            .collect();
        if tests.is_empty() {
            return Err(Error::Stats(format!("no {} pairs", class.label())));
        }
        Ok(100.0 * tests.iter().filter(|&&p| p < alpha).count() as f64 / tests.len() as f64)
    };
    Ok(SignificantFraction {
        opposite: pct(PairClass::Opposite)?,
        same: pct(PairClass::Same)?,
    })
}

/// Per-band class comparison of hemisphere-mean local features and of global
/// features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTestResult {
    /// The two class labels, sorted; the first is the first sample.
    pub classes: [String; 2],
    pub local: Vec<RankSumResult>,
    pub global: Vec<RankSumResult>,
}

pub fn group_mean_test(cohort: &[SubjectFeatureSet]) -> Result<GroupTestResult> {
    let spec = common_spec(cohort)?;
    let mut by_class: BTreeMap<&str, Vec<&SubjectFeatureSet>> = BTreeMap::new();
    for s in cohort {
        by_class.entry(&s.class).or_default().push(s);
    }
    if by_class.len() != 2 {
        return Err(Error::Stats(format!(
            "group test needs exactly two classes, found {}",
            by_class.len()
        )));
    }
    let groups: Vec<(&str, Vec<&SubjectFeatureSet>)> = by_class.into_iter().collect();

    let pooled = |members: &[&SubjectFeatureSet], band: usize, global: bool| -> Vec<f64> {
        members
            .iter()
            .flat_map(|s| s.hemispheres.iter())
            .map(|h| {
                if global {
                    h.global.counts[band] as f64
                } else {
                    h.local.iter().map(|x| x.counts[band] as f64).sum::<f64>()
                        / h.local.len() as f64
                }
            })
            .collect()
    };
    let mut local = Vec::with_capacity(spec.n_bands);
    let mut global = Vec::with_capacity(spec.n_bands);
    for band in 0..spec.n_bands {
        for (out, use_global) in [(&mut local, false), (&mut global, true)] {
            let x = pooled(&groups[0].1, band, use_global);
            let y = pooled(&groups[1].1, band, use_global);
            if x.len() < 2 || y.len() < 2 {
                return Err(Error::Stats(
                    "each class needs at least two pooled values".into(),
                ));
            }
            out.push(ranksum_test(&x, &y)?);
        }
    }
    Ok(GroupTestResult {
        classes: [groups[0].0.to_string(), groups[1].0.to_string()],
        local,
        global,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(id: &str, counts: Vec<usize>) -> SpectralBandHistogram {
        let spec = BandSpec::new(0.0, 0.1, counts.len()).unwrap();
        SpectralBandHistogram {
            graph_id: id.into(),
            spec,
            counts,
        }
    }

    fn subject(id: &str, class: &str, locals: &[usize], global: usize) -> SubjectFeatureSet {
        let hemi = |h: &str| HemisphereFeatures {
            hemisphere: h.into(),
            local: locals.iter().map(|&c| hist("x", vec![c, 1])).collect(),
            global: hist("g", vec![global, 1]),
        };
        SubjectFeatureSet {
            subject_id: id.into(),
            class: class.into(),
            hemispheres: vec![hemi("lh"), hemi("rh")],
        }
    }

    #[test]
    fn identical_subjects_give_one() {
        let c = vec![
            subject("a", "F", &[1, 2, 3], 5),
            subject("b", "M", &[3, 2, 1], 5),
        ];
        let m = pairwise_test_matrix(&c, 0).unwrap();
        assert_eq!(m.p(0, 1), Some(1.0));
        assert_eq!(m.p(1, 0), Some(1.0));
        assert_eq!(m.p(0, 0), None);
        assert!(pairwise_test_matrix(&c, 2).is_err());
    }

    #[test]
    fn pair_counts_for_fifteen_and_fifteen() {
        let cohort: Vec<SubjectFeatureSet> = (0..30)
            .map(|i| {
                subject(
                    &format!("s{i}"),
                    if i < 15 { "F" } else { "M" },
                    &[i, i + 1],
                    0,
                )
            })
            .collect();
        let m = pairwise_test_matrix(&cohort, 0).unwrap();
        assert_eq!(m.count(PairClass::Opposite), 225);
        assert_eq!(m.count(PairClass::Same), 210);
        for a in 0..30 {
            for b in 0..30 {
                if a != b {
                    let t = m
                        .pairs
                        .iter()
                        .find(|t| t.a == a.min(b) && t.b == a.max(b))
                        .unwrap();
                    assert_eq!(m.p(a, b), Some(t.p));
                }
            }
        }
    }

    #[test]
    fn separated_subjects() {
        let a = subject("a", "F", &[10; 21], 0);
        let b = subject("b", "M", &[20; 21], 0);
        let m = pairwise_test_matrix(&[a, b], 0).unwrap();
        assert!(m.pairs[0].p < 1e-10);
    }

    #[test]
    fn fractions() {
        let mk = |ps: &[(PairClass, f64)]| TestMatrix {
            subjects: vec![],
            band: 0,
            pairs: ps
                .iter()
                .map(|&(class, p)| PairTest {
                    a: 0,
                    b: 1,
                    class,
                    p,
                })
                .collect(),
        };
        use PairClass::*;
        let m = mk(&[
            (Opposite, 0.01),
            (Opposite, 0.2),
            (Opposite, 0.04),
            (Opposite, 0.5),
            (Same, 1.0),
        ]);
        let f = significant_fraction(&m, 0.05).unwrap();
        assert_eq!((f.opposite, f.same), (50.0, 0.0));
        let all_one = mk(&[(Opposite, 1.0), (Same, 1.0)]);
        assert_eq!(
            significant_fraction(&all_one, 0.05).unwrap(),
            SignificantFraction {
                opposite: 0.0,
                same: 0.0
            }
        );
        assert!(significant_fraction(&mk(&[(Opposite, 0.5)]), 0.05).is_err());
    }

    #[test]
    fn group_test_pools_two_values_per_subject() {
        let cohort: Vec<SubjectFeatureSet> = (0..30)
            .map(|i| {
                subject(
                    &format!("s{i}"),
                    if i < 15 { "F" } else { "M" },
                    &[i, 2 * i],
                    i,
                )
            })
            .collect();
        let r = group_mean_test(&cohort).unwrap();
        assert_eq!(r.classes, ["F".to_string(), "M".to_string()]);
        assert_eq!((r.local[0].n1, r.local[0].n2), (30, 30));
        assert_eq!(r.global.len(), 2);
    }

    #[test]
    fn group_test_identical_classes() {
        let cohort: Vec<SubjectFeatureSet> = (0..6)
            .map(|i| {
                subject(
                    &format!("s{i}"),
                    if i % 2 == 0 { "A" } else { "B" },
                    &[3, 4],
                    7,
                )
            })
            .collect();
        let r = group_mean_test(&cohort).unwrap();
        assert!(r
            .local
            .iter()
            .chain(&r.global)
            .all(|t| t.p_two_sided == 1.0));
    }

    #[test]
    fn group_test_separation_hits_exact_minimum() {
        let cohort: Vec<SubjectFeatureSet> = (0..16)
            .map(|i| {
                let class = if i < 8 { "A" } else { "B" };
                let base = if i < 8 { 10 } else { 100 };
                subject(&format!("s{i}"), class, &[base + i, base + 2 * i], base)
            })
            .collect();
        let r = group_mean_test(&cohort).unwrap();
        assert_eq!(r.local[0].method, TestMethod::Exact);
        assert!((r.local[0].p_two_sided - 2.0 / 601_080_390.0).abs() < 1e-20);
    }

    #[test]
    fn group_test_needs_two_classes() {
        let cohort = vec![subject("a", "F", &[1], 1), subject("b", "F", &[2], 1)];
        assert!(group_mean_test(&cohort).is_err());
    }

    #[test]
    fn feature_set_json_round_trip() {
        let s = subject("a", "F", &[1, 5], 3);
        let mut buf = Vec::new();
        s.write_json(&mut buf).unwrap();
        assert_eq!(SubjectFeatureSet::read_json(&buf[..]).unwrap(), s);
    }
}
