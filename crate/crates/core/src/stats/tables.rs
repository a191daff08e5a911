//! CSV tables of test outcomes.

use std::io::{BufRead, Read, Write};

use super::{PairClass, TestMatrix};
use crate::error::{Error, Result};
use crate::textfmt::sci;

/// Integer percent, rounding halves away from zero.
pub fn round_percent(x: f64) -> i64 {
    x.round() as i64
}

/// Share of significant pair tests per band for one parcel size and pair
/// class, with the average over bands.
#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub graph_size: usize,
    pub class: PairClass,
    pub percents: Vec<i64>,
    pub average: i64,
}

impl Table1Row {
    /// Rounds per-band percentages; the average is taken before rounding.
    pub fn from_percents(graph_size: usize, class: PairClass, raw: &[f64]) -> Self {
        let mean = raw.iter().sum::<f64>() / raw.len().max(1) as f64;
        Self {
            graph_size,
            class,
            percents: raw.iter().map(|&x| round_percent(x)).collect(),
            average: round_percent(mean),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table2Row {
    /// 1-based band index.
    pub band: usize,
    /// `local:<size>` or `global`.
    pub feature_source: String,
    pub p_value: f64,
}

fn io(e: std::io::Error) -> Error {
    Error::io("<csv>", e)
}

fn rows<R: BufRead>(r: R, header: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line.map_err(io)?;
        if k == 0 {
            if line.trim() != header {
                return Err(Error::Parse(format!(
                    "expected CSV header {header:?}, got {line:?}"
                )));
            }
            continue;
        }
        if !line.trim().is_empty() {
            out.push((k + 1, line.split(',').map(str::to_string).collect()));
        }
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(f: &str, line: usize) -> Result<T> {
    f.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("CSV line {line}: bad field {f:?}")))
}

pub fn write_table1_csv<W: Write>(mut w: W, rows: &[Table1Row]) -> Result<()> {
    let n = rows.first().map_or(0, |r| r.percents.len());
    let bands: Vec<String> = (1..=n).map(|k| format!("band_{k}")).collect();
    writeln!(w, "graph_size,class,{},average", bands.join(",")).map_err(io)?;
    for r in rows {
        if r.percents.len() != n {
            return Err(Error::InvalidArgument(
                "table rows differ in band count".into(),
            ));
        }
        let cells: Vec<String> = r.percents.iter().map(i64::to_string).collect();
        writeln!(
            w,
            "{},{},{},{}",
            r.graph_size,
            r.class.label(),
            cells.join(","),
            r.average
        )
        .map_err(io)?;
    }
    Ok(())
}

pub fn read_table1_csv<R: BufRead>(mut r: R) -> Result<Vec<Table1Row>> {
    let mut header = String::new();
    r.read_line(&mut header).map_err(io)?;
    let header = header.trim().to_string();
    let cols: Vec<&str> = header.split(',').collect();
    let n = cols.len().saturating_sub(3);
    let ok = cols.len() >= 3
        && cols[0] == "graph_size"
        && cols[1] == "class"
        && cols[cols.len() - 1] == "average"
        && (0..n).all(|k| cols[2 + k] == format!("band_{}", k + 1));
    if !ok {
        return Err(Error::Parse(format!("not a Table-1 header: {header:?}")));
    }
    let body = rows(
        std::io::Cursor::new(format!("{header}\n")).chain(r),
        &header,
    )?;
    body.into_iter()
        .map(|(line, f)| {
            if f.len() != n + 3 {
                return Err(Error::Parse(format!(
                    "CSV line {line}: expected {} fields",
                    n + 3
                )));
            }
            Ok(Table1Row {
                graph_size: field(&f[0], line)?,
                class: PairClass::parse(f[1].trim())?,
                percents: f[2..2 + n]
                    .iter()
                    .map(|x| field(x, line))
                    .collect::<Result<_>>()?,
                average: field(&f[n + 2], line)?,
            })
        })
        .collect()
}

pub fn write_table2_csv<W: Write>(mut w: W, rows: &[Table2Row]) -> Result<()> {
    writeln!(w, "band,feature_source,p_value").map_err(io)?;
    for r in rows {
        writeln!(w, "{},{},{}", r.band, r.feature_source, sci(r.p_value)).map_err(io)?;
    }
    Ok(())
}

pub fn read_table2_csv<R: BufRead>(r: R) -> Result<Vec<Table2Row>> {
    rows(r, "band,feature_source,p_value")?
        .into_iter()
        .map(|(line, f)| {
            if f.len() != 3 {
                return Err(Error::Parse(format!("CSV line {line}: expected 3 fields")));
            }
            Ok(Table2Row {
                band: field(&f[0], line)?,
                feature_source: f[1].trim().to_string(),
                p_value: field(&f[2], line)?,
            })
        })
        .collect()
}

/// One row of the full pairwise table; `band` is 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseRow {
    pub subject_a: String,
    pub subject_b: String,
    pub class: PairClass,
    pub band: usize,
    pub p: f64,
}

pub fn write_pairwise_csv<'a, W: Write>(
    mut w: W,
    matrices: impl IntoIterator<Item = &'a TestMatrix>,
) -> Result<()> {
    writeln!(w, "subject_a,subject_b,class,band,p").map_err(io)?;
    for m in matrices {
        for t in &m.pairs {
            writeln!(
                w,
                "{},{},{},{},{}",
                m.subjects[t.a],
                m.subjects[t.b],
                t.class.label(),
                m.band + 1,
                sci(t.p)
            )
            .map_err(io)?;
        }
    }
    Ok(())
}

pub fn read_pairwise_csv<R: BufRead>(r: R) -> Result<Vec<PairwiseRow>> {
    rows(r, "subject_a,subject_b,class,band,p")?
        .into_iter()
        .map(|(line, f)| {
            if f.len() != 5 {
                return Err(Error::Parse(format!("CSV line {line}: expected 5 fields")));
            }
            Ok(PairwiseRow {
                subject_a: f[0].clone(),
                subject_b: f[1].clone(),
                class: PairClass::parse(f[2].trim())?,
                band: field(&f[3], line)?,
                p: field(&f[4], line)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::PairTest;

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(round_percent(2.5), 3);
        assert_eq!(round_percent(3.5), 4);
        assert_eq!(round_percent(2.4999), 2);
        assert_eq!(round_percent(0.0), 0);
    }

    #[test]
    fn table1_round_trip() {
        let rows = vec![
            Table1Row::from_percents(5000, PairClass::Opposite, &[50.0, 12.5, 33.3]),
            Table1Row::from_percents(5000, PairClass::Same, &[0.0, 2.5, 7.0]),
        ];
        assert_eq!(rows[0].percents, vec![50, 13, 33]);
        assert_eq!(rows[0].average, 32);
        let mut buf = Vec::new();
        write_table1_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text
            .starts_with("graph_size,class,band_1,band_2,band_3,average\n5000,OS,50,13,33,32\n"));
        assert_eq!(read_table1_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn table2_round_trip() {
        let rows = vec![
            Table2Row {
                band: 1,
                feature_source: "local:500".into(),
                p_value: 3.3287e-9,
            },
            Table2Row {
                band: 1,
                feature_source: "global".into(),
                p_value: 0.5,
            },
        ];
        let mut buf = Vec::new();
        write_table2_csv(&mut buf, &rows).unwrap();
        assert!(String::from_utf8_lossy(&buf).contains("1,local:500,3.32870e-9"));
        assert_eq!(read_table2_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn pairwise_round_trip() {
        let m = TestMatrix {
            subjects: vec!["A01".into(), "B01".into()],
            band: 2,
            pairs: vec![PairTest {
                a: 0,
                b: 1,
                class: PairClass::Opposite,
                p: 0.125,
            }],
        };
        let mut buf = Vec::new();
        write_pairwise_csv(&mut buf, [&m]).unwrap();
        let back = read_pairwise_csv(&buf[..]).unwrap();
        assert_eq!(
            back,
            vec![PairwiseRow {
                subject_a: "A01".into(),
                subject_b: "B01".into(),
                class: PairClass::Opposite,
                band: 3,
                p: 0.125
            }]
        );
    }
}
