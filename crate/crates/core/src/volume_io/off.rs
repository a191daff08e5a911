//! Object File Format (OFF) triangle surfaces.
//!
//! Faces with more than three vertices are fan-triangulated.

use super::TriangleMesh;
use crate::error::{Error, Result};

/// Parses OFF text. Returns the mesh and the number of degenerate
/// triangles dropped.
pub fn read_off(text: &str) -> Result<(TriangleMesh, usize)> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);

    match tokens.next() {
        Some("OFF") => {}
        Some(t) if t.starts_with("OFF") => {
            return Err(Error::Parse(format!("unsupported OFF variant {t:?}")))
        }
        other => return Err(Error::Parse(format!("missing OFF header, found {other:?}"))),
    }
    let mut next = |what: &str| -> Result<&str> {
        tokens
            .next()
            .ok_or_else(|| Error::Parse(format!("unexpected end of file reading {what}")))
    };
    fn parse<T: std::str::FromStr>(t: &str, what: &str) -> Result<T> {
        t.parse()
            .map_err(|_| Error::Parse(format!("bad {what} {t:?}")))
    }

    let n_vertices: usize = parse(next("vertex count")?, "vertex count")?;
    let n_faces: usize = parse(next("face count")?, "face count")?;
    let _n_edges: usize = parse(next("edge count")?, "edge count")?;

    let mut vertices = Vec::with_capacity(n_vertices);
    for _ in 0..n_vertices {
        let mut p = [0.0; 3];
        for c in &mut p {
            *c = parse(next("vertex coordinate")?, "vertex coordinate")?;
        }
        vertices.push(p);
    }
    let mut triangles = Vec::with_capacity(n_faces);
    let mut idx = Vec::new();
    for _ in 0..n_faces {
        let k: usize = parse(next("face size")?, "face size")?;
        if k < 3 {
            return Err(Error::Parse(format!("face with {k} vertices")));
        }
        idx.clear();
        for _ in 0..k {
            let i: usize = parse(next("face index")?, "face index")?;
            if i >= n_vertices {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: n_vertices,
                });
            }
            idx.push(i as u32);
        }
        for j in 1..k - 1 {
            triangles.push([idx[0], idx[j], idx[j + 1]]);
        }
    }
    TriangleMesh::new(vertices, triangles)
}

pub fn write_off(mesh: &TriangleMesh) -> String {
    use std::fmt::Write;
    let mut out = format!("OFF\n{} {} 0\n", mesh.vertices.len(), mesh.triangles.len());
    for [x, y, z] in &mesh.vertices {
        writeln!(out, "{x} {y} {z}").unwrap();
    }
    for [a, b, c] in &mesh.triangles {
        writeln!(out, "3 {a} {b} {c}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_triangle() {
        let (m, dropped) = read_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
        assert_eq!(m.triangles.len(), 1);
        assert_eq!(dropped, 0);
    }

    #[test]
    fn unit_square() {
        let (m, _) =
            read_off("OFF\n# square\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 2 3\n")
                .unwrap();
        assert_eq!(m.vertices.len(), 4);
        assert_eq!(m.triangles.len(), 2);
    }

    #[test]
    fn one_degenerate_among_ten() {
        let mut text = String::from("OFF\n12 10 0\n");
        for i in 0..12 {
            text.push_str(&format!("{} {} {}\n", i as f64, (i * i) as f64, 0.0));
        }
        for i in 0..9 {
            text.push_str(&format!("3 {} {} {}\n", i, i + 1, i + 2));
        }
        text.push_str("3 4 4 5\n");
        let (m, dropped) = read_off(&text).unwrap();
        assert_eq!(m.triangles.len(), 9);
        assert_eq!(dropped, 1);
    }

    #[test]
    fn quad_is_fanned() {
        let (m, _) = read_off("OFF 4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n").unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn malformed() {
        assert!(matches!(read_off("PLY\n"), Err(Error::Parse(_))));
        assert!(matches!(read_off("OFF\n3 x 0\n"), Err(Error::Parse(_))));
        assert!(matches!(
            read_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n"),
            Err(Error::IndexOutOfRange { index: 7, len: 3 })
        ));
        assert!(matches!(
            read_off("OFF\n3 1 0\n0 0 0\n1 0 0\n"),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn writer_round_trips() {
        let (m, _) = read_off("OFF\n3 1 0\n0.5 0 0\n1 0 -2.25\n0 1 0\n3 0 1 2\n").unwrap();
        let (back, _) = read_off(&write_off(&m)).unwrap();
        assert_eq!(back, m);
    }
}
