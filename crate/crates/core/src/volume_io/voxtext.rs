//! VOXTEXT v1: a plain-text voxel list.
//!
//! ```text
//! VOXMASK 1
//! dims 64 64 16
//! spacing 1 1 1
//! 3 4 5
//! ...
//! ```

use super::VoxelMask;
use crate::error::{Error, Result};

pub fn read_voxtext(text: &str) -> Result<VoxelMask> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty VOXTEXT file".into()))?;
    if header.split_whitespace().collect::<Vec<_>>() != ["VOXMASK", "1"] {
        return Err(Error::Parse(format!("bad VOXTEXT header {header:?}")));
    }
    let dims_line = lines
        .next()
        .ok_or_else(|| Error::Parse("missing dims line".into()))?;
    let dims: [usize; 3] = keyed_triple(dims_line, "dims")?;
    let spacing_line = lines
        .next()
        .ok_or_else(|| Error::Parse("missing spacing line".into()))?;
    let spacing: [f64; 3] = keyed_triple(spacing_line, "spacing")?;

    let mut voxels = Vec::new();
    for line in lines {
        let mut it = line.split_whitespace().map(|t| {
            t.parse::<i64>()
                .map_err(|_| Error::Parse(format!("bad voxel coordinate {t:?}")))
        });
        let (x, y, z) = match (it.next(), it.next(), it.next(), it.next()) {
            (Some(x), Some(y), Some(z), None) => (x?, y?, z?),
            _ => return Err(Error::Parse(format!("expected `x y z`, got {line:?}"))),
        };
        let inside = |c: i64, d: usize| c >= 0 && (c as u64) < d as u64;
        if !(inside(x, dims[0]) && inside(y, dims[1]) && inside(z, dims[2])) {
            return Err(Error::OutOfBounds { x, y, z, dims });
        }
        voxels.push([x as u32, y as u32, z as u32]);
    }
    VoxelMask::new(dims, spacing, voxels)
}

pub fn write_voxtext(mask: &VoxelMask) -> String {
    use std::fmt::Write;
    let [dx, dy, dz] = mask.dims();
    let [sx, sy, sz] = mask.spacing();
    let mut out = format!("VOXMASK 1\ndims {dx} {dy} {dz}\nspacing {sx} {sy} {sz}\n");
    for [x, y, z] in mask.voxels() {
        writeln!(out, "{x} {y} {z}").unwrap();
    }
    out
}

fn keyed_triple<T: std::str::FromStr>(line: &str, key: &str) -> Result<[T; 3]> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() != 4 || toks[0] != key {
        return Err(Error::Parse(format!(
            "expected `{key} a b c`, got {line:?}"
        )));
    }
    let parse = |t: &str| {
        t.parse::<T>()
            .map_err(|_| Error::Parse(format!("bad {key} value {t:?}")))
    };
    Ok([parse(toks[1])?, parse(toks[2])?, parse(toks[3])?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn block_corners() {
        let text = "VOXMASK 1\ndims 2 2 2\nspacing 1 1 1\n\
                    0 0 0\n1 0 0\n0 1 0\n1 1 0\n0 0 1\n1 0 1\n0 1 1\n1 1 1\n";
        let m = read_voxtext(text).unwrap();
        assert_eq!(m.len(), 8);
        assert_eq!(m.dims(), [2, 2, 2]);
    }

    #[test]
    fn errors() {
        assert!(read_voxtext("VOXMASK 2\ndims 1 1 1\nspacing 1 1 1\n0 0 0\n").is_err());
        assert!(matches!(
            read_voxtext("VOXMASK 1\ndims 2 2 2\nspacing 1 1 1\n0 0 2\n"),
            Err(Error::OutOfBounds { z: 2, .. })
        ));
        assert!(matches!(
            read_voxtext("VOXMASK 1\ndims 2 2 2\nspacing 1 1 1\n0 -1 0\n"),
            Err(Error::OutOfBounds { y: -1, .. })
        ));
        assert!(matches!(
            read_voxtext("VOXMASK 1\ndims 2 2 2\nspacing 1 1 1\n"),
            Err(Error::EmptyMask)
        ));
        assert!(read_voxtext("VOXMASK 1\ndims 2 2 2\nspacing 1 1 1\n0 0\n").is_err());
    }

    proptest! {
        #[test]
        fn save_then_load_is_identity(
            dims in (1usize..6, 1usize..6, 1usize..6),
            spacing in (0.1f64..3.0, 0.1f64..3.0, 0.1f64..3.0),
            seed in any::<u64>(),
        ) {
            let dims = [dims.0, dims.1, dims.2];
            let total = dims[0] * dims[1] * dims[2];
            let mut cells: Vec<bool> = (0..total).map(|i| (seed >> (i % 64)) & 1 == 1 || i == 0).collect();
            cells[total - 1] = true;
            let m = VoxelMask::from_dense(dims, [spacing.0, spacing.1, spacing.2], &cells).unwrap();
            let back = read_voxtext(&write_voxtext(&m)).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
