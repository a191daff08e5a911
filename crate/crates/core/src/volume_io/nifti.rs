//! Minimal single-file NIfTI-1 (`.nii`) support for binary masks.
//!
//! Only uncompressed `n+1` files with datatypes uint8, int16 and int32 are
//! read. Orientation and affine fields are ignored; `pixdim[1..4]` becomes the
//! voxel spacing.

use super::VoxelMask;
use crate::error::{Error, Result};

const HEADER_SIZE: usize = 348;
const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_INT32: i16 = 8;

#[derive(Clone, Copy)]
enum Endian {
    Little,
    Big,
}

struct Reader<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl Reader<'_> {
    fn i16_at(&self, off: usize) -> i16 {
        let b = [self.bytes[off], self.bytes[off + 1]];
        match self.endian {
            Endian::Little => i16::from_le_bytes(b),
            Endian::Big => i16::from_be_bytes(b),
        }
    }

    fn i32_at(&self, off: usize) -> i32 {
        let b: [u8; 4] = self.bytes[off..off + 4].try_into().unwrap();
        match self.endian {
            Endian::Little => i32::from_le_bytes(b),
            Endian::Big => i32::from_be_bytes(b),
        }
    }

    fn f32_at(&self, off: usize) -> f32 {
        f32::from_bits(self.i32_at(off) as u32)
    }
}

/// Parses an in-memory `.nii` file into a mask (nonzero = in-mask).
pub fn read_nifti_mask(bytes: &[u8]) -> Result<VoxelMask> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        return Err(Error::Unsupported("gzip-compressed NIfTI".into()));
    }
    if bytes.len() < HEADER_SIZE {
        return Err(Error::Parse(format!(
            "NIfTI file too short ({} bytes)",
            bytes.len()
        )));
    }
    let endian = if i32::from_le_bytes(bytes[0..4].try_into().unwrap()) == HEADER_SIZE as i32 {
        Endian::Little
    } else if i32::from_be_bytes(bytes[0..4].try_into().unwrap()) == HEADER_SIZE as i32 {
        Endian::Big
    } else {
        return Err(Error::Parse(
            "sizeof_hdr is not 348; not a NIfTI-1 file".into(),
        ));
    };
    let r = Reader { bytes, endian };
    match &bytes[344..348] {
        b"n+1\0" => {}
        b"ni1\0" => return Err(Error::Unsupported("two-file NIfTI (.hdr/.img)".into())),
        m => return Err(Error::Parse(format!("bad NIfTI magic {m:?}"))),
    }

    let ndim = r.i16_at(40);
    if !(1..=7).contains(&ndim) {
        return Err(Error::Parse(format!("dim[0] = {ndim} out of range")));
    }
    let mut dims = [1usize; 3];
    for (a, d) in dims.iter_mut().enumerate() {
        if (a as i16) < ndim {
            let v = r.i16_at(42 + 2 * a);
            if v <= 0 {
                return Err(Error::Parse(format!(
                    "dim[{}] = {v} is not positive",
                    a + 1
                )));
            }
            *d = v as usize;
        }
    }
    for a in 3..ndim as usize {
        if r.i16_at(42 + 2 * a) > 1 {
            return Err(Error::Unsupported(
                "NIfTI volumes with more than 3 dimensions".into(),
            ));
        }
    }

    let datatype = r.i16_at(70);
    let width = match datatype {
        DT_UINT8 => 1,
        DT_INT16 => 2,
        DT_INT32 => 4,
        other => return Err(Error::Unsupported(format!("NIfTI datatype {other}"))),
    };

    let mut spacing = [1.0f64; 3];
    for (a, s) in spacing.iter_mut().enumerate() {
        let p = r.f32_at(80 + 4 * a).abs() as f64;
        if p.is_finite() && p > 0.0 {
            *s = p;
        }
    }

    let vox_offset = r.f32_at(108);
    if !(vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32) {
        return Err(Error::Parse(format!("vox_offset {vox_offset} invalid")));
    }
    let start = vox_offset as usize;
    let count = dims[0] * dims[1] * dims[2];
    let end = start + count * width;
    if bytes.len() < end {
        return Err(Error::Parse(format!(
            "NIfTI data truncated: need {end} bytes, have {}",
            bytes.len()
        )));
    }
    let data = &bytes[start..end];
    let cells: Vec<bool> = match width {
        1 => data.iter().map(|&b| b != 0).collect(),
        2 => data.chunks_exact(2).map(|c| c != [0, 0]).collect(),
        _ => data.chunks_exact(4).map(|c| c != [0, 0, 0, 0]).collect(),
    };
    VoxelMask::from_dense(dims, spacing, &cells)
}

/// Serializes a mask as a little-endian uint8 `.nii` file (values 0/1).
pub fn write_nifti_mask(mask: &VoxelMask) -> Vec<u8> {
    let dims = mask.dims();
    let spacing = mask.spacing();
    let mut h = vec![0u8; HEADER_SIZE + 4];
    h[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    let dim: [i16; 8] = [
        3,
        dims[0] as i16,
        dims[1] as i16,
        dims[2] as i16,
        1,
        1,
        1,
        1,
    ];
    for (i, d) in dim.iter().enumerate() {
        h[40 + 2 * i..42 + 2 * i].copy_from_slice(&d.to_le_bytes());
    }
    h[70..72].copy_from_slice(&DT_UINT8.to_le_bytes());
    h[72..74].copy_from_slice(&8i16.to_le_bytes());
    let pixdim: [f32; 8] = [
        1.0,
        spacing[0] as f32,
        spacing[1] as f32,
        spacing[2] as f32,
        1.0,
        1.0,
        1.0,
        1.0,
    ];
    for (i, p) in pixdim.iter().enumerate() {
        h[76 + 4 * i..80 + 4 * i].copy_from_slice(&p.to_le_bytes());
    }
    h[108..112].copy_from_slice(&((HEADER_SIZE + 4) as f32).to_le_bytes());
    h[112..116].copy_from_slice(&1.0f32.to_le_bytes());
    h[344..348].copy_from_slice(b"n+1\0");
    h.extend(mask.to_dense().into_iter().map(u8::from));
    h
}
