//! Single-file NIfTI-1 volumes: just enough of the format to read masks and
//! round-trip stat maps.
//!
//! Reading handles both byte orders, the common scalar datatypes, and the
//! sform/qform orientation fields (sform wins when both are set, per the
//! standard's precedence). Writing always emits little-endian float32 with
//! the affine stored in the sform rows, and gzips when the path ends in
//! `.gz`. Every header byte is either meaningful or zero — no timestamps, no
//! tool banners — so identical inputs produce identical files.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use cbmr_core::mask::BrainMask;

use crate::error::{validation, CliError};

const HEADER_LEN: usize = 348;
const VOX_OFFSET: usize = 352;

/// A decoded volume: dimensions, voxel sizes, world affine, and the data
/// flattened in x-fastest raster order with scl slope/intercept applied.
#[derive(Debug, Clone)]
pub struct Volume {
    pub dims: [usize; 3],
    pub voxel_size_mm: [f64; 3],
    pub affine: [[f64; 4]; 4],
    pub data: Vec<f64>,
}

impl Volume {
    pub fn n_voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    let raw = fs::read(path)
        .map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| validation(format!("cannot gunzip {}: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    swap: bool,
}

impl<'a> Cursor<'a> {
    fn i16_at(&self, off: usize) -> i16 {
        let b: [u8; 2] = self.bytes[off..off + 2].try_into().unwrap();
        let v = i16::from_le_bytes(b);
        if self.swap {
            v.swap_bytes()
        } else {
            v
        }
    }

    fn f32_at(&self, off: usize) -> f32 {
        let b: [u8; 4] = self.bytes[off..off + 4].try_into().unwrap();
        let bits = u32::from_le_bytes(b);
        f32::from_bits(if self.swap { bits.swap_bytes() } else { bits })
    }
}

/// Decode one scalar of the given NIfTI datatype code.
fn decode(dt: i16, bytes: &[u8], swap: bool) -> f64 {
    let fix16 = |b: [u8; 2]| if swap { u16::from_le_bytes(b).swap_bytes() } else { u16::from_le_bytes(b) };
    let fix32 = |b: [u8; 4]| if swap { u32::from_le_bytes(b).swap_bytes() } else { u32::from_le_bytes(b) };
    let fix64 = |b: [u8; 8]| if swap { u64::from_le_bytes(b).swap_bytes() } else { u64::from_le_bytes(b) };
    match dt {
        2 => bytes[0] as f64,
        256 => bytes[0] as i8 as f64,
        4 => fix16(bytes[..2].try_into().unwrap()) as i16 as f64,
        512 => fix16(bytes[..2].try_into().unwrap()) as f64,
        8 => fix32(bytes[..4].try_into().unwrap()) as i32 as f64,
        768 => fix32(bytes[..4].try_into().unwrap()) as f64,
        16 => f32::from_bits(fix32(bytes[..4].try_into().unwrap())) as f64,
        64 => f64::from_bits(fix64(bytes[..8].try_into().unwrap())),
        _ => unreachable!("datatype validated before decoding"),
    }
}

fn datatype_size(dt: i16) -> Option<usize> {
    match dt {
        2 | 256 => Some(1),
        4 | 512 => Some(2),
        8 | 768 | 16 => Some(4),
        64 => Some(8),
        _ => None,
    }
}

/// Build the affine from the quaternion representation (method 2 of the
/// standard): rotation from (b,c,d) with a = sqrt(1−b²−c²−d²), columns scaled
/// by the voxel sizes, the third negated when qfac = −1.
fn qform_affine(c: &Cursor<'_>, pixdim: [f64; 3]) -> [[f64; 4]; 4] {
    let b = c.f32_at(256) as f64;
    let cc = c.f32_at(260) as f64;
    let d = c.f32_at(264) as f64;
    let a = (1.0 - b * b - cc * cc - d * d).max(0.0).sqrt();
    let qfac = if (c.f32_at(76) as f64) < 0.0 { -1.0 } else { 1.0 };
    let r = [
        [a * a + b * b - cc * cc - d * d, 2.0 * (b * cc - a * d), 2.0 * (b * d + a * cc)],
        [2.0 * (b * cc + a * d), a * a + cc * cc - b * b - d * d, 2.0 * (cc * d - a * b)],
        [2.0 * (b * d - a * cc), 2.0 * (cc * d + a * b), a * a + d * d - cc * cc - b * b],
    ];
    let offset = [c.f32_at(268) as f64, c.f32_at(272) as f64, c.f32_at(276) as f64];
    let mut aff = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            let scale = if j == 2 { pixdim[j] * qfac } else { pixdim[j] };
            aff[i][j] = r[i][j] * scale;
        }
        aff[i][3] = offset[i];
    }
    aff[3][3] = 1.0;
    aff
}

/// Read a 3D volume (higher dimensions are accepted when they are all 1).
pub fn read_volume(path: &Path) -> Result<Volume, CliError> {
    let bytes = read_bytes(path)?;
    if bytes.len() < HEADER_LEN {
        return Err(validation(format!(
            "{}: {} bytes is too short for a NIfTI-1 header",
            path.display(),
            bytes.len()
        )));
    }
    // dim[0] outside 1..=7 means the file was written on the other byte order
    let dim0 = i16::from_le_bytes(bytes[40..42].try_into().unwrap());
    let swap = !(1..=7).contains(&dim0);
    let c = Cursor { bytes: &bytes, swap };
    if &bytes[344..347] != b"n+1" {
        return Err(validation(format!(
            "{}: not a single-file NIfTI-1 volume (magic mismatch)",
            path.display()
        )));
    }
    let ndim = c.i16_at(40);
    if !(1..=7).contains(&ndim) {
        return Err(validation(format!("{}: corrupt dimension count {ndim}", path.display())));
    }
    let mut dims_all = [1usize; 7];
    for k in 0..ndim as usize {
        let d = c.i16_at(42 + 2 * k);
        if d < 1 {
            return Err(validation(format!("{}: nonpositive dim[{}] = {d}", path.display(), k + 1)));
        }
        dims_all[k] = d as usize;
    }
    if ndim < 3 || dims_all[3..].iter().any(|&d| d != 1) {
        return Err(validation(format!(
            "{}: expected a 3D volume, found dims {:?}",
            path.display(),
            &dims_all[..ndim as usize]
        )));
    }
    let dims = [dims_all[0], dims_all[1], dims_all[2]];
    let dt = c.i16_at(70);
    let elem = datatype_size(dt).ok_or_else(|| {
        validation(format!("{}: unsupported NIfTI datatype code {dt}", path.display()))
    })?;
    let pixdim = [
        (c.f32_at(80) as f64).abs(),
        (c.f32_at(84) as f64).abs(),
        (c.f32_at(88) as f64).abs(),
    ];
    if pixdim.iter().any(|&v| !(v > 0.0)) {
        return Err(validation(format!("{}: nonpositive voxel size {pixdim:?}", path.display())));
    }
    let vox_offset = c.f32_at(108) as usize;
    let n = dims[0] * dims[1] * dims[2];
    let need = vox_offset + n * elem;
    if bytes.len() < need {
        return Err(validation(format!(
            "{}: file holds {} bytes but the header promises {need}",
            path.display(),
            bytes.len()
        )));
    }
    let slope = c.f32_at(112) as f64;
    let inter = c.f32_at(116) as f64;
    let (slope, inter) = if slope == 0.0 { (1.0, 0.0) } else { (slope, inter) };

    let sform_code = c.i16_at(254);
    let qform_code = c.i16_at(252);
    let affine = if sform_code > 0 {
        let row = |off: usize| {
            [
                c.f32_at(off) as f64,
                c.f32_at(off + 4) as f64,
                c.f32_at(off + 8) as f64,
                c.f32_at(off + 12) as f64,
            ]
        };
        [row(280), row(296), row(312), [0.0, 0.0, 0.0, 1.0]]
    } else if qform_code > 0 {
        qform_affine(&c, pixdim)
    } else {
        // ANALYZE-style file: axis-aligned at the stated voxel sizes
        [
            [pixdim[0], 0.0, 0.0, 0.0],
            [0.0, pixdim[1], 0.0, 0.0],
            [0.0, 0.0, pixdim[2], 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    };

    let mut data = Vec::with_capacity(n);
    for k in 0..n {
        let off = vox_offset + k * elem;
        data.push(slope * decode(dt, &bytes[off..off + elem], swap) + inter);
    }
    Ok(Volume { dims, voxel_size_mm: pixdim, affine, data })
}

/// 3×3 determinant of the affine's linear part; a mask needs it nonzero to
/// map world coordinates back onto the lattice.
fn linear_det(aff: &[[f64; 4]; 4]) -> f64 {
    aff[0][0] * (aff[1][1] * aff[2][2] - aff[1][2] * aff[2][1])
        - aff[0][1] * (aff[1][0] * aff[2][2] - aff[1][2] * aff[2][0])
        + aff[0][2] * (aff[1][0] * aff[2][1] - aff[1][1] * aff[2][0])
}

/// Read a mask volume: nonzero (and non-NaN) voxels are inside.
pub fn read_mask(path: &Path) -> Result<BrainMask, CliError> {
    let vol = read_volume(path)?;
    if linear_det(&vol.affine).abs() < 1e-12 {
        return Err(validation(format!(
            "{}: mask affine is not invertible",
            path.display()
        )));
    }
    let inside: Vec<bool> = vol.data.iter().map(|&v| v != 0.0 && !v.is_nan()).collect();
    BrainMask::new(vol.dims, vol.voxel_size_mm, vol.affine, inside)
        .map_err(|e| validation(format!("{}: {e}", path.display())))
}

fn put_i16(buf: &mut [u8], off: usize, v: i16) {
    buf[off..off + 2].copy_from_slice(&v.to_le_bytes());
}

fn put_f32(buf: &mut [u8], off: usize, v: f32) {
    buf[off..off + 4].copy_from_slice(&v.to_le_bytes());
}

/// Write a float32 volume over the mask's grid: `values[rank]` lands at that
/// in-mask voxel, everything outside is 0. The affine is copied into the
/// sform rows.
pub fn write_stat_map(values: &[f64], mask: &BrainMask, path: &Path) -> Result<(), CliError> {
    if values.len() != mask.n_voxels() {
        return Err(validation(format!(
            "stat map has {} values but the mask has {} voxels",
            values.len(),
            mask.n_voxels()
        )));
    }
    let mut grid = vec![0.0f32; mask.dims[0] * mask.dims[1] * mask.dims[2]];
    for (rank, &raster) in mask.in_mask_rasters().iter().enumerate() {
        grid[raster as usize] = values[rank] as f32;
    }
    write_volume_f32(&grid, mask.dims, mask.voxel_size_mm, mask.affine, path)
}

/// Write a full-grid float32 volume (x-fastest order).
pub fn write_volume_f32(
    grid: &[f32],
    dims: [usize; 3],
    voxel_size_mm: [f64; 3],
    affine: [[f64; 4]; 4],
    path: &Path,
) -> Result<(), CliError> {
    let n = dims[0] * dims[1] * dims[2];
    if grid.len() != n {
        return Err(validation(format!(
            "volume has {} values for dims {dims:?} (expected {n})",
            grid.len()
        )));
    }
    let mut buf = vec![0u8; VOX_OFFSET + 4 * n];
    buf[0..4].copy_from_slice(&348i32.to_le_bytes());
    put_i16(&mut buf, 40, 3);
    for (k, &d) in dims.iter().enumerate() {
        put_i16(&mut buf, 42 + 2 * k, d as i16);
    }
    for k in 3..7 {
        put_i16(&mut buf, 42 + 2 * k, 1);
    }
    put_i16(&mut buf, 70, 16); // float32
    put_i16(&mut buf, 72, 32);
    put_f32(&mut buf, 76, 1.0); // qfac
    for (k, &s) in voxel_size_mm.iter().enumerate() {
        put_f32(&mut buf, 80 + 4 * k, s as f32);
    }
    put_f32(&mut buf, 108, VOX_OFFSET as f32);
    put_f32(&mut buf, 112, 1.0); // scl_slope
    buf[123] = 2; // xyzt_units: millimetres
    put_i16(&mut buf, 252, 0); // qform unused
    put_i16(&mut buf, 254, 2); // sform: aligned coordinates
    for (i, base) in [(0usize, 280usize), (1, 296), (2, 312)] {
        for j in 0..4 {
            put_f32(&mut buf, base + 4 * j, affine[i][j] as f32);
        }
    }
    buf[344..348].copy_from_slice(b"n+1\0");
    for (k, &v) in grid.iter().enumerate() {
        put_f32(&mut buf, VOX_OFFSET + 4 * k, v);
    }

    let gz = path.extension().is_some_and(|e| e == "gz");
    let file = fs::File::create(path)
        .map_err(|e| validation(format!("cannot create {}: {e}", path.display())))?;
    let mut out: Box<dyn Write> = if gz {
        // mtime stays at the builder default of 0 so reruns are byte-identical
        Box::new(flate2::GzBuilder::new().write(file, flate2::Compression::default()))
    } else {
        Box::new(file)
    };
    out.write_all(&buf)
        .and_then(|()| out.flush())
        .map_err(|e| validation(format!("cannot write {}: {e}", path.display())))
}

/// Read a stat map written by `write_stat_map` back into rank order,
/// checking that the grid matches the mask.
pub fn read_stat_map(path: &Path, mask: &BrainMask) -> Result<Vec<f64>, CliError> {
    let vol = read_volume(path)?;
    if vol.dims != mask.dims {
        return Err(validation(format!(
            "{}: grid {:?} does not match the mask grid {:?}",
            path.display(),
            vol.dims,
            mask.dims
        )));
    }
    Ok(mask
        .in_mask_rasters()
        .iter()
        .map(|&raster| vol.data[raster as usize])
        .collect())
}
