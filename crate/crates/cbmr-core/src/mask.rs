//! Brain masks on a regular voxel lattice.
//!
//! A mask fixes the analysis support: the set of in-mask voxels, enumerated
//! in x-fastest raster order, is the row space of the spatial design and the
//! sample space of every permutation scheme. World (mm) coordinates map to
//! voxel indices through the affine; the spline axes use lattice coordinates
//! (index × voxel size) so the basis depends only on the voxel grid, never on
//! scanner orientation.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, CoreError};
use crate::math as m;

#[derive(Debug, Clone)]
pub struct BrainMask {
    pub dims: [usize; 3],
    pub voxel_size_mm: [f64; 3],
    /// Voxel index -> world mm, homogeneous 4×4.
    pub affine: [[f64; 4]; 4],
    inside: Vec<bool>,
    /// Raster indices of in-mask voxels, ascending (x-fastest order).
    in_mask: Vec<u32>,
    /// raster index -> rank among in-mask voxels, u32::MAX outside.
    rank: Vec<u32>,
}

impl BrainMask {
    pub fn new(
        dims: [usize; 3],
        voxel_size_mm: [f64; 3],
        affine: [[f64; 4]; 4],
        inside: Vec<bool>,
    ) -> Result<Self, CoreError> {
        let total = dims[0] * dims[1] * dims[2];
        if inside.len() != total {
            return Err(invalid(alloc::format!(
                "mask has {} voxels for dims {dims:?} (expected {total})",
                inside.len()
            )));
        }
        if voxel_size_mm.iter().any(|v| !(*v > 0.0)) {
            return Err(invalid("voxel size must be positive"));
        }
        let mut in_mask = Vec::new();
        let mut rank = vec![u32::MAX; total];
        for (idx, &is_in) in inside.iter().enumerate() {
            if is_in {
                rank[idx] = in_mask.len() as u32;
                in_mask.push(idx as u32);
            }
        }
        if in_mask.is_empty() {
            return Err(invalid("mask is empty"));
        }
        Ok(BrainMask { dims, voxel_size_mm, affine, inside, in_mask, rank })
    }

    /// Number of in-mask voxels (N in the model).
    #[inline]
    pub fn n_voxels(&self) -> usize {
        self.in_mask.len()
    }

    /// x-fastest raster index of (i, j, k).
    #[inline]
    pub fn raster(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    /// Inverse of `raster`.
    #[inline]
    pub fn coords(&self, raster: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [raster % nx, (raster / nx) % ny, raster / (nx * ny)]
    }

    #[inline]
    pub fn is_inside(&self, i: usize, j: usize, k: usize) -> bool {
        i < self.dims[0] && j < self.dims[1] && k < self.dims[2] && self.inside[self.raster(i, j, k)]
    }

    /// Rank of an in-mask voxel in the x-fastest enumeration (the model's
    /// voxel index), or None outside the mask.
    #[inline]
    pub fn in_mask_rank(&self, i: usize, j: usize, k: usize) -> Option<usize> {
        if i >= self.dims[0] || j >= self.dims[1] || k >= self.dims[2] {
            return None;
        }
        let r = self.rank[self.raster(i, j, k)];
        (r != u32::MAX).then_some(r as usize)
    }

    /// Grid coordinates of the in-mask voxel with the given rank.
    #[inline]
    pub fn voxel_at_rank(&self, rank: usize) -> [usize; 3] {
        self.coords(self.in_mask[rank] as usize)
    }

    pub fn in_mask_rasters(&self) -> &[u32] {
        &self.in_mask
    }

    /// World mm coordinates of a voxel center.
    pub fn voxel_center_mm(&self, v: [usize; 3]) -> [f64; 3] {
        let a = &self.affine;
        let p = [v[0] as f64, v[1] as f64, v[2] as f64];
        [
            a[0][0] * p[0] + a[0][1] * p[1] + a[0][2] * p[2] + a[0][3],
            a[1][0] * p[0] + a[1][1] * p[1] + a[1][2] * p[2] + a[1][3],
            a[2][0] * p[0] + a[2][1] * p[1] + a[2][2] * p[2] + a[2][3],
        ]
    }

    /// Map a world mm coordinate to the nearest voxel (round half away from
    /// zero, per axis). The result may lie outside the grid or the mask;
    /// callers decide how to count those.
    pub fn mm_to_voxel(&self, mm: [f64; 3]) -> Option<[usize; 3]> {
        let inv = invert_affine(&self.affine)?;
        let q = [
            inv[0][0] * mm[0] + inv[0][1] * mm[1] + inv[0][2] * mm[2] + inv[0][3],
            inv[1][0] * mm[0] + inv[1][1] * mm[1] + inv[1][2] * mm[2] + inv[1][3],
            inv[2][0] * mm[0] + inv[2][1] * mm[1] + inv[2][2] * mm[2] + inv[2][3],
        ];
        let mut out = [0usize; 3];
        for ax in 0..3 {
            let r = m::round_half_away(q[ax]);
            if r < 0.0 || r >= self.dims[ax] as f64 {
                return None;
            }
            out[ax] = r as usize;
        }
        Some(out)
    }

    /// Per-axis inclusive index range covered by the mask.
    pub fn bounding_box(&self) -> [(usize, usize); 3] {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        for &r in &self.in_mask {
            let c = self.coords(r as usize);
            for ax in 0..3 {
                lo[ax] = lo[ax].min(c[ax]);
                hi[ax] = hi[ax].max(c[ax]);
            }
        }
        [(lo[0], hi[0]), (lo[1], hi[1]), (lo[2], hi[2])]
    }

    /// Lattice coordinate (mm along the grid axis) of index `idx` on `axis`:
    /// the spline abscissa.
    #[inline]
    pub fn axis_coord(&self, axis: usize, idx: usize) -> f64 {
        idx as f64 * self.voxel_size_mm[axis]
    }
}

fn invert_affine(a: &[[f64; 4]; 4]) -> Option<[[f64; 4]; 4]> {
    // [R t; 0 1]⁻¹ = [R⁻¹ -R⁻¹t; 0 1]
    let r = [
        [a[0][0], a[0][1], a[0][2]],
        [a[1][0], a[1][1], a[1][2]],
        [a[2][0], a[2][1], a[2][2]],
    ];
    let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
        - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv_det = 1.0 / det;
    let mut inv = [[0.0f64; 4]; 4];
    inv[0][0] = (r[1][1] * r[2][2] - r[1][2] * r[2][1]) * inv_det;
    inv[0][1] = (r[0][2] * r[2][1] - r[0][1] * r[2][2]) * inv_det;
    inv[0][2] = (r[0][1] * r[1][2] - r[0][2] * r[1][1]) * inv_det;
    inv[1][0] = (r[1][2] * r[2][0] - r[1][0] * r[2][2]) * inv_det;
    inv[1][1] = (r[0][0] * r[2][2] - r[0][2] * r[2][0]) * inv_det;
    inv[1][2] = (r[0][2] * r[1][0] - r[0][0] * r[1][2]) * inv_det;
    inv[2][0] = (r[1][0] * r[2][1] - r[1][1] * r[2][0]) * inv_det;
    inv[2][1] = (r[0][1] * r[2][0] - r[0][0] * r[2][1]) * inv_det;
    inv[2][2] = (r[0][0] * r[1][1] - r[0][1] * r[1][0]) * inv_det;
    let t = [a[0][3], a[1][3], a[2][3]];
    for i in 0..3 {
        inv[i][3] = -(inv[i][0] * t[0] + inv[i][1] * t[1] + inv[i][2] * t[2]);
    }
    inv[3] = [0.0, 0.0, 0.0, 1.0];
    Some(inv)
}

/// Deterministic "brain-shaped" mask: the `n_target` voxels nearest the
/// ellipsoid center in the normalized metric
/// `((i-c0)/s0)² + ((j-c1)/s1)² + ((k-c2)/s2)²`, ties broken by raster index.
pub fn synthetic_ellipsoid_mask(
    dims: [usize; 3],
    voxel_size_mm: [f64; 3],
    affine: [[f64; 4]; 4],
    center: [f64; 3],
    semi_axes: [f64; 3],
    n_target: usize,
) -> Result<BrainMask, CoreError> {
    let total = dims[0] * dims[1] * dims[2];
    if n_target == 0 || n_target > total {
        return Err(invalid(alloc::format!(
            "n_target {n_target} out of range for {total} voxels"
        )));
    }
    let mut keyed: Vec<(f64, u32)> = Vec::with_capacity(total);
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let dx = (i as f64 - center[0]) / semi_axes[0];
                let dy = (j as f64 - center[1]) / semi_axes[1];
                let dz = (k as f64 - center[2]) / semi_axes[2];
                let r2 = dx * dx + dy * dy + dz * dz;
                keyed.push((r2, keyed.len() as u32));
            }
        }
    }
    keyed.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("finite r2").then(a.1.cmp(&b.1)));
    let mut inside = vec![false; total];
    for &(_, idx) in keyed.iter().take(n_target) {
        inside[idx as usize] = true;
    }
    BrainMask::new(dims, voxel_size_mm, affine, inside)
}

/// Reference mask mirroring the published analysis grid: 91×109×91 at 2 mm,
/// 228483 in-mask voxels, MNI-style affine. The shape is a deterministic
/// brain-proportioned ellipsoid fill; with the default 20 mm knot spacing it
/// reproduces the published basis size (456 kept columns).
pub fn reference_brain_mask() -> BrainMask {
    synthetic_ellipsoid_mask(
        [91, 109, 91],
        [2.0, 2.0, 2.0],
        [
            [-2.0, 0.0, 0.0, 90.0],
            [0.0, 2.0, 0.0, -126.0],
            [0.0, 0.0, 2.0, -72.0],
            [0.0, 0.0, 0.0, 1.0],
        ],
        [45.0, 54.0, 45.0],
        [34.0, 44.5, 33.0],
        228_483,
    )
    .expect("reference mask parameters are valid")
}

/// Small deterministic mask (20000 voxels in a 48×56×48 grid at 2 mm) for
/// simulation-heavy tests and examples.
pub fn reduced_test_mask() -> BrainMask {
    synthetic_ellipsoid_mask(
        [48, 56, 48],
        [2.0, 2.0, 2.0],
        [
            [2.0, 0.0, 0.0, -47.0],
            [0.0, 2.0, 0.0, -55.0],
            [0.0, 0.0, 2.0, -47.0],
            [0.0, 0.0, 0.0, 1.0],
        ],
        [23.5, 27.5, 23.5],
        [17.5, 21.5, 16.5],
        20_000,
    )
    .expect("reduced mask parameters are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_full(dims: [usize; 3]) -> BrainMask {
        let n = dims[0] * dims[1] * dims[2];
        BrainMask::new(
            dims,
            [2.0, 2.0, 2.0],
            [
                [2.0, 0.0, 0.0, -4.0],
                [0.0, 2.0, 0.0, -4.0],
                [0.0, 0.0, 2.0, -4.0],
                [0.0, 0.0, 0.0, 1.0],
            ],
            vec![true; n],
        )
        .unwrap()
    }

    #[test]
    fn raster_is_x_fastest() {
        let mask = tiny_full([3, 4, 5]);
        assert_eq!(mask.raster(1, 0, 0), 1);
        assert_eq!(mask.raster(0, 1, 0), 3);
        assert_eq!(mask.raster(0, 0, 1), 12);
        for r in 0..(3 * 4 * 5) {
            let c = mask.coords(r);
            assert_eq!(mask.raster(c[0], c[1], c[2]), r);
        }
        // full mask: rank == raster
        assert_eq!(mask.in_mask_rank(2, 3, 4), Some(3 * 4 * 5 - 1));
    }

    #[test]
    fn mm_round_trip_with_negative_x_affine() {
        let mask = BrainMask::new(
            [5, 5, 5],
            [2.0, 2.0, 2.0],
            [
                [-2.0, 0.0, 0.0, 4.0],
                [0.0, 2.0, 0.0, -4.0],
                [0.0, 0.0, 2.0, -4.0],
                [0.0, 0.0, 0.0, 1.0],
            ],
            vec![true; 125],
        )
        .unwrap();
        for v in [[0usize, 0, 0], [4, 4, 4], [2, 1, 3]] {
            let mm = mask.voxel_center_mm(v);
            assert_eq!(mask.mm_to_voxel(mm), Some(v));
            // within half a voxel of the center still maps back
            let jit = [mm[0] + 0.9, mm[1] - 0.9, mm[2] + 0.9];
            assert_eq!(mask.mm_to_voxel(jit), Some(v));
        }
        assert_eq!(mask.mm_to_voxel([1000.0, 0.0, 0.0]), None);
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        let mask = tiny_full([5, 5, 5]);
        // affine maps index i -> 2i - 4, so mm 1.0 is exactly between
        // indices 2 (0 mm) and 3 (2 mm): i = 2.5 rounds away from zero to 3.
        assert_eq!(mask.mm_to_voxel([1.0, 1.0, 1.0]), Some([3, 3, 3]));
    }

    #[test]
    fn bounding_box_of_partial_mask() {
        let dims = [4, 4, 4];
        let mut inside = vec![false; 64];
        let m = tiny_full(dims);
        for (i, j, k) in [(1, 0, 2), (2, 3, 2), (1, 1, 1)] {
            inside[m.raster(i, j, k)] = true;
        }
        let partial = BrainMask::new(dims, [2.0; 3], m.affine, inside).unwrap();
        assert_eq!(partial.bounding_box(), [(1, 2), (0, 3), (1, 2)]);
        assert_eq!(partial.n_voxels(), 3);
    }

    #[test]
    fn ellipsoid_trim_is_exact_and_tie_stable() {
        // 8 corner-symmetric voxels tie; the rule keeps the lowest rasters.
        let mask = synthetic_ellipsoid_mask(
            [4, 4, 4],
            [1.0; 3],
            [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]],
            [1.5, 1.5, 1.5],
            [1.0, 1.0, 1.0],
            10,
        )
        .unwrap();
        assert_eq!(mask.n_voxels(), 10);
        // The 8 central voxels (r² = 0.75) all fit; the next orbit
        // (r² = 2.75, 24 voxels) is cut at two: ranks follow raster order.
        assert!(mask.is_inside(1, 1, 1) && mask.is_inside(2, 2, 2));
        assert!(mask.is_inside(1, 1, 0) && mask.is_inside(2, 1, 0));
        assert!(!mask.is_inside(1, 2, 0));
    }

    #[test]
    fn reference_mask_counts() {
        let mask = reference_brain_mask();
        assert_eq!(mask.dims, [91, 109, 91]);
        assert_eq!(mask.n_voxels(), 228_483);
        assert_eq!(mask.bounding_box(), [(10, 80), (9, 99), (12, 78)]);
    }

    #[test]
    fn reduced_mask_counts() {
        let mask = reduced_test_mask();
        assert_eq!(mask.n_voxels(), 20_000);
    }
}
