//! Cubic B-spline bases and the tensor-product spatial design matrix.
//!
//! Each axis gets a clamped cubic B-spline basis on an evenly spaced knot
//! lattice. The lattice origin sits 0.6 knot spacings below the mask's
//! bounding box on that axis and spans are appended until the box is covered;
//! this fixed offset makes the basis a pure function of (mask, spacing). The
//! spatial design is the row-wise tensor product over the three axes,
//! restricted to in-mask voxels, pruned of columns with small in-mask
//! support, and renormalized so every row sums to one (keeping the constant
//! function exactly representable, which downstream identities rely on).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, CoreError};
use crate::mask::BrainMask;
use crate::math as m;
use crate::sparse::{CsrBuilder, CsrMatrix};

pub const DEGREE: usize = 3;
/// Fraction of one spacing by which the knot origin precedes the bounding box.
pub const ORIGIN_OFFSET_FACTOR: f64 = 0.6;
pub const DEFAULT_SPACING_MM: f64 = 20.0;
pub const DEFAULT_PRUNE_THRESHOLD: f64 = 0.1;

/// Clamped cubic B-spline basis on one axis.
#[derive(Debug, Clone)]
pub struct KnotAxis {
    /// Full knot vector with end knots repeated `DEGREE + 1` times.
    pub knots: Vec<f64>,
    pub n_bases: usize,
}

impl KnotAxis {
    /// Cover `[lo_mm, hi_mm]` with spans of `spacing_mm`, origin at
    /// `lo_mm - 0.6 * spacing_mm`.
    pub fn new(lo_mm: f64, hi_mm: f64, spacing_mm: f64) -> Result<Self, CoreError> {
        if !(spacing_mm > 0.0) || !lo_mm.is_finite() || !hi_mm.is_finite() || hi_mm < lo_mm {
            return Err(invalid(alloc::format!(
                "bad knot axis: lo {lo_mm}, hi {hi_mm}, spacing {spacing_mm}"
            )));
        }
        let t0 = lo_mm - ORIGIN_OFFSET_FACTOR * spacing_mm;
        let n_spans = m::floor((hi_mm - t0) / spacing_mm) as usize + 1;
        let t_end = t0 + n_spans as f64 * spacing_mm;
        let mut knots = Vec::with_capacity(n_spans + 7);
        for _ in 0..=DEGREE {
            knots.push(t0);
        }
        for s in 1..n_spans {
            knots.push(t0 + s as f64 * spacing_mm);
        }
        for _ in 0..=DEGREE {
            knots.push(t_end);
        }
        let n_bases = knots.len() - DEGREE - 1;
        Ok(KnotAxis { knots, n_bases })
    }

    #[inline]
    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    fn find_span(&self, x: f64) -> Result<usize, CoreError> {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return Err(CoreError::OutsideKnotSpan { point: x, lo, hi });
        }
        // span s satisfies knots[s] <= x < knots[s+1]; the right endpoint
        // folds into the last nonempty span.
        let last = self.n_bases - 1;
        if x >= self.knots[last + 1] {
            return Ok(last);
        }
        let mut a = DEGREE;
        let mut b = last + 1;
        while b - a > 1 {
            let mid = (a + b) / 2;
            if x < self.knots[mid] {
                b = mid;
            } else {
                a = mid;
            }
        }
        Ok(a)
    }

    /// Evaluate the four cubic basis functions that can be nonzero at `x`.
    /// Returns the index of the first one and their values in order; the
    /// values sum to 1 by the partition of unity.
    pub fn eval4(&self, x: f64) -> Result<(usize, [f64; 4]), CoreError> {
        let span = self.find_span(x)?;
        let mut n = [0.0f64; DEGREE + 1];
        let mut left = [0.0f64; DEGREE + 1];
        let mut right = [0.0f64; DEGREE + 1];
        n[0] = 1.0;
        for j in 1..=DEGREE {
            left[j] = x - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = n[r] / denom;
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        Ok((span - DEGREE, n))
    }
}

/// Sparse spatial design: one row per in-mask voxel (x-fastest order), one
/// column per kept tensor basis function, rows normalized to sum 1.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub x: CsrMatrix,
    pub axes: [KnotAxis; 3],
    pub spacing_mm: f64,
    pub prune_threshold: f64,
    /// Candidate tensor columns before pruning (product of axis basis counts).
    pub n_candidates: usize,
    /// Kept columns as flat tensor indices `(bx * Ky + by) * Kz + bz`.
    pub kept_tensor_cols: Vec<u32>,
    /// Smallest gap between any candidate column's in-mask maximum and the
    /// prune threshold — how robustly the kept set is determined.
    pub threshold_margin: f64,
}

impl DesignMatrix {
    pub fn n_voxels(&self) -> usize {
        self.x.n_rows
    }

    pub fn n_bases(&self) -> usize {
        self.x.n_cols
    }
}

pub fn build_design(
    mask: &BrainMask,
    spacing_mm: f64,
    prune_threshold: f64,
) -> Result<DesignMatrix, CoreError> {
    if !(prune_threshold >= 0.0 && prune_threshold < 1.0) {
        return Err(invalid(alloc::format!("prune threshold {prune_threshold} not in [0, 1)")));
    }
    let bbox = mask.bounding_box();
    let mut axes = Vec::with_capacity(3);
    for ax in 0..3 {
        axes.push(KnotAxis::new(
            mask.axis_coord(ax, bbox[ax].0),
            mask.axis_coord(ax, bbox[ax].1),
            spacing_mm,
        )?);
    }
    let axes: [KnotAxis; 3] = match axes.try_into() {
        Ok(a) => a,
        Err(_) => unreachable!(),
    };
    let (kx, ky, kz) = (axes[0].n_bases, axes[1].n_bases, axes[2].n_bases);
    let n_candidates = kx * ky * kz;

    // Per-axis evaluations are shared by every voxel with that grid index.
    let mut tables: [Vec<(usize, [f64; 4])>; 3] =
        [Vec::new(), Vec::new(), Vec::new()];
    for ax in 0..3 {
        let mut t = vec![(0usize, [0.0f64; 4]); mask.dims[ax]];
        for (idx, slot) in t.iter_mut().enumerate().take(bbox[ax].1 + 1).skip(bbox[ax].0) {
            *slot = axes[ax].eval4(mask.axis_coord(ax, idx))?;
        }
        tables[ax] = t;
    }

    // Pass 1: in-mask maximum of every candidate column.
    let mut col_max = vec![0.0f64; n_candidates];
    for &raster in mask.in_mask_rasters() {
        let v = mask.coords(raster as usize);
        let (fx, wx) = &tables[0][v[0]];
        let (fy, wy) = &tables[1][v[1]];
        let (fz, wz) = &tables[2][v[2]];
        for (dx, &wxv) in wx.iter().enumerate() {
            let base_x = (fx + dx) * ky;
            for (dy, &wyv) in wy.iter().enumerate() {
                let wxy = wxv * wyv;
                let base_xy = (base_x + fy + dy) * kz;
                for (dz, &wzv) in wz.iter().enumerate() {
                    let w = wxy * wzv;
                    let c = base_xy + fz + dz;
                    if w > col_max[c] {
                        col_max[c] = w;
                    }
                }
            }
        }
    }

    let mut keep_map = vec![u32::MAX; n_candidates];
    let mut kept_tensor_cols = Vec::new();
    let mut threshold_margin = f64::INFINITY;
    for (c, &mx) in col_max.iter().enumerate() {
        if mx > 0.0 {
            let gap = m::abs(mx - prune_threshold);
            if gap < threshold_margin {
                threshold_margin = gap;
            }
        }
        if !(mx < prune_threshold) {
            keep_map[c] = kept_tensor_cols.len() as u32;
            kept_tensor_cols.push(c as u32);
        }
    }
    if kept_tensor_cols.is_empty() {
        return Err(invalid("pruning removed every basis column"));
    }

    // Pass 2: assemble kept entries row by row and renormalize to sum 1.
    let p = kept_tensor_cols.len();
    let mut builder = CsrBuilder::new(p);
    let mut entries: Vec<(u32, f64)> = Vec::with_capacity(64);
    for (rank, &raster) in mask.in_mask_rasters().iter().enumerate() {
        let v = mask.coords(raster as usize);
        let (fx, wx) = &tables[0][v[0]];
        let (fy, wy) = &tables[1][v[1]];
        let (fz, wz) = &tables[2][v[2]];
        entries.clear();
        for (dx, &wxv) in wx.iter().enumerate() {
            let base_x = (fx + dx) * ky;
            for (dy, &wyv) in wy.iter().enumerate() {
                let wxy = wxv * wyv;
                let base_xy = (base_x + fy + dy) * kz;
                for (dz, &wzv) in wz.iter().enumerate() {
                    let w = wxy * wzv;
                    if w == 0.0 {
                        continue;
                    }
                    let kept = keep_map[base_xy + fz + dz];
                    if kept != u32::MAX {
                        entries.push((kept, w));
                    }
                }
            }
        }
        entries.sort_unstable_by_key(|e| e.0);
        let row_sum: f64 = entries.iter().map(|e| e.1).sum();
        if !(row_sum > 0.0) {
            return Err(CoreError::EmptyBasisRow { voxel: rank });
        }
        builder.push_row(entries.iter().map(|&(c, w)| (c, w / row_sum)));
    }

    Ok(DesignMatrix {
        x: builder.finish(),
        axes,
        spacing_mm,
        prune_threshold,
        n_candidates,
        kept_tensor_cols,
        threshold_margin,
    })
}
