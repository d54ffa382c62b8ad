//! Activation-likelihood estimation, the kernel-density baseline the
//! model-based maps are compared against.
//!
//! Each focus is snapped to its containing voxel and spreads a peak-normalized
//! Gaussian (σ = FWHM / (2√(2 ln 2)), truncated at 3σ) over the surrounding
//! lattice. Within a study the per-voxel modeled-activation value is the max
//! over its foci; across studies the values combine as the probability of a
//! union, ALE = 1 − Π(1 − MAᵢ). Because the kernel is evaluated on integer
//! voxel offsets from the snapped center, a single focus produces exactly 1.0
//! at its own voxel and a bit-symmetric field around it.
//!
//! Significance comes from a pooled permutation null: every iteration
//! redistributes each study's in-mask foci uniformly over the mask, and the
//! resulting null ALE values are pooled over voxels and iterations, so
//! p = (1 + #{null ≥ observed}) / (1 + n_iter·N) can never reach zero.

use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::FociDataset;
use crate::error::{invalid, CoreError};
use crate::mask::BrainMask;
use crate::math as m;
use crate::rng::SeedPlan;
use crate::special;

pub const DEFAULT_FWHM_MM: f64 = 14.0;

/// σ of the Gaussian with the given full width at half maximum.
pub fn fwhm_to_sigma(fwhm_mm: f64) -> f64 {
    fwhm_mm / (2.0 * m::sqrt(2.0 * m::ln(2.0)))
}

#[derive(Debug, Clone)]
pub struct AleMap {
    /// ALE value per in-mask voxel, rank order.
    pub values: Vec<f64>,
    pub fwhm_mm: f64,
    pub n_studies: usize,
    /// Foci dropped because they fell outside the grid or the mask.
    pub n_outside: usize,
}

#[derive(Debug, Clone)]
pub struct AleInference {
    pub ale: AleMap,
    /// Pooled-null upper-tail p per voxel; minimum 1/(1 + n_iter·N).
    pub p: Vec<f64>,
    /// −Φ⁻¹(p), with p clamped away from 1 so untouched voxels stay finite.
    pub z: Vec<f64>,
    pub n_iter: usize,
}

/// Integer voxel offsets within 3σ and their kernel weights.
fn kernel_lut(
    voxel_size_mm: [f64; 3],
    fwhm_mm: f64,
) -> Result<Vec<(i32, i32, i32, f64)>, CoreError> {
    if !(fwhm_mm > 0.0) || !fwhm_mm.is_finite() {
        return Err(invalid(alloc::format!("kernel FWHM must be positive, got {fwhm_mm}")));
    }
    let sigma = fwhm_to_sigma(fwhm_mm);
    let cut2 = (3.0 * sigma) * (3.0 * sigma);
    let inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
    let r = |size: f64| m::floor(3.0 * sigma / size) as i32;
    let (rx, ry, rz) = (r(voxel_size_mm[0]), r(voxel_size_mm[1]), r(voxel_size_mm[2]));
    let mut lut = Vec::new();
    for dz in -rz..=rz {
        for dy in -ry..=ry {
            for dx in -rx..=rx {
                let d2 = (dx as f64 * voxel_size_mm[0]) * (dx as f64 * voxel_size_mm[0])
                    + (dy as f64 * voxel_size_mm[1]) * (dy as f64 * voxel_size_mm[1])
                    + (dz as f64 * voxel_size_mm[2]) * (dz as f64 * voxel_size_mm[2]);
                if d2 <= cut2 {
                    lut.push((dx, dy, dz, m::exp(-d2 * inv_two_sigma2)));
                }
            }
        }
    }
    Ok(lut)
}

/// Shared scratch so the per-iteration null maps reuse allocations.
struct AleScratch {
    lut: Vec<(i32, i32, i32, f64)>,
    ma: Vec<f64>,
    touched: Vec<u32>,
    one_minus: Vec<f64>,
}

impl AleScratch {
    fn new(mask: &BrainMask, fwhm_mm: f64) -> Result<Self, CoreError> {
        Ok(AleScratch {
            lut: kernel_lut(mask.voxel_size_mm, fwhm_mm)?,
            ma: vec![0.0; mask.n_voxels()],
            touched: Vec::new(),
            one_minus: vec![1.0; mask.n_voxels()],
        })
    }

    /// ALE over studies given as in-mask voxel ranks per focus.
    fn ale_from_ranks<S: AsRef<[u32]>>(&mut self, mask: &BrainMask, studies: &[S]) -> Vec<f64> {
        let n = mask.n_voxels();
        for v in self.one_minus.iter_mut() {
            *v = 1.0;
        }
        for study in studies {
            self.touched.clear();
            for &rank in study.as_ref() {
                let c = mask.voxel_at_rank(rank as usize);
                for &(dx, dy, dz, w) in &self.lut {
                    let i = c[0] as i64 + dx as i64;
                    let j = c[1] as i64 + dy as i64;
                    let k = c[2] as i64 + dz as i64;
                    if i < 0 || j < 0 || k < 0 {
                        continue;
                    }
                    if let Some(r) = mask.in_mask_rank(i as usize, j as usize, k as usize) {
                        if self.ma[r] == 0.0 {
                            self.touched.push(r as u32);
                        }
                        if w > self.ma[r] {
                            self.ma[r] = w;
                        }
                    }
                }
            }
            for &r in &self.touched {
                let r = r as usize;
                self.one_minus[r] *= 1.0 - self.ma[r];
                self.ma[r] = 0.0;
            }
        }
        let mut ale = Vec::with_capacity(n);
        for r in 0..n {
            ale.push(1.0 - self.one_minus[r]);
        }
        ale
    }
}

/// Snap each study's foci to in-mask voxel ranks, dropping the rest.
fn snapped_ranks(dataset: &FociDataset, mask: &BrainMask) -> (Vec<Vec<u32>>, usize) {
    let mut out = Vec::with_capacity(dataset.n_studies());
    let mut n_outside = 0usize;
    for study in &dataset.studies {
        let mut ranks = Vec::with_capacity(study.foci_mm.len());
        for &mm in &study.foci_mm {
            match mask.mm_to_voxel(mm).and_then(|v| mask.in_mask_rank(v[0], v[1], v[2])) {
                Some(r) => ranks.push(r as u32),
                None => n_outside += 1,
            }
        }
        out.push(ranks);
    }
    (out, n_outside)
}

pub fn ale_map(
    dataset: &FociDataset,
    mask: &BrainMask,
    fwhm_mm: f64,
) -> Result<AleMap, CoreError> {
    let (ranks, n_outside) = snapped_ranks(dataset, mask);
    let mut scratch = AleScratch::new(mask, fwhm_mm)?;
    Ok(AleMap {
        values: scratch.ale_from_ranks(mask, &ranks),
        fwhm_mm,
        n_studies: dataset.n_studies(),
        n_outside,
    })
}

/// Observed map plus pooled permutation-null inference. Deterministic for a
/// given (dataset, mask, fwhm, n_iter, seed).
pub fn ale_null_test(
    dataset: &FociDataset,
    mask: &BrainMask,
    fwhm_mm: f64,
    n_iter: usize,
    seed: u64,
) -> Result<AleInference, CoreError> {
    if n_iter == 0 {
        return Err(invalid("ALE null needs at least one iteration"));
    }
    let (obs_ranks, n_outside) = snapped_ranks(dataset, mask);
    if obs_ranks.iter().all(|r| r.is_empty()) {
        return Err(invalid("no in-mask foci: ALE null is undefined"));
    }
    let mut scratch = AleScratch::new(mask, fwhm_mm)?;
    let observed = scratch.ale_from_ranks(mask, &obs_ranks);
    let n = mask.n_voxels();

    // sort the observed values once, keeping their voxels
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        observed[a as usize]
            .partial_cmp(&observed[b as usize])
            .expect("ALE values are finite")
            .then(a.cmp(&b))
    });
    let sorted_obs: Vec<f64> = order.iter().map(|&i| observed[i as usize]).collect();

    let counts: Vec<usize> = obs_ranks.iter().map(|r| r.len()).collect();
    let plan = SeedPlan::new(seed);
    let mut ge_counts = vec![0u64; n];
    let mut null_ranks: Vec<Vec<u32>> = counts.iter().map(|&c| vec![0u32; c]).collect();
    for it in 0..n_iter {
        let mut rng = plan.stream("ale-null", it as u64);
        for study in null_ranks.iter_mut() {
            for slot in study.iter_mut() {
                *slot = crate::nullsim::uniform_u32(&mut rng, n as u32);
            }
        }
        let mut null = scratch.ale_from_ranks(mask, &null_ranks);
        null.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite"));
        // merge: for ascending observed thresholds, count null values ≥ each
        let mut ptr = 0usize;
        for (s, &obs) in sorted_obs.iter().enumerate() {
            while ptr < n && null[ptr] < obs {
                ptr += 1;
            }
            ge_counts[s] += (n - ptr) as u64;
        }
    }

    let pooled = (n_iter * n) as f64;
    let p_min = 1.0 / (1.0 + pooled);
    let mut p = vec![0.0; n];
    let mut z = vec![0.0; n];
    for (s, &voxel) in order.iter().enumerate() {
        let pv = (1.0 + ge_counts[s] as f64) / (1.0 + pooled);
        p[voxel as usize] = pv;
        // an untouched voxel has p = 1; clamp so its z stays finite
        z[voxel as usize] = -special::norm_ppf(pv.min(1.0 - p_min));
    }
    Ok(AleInference {
        ale: AleMap { values: observed, fwhm_mm, n_studies: dataset.n_studies(), n_outside },
        p,
        z,
        n_iter,
    })
}

/// Dice–Sørensen overlap of two equal-length boolean maps: 2|A∩B|/(|A|+|B|),
/// defined as 0 when both are empty.
pub fn dice(a: &[bool], b: &[bool]) -> Result<f64, CoreError> {
    if a.len() != b.len() {
        return Err(invalid(alloc::format!(
            "dice needs equal-length masks, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut both = 0usize;
    let mut na = 0usize;
    let mut nb = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        na += usize::from(x);
        nb += usize::from(y);
        both += usize::from(x && y);
    }
    if na + nb == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}
