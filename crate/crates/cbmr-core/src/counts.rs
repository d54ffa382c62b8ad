//! Foci-to-voxel counting and the sufficient statistics of the factorized
//! models.
//!
//! The models never need the full M × N count matrix — only the voxel sums
//! Y·j, the study sums Yi·, and (for dispersion diagnostics) the per-voxel
//! sums of squared counts. Counting keeps the per-focus voxel ranks around so
//! permutation schemes can resample positions without re-reading coordinates.

use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::FociDataset;
use crate::mask::BrainMask;

#[derive(Debug, Clone)]
pub struct CountData {
    pub n_voxels: usize,
    pub n_studies: usize,
    /// Y·j: per-voxel count summed over studies, indexed by in-mask rank.
    pub y_per_voxel: Vec<f64>,
    /// Yi·: per-study count summed over voxels.
    pub y_per_study: Vec<f64>,
    /// Σ_ij y_ij = Σ_j Y·j = Σ_i Yi·.
    pub total: f64,
    /// Σ_i y_ij² per voxel; equals `y_per_voxel` when counts are binarized.
    pub y_sq_per_voxel: Vec<f64>,
    /// Counted foci as in-mask voxel ranks, studies concatenated in order.
    pub foci_ranks: Vec<u32>,
    /// Study i owns `foci_ranks[study_offsets[i]..study_offsets[i + 1]]`.
    pub study_offsets: Vec<usize>,
    /// Foci that fell outside the grid or the mask and were dropped.
    pub n_outside: usize,
    /// Foci merged away by binarization (same study, same voxel).
    pub n_merged: usize,
    /// Σ_ij ln(y_ij!): the count-model normalizing constant. Zero for
    /// binarized data.
    pub ln_y_factorial_sum: f64,
}

impl CountData {
    /// Count already-mapped foci. Each inner slice holds one study's foci as
    /// in-mask voxel ranks; with `binarize` repeated ranks within a study
    /// collapse to a single event.
    pub fn from_study_ranks<S: AsRef<[u32]>>(
        n_voxels: usize,
        studies: &[S],
        binarize: bool,
    ) -> CountData {
        let n_studies = studies.len();
        let mut y_per_voxel = vec![0.0; n_voxels];
        let mut y_sq_per_voxel = vec![0.0; n_voxels];
        let mut y_per_study = Vec::with_capacity(n_studies);
        let mut foci_ranks = Vec::new();
        let mut study_offsets = Vec::with_capacity(n_studies + 1);
        study_offsets.push(0);
        let mut n_merged = 0usize;
        let mut ln_y_factorial_sum = 0.0f64;
        for study in studies {
            let mut ranks: Vec<u32> = study.as_ref().to_vec();
            ranks.sort_unstable();
            let mut kept = 0.0f64;
            let mut pos = 0;
            while pos < ranks.len() {
                let r = ranks[pos];
                debug_assert!((r as usize) < n_voxels);
                let mut mult = 1usize;
                while pos + mult < ranks.len() && ranks[pos + mult] == r {
                    mult += 1;
                }
                let count = if binarize {
                    n_merged += mult - 1;
                    1.0
                } else {
                    ln_y_factorial_sum += crate::special::ln_gamma(mult as f64 + 1.0);
                    mult as f64
                };
                y_per_voxel[r as usize] += count;
                y_sq_per_voxel[r as usize] += count * count;
                if binarize {
                    foci_ranks.push(r);
                } else {
                    foci_ranks.extend(core::iter::repeat(r).take(mult));
                }
                kept += count;
                pos += mult;
            }
            y_per_study.push(kept);
            study_offsets.push(foci_ranks.len());
        }
        let total: f64 = y_per_study.iter().sum();
        debug_assert_eq!(total, y_per_voxel.iter().sum::<f64>());
        CountData {
            n_voxels,
            n_studies,
            y_per_voxel,
            y_per_study,
            total,
            y_sq_per_voxel,
            foci_ranks,
            study_offsets,
            n_outside: 0,
            n_merged,
            ln_y_factorial_sum,
        }
    }

    pub fn study_ranks(&self, study: usize) -> &[u32] {
        &self.foci_ranks[self.study_offsets[study]..self.study_offsets[study + 1]]
    }
}

/// Map each study's foci into mask voxels and accumulate counts. Foci outside
/// the grid or outside the mask are dropped (and counted in `n_outside`);
/// with `binarize` (the usual convention) a study contributes at most one
/// event per voxel.
pub fn build_counts(mask: &BrainMask, dataset: &FociDataset, binarize: bool) -> CountData {
    let mut per_study: Vec<Vec<u32>> = Vec::with_capacity(dataset.n_studies());
    let mut n_outside = 0usize;
    for study in &dataset.studies {
        let mut ranks = Vec::with_capacity(study.foci_mm.len());
        for &mm in &study.foci_mm {
            match mask.mm_to_voxel(mm).and_then(|v| mask.in_mask_rank(v[0], v[1], v[2])) {
                Some(rank) => ranks.push(rank as u32),
                None => n_outside += 1,
            }
        }
        per_study.push(ranks);
    }
    let mut counts = CountData::from_study_ranks(mask.n_voxels(), &per_study, binarize);
    counts.n_outside = n_outside;
    counts
}
