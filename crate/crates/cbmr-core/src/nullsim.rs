//! Spatially-null synthetic data and the calibration harness built on it.
//!
//! Both samplers keep the template's study structure (ids, covariates, study
//! count) and redistribute foci uniformly over the in-mask voxel centers, so
//! a fitted intensity should be flat and every voxelwise p-value uniform:
//!
//! * `ModelBased` redraws each study's focus count from the fitted count
//!   distribution — Poisson at the template's per-study in-mask count, or a
//!   gamma–Poisson mixture when the model carries a dispersion parameter —
//!   and then places the foci independently (repeats possible).
//! * `EmpiricalShuffle` keeps every study's in-mask focus count exactly and
//!   redraws positions without within-study repeats, so binarization cannot
//!   merge anything and the observed totals are preserved bit for bit.
//!
//! `run_calibration` drives the full pipeline (sample → count → fit → test)
//! once per realization and streams per-rank moments of the −log₁₀ p order
//! statistics, so memory stays at a few vectors of mask size regardless of
//! the number of realizations.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use crate::counts::build_counts;
use crate::dataset::{FociDataset, Study};
use crate::error::{invalid, CoreError};
use crate::infer::{homogeneity_test, InferConfig};
use crate::linalg::DMat;
use crate::mask::BrainMask;
use crate::math as m;
use crate::model::{ModelData, ModelKind};
use crate::optim::{fit, FitConfig, FitResult};
use crate::rng::SeedPlan;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NullSampler {
    ModelBased,
    EmpiricalShuffle,
}

impl NullSampler {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "model_based" | "model-based" => Some(NullSampler::ModelBased),
            "empirical_shuffle" | "empirical-shuffle" => Some(NullSampler::EmpiricalShuffle),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NullSampler::ModelBased => "model_based",
            NullSampler::EmpiricalShuffle => "empirical_shuffle",
        }
    }
}

#[derive(Debug, Clone)]
pub struct NullConfig {
    pub sampler: NullSampler,
    pub n_realizations: usize,
    /// Family used both to refit each realization and, for the model-based
    /// sampler, to decide whether counts are gamma–Poisson mixed.
    pub model: ModelKind,
    pub binarize: bool,
    pub fit: FitConfig,
    pub infer: InferConfig,
    pub seed: u64,
}

impl Default for NullConfig {
    fn default() -> Self {
        NullConfig {
            sampler: NullSampler::ModelBased,
            n_realizations: 100,
            model: ModelKind::Poisson,
            binarize: true,
            fit: FitConfig::default(),
            infer: InferConfig::default(),
            seed: 0,
        }
    }
}

/// Unbiased integer in `0..bound` (Lemire's multiply–shift with rejection).
pub(crate) fn uniform_u32(rng: &mut ChaCha12Rng, bound: u32) -> u32 {
    use rand_chacha::rand_core::RngCore;
    debug_assert!(bound > 0);
    let threshold = bound.wrapping_neg() % bound;
    loop {
        let wide = u64::from(rng.next_u32()) * u64::from(bound);
        if (wide as u32) >= threshold {
            return (wide >> 32) as u32;
        }
    }
}

fn poisson_draw(rng: &mut ChaCha12Rng, lambda: f64) -> Result<usize, CoreError> {
    if lambda <= 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(lambda)
        .map_err(|_| invalid(alloc::format!("invalid Poisson rate {lambda}")))?;
    Ok(d.sample(rng) as usize)
}

fn positions(
    mask: &BrainMask,
    n: usize,
    distinct: bool,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<[f64; 3]>, CoreError> {
    let n_vox = mask.n_voxels();
    if distinct && n > n_vox {
        return Err(invalid(alloc::format!(
            "cannot place {n} distinct foci in a {n_vox}-voxel mask"
        )));
    }
    let mut taken: Vec<u32> = Vec::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let r = uniform_u32(rng, n_vox as u32);
        if distinct {
            if taken.contains(&r) {
                continue;
            }
            taken.push(r);
        }
        out.push(mask.voxel_center_mm(mask.voxel_at_rank(r as usize)));
    }
    Ok(out)
}

/// Draw one spatially-null dataset shaped like `template`. `alpha` is the
/// dispersion used by the model-based sampler for a gamma–Poisson count draw;
/// it must be provided exactly when the configured family has one.
pub fn sample_null(
    template: &FociDataset,
    mask: &BrainMask,
    cfg: &NullConfig,
    alpha: Option<f64>,
    rng: &mut ChaCha12Rng,
) -> Result<FociDataset, CoreError> {
    let mixed = cfg.sampler == NullSampler::ModelBased && cfg.model.has_dispersion();
    match (mixed, alpha) {
        (true, None) => {
            return Err(invalid(
                "model-based sampling for a dispersion family needs the fitted alpha",
            ))
        }
        (true, Some(a)) if !(a > 0.0) => {
            return Err(invalid(alloc::format!("dispersion alpha must be positive, got {a}")))
        }
        _ => {}
    }
    let tmpl_counts = build_counts(mask, template, cfg.binarize);
    if tmpl_counts.total <= 0.0 {
        return Err(invalid("template has no in-mask foci"));
    }
    let mut studies = Vec::with_capacity(template.n_studies());
    for (i, study) in template.studies.iter().enumerate() {
        let lambda = tmpl_counts.y_per_study[i];
        let (n, distinct) = match cfg.sampler {
            NullSampler::EmpiricalShuffle => (lambda as usize, true),
            NullSampler::ModelBased => {
                let rate = if mixed {
                    let a = alpha.expect("checked above");
                    if lambda > 0.0 {
                        // mean λ, variance αλ² on the mixing scale, so the
                        // counts come out with variance λ + αλ²
                        let g = Gamma::new(1.0 / a, a * lambda)
                            .map_err(|_| invalid("invalid gamma mixing parameters"))?;
                        g.sample(rng)
                    } else {
                        0.0
                    }
                } else {
                    lambda
                };
                (poisson_draw(rng, rate)?, false)
            }
        };
        studies.push(Study {
            id: study.id.clone(),
            foci_mm: positions(mask, n, distinct, rng)?,
            covariates: study.covariates.clone(),
        });
    }
    FociDataset::new(template.covariate_names.clone(), studies)
}

/// Expected −log₁₀ p order statistics under uniformity: entry k corresponds
/// to the (k+1)-th smallest of n p-values, at −log₁₀((k+1)/(n+1)).
pub fn pp_expected(n: usize) -> Vec<f64> {
    (0..n).map(|k| -m::log10((k + 1) as f64 / (n + 1) as f64)).collect()
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    /// Uniform reference quantiles, −log₁₀ scale, most significant first.
    pub pp_expected: Vec<f64>,
    /// Per-rank mean of the observed −log₁₀ p across used realizations.
    pub pp_mean: Vec<f64>,
    /// pointwise mean ± 1.96 · sd envelope
    pub pp_lo: Vec<f64>,
    pub pp_hi: Vec<f64>,
    /// Mean fraction of voxels with p < 0.05.
    pub fpr_at_05: f64,
    /// Fraction of used realizations where plain BH rejected anything.
    pub frac_invalid_fdr_raw: f64,
    /// Same with the truncation floor applied first.
    pub frac_invalid_fdr_truncated: f64,
    pub n_used: usize,
    pub n_excluded_singular: usize,
    pub n_excluded_unconverged: usize,
    /// Dispersion fitted on the template when the sampler needed one.
    pub alpha_template: Option<f64>,
}

/// Sample, refit and test `cfg.n_realizations` null datasets; summarize how
/// uniform the voxelwise p-values are and how often the FDR step fires.
/// Realizations whose fit is singular or fails to converge are excluded and
/// counted. Bit-identical across runs with the same inputs and seed.
pub fn run_calibration(
    template: &FociDataset,
    mask: &BrainMask,
    x: &CsrMatrix,
    z: &DMat,
    cfg: &NullConfig,
) -> Result<CalibrationResult, CoreError> {
    if cfg.n_realizations == 0 {
        return Err(invalid("calibration needs at least one realization"));
    }
    if x.n_rows != mask.n_voxels() {
        return Err(invalid("design rows do not match mask voxels"));
    }
    if z.n_rows != template.n_studies() {
        return Err(invalid("moderator rows do not match template studies"));
    }
    let alpha_template = if cfg.sampler == NullSampler::ModelBased && cfg.model.has_dispersion() {
        let counts = build_counts(mask, template, cfg.binarize);
        let data = ModelData::new(x, z, &counts)?;
        let tmpl_fit = fit(&data, cfg.model, &cfg.fit)?;
        if !tmpl_fit.converged {
            return Err(invalid("template dispersion fit did not converge"));
        }
        tmpl_fit.params.alpha()
    } else {
        None
    };

    let n_vox = mask.n_voxels();
    let mut sum = vec![0.0f64; n_vox];
    let mut sumsq = vec![0.0f64; n_vox];
    let mut fpr_acc = 0.0f64;
    let mut raw_fired = 0usize;
    let mut trunc_fired = 0usize;
    let mut n_used = 0usize;
    let mut n_singular = 0usize;
    let mut n_unconverged = 0usize;

    let plan = SeedPlan::new(cfg.seed);
    for k in 0..cfg.n_realizations {
        let mut rng = plan.stream("null-realization", k as u64);
        let ds = sample_null(template, mask, cfg, alpha_template, &mut rng)?;
        let counts = build_counts(mask, &ds, cfg.binarize);
        if counts.total <= 0.0 {
            n_unconverged += 1;
            continue;
        }
        let data = ModelData::new(x, z, &counts)?;
        let fitted: FitResult = match fit(&data, cfg.model, &cfg.fit) {
            Ok(f) => f,
            Err(CoreError::SingularInformation { .. }) => {
                n_singular += 1;
                continue;
            }
            Err(_) => {
                n_unconverged += 1;
                continue;
            }
        };
        if fitted.singular {
            n_singular += 1;
            continue;
        }
        if !fitted.converged {
            n_unconverged += 1;
            continue;
        }
        let maps = match homogeneity_test(x, &counts, &fitted, &cfg.infer) {
            Ok(maps) => maps,
            Err(CoreError::SingularInformation { .. }) => {
                n_singular += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut p = maps.p.clone();
        p.sort_unstable_by(|a, b| a.partial_cmp(b).expect("p-values are finite"));
        let mut below = 0usize;
        for (rank, &pv) in p.iter().enumerate() {
            let obs = -m::log10(pv);
            sum[rank] += obs;
            sumsq[rank] += obs * obs;
            if pv < 0.05 {
                below += 1;
            }
        }
        fpr_acc += below as f64 / n_vox as f64;
        if maps.fdr_rejected_raw.iter().any(|&b| b) {
            raw_fired += 1;
        }
        if maps.fdr_rejected.iter().any(|&b| b) {
            trunc_fired += 1;
        }
        n_used += 1;
    }
    if n_used == 0 {
        return Err(invalid("every calibration realization was excluded"));
    }

    let nf = n_used as f64;
    let mut pp_mean = vec![0.0; n_vox];
    let mut pp_lo = vec![0.0; n_vox];
    let mut pp_hi = vec![0.0; n_vox];
    for k in 0..n_vox {
        let mean = sum[k] / nf;
        let var = if n_used > 1 {
            ((sumsq[k] - nf * mean * mean) / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        let half = 1.96 * m::sqrt(var);
        pp_mean[k] = mean;
        pp_lo[k] = mean - half;
        pp_hi[k] = mean + half;
    }
    Ok(CalibrationResult {
        pp_expected: pp_expected(n_vox),
        pp_mean,
        pp_lo,
        pp_hi,
        fpr_at_05: fpr_acc / nf,
        frac_invalid_fdr_raw: raw_fired as f64 / nf,
        frac_invalid_fdr_truncated: trunc_fired as f64 / nf,
        n_used,
        n_excluded_singular: n_singular,
        n_excluded_unconverged: n_unconverged,
        alpha_template,
    })
}
