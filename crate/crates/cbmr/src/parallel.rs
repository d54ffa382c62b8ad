//! Thread-parallel calibration driver.
//!
//! Each Monte Carlo realization owns a named RNG substream and is a pure
//! function of (template, design, config, realization index), so realizations
//! can run on any thread in any order. The reduction then folds the
//! per-realization summaries in index order with exactly the arithmetic of
//! the single-threaded core routine — same sums, same order — which makes the
//! output bit-identical to `cbmr_core::nullsim::run_calibration` no matter
//! how many threads run. A test pins that equivalence.

use cbmr_core::counts::build_counts;
use cbmr_core::dataset::FociDataset;
use cbmr_core::error::CoreError;
use cbmr_core::infer::homogeneity_test;
use cbmr_core::linalg::DMat;
use cbmr_core::mask::BrainMask;
use cbmr_core::model::ModelData;
use cbmr_core::nullsim::{sample_null, pp_expected, CalibrationResult, NullConfig, NullSampler};
use cbmr_core::optim::fit;
use cbmr_core::rng::SeedPlan;
use cbmr_core::sparse::CsrMatrix;
use rayon::prelude::*;

enum Realization {
    Used {
        /// −log₁₀ p per rank, most significant last (ascending p order).
        neglog_p: Vec<f64>,
        below_05_frac: f64,
        raw_fired: bool,
        trunc_fired: bool,
    },
    Singular,
    Unconverged,
}

fn one_realization(
    template: &FociDataset,
    mask: &BrainMask,
    x: &CsrMatrix,
    z: &DMat,
    cfg: &NullConfig,
    alpha_template: Option<f64>,
    plan: &SeedPlan,
    k: usize,
) -> Result<Realization, CoreError> {
    let mut rng = plan.stream("null-realization", k as u64);
    let ds = sample_null(template, mask, cfg, alpha_template, &mut rng)?;
    let counts = build_counts(mask, &ds, cfg.binarize);
    if counts.total <= 0.0 {
        return Ok(Realization::Unconverged);
    }
    let data = ModelData::new(x, z, &counts)?;
    let fitted = match fit(&data, cfg.model, &cfg.fit) {
        Ok(f) => f,
        Err(CoreError::SingularInformation { .. }) => return Ok(Realization::Singular),
        Err(_) => return Ok(Realization::Unconverged),
    };
    if fitted.singular {
        return Ok(Realization::Singular);
    }
    if !fitted.converged {
        return Ok(Realization::Unconverged);
    }
    let maps = match homogeneity_test(x, &counts, &fitted, &cfg.infer) {
        Ok(maps) => maps,
        Err(CoreError::SingularInformation { .. }) => return Ok(Realization::Singular),
        Err(e) => return Err(e),
    };
    let mut p = maps.p;
    p.sort_unstable_by(|a, b| a.partial_cmp(b).expect("p-values are finite"));
    let below = p.iter().take_while(|&&pv| pv < 0.05).count();
    let neglog_p = p.into_iter().map(|pv| -pv.log10()).collect();
    Ok(Realization::Used {
        neglog_p,
        below_05_frac: below as f64 / mask.n_voxels() as f64,
        raw_fired: maps.fdr_rejected_raw.iter().any(|&b| b),
        trunc_fired: maps.fdr_rejected.iter().any(|&b| b),
    })
}

pub fn run_calibration_parallel(
    template: &FociDataset,
    mask: &BrainMask,
    x: &CsrMatrix,
    z: &DMat,
    cfg: &NullConfig,
) -> Result<CalibrationResult, CoreError> {
    if cfg.n_realizations == 0 {
        return Err(CoreError::Invalid("calibration needs at least one realization".into()));
    }
    if x.n_rows != mask.n_voxels() {
        return Err(CoreError::Invalid("design rows do not match mask voxels".into()));
    }
    if z.n_rows != template.n_studies() {
        return Err(CoreError::Invalid("moderator rows do not match template studies".into()));
    }
    let alpha_template = if cfg.sampler == NullSampler::ModelBased && cfg.model.has_dispersion() {
        let counts = build_counts(mask, template, cfg.binarize);
        let data = ModelData::new(x, z, &counts)?;
        let tmpl_fit = fit(&data, cfg.model, &cfg.fit)?;
        if !tmpl_fit.converged {
            return Err(CoreError::Invalid("template dispersion fit did not converge".into()));
        }
        tmpl_fit.params.alpha()
    } else {
        None
    };

    let plan = SeedPlan::new(cfg.seed);
    let realizations: Vec<Result<Realization, CoreError>> = (0..cfg.n_realizations)
        .into_par_iter()
        .map(|k| one_realization(template, mask, x, z, cfg, alpha_template, &plan, k))
        .collect();

    // fold in realization order so floating-point sums are thread-invariant
    let n_vox = mask.n_voxels();
    let mut sum = vec![0.0f64; n_vox];
    let mut sumsq = vec![0.0f64; n_vox];
    let mut fpr_acc = 0.0f64;
    let mut raw_fired = 0usize;
    let mut trunc_fired = 0usize;
    let mut n_used = 0usize;
    let mut n_singular = 0usize;
    let mut n_unconverged = 0usize;
    for r in realizations {
        match r? {
            Realization::Used { neglog_p, below_05_frac, raw_fired: rf, trunc_fired: tf } => {
                for (rank, &obs) in neglog_p.iter().enumerate() {
                    sum[rank] += obs;
                    sumsq[rank] += obs * obs;
                }
                fpr_acc += below_05_frac;
                raw_fired += usize::from(rf);
                trunc_fired += usize::from(tf);
                n_used += 1;
            }
            Realization::Singular => n_singular += 1,
            Realization::Unconverged => n_unconverged += 1,
        }
    }
    if n_used == 0 {
        return Err(CoreError::Invalid("every calibration realization was excluded".into()));
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
        let half = 1.96 * var.sqrt();
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
