//! Model comparison: likelihood-ratio tests against the Poisson reduction,
//! information criteria, and moment-based misfit diagnostics that also cover
//! the quasi-Poisson fit (which has no likelihood to compare).
//!
//! The two dispersion families nest the Poisson model at α = 0, but they live
//! on different observation scales: the clustered family is an exact cell
//! model, so its Poisson reduction is the ordinary factorized log-likelihood,
//! while the moment-matched family models the per-voxel sums, so its
//! reduction is the Poisson law of those sums. Using the matching reduction
//! on each side is what makes the LRT statistics nonnegative at the optimum
//! instead of drifting by the (constant) change of sample space.
//!
//! Because α = 0 sits on the boundary of the parameter space, the χ²₁
//! reference is conservative; the exact asymptotic reference is an equal
//! mixture of a point mass at zero and χ²₁. Both p-values are reported.

use alloc::vec::Vec;

use crate::error::{invalid, CoreError};
use crate::mask::BrainMask;
use crate::model::{ModelData, ModelKind};
use crate::optim::FitResult;
use crate::special;

#[derive(Debug, Clone, Copy)]
pub struct LrtResult {
    /// −2(l₀ − l₁), clamped below at 0.
    pub stat: f64,
    /// Upper tail of χ²₁ — the conventional reference.
    pub p_chi2: f64,
    /// Upper tail of the boundary-corrected ½δ₀ + ½χ²₁ mixture.
    pub p_mixture: f64,
    /// The raw statistic was negative (optimizer noise) and was clamped.
    pub clamped: bool,
}

/// Likelihood-ratio test of a dispersion family against its own Poisson
/// reduction (α = 0) on the same data.
pub fn lrt_dispersion_vs_poisson(
    data: &ModelData<'_>,
    poisson: &FitResult,
    full: &FitResult,
) -> Result<LrtResult, CoreError> {
    if poisson.kind != ModelKind::Poisson {
        return Err(invalid("the nested fit must be the Poisson model"));
    }
    if !poisson.converged || !full.converged {
        return Err(invalid("likelihood-ratio test requires both fits to have converged"));
    }
    let l_null = match full.kind {
        // exact cell model: the reduction is the factorized Poisson loglik
        ModelKind::ClusteredNegBinomial => poisson.loglik,
        // voxel-sum model: the reduction is the Poisson law of the sums,
        // evaluated at the Poisson optimum (which also maximizes it, because
        // the design rows sum to one)
        ModelKind::NegBinomial => {
            let f = data.factors(&poisson.params)?;
            data.voxel_sum_poisson_loglik(&f)
        }
        other => {
            return Err(invalid(alloc::format!(
                "the full fit must be a dispersion family, found {}",
                other.name()
            )))
        }
    };
    let raw = -2.0 * (l_null - full.loglik);
    let clamped = raw < 0.0;
    let stat = raw.max(0.0);
    let p_chi2 = special::chi2_sf(stat, 1.0);
    let p_mixture = if stat <= 0.0 { 1.0 } else { 0.5 * special::chi2_sf(stat, 1.0) };
    Ok(LrtResult { stat, p_chi2, p_mixture, clamped })
}

/// AIC and BIC from a likelihood fit. `n_obs` is the number of observations
/// entering the BIC penalty; see `default_n_obs` for the convention.
pub fn information_criteria(fit: &FitResult, n_obs: usize) -> Result<(f64, f64), CoreError> {
    if fit.kind == ModelKind::QuasiPoisson {
        return Err(invalid(
            "quasi-Poisson is fit by moments and has no likelihood; \
             information criteria are undefined",
        ));
    }
    if n_obs == 0 {
        return Err(invalid("information criteria need n_obs >= 1"));
    }
    let k = n_params(fit) as f64;
    let aic = 2.0 * k - 2.0 * fit.loglik;
    let bic = k * crate::math::ln(n_obs as f64) - 2.0 * fit.loglik;
    Ok((aic, bic))
}

/// Observation count for the BIC penalty: the factorized likelihoods run over
/// the N voxels, except the clustered family whose joint observations are the
/// M studies. The mismatch is deliberate and surfaced per row in the report.
pub fn default_n_obs(kind: ModelKind, n_voxels: usize, n_studies: usize) -> usize {
    match kind {
        ModelKind::ClusteredNegBinomial => n_studies,
        _ => n_voxels,
    }
}

fn n_params(fit: &FitResult) -> usize {
    fit.kind.n_params(fit.params.beta.len(), fit.params.gamma.len())
}

#[derive(Debug, Clone, Copy)]
pub struct BiasMetrics {
    /// Relative error of the fitted mean per-study intensity total against
    /// the observed mean per-study foci count.
    pub sum_intensity: f64,
    /// Per-axis relative error of the intensity-weighted coordinate spread
    /// against the observed foci spread (x, y, z).
    pub std_xyz: [f64; 3],
    /// Mean, over voxels with foci and nonzero empirical variance, of the
    /// relative error in the model-implied per-study count variance.
    pub voxel_variance: f64,
}

/// Moment diagnostics comparing a fitted intensity field with the raw counts;
/// defined for all four families, including the likelihood-free quasi fit.
pub fn bias_metrics(
    data: &ModelData<'_>,
    mask: &BrainMask,
    fit: &FitResult,
) -> Result<BiasMetrics, CoreError> {
    let c = data.counts;
    if mask.n_voxels() != c.n_voxels {
        return Err(invalid("mask and counts disagree on the voxel count"));
    }
    if c.n_studies < 2 {
        return Err(invalid("bias diagnostics need at least two studies"));
    }
    if c.total <= 0.0 {
        return Err(invalid("bias diagnostics need at least one in-mask focus"));
    }
    let f = data.factors(&fit.params)?;
    let m_st = c.n_studies as f64;

    // (a) fitted per-study total Σμˣ·mean(μᶻ) against the observed F̄ = T/M
    let f_bar = c.total / m_st;
    let sum_intensity = (f.s1x * (f.s1z / m_st) - f_bar) / f_bar;

    // (b) intensity-weighted vs foci-weighted coordinate spread, per axis
    let mut std_xyz = [0.0; 3];
    for axis in 0..3 {
        let coord = |j: usize| {
            let v = mask.voxel_at_rank(j);
            mask.voxel_center_mm(v)[axis]
        };
        let sd_model = weighted_sd(c.n_voxels, &coord, |j| f.mu_x[j]);
        let sd_foci = weighted_sd(c.n_voxels, &coord, |j| c.y_per_voxel[j]);
        std_xyz[axis] = if sd_foci == 0.0 && sd_model == 0.0 {
            0.0
        } else if sd_foci == 0.0 {
            return Err(invalid(alloc::format!(
                "foci have no spread along axis {axis}; spread bias undefined"
            )));
        } else {
            (sd_model - sd_foci) / sd_foci
        };
    }

    // (c) model-implied vs empirical per-study count variance at foci voxels
    let dispersion = match fit.kind {
        ModelKind::QuasiPoisson => fit
            .dispersion
            .ok_or_else(|| invalid("quasi-Poisson fit carries no dispersion estimate"))?,
        _ => 1.0,
    };
    let alpha = fit.params.alpha().unwrap_or(0.0);
    let mut acc = 0.0;
    let mut n_used = 0usize;
    for j in 0..c.n_voxels {
        let y = c.y_per_voxel[j];
        if y == 0.0 {
            continue;
        }
        let s2 = (c.y_sq_per_voxel[j] - y * y / m_st) / (m_st - 1.0);
        if s2 <= 0.0 {
            // every study saw the same count here; no variance to compare
            continue;
        }
        let mean_per_study = f.mu_x[j] * f.s1z / m_st;
        let var_model = match fit.kind {
            ModelKind::Poisson => mean_per_study,
            ModelKind::QuasiPoisson => dispersion * mean_per_study,
            ModelKind::NegBinomial | ModelKind::ClusteredNegBinomial => {
                mean_per_study + alpha * f.mu_x[j] * f.mu_x[j] * f.s2z / m_st
            }
        };
        acc += (var_model - s2) / s2;
        n_used += 1;
    }
    if n_used == 0 {
        return Err(invalid(
            "no voxel has foci with nonzero between-study variance; \
             variance bias undefined",
        ));
    }
    Ok(BiasMetrics {
        sum_intensity,
        std_xyz,
        voxel_variance: acc / n_used as f64,
    })
}

fn weighted_sd(n: usize, coord: &impl Fn(usize) -> f64, weight: impl Fn(usize) -> f64) -> f64 {
    let mut wsum = 0.0;
    let mut mean = 0.0;
    for j in 0..n {
        let w = weight(j);
        if w > 0.0 {
            wsum += w;
            mean += w * coord(j);
        }
    }
    mean /= wsum;
    let mut var = 0.0;
    for j in 0..n {
        let w = weight(j);
        if w > 0.0 {
            let d = coord(j) - mean;
            var += w * d * d;
        }
    }
    crate::math::sqrt(var / wsum)
}

/// One comparison row. Likelihood columns are `None` for the quasi fit.
#[derive(Debug, Clone)]
pub struct ModelRow {
    pub kind: ModelKind,
    pub loglik: Option<f64>,
    /// Likelihood scale: cell counts vs per-voxel sums. AIC/BIC are
    /// comparable only within a scale.
    pub loglik_scale: &'static str,
    pub k: usize,
    pub n_obs: usize,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
    pub alpha: Option<f64>,
    pub dispersion: Option<f64>,
    pub converged: bool,
    pub singular: bool,
    pub bias: BiasMetrics,
}

#[derive(Debug, Clone)]
pub struct SelectionReport {
    pub rows: Vec<ModelRow>,
    pub lrt_nb_vs_poisson: Option<LrtResult>,
    pub lrt_clustered_vs_poisson: Option<LrtResult>,
}

/// Assemble the full comparison across whatever fits are supplied. LRT rows
/// appear when the Poisson fit and the corresponding dispersion fit are both
/// present and converged.
pub fn selection_report(
    data: &ModelData<'_>,
    mask: &BrainMask,
    fits: &[FitResult],
) -> Result<SelectionReport, CoreError> {
    let mut rows = Vec::with_capacity(fits.len());
    for fit in fits {
        let n_obs = default_n_obs(fit.kind, data.counts.n_voxels, data.counts.n_studies);
        let (loglik, aic, bic) = if fit.kind == ModelKind::QuasiPoisson {
            (None, None, None)
        } else {
            let (aic, bic) = information_criteria(fit, n_obs)?;
            (Some(fit.loglik), Some(aic), Some(bic))
        };
        rows.push(ModelRow {
            kind: fit.kind,
            loglik,
            loglik_scale: match fit.kind {
                ModelKind::NegBinomial => "voxel_sums",
                _ => "cells",
            },
            k: n_params(fit),
            n_obs,
            aic,
            bic,
            alpha: fit.params.alpha(),
            dispersion: fit.dispersion,
            converged: fit.converged,
            singular: fit.singular,
            bias: bias_metrics(data, mask, fit)?,
        });
    }
    let find = |kind: ModelKind| fits.iter().find(|f| f.kind == kind && f.converged);
    let poisson = find(ModelKind::Poisson);
    let lrt_for = |full_kind: ModelKind| -> Result<Option<LrtResult>, CoreError> {
        match (poisson, find(full_kind)) {
            (Some(p), Some(f)) => Ok(Some(lrt_dispersion_vs_poisson(data, p, f)?)),
            _ => Ok(None),
        }
    };
    Ok(SelectionReport {
        rows,
        lrt_nb_vs_poisson: lrt_for(ModelKind::NegBinomial)?,
        lrt_clustered_vs_poisson: lrt_for(ModelKind::ClusteredNegBinomial)?,
    })
}
