//! Wald inference on the fitted intensity field, multiplicity control, and
//! contrast tests on the study-level coefficients.
//!
//! The homogeneity question is voxelwise: is the spatial intensity μˣⱼ above
//! the flat rate μ₀ = ΣY/(MN) that would spread the observed foci evenly?
//! Standard errors come from the inverse of the full joint information —
//! taking the β block of the inverse (not the inverse of the β block) is what
//! propagates the uncertainty of γ and α into the spatial map. On the μ scale
//! the delta method gives se(μˣⱼ) = μˣⱼ·se(ηˣⱼ), stored exactly as that
//! product.
//!
//! A fit whose information matrix is singular gets no standard errors at all:
//! regularizing it would silently shrink the very uncertainty this map
//! exists to report.

use alloc::vec;
use alloc::vec::Vec;

use crate::counts::CountData;
use crate::error::{invalid, CoreError};
use crate::linalg::{Cholesky, DMat};
use crate::math as m;
use crate::model::ModelKind;
use crate::optim::FitResult;
use crate::sparse::CsrMatrix;
use crate::special;

/// Smallest p-value we report; keeps p in (0, 1] even when the normal tail
/// underflows.
const P_MIN: f64 = 1e-300;

pub const DEFAULT_FDR_Q: f64 = 0.05;
pub const DEFAULT_TRUNCATION_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sidedness {
    /// Upper tail only: excess activation over the homogeneous rate.
    OneSidedExcess,
    TwoSided,
}

#[derive(Debug, Clone)]
pub struct InferConfig {
    pub sidedness: Sidedness,
    /// FDR level for the rejection mask.
    pub q: f64,
    /// p-values below this are raised to it before the FDR pass.
    pub truncation_floor: f64,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            sidedness: Sidedness::OneSidedExcess,
            q: DEFAULT_FDR_Q,
            truncation_floor: DEFAULT_TRUNCATION_FLOOR,
        }
    }
}

/// Voxelwise test maps from one fit. Vectors are indexed by in-mask rank.
#[derive(Debug, Clone)]
pub struct StatMapSet {
    /// η̂ˣⱼ = xⱼᵀβ̂.
    pub eta_x: Vec<f64>,
    /// μ̂ˣⱼ = exp(η̂ˣⱼ).
    pub mu_x: Vec<f64>,
    pub se_eta: Vec<f64>,
    /// Delta-method scale: se_mu[j] = mu_x[j] * se_eta[j], exactly.
    pub se_mu: Vec<f64>,
    /// Wald statistic on the log scale, (η̂ˣⱼ − η₀)/se_eta[j]; the reported
    /// default (numerically stabler than the μ-scale version).
    pub z: Vec<f64>,
    /// Wald statistic on the intensity scale, (μ̂ˣⱼ − μ₀)/se_mu[j].
    pub z_mu: Vec<f64>,
    pub p: Vec<f64>,
    /// max(p, truncation_floor).
    pub p_truncated: Vec<f64>,
    /// Step-up FDR mask on the truncated p-values (the production rule).
    pub fdr_rejected: Vec<bool>,
    /// Step-up FDR mask on the raw p-values, kept for diagnostics.
    pub fdr_rejected_raw: Vec<bool>,
    /// Homogeneous rate ΣY/(MN) and its log.
    pub mu0: f64,
    pub eta0: f64,
}

/// Covariance of the fitted parameter vector [β…, γ…, (ln α)]: the inverse of
/// the information matrix, scaled by the Pearson dispersion for quasi-Poisson
/// fits. Refuses singular fits outright.
pub fn parameter_covariance(fit: &FitResult) -> Result<DMat, CoreError> {
    if fit.singular {
        return Err(CoreError::SingularInformation { condition: fit.info_condition });
    }
    let mut cov = Cholesky::new(&fit.info)?.inverse();
    if fit.kind == ModelKind::QuasiPoisson {
        let theta = fit.dispersion.ok_or_else(|| {
            invalid("quasi-Poisson fit carries no dispersion estimate; refit before inference")
        })?;
        for i in 0..cov.n_rows {
            for j in 0..cov.n_cols {
                cov[(i, j)] *= theta;
            }
        }
    }
    Ok(cov)
}

/// Wald test of spatial homogeneity, H₀: μˣⱼ = μ₀ for every voxel, with
/// μ₀ = ΣY/(MN) the rate that spreads all foci evenly.
pub fn homogeneity_test(
    x: &CsrMatrix,
    counts: &CountData,
    fit: &FitResult,
    config: &InferConfig,
) -> Result<StatMapSet, CoreError> {
    if x.n_rows != counts.n_voxels {
        return Err(invalid("design and counts disagree on the voxel count"));
    }
    if fit.params.beta.len() != x.n_cols {
        return Err(invalid("fit has a different spatial basis than this design"));
    }
    let n = x.n_rows;
    let p = x.n_cols;
    let cov = parameter_covariance(fit)?;
    let cov_beta = cov.sub_block(&(0..p).collect::<Vec<_>>());

    let mu0 = counts.total / (counts.n_studies as f64 * counts.n_voxels as f64);
    let eta0 = m::ln(mu0);
    let eta_x = x.matvec(&fit.params.beta);
    let mut mu_x = vec![0.0; n];
    let mut se_eta = vec![0.0; n];
    let mut se_mu = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut z_mu = vec![0.0; n];
    let mut pvals = vec![0.0; n];
    let mut p_truncated = vec![0.0; n];
    for j in 0..n {
        mu_x[j] = m::exp(eta_x[j]);
        let var = x.row_quadform(j, &cov_beta).max(0.0);
        se_eta[j] = m::sqrt(var);
        se_mu[j] = mu_x[j] * se_eta[j];
        z[j] = (eta_x[j] - eta0) / se_eta[j];
        z_mu[j] = (mu_x[j] - mu0) / se_mu[j];
        let praw = match config.sidedness {
            Sidedness::OneSidedExcess => special::norm_sf(z[j]),
            Sidedness::TwoSided => 2.0 * special::norm_sf(m::abs(z[j])),
        };
        pvals[j] = praw.max(P_MIN);
        p_truncated[j] = pvals[j].max(config.truncation_floor);
    }
    let fdr = bh_fdr(&pvals, config.q, config.truncation_floor)?;
    Ok(StatMapSet {
        eta_x,
        mu_x,
        se_eta,
        se_mu,
        z,
        z_mu,
        p: pvals,
        p_truncated,
        fdr_rejected: fdr.truncated.rejected,
        fdr_rejected_raw: fdr.raw.rejected,
        mu0,
        eta0,
    })
}

/// One Benjamini–Hochberg pass: rejection mask and step-up adjusted p-values.
#[derive(Debug, Clone)]
pub struct FdrDecision {
    pub rejected: Vec<bool>,
    pub adjusted_p: Vec<f64>,
    pub n_rejected: usize,
}

/// Raw and truncated FDR decisions over the same p-vector.
#[derive(Debug, Clone)]
pub struct FdrOutcome {
    pub raw: FdrDecision,
    /// Decisions after raising every p below `floor` to `floor`.
    pub truncated: FdrDecision,
    pub q: f64,
    pub floor: f64,
}

/// Benjamini–Hochberg step-up control at level `q`, run twice: once on the
/// raw p-values and once after truncating them below at `floor`. Truncation
/// caps how extreme any single p-value can look, which is what keeps the FDR
/// decision honest when tiny p-values are artifacts of a poorly estimated
/// tail rather than signal.
pub fn bh_fdr(p: &[f64], q: f64, floor: f64) -> Result<FdrOutcome, CoreError> {
    if p.is_empty() {
        return Err(invalid("FDR over an empty p-vector"));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid(alloc::format!("FDR level q = {q} not in (0,1)")));
    }
    if !(floor >= 0.0 && floor < 1.0) {
        return Err(invalid(alloc::format!("truncation floor {floor} not in [0,1)")));
    }
    for &v in p {
        if !(v > 0.0 && v <= 1.0) {
            return Err(invalid(alloc::format!("p-value {v} outside (0,1]")));
        }
    }
    let truncated: Vec<f64> = p.iter().map(|&v| v.max(floor)).collect();
    Ok(FdrOutcome {
        raw: bh_step_up(p, q),
        truncated: bh_step_up(&truncated, q),
        q,
        floor,
    })
}

fn bh_step_up(p: &[f64], q: f64) -> FdrDecision {
    let n = p.len();
    let nf = n as f64;
    let mut order: Vec<usize> = (0..n).collect();
    // ties broken by index so the pass is deterministic
    order.sort_unstable_by(|&a, &b| p[a].partial_cmp(&p[b]).expect("finite p").then(a.cmp(&b)));
    let mut k_max = 0usize; // number of rejections
    for (k, &idx) in order.iter().enumerate() {
        if p[idx] <= q * (k + 1) as f64 / nf {
            k_max = k + 1;
        }
    }
    let mut rejected = vec![false; n];
    for &idx in &order[..k_max] {
        rejected[idx] = true;
    }
    let mut adjusted_p = vec![0.0; n];
    let mut running = 1.0f64;
    for k in (0..n).rev() {
        let idx = order[k];
        running = running.min(p[idx] * nf / (k + 1) as f64);
        adjusted_p[idx] = running;
    }
    FdrDecision { rejected, adjusted_p, n_rejected: k_max }
}

#[derive(Debug, Clone)]
pub struct GlhResult {
    pub contrast: DMat,
    /// (Cγ̂)ᵀ (C Cov(γ̂) Cᵀ)⁻¹ (Cγ̂), asymptotically χ² with `df` degrees.
    pub stat: f64,
    pub df: usize,
    pub p: f64,
    /// Signed Wald statistic, single-row contrasts only; z_signed² = stat.
    pub z_signed: Option<f64>,
}

/// General linear hypothesis H₀: Cγ = 0 on the study-level coefficients.
pub fn glh_test(fit: &FitResult, contrast: &DMat) -> Result<GlhResult, CoreError> {
    let p = fit.params.beta.len();
    let r = fit.params.gamma.len();
    if r == 0 {
        return Err(invalid("GLH needs a fitted study-level coefficient; this fit has none"));
    }
    if contrast.n_cols != r {
        return Err(invalid(alloc::format!(
            "contrast has {} columns but the fit has {r} study-level coefficients",
            contrast.n_cols
        )));
    }
    let m_rows = contrast.n_rows;
    if m_rows == 0 || m_rows > r {
        return Err(invalid(alloc::format!(
            "contrast must have between 1 and {r} rows, found {m_rows}"
        )));
    }
    // full row rank check on C itself, so a dependent contrast is reported as
    // the caller's mistake rather than as a singular covariance
    let gram = contrast.matmul(&contrast.transpose());
    if Cholesky::new(&gram).is_err() {
        return Err(invalid("contrast rows are linearly dependent"));
    }
    let cov = parameter_covariance(fit)?;
    let cov_gamma = cov.sub_block(&(p..p + r).collect::<Vec<_>>());
    let c_gamma = contrast.matvec(&fit.params.gamma);
    let s = contrast.matmul(&cov_gamma).matmul(&contrast.transpose());
    let ch = Cholesky::new(&s)?;
    let solved = ch.solve(&c_gamma);
    let stat: f64 = c_gamma.iter().zip(&solved).map(|(a, b)| a * b).sum();
    let stat = stat.max(0.0);
    let z_signed = (m_rows == 1).then(|| c_gamma[0] / m::sqrt(s[(0, 0)]));
    Ok(GlhResult {
        contrast: contrast.clone(),
        stat,
        df: m_rows,
        p: special::chi2_sf(stat, m_rows as f64),
        z_signed,
    })
}
