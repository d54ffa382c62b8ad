//! On-disk result schemas shared between commands.
//!
//! `fit.json` is the handoff between `fit` and everything downstream: it
//! carries the fitted parameters, the convergence diagnostics and the full
//! information matrix, plus the data/design fingerprint (counts, basis size,
//! moderator constants) that later commands verify before trusting the
//! parameters against a freshly rebuilt design. All floats are serialized in
//! shortest round-trip form, so a rerun writes the same bytes.

use std::path::Path;

use cbmr_core::linalg::DMat;
use cbmr_core::model::{ModelKind, ModelParams};
use cbmr_core::optim::FitResult;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{missing_artifact, validation, CliError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitArtifact {
    pub family: String,
    pub binarize: bool,
    pub seed: u64,
    pub spacing_mm: f64,
    pub prune_threshold: f64,

    pub n_voxels: usize,
    pub n_studies: usize,
    pub n_basis: usize,
    pub n_moderators: usize,
    pub total_foci: f64,
    pub n_foci_outside_mask: usize,
    pub n_foci_merged: usize,
    /// Fewer than 200 foci: estimates from so little data are fragile.
    pub low_foci_warning: bool,

    pub moderators: Vec<ModeratorInfo>,

    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub log_alpha: Option<f64>,
    pub alpha: Option<f64>,
    /// Pearson dispersion θ̂ (quasi-Poisson only).
    pub dispersion: Option<f64>,
    pub pearson_x2: Option<f64>,

    pub loglik: f64,
    pub n_iter: usize,
    pub converged: bool,
    pub grad_sup_norm: f64,
    pub info_condition: f64,
    pub singular: bool,
    pub n_clamped: usize,
    pub fallback_used: bool,

    /// Information matrix at the optimum, row-major, order [β…, γ…, (ln α)].
    pub info: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeratorInfo {
    /// Term label as used in reports (e.g. `sqrt(sample_size)`).
    pub name: String,
    pub column: String,
    pub transform: String,
    /// Mean subtracted on the transformed scale.
    pub center: f64,
    /// Divisor applied after centering.
    pub scale: f64,
}

impl FitArtifact {
    pub fn model_kind(&self) -> Result<ModelKind, CliError> {
        ModelKind::from_name(&self.family)
            .ok_or_else(|| validation(format!("fit.json names unknown family {:?}", self.family)))
    }

    /// Rebuild the optimizer result this artifact was written from.
    pub fn to_fit_result(&self) -> Result<FitResult, CliError> {
        let kind = self.model_kind()?;
        let dim = kind.n_params(self.beta.len(), self.gamma.len());
        if self.info.len() != dim * dim {
            return Err(validation(format!(
                "fit.json information matrix has {} entries, expected {dim}×{dim}",
                self.info.len()
            )));
        }
        let mut info = DMat::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                info[(i, j)] = self.info[i * dim + j];
            }
        }
        Ok(FitResult {
            kind,
            params: ModelParams {
                beta: self.beta.clone(),
                gamma: self.gamma.clone(),
                log_alpha: self.log_alpha,
            },
            loglik: self.loglik,
            n_iter: self.n_iter,
            converged: self.converged,
            grad_sup_norm: self.grad_sup_norm,
            info,
            info_condition: self.info_condition,
            singular: self.singular,
            n_clamped: self.n_clamped,
            fallback_used: self.fallback_used,
            dispersion: self.dispersion,
            pearson_x2: self.pearson_x2,
            low_foci: self.low_foci_warning,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferArtifact {
    pub mu0: f64,
    pub eta0: f64,
    pub sidedness: String,
    pub q: f64,
    pub truncation_floor: f64,
    pub n_rejected_raw: usize,
    pub n_rejected_truncated: usize,
    pub n_voxels: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlhArtifact {
    pub contrast: Vec<Vec<f64>>,
    pub moderators: Vec<String>,
    pub stat: f64,
    pub df: usize,
    pub p: f64,
    pub z_signed: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AleArtifact {
    pub fwhm_mm: f64,
    pub n_iter: usize,
    pub n_studies: usize,
    pub n_foci_outside_mask: usize,
    pub q: f64,
    pub n_rejected_fdr: usize,
    pub max_ale: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    pub sampler: String,
    pub family: String,
    pub n_realizations: usize,
    pub n_used: usize,
    pub n_excluded_singular: usize,
    pub n_excluded_unconverged: usize,
    pub fpr_at_05: f64,
    pub frac_invalid_fdr_raw: f64,
    pub frac_invalid_fdr_truncated: f64,
    pub alpha_template: Option<f64>,
    pub seed: u64,
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| validation(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| validation(format!("cannot write {}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path, produced_by: &str) -> Result<T, CliError> {
    if !path.exists() {
        return Err(missing_artifact(path, produced_by));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| validation(format!("{}: {e}", path.display())))
}
