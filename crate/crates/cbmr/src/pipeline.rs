//! The seven analysis commands.
//!
//! `fit` estimates the model and freezes everything downstream commands need
//! into `fit.json`; `infer`, `glh` and `compare` consume artifacts from
//! earlier commands and refuse to run when one is missing or was produced
//! under different settings (the data and design are rebuilt from the config
//! and cross-checked against the artifact's fingerprint rather than trusted
//! blindly). `select`, `simulate-null` and `ale` are self-contained. Every
//! command writes its files with deterministic bytes.

use std::fmt::Write as _;

use cbmr_core::ale::{ale_null_test, dice};
use cbmr_core::counts::{build_counts, CountData};
use cbmr_core::dataset::{build_moderator_matrix, CovariateTransform, FociDataset, ModeratorMatrix};
use cbmr_core::infer::{bh_fdr, glh_test, homogeneity_test};
use cbmr_core::linalg::DMat;
use cbmr_core::mask::BrainMask;
use cbmr_core::model::{ModelData, ModelKind};
use cbmr_core::nullsim::NullConfig;
use cbmr_core::optim::{fit, FitResult};
use cbmr_core::select::{selection_report, LrtResult, SelectionReport};
use cbmr_core::spline::{build_design, DesignMatrix};
use serde::{Deserialize, Serialize};

use crate::artifacts::{
    read_json, write_json, AleArtifact, CalibrationArtifact, FitArtifact, GlhArtifact,
    InferArtifact, ModeratorInfo,
};
use crate::config::RunConfig;
use crate::error::{missing_artifact, validation, CliError};
use crate::foci::load_foci;
use crate::nifti::{read_mask, read_stat_map, write_stat_map};
use crate::parallel::run_calibration_parallel;
use crate::svg::pp_plot_svg;

/// Everything rebuilt from the config: data, mask, spline design, moderators
/// and counts, ready to assemble into `ModelData`.
pub struct Assembled {
    pub dataset: FociDataset,
    pub mask: BrainMask,
    pub design: DesignMatrix,
    pub moderators: ModeratorMatrix,
    pub counts: CountData,
}

impl Assembled {
    pub fn load(config: &RunConfig) -> Result<Self, CliError> {
        let dataset = load_foci(&config.paths.foci)?;
        let mask = read_mask(&config.paths.mask)?;
        let design = build_design(&mask, config.spline.spacing_mm, config.spline.prune_threshold)?;
        let moderators = build_moderator_matrix(
            &dataset,
            &config.moderator_specs()?,
            config.covariates.standardize,
        )?;
        let counts = build_counts(&mask, &dataset, config.model.binarize);
        if counts.total <= 0.0 {
            return Err(validation(format!(
                "no foci fall inside the mask ({} were outside)",
                counts.n_outside
            )));
        }
        Ok(Assembled { dataset, mask, design, moderators, counts })
    }

    pub fn model_data(&self) -> Result<ModelData<'_>, CliError> {
        Ok(ModelData::new(&self.design.x, &self.moderators.z, &self.counts)?)
    }
}

fn ensure_output_dir(config: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&config.paths.output_dir).map_err(|e| {
        validation(format!(
            "cannot create output dir {}: {e}",
            config.paths.output_dir.display()
        ))
    })
}

fn warn_fit_quality(fit: &FitResult) {
    if fit.low_foci {
        eprintln!(
            "warning: fewer than 200 foci in the mask; estimates at this scale are unstable"
        );
    }
    if !fit.converged {
        eprintln!(
            "warning: fit did not converge (gradient sup-norm {:.3e} after {} iterations)",
            fit.grad_sup_norm, fit.n_iter
        );
    }
    if fit.singular {
        eprintln!(
            "warning: information matrix is singular (condition {:.3e}); \
             standard errors will be refused",
            fit.info_condition
        );
    }
}

pub fn cmd_fit(config: &RunConfig) -> Result<(), CliError> {
    let kind = config.model_kind()?;
    let asm = Assembled::load(config)?;
    let data = asm.model_data()?;
    let fitted = fit(&data, kind, &config.fit_config())?;
    warn_fit_quality(&fitted);

    ensure_output_dir(config)?;
    let specs = config.moderator_specs()?;
    let moderators = asm
        .moderators
        .names
        .iter()
        .zip(&specs)
        .zip(asm.moderators.centers.iter().zip(&asm.moderators.scales))
        .map(|((name, spec), (center, scale))| ModeratorInfo {
            name: name.clone(),
            column: spec.column.clone(),
            transform: match spec.transform {
                CovariateTransform::Identity => "none".to_string(),
                CovariateTransform::Sqrt => "sqrt".to_string(),
            },
            center: *center,
            scale: *scale,
        })
        .collect();
    let artifact = FitArtifact {
        family: kind.name().to_string(),
        binarize: config.model.binarize,
        seed: config.seed,
        spacing_mm: config.spline.spacing_mm,
        prune_threshold: config.spline.prune_threshold,
        n_voxels: asm.counts.n_voxels,
        n_studies: asm.counts.n_studies,
        n_basis: asm.design.n_bases(),
        n_moderators: asm.moderators.n_terms(),
        total_foci: asm.counts.total,
        n_foci_outside_mask: asm.counts.n_outside,
        n_foci_merged: asm.counts.n_merged,
        low_foci_warning: fitted.low_foci,
        moderators,
        beta: fitted.params.beta.clone(),
        gamma: fitted.params.gamma.clone(),
        log_alpha: fitted.params.log_alpha,
        alpha: fitted.params.alpha(),
        dispersion: fitted.dispersion,
        pearson_x2: fitted.pearson_x2,
        loglik: fitted.loglik,
        n_iter: fitted.n_iter,
        converged: fitted.converged,
        grad_sup_norm: fitted.grad_sup_norm,
        info_condition: fitted.info_condition,
        singular: fitted.singular,
        n_clamped: fitted.n_clamped,
        fallback_used: fitted.fallback_used,
        info: fitted.info.as_slice().to_vec(),
    };
    write_json(&artifact, &config.output_path("fit.json"))?;

    let eta_x = asm.design.x.matvec(&fitted.params.beta);
    let mu_x: Vec<f64> = eta_x.iter().map(|&e| e.exp()).collect();
    write_stat_map(&eta_x, &asm.mask, &config.output_path("eta_x.nii.gz"))?;
    write_stat_map(&mu_x, &asm.mask, &config.output_path("mu_x.nii.gz"))?;

    println!(
        "fit: {} on {} studies / {} voxels ({} foci), loglik {:.6}, {} iterations, converged: {}",
        kind.name(),
        asm.counts.n_studies,
        asm.counts.n_voxels,
        asm.counts.total,
        fitted.loglik,
        fitted.n_iter,
        fitted.converged,
    );
    Ok(())
}

/// Read `fit.json` and check it was produced under this config and data.
fn load_fit(config: &RunConfig, asm: &Assembled) -> Result<(FitArtifact, FitResult), CliError> {
    let path = config.output_path("fit.json");
    if !path.exists() {
        return Err(missing_artifact(&path, "fit"));
    }
    let artifact: FitArtifact = read_json(&path, "fit")?;
    let kind = config.model_kind()?;
    let mismatch = |field: &str, artifact_val: &dyn std::fmt::Display, config_val: &dyn std::fmt::Display| {
        Err(validation(format!(
            "fit.json was produced with {field} = {artifact_val}, but the config says \
             {config_val}; re-run `cbmr fit` or fix the config"
        )))
    };
    if artifact.family != kind.name() {
        return mismatch("model.family", &artifact.family, &kind.name());
    }
    if artifact.binarize != config.model.binarize {
        return mismatch("model.binarize", &artifact.binarize, &config.model.binarize);
    }
    if artifact.spacing_mm != config.spline.spacing_mm {
        return mismatch("spline.spacing_mm", &artifact.spacing_mm, &config.spline.spacing_mm);
    }
    if artifact.prune_threshold != config.spline.prune_threshold {
        return mismatch(
            "spline.prune_threshold",
            &artifact.prune_threshold,
            &config.spline.prune_threshold,
        );
    }
    if artifact.n_basis != asm.design.n_bases() {
        return mismatch("basis size", &artifact.n_basis, &asm.design.n_bases());
    }
    if artifact.n_voxels != asm.counts.n_voxels {
        return mismatch("mask voxel count", &artifact.n_voxels, &asm.counts.n_voxels);
    }
    if artifact.n_studies != asm.counts.n_studies {
        return mismatch("study count", &artifact.n_studies, &asm.counts.n_studies);
    }
    if artifact.n_moderators != asm.moderators.n_terms() {
        return mismatch("moderator count", &artifact.n_moderators, &asm.moderators.n_terms());
    }
    if artifact.total_foci != asm.counts.total {
        return mismatch("total foci", &artifact.total_foci, &asm.counts.total);
    }
    let fit = artifact.to_fit_result()?;
    Ok((artifact, fit))
}

pub fn cmd_infer(config: &RunConfig) -> Result<(), CliError> {
    let asm = Assembled::load(config)?;
    let (_, fitted) = load_fit(config, &asm)?;
    if !fitted.converged {
        eprintln!("warning: testing against an unconverged fit; interpret with care");
    }
    let infer_cfg = config.infer_config()?;
    let maps = homogeneity_test(&asm.design.x, &asm.counts, &fitted, &infer_cfg)?;

    ensure_output_dir(config)?;
    write_stat_map(&maps.z, &asm.mask, &config.output_path("z.nii.gz"))?;
    write_stat_map(&maps.z_mu, &asm.mask, &config.output_path("z_mu.nii.gz"))?;
    write_stat_map(&maps.p, &asm.mask, &config.output_path("p.nii.gz"))?;
    write_stat_map(&maps.p_truncated, &asm.mask, &config.output_path("p_trunc.nii.gz"))?;
    let fdr: Vec<f64> = maps.fdr_rejected.iter().map(|&b| f64::from(u8::from(b))).collect();
    write_stat_map(&fdr, &asm.mask, &config.output_path("fdr_mask.nii.gz"))?;

    let n_rejected_raw = maps.fdr_rejected_raw.iter().filter(|&&b| b).count();
    let n_rejected_truncated = maps.fdr_rejected.iter().filter(|&&b| b).count();
    write_json(
        &InferArtifact {
            mu0: maps.mu0,
            eta0: maps.eta0,
            sidedness: config.inference.sidedness.clone(),
            q: infer_cfg.q,
            truncation_floor: infer_cfg.truncation_floor,
            n_rejected_raw,
            n_rejected_truncated,
            n_voxels: asm.counts.n_voxels,
        },
        &config.output_path("infer.json"),
    )?;
    println!(
        "infer: mu0 = {:.6e}, FDR rejections {} truncated / {} raw of {} voxels",
        maps.mu0, n_rejected_truncated, n_rejected_raw, asm.counts.n_voxels
    );
    Ok(())
}

fn parse_contrast(text: &str, n_moderators: usize) -> Result<DMat, CliError> {
    let rows: Vec<Vec<f64>> = match serde_json::from_str::<Vec<Vec<f64>>>(text) {
        Ok(rows) => rows,
        Err(_) => match serde_json::from_str::<Vec<f64>>(text) {
            Ok(row) => vec![row],
            Err(_) => {
                return Err(validation(format!(
                    "cannot parse contrast {text:?}: expected a JSON vector like [1,0] \
                     or a row matrix like [[1,0],[0,1]]"
                )))
            }
        },
    };
    if rows.is_empty() || rows.iter().any(|r| r.len() != n_moderators) {
        return Err(validation(format!(
            "contrast must have rows of length {n_moderators} (one weight per moderator)"
        )));
    }
    let mut c = DMat::zeros(rows.len(), n_moderators);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            c[(i, j)] = v;
        }
    }
    Ok(c)
}

pub fn cmd_glh(config: &RunConfig, contrast_text: &str) -> Result<(), CliError> {
    let asm = Assembled::load(config)?;
    let (artifact, fitted) = load_fit(config, &asm)?;
    if artifact.n_moderators == 0 {
        return Err(validation(
            "the fitted model has no study-level covariates; add [covariates] terms \
             and re-run `cbmr fit` before testing a contrast",
        ));
    }
    let contrast = parse_contrast(contrast_text, artifact.n_moderators)?;
    let result = glh_test(&fitted, &contrast)?;

    ensure_output_dir(config)?;
    write_json(
        &GlhArtifact {
            contrast: (0..contrast.n_rows).map(|i| contrast.row(i).to_vec()).collect(),
            moderators: artifact.moderators.iter().map(|m| m.name.clone()).collect(),
            stat: result.stat,
            df: result.df,
            p: result.p,
            z_signed: result.z_signed,
        },
        &config.output_path("glh.json"),
    )?;
    match result.z_signed {
        Some(z) => println!(
            "glh: chi2 = {:.6} (df {}), p = {:.6e}, Z = {:.4}",
            result.stat, result.df, result.p, z
        ),
        None => println!(
            "glh: chi2 = {:.6} (df {}), p = {:.6e}",
            result.stat, result.df, result.p
        ),
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct LrtArtifact {
    stat: f64,
    p_chi2: f64,
    /// Boundary-corrected ½δ₀ + ½χ²₁ reference.
    p_mixture: f64,
    clamped: bool,
}

impl From<&LrtResult> for LrtArtifact {
    fn from(l: &LrtResult) -> Self {
        LrtArtifact { stat: l.stat, p_chi2: l.p_chi2, p_mixture: l.p_mixture, clamped: l.clamped }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SelectionArtifact {
    rows: Vec<SelectionRow>,
    lrt_nb_vs_poisson: Option<LrtArtifact>,
    lrt_clustered_vs_poisson: Option<LrtArtifact>,
    skipped: Vec<SkippedFamily>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SelectionRow {
    family: String,
    loglik: Option<f64>,
    loglik_scale: String,
    k: usize,
    n_obs: usize,
    aic: Option<f64>,
    bic: Option<f64>,
    alpha: Option<f64>,
    dispersion: Option<f64>,
    converged: bool,
    singular: bool,
    bias_sum_intensity: f64,
    bias_std_xyz: [f64; 3],
    bias_voxel_variance: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SkippedFamily {
    family: String,
    reason: String,
}

fn selection_csv(report: &SelectionReport) -> String {
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from(
        "family,loglik,loglik_scale,k,n_obs,aic,bic,alpha,dispersion,converged,singular,\
         bias_sum_intensity,bias_std_x,bias_std_y,bias_std_z,bias_voxel_variance\n",
    );
    for row in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            row.kind.name(),
            cell(row.loglik),
            row.loglik_scale,
            row.k,
            row.n_obs,
            cell(row.aic),
            cell(row.bic),
            cell(row.alpha),
            cell(row.dispersion),
            row.converged,
            row.singular,
            row.bias.sum_intensity,
            row.bias.std_xyz[0],
            row.bias.std_xyz[1],
            row.bias.std_xyz[2],
            row.bias.voxel_variance,
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn cmd_select(config: &RunConfig) -> Result<(), CliError> {
    let asm = Assembled::load(config)?;
    let data = asm.model_data()?;
    let fit_cfg = config.fit_config();

    let mut fits: Vec<FitResult> = Vec::new();
    let mut skipped: Vec<SkippedFamily> = Vec::new();
    for kind in [
        ModelKind::Poisson,
        ModelKind::QuasiPoisson,
        ModelKind::NegBinomial,
        ModelKind::ClusteredNegBinomial,
    ] {
        match fit(&data, kind, &fit_cfg) {
            Ok(f) => {
                if !f.converged {
                    eprintln!("warning: {} fit did not converge", kind.name());
                }
                fits.push(f);
            }
            Err(e) => {
                // one stubborn family should not sink the whole comparison,
                // but the Poisson reference is non-negotiable
                if kind == ModelKind::Poisson {
                    return Err(e.into());
                }
                eprintln!("warning: skipping {}: {e}", kind.name());
                skipped.push(SkippedFamily { family: kind.name().to_string(), reason: format!("{e}") });
            }
        }
    }
    let report = selection_report(&data, &asm.mask, &fits)?;

    ensure_output_dir(config)?;
    std::fs::write(config.output_path("selection_report.csv"), selection_csv(&report))
        .map_err(|e| validation(format!("cannot write selection_report.csv: {e}")))?;
    write_json(
        &SelectionArtifact {
            rows: report
                .rows
                .iter()
                .map(|r| SelectionRow {
                    family: r.kind.name().to_string(),
                    loglik: r.loglik,
                    loglik_scale: r.loglik_scale.to_string(),
                    k: r.k,
                    n_obs: r.n_obs,
                    aic: r.aic,
                    bic: r.bic,
                    alpha: r.alpha,
                    dispersion: r.dispersion,
                    converged: r.converged,
                    singular: r.singular,
                    bias_sum_intensity: r.bias.sum_intensity,
                    bias_std_xyz: r.bias.std_xyz,
                    bias_voxel_variance: r.bias.voxel_variance,
                })
                .collect(),
            lrt_nb_vs_poisson: report.lrt_nb_vs_poisson.as_ref().map(LrtArtifact::from),
            lrt_clustered_vs_poisson: report
                .lrt_clustered_vs_poisson
                .as_ref()
                .map(LrtArtifact::from),
            skipped,
        },
        &config.output_path("selection.json"),
    )?;
    println!(
        "select: {} model rows written{}",
        report.rows.len(),
        report
            .lrt_nb_vs_poisson
            .map(|l| format!(", LRT NB vs Poisson stat {:.4} (chi2 p {:.3e})", l.stat, l.p_chi2))
            .unwrap_or_default()
    );
    Ok(())
}

pub fn cmd_simulate_null(config: &RunConfig) -> Result<(), CliError> {
    let asm = Assembled::load(config)?;
    let null_cfg = NullConfig {
        sampler: config.sampler()?,
        n_realizations: config.simulation.n_realizations,
        model: config.model_kind()?,
        binarize: config.model.binarize,
        fit: config.fit_config(),
        infer: config.infer_config()?,
        seed: config.seed,
    };
    let cal =
        run_calibration_parallel(&asm.dataset, &asm.mask, &asm.design.x, &asm.moderators.z, &null_cfg)?;
    if cal.n_excluded_singular + cal.n_excluded_unconverged > 0 {
        eprintln!(
            "warning: excluded {} singular and {} unconverged realizations of {}",
            cal.n_excluded_singular, cal.n_excluded_unconverged, null_cfg.n_realizations
        );
    }

    ensure_output_dir(config)?;
    let mut csv = String::from("rank,expected_neglog10_p,mean,lo,hi\n");
    for k in 0..cal.pp_expected.len() {
        writeln!(
            csv,
            "{},{},{},{},{}",
            k + 1,
            cal.pp_expected[k],
            cal.pp_mean[k],
            cal.pp_lo[k],
            cal.pp_hi[k]
        )
        .expect("writing to a String cannot fail");
    }
    std::fs::write(config.output_path("calibration.csv"), csv)
        .map_err(|e| validation(format!("cannot write calibration.csv: {e}")))?;
    write_json(
        &CalibrationArtifact {
            sampler: null_cfg.sampler.name().to_string(),
            family: null_cfg.model.name().to_string(),
            n_realizations: null_cfg.n_realizations,
            n_used: cal.n_used,
            n_excluded_singular: cal.n_excluded_singular,
            n_excluded_unconverged: cal.n_excluded_unconverged,
            fpr_at_05: cal.fpr_at_05,
            frac_invalid_fdr_raw: cal.frac_invalid_fdr_raw,
            frac_invalid_fdr_truncated: cal.frac_invalid_fdr_truncated,
            alpha_template: cal.alpha_template,
            seed: config.seed,
        },
        &config.output_path("calibration.json"),
    )?;
    std::fs::write(config.output_path("pp_plot.svg"), pp_plot_svg(&cal))
        .map_err(|e| validation(format!("cannot write pp_plot.svg: {e}")))?;
    println!(
        "simulate-null: {} used realizations, FPR at 0.05 = {:.4}, FDR fired raw {:.2}% / truncated {:.2}%",
        cal.n_used,
        cal.fpr_at_05,
        100.0 * cal.frac_invalid_fdr_raw,
        100.0 * cal.frac_invalid_fdr_truncated,
    );
    Ok(())
}

pub fn cmd_ale(config: &RunConfig) -> Result<(), CliError> {
    let dataset = load_foci(&config.paths.foci)?;
    let mask = read_mask(&config.paths.mask)?;
    let inference =
        ale_null_test(&dataset, &mask, config.ale.fwhm_mm, config.ale.n_iter, config.seed)?;
    // Monte Carlo p-values have an honest floor of 1/(1 + pooled draws), so
    // the FDR pass runs on them untruncated.
    let fdr = bh_fdr(&inference.p, config.inference.q, 0.0)?;

    ensure_output_dir(config)?;
    write_stat_map(&inference.ale.values, &mask, &config.output_path("ale.nii.gz"))?;
    write_stat_map(&inference.z, &mask, &config.output_path("ale_z.nii.gz"))?;
    write_stat_map(&inference.p, &mask, &config.output_path("ale_p.nii.gz"))?;
    let mask_vals: Vec<f64> = fdr.raw.rejected.iter().map(|&b| f64::from(u8::from(b))).collect();
    write_stat_map(&mask_vals, &mask, &config.output_path("ale_fdr_mask.nii.gz"))?;
    let max_ale = inference.ale.values.iter().fold(0.0f64, |m, &v| m.max(v));
    write_json(
        &AleArtifact {
            fwhm_mm: config.ale.fwhm_mm,
            n_iter: config.ale.n_iter,
            n_studies: inference.ale.n_studies,
            n_foci_outside_mask: inference.ale.n_outside,
            q: config.inference.q,
            n_rejected_fdr: fdr.raw.n_rejected,
            max_ale,
        },
        &config.output_path("ale.json"),
    )?;
    println!(
        "ale: FWHM {} mm, {} null iterations, max ALE {:.4}, {} FDR rejections",
        config.ale.fwhm_mm, config.ale.n_iter, max_ale, fdr.raw.n_rejected
    );
    Ok(())
}

fn load_map(config: &RunConfig, mask: &BrainMask, name: &str, produced_by: &str) -> Result<Vec<f64>, CliError> {
    let path = config.output_path(name);
    if !path.exists() {
        return Err(missing_artifact(&path, produced_by));
    }
    read_stat_map(&path, mask)
}

pub fn cmd_compare(config: &RunConfig) -> Result<(), CliError> {
    let mask = read_mask(&config.paths.mask)?;
    let cbmr_p = load_map(config, &mask, "p.nii.gz", "infer")?;
    let cbmr_fdr = load_map(config, &mask, "fdr_mask.nii.gz", "infer")?;
    let ale_p = load_map(config, &mask, "ale_p.nii.gz", "ale")?;
    let ale_fdr = load_map(config, &mask, "ale_fdr_mask.nii.gz", "ale")?;

    let cut = config.compare.uncorrected_p;
    let thresholded = |p: &[f64]| -> Vec<bool> { p.iter().map(|&v| v < cut).collect() };
    let binary = |m: &[f64]| -> Vec<bool> { m.iter().map(|&v| v > 0.5).collect() };

    let mut csv = String::from("threshold,n_ale,n_cbmr,n_intersection,dsc\n");
    let mut summary = Vec::new();
    for (label, a, c) in [
        (
            format!("uncorrected_p<{cut}"),
            thresholded(&ale_p),
            thresholded(&cbmr_p),
        ),
        (
            format!("fdr_q<{}", config.inference.q),
            binary(&ale_fdr),
            binary(&cbmr_fdr),
        ),
    ] {
        let n_ale = a.iter().filter(|&&b| b).count();
        let n_cbmr = c.iter().filter(|&&b| b).count();
        let n_both = a.iter().zip(&c).filter(|(&x, &y)| x && y).count();
        let d = dice(&a, &c)?;
        writeln!(csv, "{label},{n_ale},{n_cbmr},{n_both},{d}")
            .expect("writing to a String cannot fail");
        summary.push(format!("{label}: DSC {d:.4} ({n_ale} ALE / {n_cbmr} CBMR / {n_both} both)"));
    }
    ensure_output_dir(config)?;
    std::fs::write(config.output_path("comparison.csv"), csv)
        .map_err(|e| validation(format!("cannot write comparison.csv: {e}")))?;
    println!("compare: {}", summary.join("; "));
    Ok(())
}
