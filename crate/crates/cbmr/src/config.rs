//! Declarative run configuration.
//!
//! One file describes a whole analysis — data paths, model family, spline
//! geometry, fit/inference/simulation settings and the master seed — and
//! every subcommand reads the same file, so artifacts produced by different
//! commands are guaranteed to describe the same model. TOML is the native
//! format; a `.json` file with the same structure is accepted as well.
//! Command-line flags override individual values after parsing.

use std::path::{Path, PathBuf};

use cbmr_core::ale::DEFAULT_FWHM_MM;
use cbmr_core::dataset::{CovariateTransform, ModeratorSpec};
use cbmr_core::infer::{InferConfig, Sidedness, DEFAULT_FDR_Q, DEFAULT_TRUNCATION_FLOOR};
use cbmr_core::model::ModelKind;
use cbmr_core::nullsim::NullSampler;
use cbmr_core::optim::{FitConfig, InitStrategy};
use cbmr_core::spline::DEFAULT_PRUNE_THRESHOLD;
use serde::{Deserialize, Serialize};

use crate::error::{validation, CliError};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub spline: SplineSection,
    #[serde(default)]
    pub covariates: CovariateSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub inference: InferenceSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub ale: AleSection,
    #[serde(default)]
    pub compare: CompareSection,
    /// Master seed; every stochastic step derives a named substream from it.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub foci: PathBuf,
    pub mask: PathBuf,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// poisson | quasi_poisson | negative_binomial | clustered_negative_binomial
    pub family: String,
    /// Collapse repeated (study, voxel) foci to a single event.
    pub binarize: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { family: "poisson".to_string(), binarize: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplineSection {
    pub spacing_mm: f64,
    pub prune_threshold: f64,
}

impl Default for SplineSection {
    fn default() -> Self {
        SplineSection { spacing_mm: 20.0, prune_threshold: DEFAULT_PRUNE_THRESHOLD }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateSection {
    #[serde(default)]
    pub terms: Vec<CovariateTerm>,
    /// Scale each centered column to unit sample standard deviation.
    #[serde(default)]
    pub standardize: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateTerm {
    pub column: String,
    /// none | sqrt
    #[serde(default = "default_transform")]
    pub transform: String,
}

fn default_transform() -> String {
    "none".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub max_iter: usize,
    pub tol_grad: f64,
    pub tol_loglik: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        let d = FitConfig::default();
        FitSection { max_iter: d.max_iter, tol_grad: d.tol_grad, tol_loglik: d.tol_loglik }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSection {
    /// one_sided_excess | two_sided
    pub sidedness: String,
    pub q: f64,
    pub truncation_floor: f64,
}

impl Default for InferenceSection {
    fn default() -> Self {
        InferenceSection {
            sidedness: "one_sided_excess".to_string(),
            q: DEFAULT_FDR_Q,
            truncation_floor: DEFAULT_TRUNCATION_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    /// model_based | empirical_shuffle
    pub sampler: String,
    pub n_realizations: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection { sampler: "model_based".to_string(), n_realizations: 100 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AleSection {
    pub fwhm_mm: f64,
    pub n_iter: usize,
}

impl Default for AleSection {
    fn default() -> Self {
        AleSection { fwhm_mm: DEFAULT_FWHM_MM, n_iter: 2000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    /// Uncorrected threshold for the first comparison row.
    pub uncorrected_p: f64,
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection { uncorrected_p: 0.05 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| validation(format!("cannot read config {}: {e}", path.display())))?;
        let json = path.extension().is_some_and(|e| e == "json");
        let cfg: RunConfig = if json {
            serde_json::from_str(&text)
                .map_err(|e| validation(format!("config {}: {e}", path.display())))?
        } else {
            toml::from_str(&text)
                .map_err(|e| validation(format!("config {}: {e}", path.display())))?
        };
        // resolve data paths relative to the config file's directory
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = cfg;
        for p in [&mut cfg.paths.foci, &mut cfg.paths.mask, &mut cfg.paths.output_dir] {
            if p.is_relative() {
                *p = base.join(&p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let check_path = |p: &Path, field: &str| {
            if p.exists() {
                Ok(())
            } else {
                Err(validation(format!(
                    "paths.{field} does not exist: {}",
                    p.display()
                )))
            }
        };
        check_path(&self.paths.foci, "foci")?;
        check_path(&self.paths.mask, "mask")?;
        self.model_kind()?;
        self.sidedness()?;
        self.sampler()?;
        self.moderator_specs()?;
        if !(self.spline.spacing_mm > 0.0) {
            return Err(validation("spline.spacing_mm must be positive"));
        }
        if !(self.spline.prune_threshold >= 0.0 && self.spline.prune_threshold < 1.0) {
            return Err(validation("spline.prune_threshold must lie in [0, 1)"));
        }
        if !(self.inference.q > 0.0 && self.inference.q < 1.0) {
            return Err(validation("inference.q must lie in (0, 1)"));
        }
        if !(self.inference.truncation_floor >= 0.0 && self.inference.truncation_floor < 1.0) {
            return Err(validation("inference.truncation_floor must lie in [0, 1)"));
        }
        if self.simulation.n_realizations == 0 {
            return Err(validation("simulation.n_realizations must be at least 1"));
        }
        if !(self.ale.fwhm_mm > 0.0) {
            return Err(validation("ale.fwhm_mm must be positive"));
        }
        if self.ale.n_iter == 0 {
            return Err(validation("ale.n_iter must be at least 1"));
        }
        if !(self.compare.uncorrected_p > 0.0 && self.compare.uncorrected_p < 1.0) {
            return Err(validation("compare.uncorrected_p must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn model_kind(&self) -> Result<ModelKind, CliError> {
        ModelKind::from_name(&self.model.family).ok_or_else(|| {
            validation(format!(
                "model.family {:?} is not one of poisson, quasi_poisson, \
                 negative_binomial, clustered_negative_binomial",
                self.model.family
            ))
        })
    }

    pub fn sidedness(&self) -> Result<Sidedness, CliError> {
        match self.inference.sidedness.as_str() {
            "one_sided_excess" | "one_sided" => Ok(Sidedness::OneSidedExcess),
            "two_sided" => Ok(Sidedness::TwoSided),
            other => Err(validation(format!(
                "inference.sidedness {other:?} is not one_sided_excess or two_sided"
            ))),
        }
    }

    pub fn sampler(&self) -> Result<NullSampler, CliError> {
        NullSampler::from_name(&self.simulation.sampler).ok_or_else(|| {
            validation(format!(
                "simulation.sampler {:?} is not model_based or empirical_shuffle",
                self.simulation.sampler
            ))
        })
    }

    pub fn moderator_specs(&self) -> Result<Vec<ModeratorSpec>, CliError> {
        self.covariates
            .terms
            .iter()
            .map(|t| {
                let transform = CovariateTransform::from_name(&t.transform).ok_or_else(|| {
                    validation(format!(
                        "covariates: transform {:?} on column {:?} is not none or sqrt",
                        t.transform, t.column
                    ))
                })?;
                Ok(ModeratorSpec { column: t.column.clone(), transform })
            })
            .collect()
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            max_iter: self.fit.max_iter,
            tol_grad: self.fit.tol_grad,
            tol_loglik: self.fit.tol_loglik,
            init: InitStrategy::Default,
            seed: Some(self.seed),
            ..FitConfig::default()
        }
    }

    pub fn infer_config(&self) -> Result<InferConfig, CliError> {
        Ok(InferConfig {
            sidedness: self.sidedness()?,
            q: self.inference.q,
            truncation_floor: self.inference.truncation_floor,
        })
    }

    pub fn output_path(&self, name: &str) -> PathBuf {
        self.paths.output_dir.join(name)
    }
}
