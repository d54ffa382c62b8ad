//! Study-level foci data and moderator preparation.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, CoreError};
use crate::linalg::DMat;
use crate::math as m;

/// One study: an identifier, its reported foci in world mm, and one value per
/// covariate column of the parent dataset.
#[derive(Debug, Clone)]
pub struct Study {
    pub id: String,
    pub foci_mm: Vec<[f64; 3]>,
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FociDataset {
    pub covariate_names: Vec<String>,
    pub studies: Vec<Study>,
}

impl FociDataset {
    pub fn new(covariate_names: Vec<String>, studies: Vec<Study>) -> Result<Self, CoreError> {
        if studies.is_empty() {
            return Err(invalid("dataset has no studies"));
        }
        for s in &studies {
            if s.covariates.len() != covariate_names.len() {
                return Err(invalid(alloc::format!(
                    "study {} has {} covariate values, expected {}",
                    s.id,
                    s.covariates.len(),
                    covariate_names.len()
                )));
            }
        }
        Ok(FociDataset { covariate_names, studies })
    }

    pub fn n_studies(&self) -> usize {
        self.studies.len()
    }

    pub fn total_foci(&self) -> usize {
        self.studies.iter().map(|s| s.foci_mm.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovariateTransform {
    Identity,
    /// Square root, for count-like covariates (e.g. sample sizes).
    Sqrt,
}

impl CovariateTransform {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "identity" | "none" => Some(CovariateTransform::Identity),
            "sqrt" => Some(CovariateTransform::Sqrt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModeratorSpec {
    pub column: String,
    pub transform: CovariateTransform,
}

/// Study-design matrix for the moderator part of the model. Columns are
/// transformed and mean-centered (so the multiplicative study effect is 1 at
/// the average moderator value and the overall scale stays in the spatial
/// part); standardization additionally divides by the sample SD.
#[derive(Debug, Clone)]
pub struct ModeratorMatrix {
    pub names: Vec<String>,
    /// M × R, row per study.
    pub z: DMat,
    /// Mean subtracted from each column (on the transformed scale).
    pub centers: Vec<f64>,
    /// Divisor applied after centering (1.0 when not standardized).
    pub scales: Vec<f64>,
}

impl ModeratorMatrix {
    /// No moderators: an M × 0 matrix (every study effect is exp(0) = 1).
    pub fn empty(n_studies: usize) -> Self {
        ModeratorMatrix {
            names: Vec::new(),
            z: DMat::zeros(n_studies, 0),
            centers: Vec::new(),
            scales: Vec::new(),
        }
    }

    pub fn n_terms(&self) -> usize {
        self.z.n_cols
    }
}

pub fn build_moderator_matrix(
    dataset: &FociDataset,
    specs: &[ModeratorSpec],
    standardize: bool,
) -> Result<ModeratorMatrix, CoreError> {
    let n = dataset.n_studies();
    if specs.is_empty() {
        return Ok(ModeratorMatrix::empty(n));
    }
    if n < 2 {
        return Err(invalid("moderators need at least two studies"));
    }
    let mut z = DMat::zeros(n, specs.len());
    let mut names = Vec::with_capacity(specs.len());
    let mut centers = Vec::with_capacity(specs.len());
    let mut scales = Vec::with_capacity(specs.len());
    for (c, spec) in specs.iter().enumerate() {
        let col_idx = dataset
            .covariate_names
            .iter()
            .position(|name| *name == spec.column)
            .ok_or_else(|| invalid(alloc::format!("unknown covariate column {:?}", spec.column)))?;
        let mut vals: Vec<f64> = Vec::with_capacity(n);
        for s in &dataset.studies {
            let raw = s.covariates[col_idx];
            if !raw.is_finite() {
                return Err(invalid(alloc::format!(
                    "covariate {:?} is not finite in study {}",
                    spec.column,
                    s.id
                )));
            }
            let v = match spec.transform {
                CovariateTransform::Identity => raw,
                CovariateTransform::Sqrt => {
                    if raw < 0.0 {
                        return Err(invalid(alloc::format!(
                            "sqrt transform needs nonnegative values; covariate {:?} is {raw} in study {}",
                            spec.column,
                            s.id
                        )));
                    }
                    m::sqrt(raw)
                }
            };
            vals.push(v);
        }
        let mean = vals.iter().sum::<f64>() / n as f64;
        for v in vals.iter_mut() {
            *v -= mean;
        }
        let var = vals.iter().map(|v| v * v).sum::<f64>() / (n as f64 - 1.0);
        if var == 0.0 {
            return Err(invalid(alloc::format!(
                "covariate {:?} is constant across studies",
                spec.column
            )));
        }
        let scale = if standardize { m::sqrt(var) } else { 1.0 };
        let mut check_mean = 0.0;
        for (i, v) in vals.iter().enumerate() {
            let z_iv = *v / scale;
            z[(i, c)] = z_iv;
            check_mean += z_iv;
        }
        check_mean /= n as f64;
        debug_assert!(m::abs(check_mean) <= 1e-12, "centering left mean {check_mean}");
        names.push(match spec.transform {
            CovariateTransform::Identity => spec.column.clone(),
            CovariateTransform::Sqrt => alloc::format!("sqrt({})", spec.column),
        });
        centers.push(mean);
        scales.push(scale);
    }
    Ok(ModeratorMatrix { names, z, centers, scales })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn toy_dataset() -> FociDataset {
        let mk = |id: &str, n: f64, yr: f64| Study {
            id: id.to_string(),
            foci_mm: vec![],
            covariates: vec![n, yr],
        };
        FociDataset::new(
            vec!["n_subjects".to_string(), "year".to_string()],
            vec![mk("a", 16.0, 2001.0), mk("b", 25.0, 2005.0), mk("c", 36.0, 2012.0)],
        )
        .unwrap()
    }

    #[test]
    fn sqrt_then_center() {
        let ds = toy_dataset();
        let mm = build_moderator_matrix(
            &ds,
            &[ModeratorSpec {
                column: "n_subjects".to_string(),
                transform: CovariateTransform::Sqrt,
            }],
            false,
        )
        .unwrap();
        assert_eq!(mm.names, vec!["sqrt(n_subjects)".to_string()]);
        // sqrt values 4, 5, 6; mean 5
        assert_eq!(mm.centers, vec![5.0]);
        assert_eq!(mm.z[(0, 0)], -1.0);
        assert_eq!(mm.z[(1, 0)], 0.0);
        assert_eq!(mm.z[(2, 0)], 1.0);
    }

    #[test]
    fn standardize_gives_unit_variance() {
        let ds = toy_dataset();
        let mm = build_moderator_matrix(
            &ds,
            &[ModeratorSpec { column: "year".to_string(), transform: CovariateTransform::Identity }],
            true,
        )
        .unwrap();
        let n = ds.n_studies() as f64;
        let var: f64 =
            (0..3).map(|i| mm.z[(i, 0)] * mm.z[(i, 0)]).sum::<f64>() / (n - 1.0);
        assert!((var - 1.0).abs() < 1e-14);
        let mean: f64 = (0..3).map(|i| mm.z[(i, 0)]).sum::<f64>() / n;
        assert!(mean.abs() <= 1e-12);
    }

    #[test]
    fn constant_column_is_rejected() {
        let ds = FociDataset::new(
            vec!["c".to_string()],
            vec![
                Study { id: "a".to_string(), foci_mm: vec![], covariates: vec![3.0] },
                Study { id: "b".to_string(), foci_mm: vec![], covariates: vec![3.0] },
            ],
        )
        .unwrap();
        let err = build_moderator_matrix(
            &ds,
            &[ModeratorSpec { column: "c".to_string(), transform: CovariateTransform::Identity }],
            false,
        )
        .unwrap_err();
        assert!(alloc::format!("{err}").contains("constant"));
    }

    #[test]
    fn negative_sqrt_is_rejected() {
        let ds = FociDataset::new(
            vec!["c".to_string()],
            vec![
                Study { id: "a".to_string(), foci_mm: vec![], covariates: vec![-1.0] },
                Study { id: "b".to_string(), foci_mm: vec![], covariates: vec![4.0] },
            ],
        )
        .unwrap();
        assert!(build_moderator_matrix(
            &ds,
            &[ModeratorSpec { column: "c".to_string(), transform: CovariateTransform::Sqrt }],
            false,
        )
        .is_err());
    }

    #[test]
    fn unknown_column_is_rejected() {
        let ds = toy_dataset();
        assert!(build_moderator_matrix(
            &ds,
            &[ModeratorSpec { column: "nope".to_string(), transform: CovariateTransform::Identity }],
            false,
        )
        .is_err());
    }
}
