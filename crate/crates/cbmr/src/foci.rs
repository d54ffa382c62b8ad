//! Foci tables: delimited text with a header row, one focus per line.
//!
//! Required columns are `study_id`, `x`, `y`, `z` (world millimetres); any
//! other column is a study-level covariate and must therefore carry one value
//! per study, repeated on each of its rows. Studies keep their order of first
//! appearance so a dataset is reproducible from its file alone.

use std::path::Path;

use cbmr_core::dataset::{FociDataset, Study};

use crate::error::{validation, CliError};

fn delimiter_for(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()) {
        Some("tsv") => b'\t',
        _ => b',',
    }
}

pub fn load_foci(path: &Path) -> Result<FociDataset, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter_for(path))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| validation(format!("{}: {e}", path.display())))?
        .clone();
    let mut id_col = None;
    let mut xyz_cols = [None; 3];
    let mut cov_cols: Vec<(usize, String)> = Vec::new();
    for (idx, name) in headers.iter().enumerate() {
        match name {
            "study_id" => id_col = Some(idx),
            "x" => xyz_cols[0] = Some(idx),
            "y" => xyz_cols[1] = Some(idx),
            "z" => xyz_cols[2] = Some(idx),
            other => cov_cols.push((idx, other.to_string())),
        }
    }
    let id_col = id_col
        .ok_or_else(|| validation(format!("{}: missing column study_id", path.display())))?;
    let xyz_cols = [0, 1, 2].map(|a| xyz_cols[a]);
    for (axis, col) in ["x", "y", "z"].iter().zip(&xyz_cols) {
        if col.is_none() {
            return Err(validation(format!("{}: missing column {axis}", path.display())));
        }
    }

    let mut order: Vec<String> = Vec::new();
    let mut studies: Vec<Study> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| validation(format!("{}: {e}", path.display())))?;
        let line = record
            .position()
            .map(|p| p.line().to_string())
            .unwrap_or_else(|| "?".to_string());
        let field = |idx: usize| -> Result<&str, CliError> {
            record.get(idx).ok_or_else(|| {
                validation(format!(
                    "{} line {line}: row has {} fields, header has {}",
                    path.display(),
                    record.len(),
                    headers.len()
                ))
            })
        };
        let number = |idx: usize, what: &str| -> Result<f64, CliError> {
            let raw = field(idx)?;
            raw.parse::<f64>().map_err(|_| {
                validation(format!(
                    "{} line {line}: cannot parse {what} value {raw:?} as a number",
                    path.display()
                ))
            })
        };

        let id = field(id_col)?.to_string();
        if id.is_empty() {
            return Err(validation(format!(
                "{} line {line}: empty study_id",
                path.display()
            )));
        }
        let mut mm = [0.0; 3];
        for (axis, (name, col)) in ["x", "y", "z"].iter().zip(&xyz_cols).enumerate() {
            mm[axis] = number(col.unwrap(), name)?;
        }
        let mut covs = Vec::with_capacity(cov_cols.len());
        for (idx, name) in &cov_cols {
            covs.push(number(*idx, name)?);
        }

        match order.iter().position(|known| *known == id) {
            Some(s) => {
                let study = &mut studies[s];
                if study.covariates != covs {
                    return Err(validation(format!(
                        "{} line {line}: covariates {covs:?} differ from the first \
                         row of study {id:?} ({:?}); study-level covariates must be \
                         constant within a study",
                        path.display(),
                        study.covariates
                    )));
                }
                study.foci_mm.push(mm);
            }
            None => {
                order.push(id.clone());
                studies.push(Study { id, foci_mm: vec![mm], covariates: covs });
            }
        }
    }
    if studies.is_empty() {
        return Err(validation(format!("{}: no foci rows", path.display())));
    }
    let names = cov_cols.into_iter().map(|(_, name)| name).collect();
    FociDataset::new(names, studies).map_err(CliError::from)
}
