//! Per-study regressions: the first stage of the two-stage fit.
//!
//! Each study is fitted by ordinary least squares on
//!
//! ```text
//! [ intercept | covariate main effects | arm indicators | arm × covariate ]
//! ```
//!
//! where arm indicators and their interactions cover every arm except the
//! study reference. The treatment-related coefficients form the contrast
//! estimate `δ̂_i`; the matching block of `s² (XᵀX)⁻¹` is its covariance `S_i`.
//! Intercept and prognostic coefficients are nuisance and dropped.

use std::borrow::Borrow;
use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::domain::{CovariateSchema, IpdDataset, IpdRecord, TreatmentId};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, symmetrize};
use crate::parallel::{map_ordered, Execution};

/// Relative size of an R diagonal, against its column norm, below which the
/// column is treated as linearly dependent on the columns before it.
const RANK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CoefficientClass {
    /// Relative effect at covariate value zero (`q = 0`).
    Main,
    /// Interaction with encoded covariate column `q` (0-based).
    Covariate(usize),
}

impl CoefficientClass {
    /// Position within one treatment's block of `Q* + 1` coefficients.
    pub fn offset(self) -> usize {
        match self {
            CoefficientClass::Main => 0,
            CoefficientClass::Covariate(q) => q + 1,
        }
    }

    pub fn from_offset(offset: usize) -> Self {
        match offset {
            0 => CoefficientClass::Main,
            k => CoefficientClass::Covariate(k - 1),
        }
    }
}

/// What one entry of a contrast estimate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContrastEntry {
    /// The non-reference arm of the contrast.
    pub treatment: TreatmentId,
    pub class: CoefficientClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Fit {
    pub study: String,
    pub reference: TreatmentId,
    /// Non-reference arms, ascending by network index.
    pub contrasts: Vec<TreatmentId>,
    /// `δ̂_i`, contrast-major then coefficient class.
    pub estimate: DVector<f64>,
    /// `S_i`, including any jitter that was needed to factor it.
    pub covariance: DMatrix<f64>,
    pub residual_variance: f64,
    pub n_records: usize,
    /// Absolute diagonal jitter added to `S_i` (0 when none).
    pub jitter: f64,
    pub layout: Vec<ContrastEntry>,
}

impl Stage1Fit {
    pub fn n_classes(&self) -> usize {
        self.layout.len() / self.contrasts.len().max(1)
    }

    pub fn arms(&self) -> impl Iterator<Item = TreatmentId> + '_ {
        std::iter::once(self.reference).chain(self.contrasts.iter().copied())
    }
}

/// Fits one study using its lowest-indexed arm as the reference.
pub fn fit_study<R: Borrow<IpdRecord>>(records: &[R], schema: &CovariateSchema) -> Result<Stage1Fit> {
    let study = study_id(records)?;
    let reference = records
        .iter()
        .map(|r| r.borrow().treatment)
        .min()
        .ok_or_else(|| Error::InvalidArgument("no records".into()))?;
    fit_with_reference(&study, records, schema, reference)
}

/// Fits one study against an explicit reference arm.
pub fn fit_study_with_reference<R: Borrow<IpdRecord>>(
    records: &[R],
    schema: &CovariateSchema,
    reference: TreatmentId,
) -> Result<Stage1Fit> {
    let study = study_id(records)?;
    fit_with_reference(&study, records, schema, reference)
}

fn study_id<R: Borrow<IpdRecord>>(records: &[R]) -> Result<String> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidArgument("no records".into()))?
        .borrow();
    if let Some(other) = records.iter().find(|r| Borrow::<IpdRecord>::borrow(*r).study != first.study) {
        return Err(Error::InvalidArgument(format!(
            "records from several studies (`{}` and `{}`)",
            first.study,
            other.borrow().study
        )));
    }
    Ok(first.study.clone())
}

fn fit_with_reference<R: Borrow<IpdRecord>>(
    study: &str,
    records: &[R],
    schema: &CovariateSchema,
    reference: TreatmentId,
) -> Result<Stage1Fit> {
    let study_err = |message: String| Error::Study {
        study: study.to_owned(),
        message,
    };

    let arms: BTreeSet<TreatmentId> = records.iter().map(|r| r.borrow().treatment).collect();
    if arms.len() < 2 {
        return Err(study_err("study has < 2 treatments".into()));
    }
    if !arms.contains(&reference) {
        return Err(study_err(format!("reference arm {reference} is not in the study")));
    }
    let contrasts: Vec<TreatmentId> = arms.iter().copied().filter(|t| *t != reference).collect();

    let q = schema.encoded_width();
    let block = q + 1;
    let n_effects = contrasts.len() * block;
    let n_cols = 1 + q + n_effects;
    let n = records.len();
    if n <= n_cols {
        return Err(Error::InsufficientObservations {
            study: study.to_owned(),
            observations: n,
            columns: n_cols,
        });
    }

    let mut x = DMatrix::<f64>::zeros(n, n_cols);
    let mut y = DVector::<f64>::zeros(n);
    let mut encoded = Vec::with_capacity(q);
    for (i, record) in records.iter().enumerate() {
        let record = record.borrow();
        encoded.clear();
        schema
            .encode_into(&record.covariates, &mut encoded)
            .map_err(|e| study_err(e.to_string()))?;
        y[i] = record.outcome;
        x[(i, 0)] = 1.0;
        for (j, v) in encoded.iter().enumerate() {
            x[(i, 1 + j)] = *v;
        }
        if let Some(k) = contrasts.iter().position(|t| *t == record.treatment) {
            let base = 1 + q + k * block;
            x[(i, base)] = 1.0;
            for (j, v) in encoded.iter().enumerate() {
                x[(i, base + 1 + j)] = *v;
            }
        }
    }

    let col_norms: Vec<f64> = x.column_iter().map(|c| c.norm()).collect();
    let qr = x.clone().qr();
    let r = qr.r();
    let dependent: Vec<usize> = (0..n_cols)
        .filter(|&j| col_norms[j] == 0.0 || r[(j, j)].abs() <= RANK_TOLERANCE * col_norms[j])
        .collect();
    if !dependent.is_empty() {
        let names = column_names(schema, &contrasts);
        return Err(Error::RankDeficient {
            study: study.to_owned(),
            columns: dependent.into_iter().map(|j| names[j].clone()).collect(),
        });
    }

    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let rhs = qty.rows(0, n_cols).into_owned();
    let coef = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::Numeric(format!("study `{study}`: triangular solve failed")))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(n_cols, n_cols))
        .ok_or_else(|| Error::Numeric(format!("study `{study}`: triangular solve failed")))?;

    let residuals = &y - &x * &coef;
    let df = (n - n_cols) as f64;
    let residual_variance = residuals.norm_squared() / df;

    // (XᵀX)⁻¹ = R⁻¹ R⁻ᵀ, restricted to the treatment block
    let start = 1 + q;
    let r_inv_block = r_inv.rows(start, n_effects);
    let mut covariance = (r_inv_block * r_inv_block.transpose()) * residual_variance;
    symmetrize(&mut covariance);
    let (_, jitter) = cholesky_with_jitter(&covariance).ok_or_else(|| {
        Error::Numeric(format!(
            "study `{study}`: contrast covariance is not positive definite even after jitter"
        ))
    })?;
    if jitter > 0.0 {
        log::warn!("study `{study}`: added jitter {jitter:e} to the contrast covariance");
        for i in 0..n_effects {
            covariance[(i, i)] += jitter;
        }
    }

    let layout = contrasts
        .iter()
        .flat_map(|t| {
            (0..block).map(move |k| ContrastEntry {
                treatment: *t,
                class: CoefficientClass::from_offset(k),
            })
        })
        .collect();

    Ok(Stage1Fit {
        study: study.to_owned(),
        reference,
        contrasts,
        estimate: coef.rows(start, n_effects).into_owned(),
        covariance,
        residual_variance,
        n_records: n,
        jitter,
        layout,
    })
}

/// Human-readable names of the stage-1 design columns.
pub fn column_names(schema: &CovariateSchema, contrasts: &[TreatmentId]) -> Vec<String> {
    let covariates = schema.encoded_names();
    let mut names = vec!["intercept".to_owned()];
    names.extend(covariates.iter().cloned());
    for t in contrasts {
        names.push(format!("trt{}", t.index()));
        names.extend(covariates.iter().map(|c| format!("trt{}:{c}", t.index())));
    }
    names
}

/// Fits every study, ordered by study id.
pub fn fit_all_studies(dataset: &IpdDataset) -> Result<Vec<Stage1Fit>> {
    fit_all_studies_with(dataset, Execution::default())
}

pub fn fit_all_studies_with(dataset: &IpdDataset, exec: Execution) -> Result<Vec<Stage1Fit>> {
    let studies: Vec<Vec<&IpdRecord>> = dataset.by_study().into_values().collect();
    let schema = &dataset.network.schema;
    let results = map_ordered(exec, &studies, |_, records| fit_study(records, schema));

    let mut fits = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for result in results {
        match result {
            Ok(fit) => fits.push(fit),
            Err(e) => failures.push(e),
        }
    }
    if failures.is_empty() {
        Ok(fits)
    } else {
        Err(Error::StudyFits(failures))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CovariateDescriptor, CovariateValue};

    fn rec(study: &str, t: usize, y: f64, x: &[f64]) -> IpdRecord {
        IpdRecord {
            study: study.into(),
            treatment: TreatmentId::new(t),
            outcome: y,
            covariates: x.iter().map(|v| CovariateValue::Number(*v)).collect(),
        }
    }

    #[test]
    fn two_arm_difference_in_means() {
        let arm1 = [1.0, 2.0, 4.0, 3.0];
        let arm2 = [5.0, 7.0, 6.0];
        let records: Vec<_> = arm1
            .iter()
            .map(|y| rec("s", 1, *y, &[]))
            .chain(arm2.iter().map(|y| rec("s", 2, *y, &[])))
            .collect();
        let fit = fit_study(&records, &CovariateSchema::empty()).unwrap();

        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let ss = |v: &[f64]| {
            let m = mean(v);
            v.iter().map(|y| (y - m).powi(2)).sum::<f64>()
        };
        let s2 = (ss(&arm1) + ss(&arm2)) / (7.0 - 2.0);
        assert!((fit.estimate[0] - (mean(&arm2) - mean(&arm1))).abs() < 1e-12);
        assert!((fit.covariance[(0, 0)] - s2 * (1.0 / 4.0 + 1.0 / 3.0)).abs() < 1e-10);
        assert!((fit.residual_variance - s2).abs() < 1e-12);
        assert_eq!(fit.reference, TreatmentId::new(1));
        assert_eq!(fit.jitter, 0.0);
    }

    #[test]
    fn constant_covariate_is_rank_deficient() {
        let schema = CovariateSchema::new(vec![CovariateDescriptor::binary("sex")]).unwrap();
        let records: Vec<_> = (0..12)
            .map(|i| rec("s", 1 + i % 2, i as f64 * 0.3, &[1.0]))
            .collect();
        let err = fit_study(&records, &schema).unwrap_err();
        match err {
            Error::RankDeficient { study, columns } => {
                assert_eq!(study, "s");
                assert!(columns.contains(&"sex".to_owned()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_few_observations() {
        let records = vec![rec("s", 1, 1.0, &[]), rec("s", 2, 2.0, &[])];
        assert!(matches!(
            fit_study(&records, &CovariateSchema::empty()),
            Err(Error::InsufficientObservations { observations: 2, columns: 2, .. })
        ));
    }

    #[test]
    fn explicit_reference_changes_contrasts() {
        let records: Vec<_> = (0..30)
            .map(|i| rec("s", 1 + i % 3, (i % 7) as f64 + (i % 3) as f64, &[]))
            .collect();
        let fit = fit_study_with_reference(&records, &CovariateSchema::empty(), TreatmentId::new(2))
            .unwrap();
        assert_eq!(fit.reference, TreatmentId::new(2));
        assert_eq!(fit.contrasts, vec![TreatmentId::new(1), TreatmentId::new(3)]);
        assert_eq!(fit.layout.len(), 2);
    }

    #[test]
    fn aggregated_error_names_failing_study() {
        use crate::domain::{Direction, NetworkSpec, TreatmentSet};
        let schema = CovariateSchema::new(vec![CovariateDescriptor::continuous("x")]).unwrap();
        let mut records = Vec::new();
        for i in 0..20 {
            records.push(rec("good", 1 + i % 2, (i * i % 11) as f64, &[(i % 5) as f64]));
            // x constant within `bad`
            records.push(rec("bad", 1 + i % 2, (i % 3) as f64, &[2.0]));
        }
        let ds = IpdDataset::new(
            NetworkSpec::new(TreatmentSet::new(["A", "B"]).unwrap(), schema, Direction::HigherBetter),
            records,
        );
        let err = fit_all_studies(&ds).unwrap_err();
        match &err {
            Error::StudyFits(errors) => {
                assert_eq!(errors.len(), 1);
                assert!(errors[0].to_string().contains("`bad`"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("1 studies failed"));
    }
}
