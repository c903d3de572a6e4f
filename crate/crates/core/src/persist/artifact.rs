use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::domain::{CovariateSchema, Direction, NetworkSpec, TreatmentId, TreatmentSet};
use crate::error::{Error, Result};
use crate::linalg::{from_row_major, to_row_major};
use crate::model::{FittedModel, Stage1Summary};
use crate::stage2::{GaussianPosterior, GaussianPrior, ParameterLayout};

use super::{sha256_hex, to_canonical_json};

pub const FORMAT_VERSION: &str = "1";

/// Parameter order used by the artifact: treatment-major, main effect first.
const LAYOUT_ORDER: &str = "treatment_major";

/// On-disk model. Everything needed to rank without the original data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArtifact {
    pub format_version: String,
    pub treatments: TreatmentSet,
    pub covariates: CovariateSchema,
    pub direction: Direction,
    pub layout: LayoutDescriptor,
    pub posterior_mean: Vec<f64>,
    /// Row-major `p × p`.
    pub posterior_covariance: Vec<f64>,
    pub stage1: Vec<Stage1Record>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutDescriptor {
    pub order: String,
    pub encoded_covariates: Vec<String>,
    pub parameters: Vec<String>,
}

impl LayoutDescriptor {
    fn of(layout: &ParameterLayout) -> Self {
        LayoutDescriptor {
            order: LAYOUT_ORDER.to_owned(),
            encoded_covariates: layout.covariates().to_vec(),
            parameters: (0..layout.len()).map(|c| layout.parameter_name(c)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage1Record {
    pub study: String,
    pub reference: String,
    pub contrasts: Vec<String>,
    pub estimate: Vec<f64>,
    pub covariance: Vec<f64>,
    pub residual_variance: f64,
    pub n_records: usize,
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub prior_mean: Vec<f64>,
    pub prior_covariance: Vec<f64>,
    /// RFC 3339.
    pub created_at: String,
    /// SHA-256 of the IPD file the model was fitted on.
    pub dataset_digest: String,
    pub engine_version: String,
}

impl ModelArtifact {
    pub fn from_model(model: &FittedModel, dataset_digest: String, created_at: String) -> Self {
        let posterior = &model.posterior;
        let treatments = &model.network.treatments;
        let prior = posterior.prior();
        ModelArtifact {
            format_version: FORMAT_VERSION.to_owned(),
            treatments: treatments.clone(),
            covariates: model.network.schema.clone(),
            direction: model.network.direction,
            layout: LayoutDescriptor::of(posterior.layout()),
            posterior_mean: posterior.mean().iter().copied().collect(),
            posterior_covariance: to_row_major(posterior.covariance()),
            stage1: model
                .stage1
                .iter()
                .map(|s| Stage1Record {
                    study: s.study.clone(),
                    reference: treatments.label(s.reference).to_owned(),
                    contrasts: s.contrasts.iter().map(|&t| treatments.label(t).to_owned()).collect(),
                    estimate: s.estimate.clone(),
                    covariance: s.covariance.clone(),
                    residual_variance: s.residual_variance,
                    n_records: s.n_records,
                    jitter: s.jitter,
                })
                .collect(),
            provenance: Provenance {
                prior_mean: prior.mean.iter().copied().collect(),
                prior_covariance: to_row_major(&prior.covariance),
                created_at,
                dataset_digest,
                engine_version: env!("CARGO_PKG_VERSION").to_owned(),
            },
        }
    }

    pub fn network(&self) -> NetworkSpec {
        NetworkSpec::new(self.treatments.clone(), self.covariates.clone(), self.direction)
    }

    /// Rebuilds the model, checking the artifact's internal consistency.
    pub fn to_model(&self) -> Result<FittedModel> {
        let invalid = |msg: String| Error::Format(format!("invalid model artifact: {msg}"));
        let network = self.network();
        let layout = ParameterLayout::for_network(&network);
        if self.layout != LayoutDescriptor::of(&layout) {
            return Err(invalid(
                "layout descriptor does not match the treatments and covariate schema".into(),
            ));
        }
        let p = layout.len();
        let matrix = |name: &str, values: &[f64], n: usize| -> Result<DMatrix<f64>> {
            if values.len() != n * n {
                return Err(invalid(format!("{name} has {} entries, expected {}", values.len(), n * n)));
            }
            Ok(from_row_major(n, values))
        };
        let vector = |name: &str, values: &[f64], n: usize| -> Result<DVector<f64>> {
            if values.len() != n {
                return Err(invalid(format!("{name} has {} entries, expected {n}", values.len())));
            }
            Ok(DVector::from_column_slice(values))
        };
        let prior = GaussianPrior {
            mean: vector("prior_mean", &self.provenance.prior_mean, p)?,
            covariance: matrix("prior_covariance", &self.provenance.prior_covariance, p)?,
        };
        let posterior = GaussianPosterior::new(
            layout,
            vector("posterior_mean", &self.posterior_mean, p)?,
            matrix("posterior_covariance", &self.posterior_covariance, p)?,
            prior,
        )
        .map_err(|e| invalid(e.to_string()))?;

        let q = self.covariates.encoded_width() + 1;
        let label = |l: &str| -> Result<TreatmentId> {
            self.treatments
                .id_of(l)
                .ok_or_else(|| invalid(format!("stage-1 summary names unknown treatment `{l}`")))
        };
        let stage1 = self
            .stage1
            .iter()
            .map(|s| {
                let contrasts = s.contrasts.iter().map(|l| label(l)).collect::<Result<Vec<_>>>()?;
                let k = contrasts.len() * q;
                if s.estimate.len() != k || s.covariance.len() != k * k {
                    return Err(invalid(format!("stage-1 summary for `{}` has wrong dimensions", s.study)));
                }
                Ok(Stage1Summary {
                    study: s.study.clone(),
                    reference: label(&s.reference)?,
                    contrasts,
                    estimate: s.estimate.clone(),
                    covariance: s.covariance.clone(),
                    residual_variance: s.residual_variance,
                    n_records: s.n_records,
                    jitter: s.jitter,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(FittedModel { network, posterior, stage1 })
    }

    /// SHA-256 of the canonical serialization.
    pub fn digest(&self) -> Result<String> {
        Ok(sha256_hex(&write_model(self)?))
    }

    fn all_finite(&self) -> bool {
        let p = &self.provenance;
        self.posterior_mean
            .iter()
            .chain(&self.posterior_covariance)
            .chain(&p.prior_mean)
            .chain(&p.prior_covariance)
            .chain(self.stage1.iter().flat_map(|s| {
                s.estimate
                    .iter()
                    .chain(&s.covariance)
                    .chain([&s.residual_variance, &s.jitter])
            }))
            .all(|x| x.is_finite())
    }
}

/// Canonical JSON bytes. Writing what [`read_model`] returned reproduces the
/// input byte for byte.
pub fn write_model(artifact: &ModelArtifact) -> Result<Vec<u8>> {
    if !artifact.all_finite() {
        return Err(Error::Numeric("model artifact contains non-finite values".into()));
    }
    to_canonical_json(artifact)
}

/// Parses and validates a model artifact.
pub fn read_model(bytes: &[u8]) -> Result<ModelArtifact> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| {
        let what = if e.is_eof() { "truncated" } else { "not valid JSON" };
        Error::Format(format!("model artifact is {what}: {e}"))
    })?;
    let version = value
        .get("format_version")
        .ok_or_else(|| Error::Format("model artifact has no format_version".into()))?;
    if version.as_str() != Some(FORMAT_VERSION) {
        return Err(Error::Version {
            found: version.to_string().trim_matches('"').to_owned(),
            expected: FORMAT_VERSION.to_owned(),
        });
    }
    let artifact: ModelArtifact = serde_json::from_value(value)
        .map_err(|e| Error::Format(format!("invalid model artifact: {e}")))?;
    artifact.to_model()?;
    Ok(artifact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fit_model, FitOptions};
    use crate::synth::Scenario;

    fn artifact() -> ModelArtifact {
        let data = Scenario::sign_flip().simulate(1);
        let (model, _) = fit_model(&data, &FitOptions::default()).unwrap();
        ModelArtifact::from_model(&model, "ab".repeat(32), "2026-01-01T00:00:00Z".into())
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let a = artifact();
        let bytes = write_model(&a).unwrap();
        let back = read_model(&bytes).unwrap();
        assert_eq!(back, a);
        assert_eq!(write_model(&back).unwrap(), bytes);
        assert_eq!(back.to_model().unwrap(), a.to_model().unwrap());
        assert_eq!(a.digest().unwrap(), sha256_hex(&bytes));
    }

    #[test]
    fn truncated_and_garbage_input() {
        let bytes = write_model(&artifact()).unwrap();
        let err = read_model(&bytes[..bytes.len() / 2]).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
        assert!(matches!(read_model(b"not json"), Err(Error::Format(_))));
        assert!(matches!(read_model(b"{}"), Err(Error::Format(_))));
    }

    #[test]
    fn version_mismatch() {
        let mut a = artifact();
        a.format_version = "2".into();
        let bytes = to_canonical_json(&a).unwrap();
        match read_model(&bytes) {
            Err(Error::Version { found, expected }) => {
                assert_eq!(found, "2");
                assert_eq!(expected, FORMAT_VERSION);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn asymmetric_covariance_rejected() {
        let mut a = artifact();
        a.posterior_covariance[1] += 1e-6;
        let bytes = write_model(&a).unwrap();
        let err = read_model(&bytes).unwrap_err();
        assert!(err.to_string().contains("symmetric"), "{err}");
    }

    #[test]
    fn layout_must_match_schema() {
        let mut a = artifact();
        a.layout.parameters.swap(0, 1);
        assert!(matches!(read_model(&write_model(&a).unwrap()), Err(Error::Format(_))));
        let mut a = artifact();
        a.posterior_mean.pop();
        assert!(matches!(read_model(&write_model(&a).unwrap()), Err(Error::Format(_))));
    }

    #[test]
    fn non_finite_values_are_not_written() {
        let mut a = artifact();
        a.posterior_mean[0] = f64::NAN;
        assert!(write_model(&a).is_err());
    }
}
