//! End-to-end fit: validation, stage 1, consistency designs and stage 2.

use crate::domain::{IpdDataset, NetworkSpec, TreatmentId, ValidationReport, CovariateProfile, encode_profile};
use crate::error::{Error, Result};
use crate::linalg::to_row_major;
use crate::parallel::Execution;
use crate::ranking::{personalized_hierarchy, HierarchyOptions, HierarchyReport, DEFAULT_CREDIBLE_LEVEL};
use crate::stage1::{fit_all_studies_with, Stage1Fit};
use crate::stage2::{
    build_consistency_design, combine_with, sample_with, GaussianPosterior, GaussianPrior,
    ParameterLayout, DEFAULT_PRIOR_SD,
};

pub const DEFAULT_RANK_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub prior_sd: f64,
    pub execution: Execution,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            prior_sd: DEFAULT_PRIOR_SD,
            execution: Execution::default(),
        }
    }
}

/// The parts of a stage-1 fit that are kept with a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Summary {
    pub study: String,
    pub reference: TreatmentId,
    pub contrasts: Vec<TreatmentId>,
    pub estimate: Vec<f64>,
    /// Row-major.
    pub covariance: Vec<f64>,
    pub residual_variance: f64,
    pub n_records: usize,
    pub jitter: f64,
}

impl From<&Stage1Fit> for Stage1Summary {
    fn from(fit: &Stage1Fit) -> Self {
        Stage1Summary {
            study: fit.study.clone(),
            reference: fit.reference,
            contrasts: fit.contrasts.clone(),
            estimate: fit.estimate.iter().copied().collect(),
            covariance: to_row_major(&fit.covariance),
            residual_variance: fit.residual_variance,
            n_records: fit.n_records,
            jitter: fit.jitter,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub network: NetworkSpec,
    pub posterior: GaussianPosterior,
    pub stage1: Vec<Stage1Summary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDiagnostic {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// Studies whose contrasts load on this parameter.
    pub informing_studies: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub validation: ValidationReport,
    pub parameters: Vec<ParameterDiagnostic>,
}

pub fn fit_model(dataset: &IpdDataset, options: &FitOptions) -> Result<(FittedModel, FitDiagnostics)> {
    let validation = dataset.validate().into_result()?;
    let exec = options.execution;
    let network = dataset.network.clone();
    let layout = ParameterLayout::for_network(&network);
    let prior = GaussianPrior::vague(layout.len(), options.prior_sd)?;

    let fits = fit_all_studies_with(dataset, exec)?;
    let designs = fits
        .iter()
        .map(|f| build_consistency_design(f, &layout))
        .collect::<Result<Vec<_>>>()?;
    let posterior = combine_with(&fits, &designs, &prior, &layout, exec)?;

    let parameters = (0..layout.len())
        .map(|col| ParameterDiagnostic {
            name: layout.parameter_name(col),
            mean: posterior.mean()[col],
            sd: posterior.sd(col),
            informing_studies: designs
                .iter()
                .filter(|d| d.matrix.column(col).iter().any(|v| *v != 0.0))
                .count(),
        })
        .collect();

    let model = FittedModel {
        network,
        posterior,
        stage1: fits.iter().map(Stage1Summary::from).collect(),
    };
    Ok((model, FitDiagnostics { validation, parameters }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankRequest {
    pub n_samples: usize,
    /// Seeds both posterior sampling and tie-breaking.
    pub seed: u64,
    pub comparator: TreatmentId,
    pub credible_level: f64,
    pub execution: Execution,
}

impl Default for RankRequest {
    fn default() -> Self {
        RankRequest {
            n_samples: DEFAULT_RANK_SAMPLES,
            seed: 0,
            comparator: TreatmentId::REFERENCE,
            credible_level: DEFAULT_CREDIBLE_LEVEL,
            execution: Execution::default(),
        }
    }
}

impl FittedModel {
    pub fn layout(&self) -> &ParameterLayout {
        self.posterior.layout()
    }

    pub fn treatment(&self, label: &str) -> Result<TreatmentId> {
        self.network
            .treatments
            .id_of(label)
            .ok_or_else(|| Error::UnknownTreatment(label.to_owned()))
    }

    /// Samples the posterior and builds the hierarchy for one profile.
    pub fn hierarchy(&self, profile: &CovariateProfile, request: &RankRequest) -> Result<HierarchyReport> {
        // reject bad profiles before paying for the draws
        encode_profile(profile, &self.network.schema)?;
        let samples = sample_with(&self.posterior, request.n_samples, request.seed, request.execution)?;
        personalized_hierarchy(
            &samples,
            profile,
            &self.network,
            &HierarchyOptions {
                comparator: request.comparator,
                credible_level: request.credible_level,
                seed: request.seed,
                execution: request.execution,
            },
        )
    }
}
