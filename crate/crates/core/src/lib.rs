//! Two-stage Bayesian network meta-analysis with treatment-covariate
//! interactions, and personalized treatment hierarchies built from it.
//!
//! Stage 1 fits each study's individual patient data separately. Stage 2
//! pools the per-study contrasts under consistency equations with a
//! conjugate Gaussian prior, which gives a closed-form multivariate normal
//! posterior over the basic parameters. Ranking then draws from that
//! posterior, evaluates every treatment's effect at a covariate profile and
//! summarizes the rank distribution (SUCRA, mean rank, rank probabilities).
//!
//! ```no_run
//! use rankforge_core::{fit_model, CovariateProfile, FitOptions, RankRequest};
//! # fn main() -> rankforge_core::Result<()> {
//! let network = rankforge_core::persist::parse_schema_config(&std::fs::read("schema.json")?)?;
//! let data = rankforge_core::persist::parse_ipd_csv(&std::fs::read("ipd.csv")?, &network)?;
//! let (model, _) = fit_model(&data, &FitOptions::default())?;
//! let profile = CovariateProfile::new().with("age", 40.0);
//! let report = model.hierarchy(&profile, &RankRequest::default())?;
//! println!("best: {}", report.top().label);
//! # Ok(())
//! # }
//! ```

pub mod domain;
pub mod error;
pub mod linalg;
pub mod model;
pub mod parallel;
pub mod persist;
pub mod ranking;
pub mod stage1;
pub mod stage2;
pub mod synth;

pub use domain::{
    encode_profile, CovariateDescriptor, CovariateKind, CovariateProfile, CovariateSchema,
    CovariateValue, Direction, IpdDataset, IpdRecord, NetworkSpec, TreatmentId, TreatmentSet,
    ValidationReport,
};
pub use error::{Error, ErrorClass, Result};
pub use model::{fit_model, FitDiagnostics, FitOptions, FittedModel, RankRequest};
pub use parallel::Execution;
pub use ranking::{HierarchyReport, TreatmentSummary};
pub use stage2::{GaussianPosterior, GaussianPrior, ParameterLayout};
