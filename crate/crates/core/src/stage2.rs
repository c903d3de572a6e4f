//! Second stage: pool the per-study contrasts under the consistency
//! assumption into a conjugate Gaussian posterior over the basic parameters
//! `ψ_gq` (every treatment against network treatment 1), and sample from it.
//!
//! The study likelihoods are `δ̂_i ~ N(A_i ψ, S_i)` and the prior is
//! `ψ ~ N(μ₀, Σ₀)`, so the posterior is Gaussian with
//!
//! ```text
//! Σ_post = (Σ_i A_iᵀ S_i⁻¹ A_i + Σ₀⁻¹)⁻¹
//! μ_post = Σ_post (Σ_i A_iᵀ S_i⁻¹ δ̂_i + Σ₀⁻¹ μ₀)
//! ```

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::domain::{NetworkSpec, TreatmentId, TreatmentSet};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, max_asymmetry, symmetrize};
use crate::parallel::{for_each_row_chunk, map_ordered, Execution};
use crate::stage1::{CoefficientClass, Stage1Fit};

/// Default prior standard deviation for every basic parameter.
pub const DEFAULT_PRIOR_SD: f64 = 100.0;

/// Posterior precision matrices with a larger condition number are rejected.
pub const MAX_PRECISION_CONDITION: f64 = 1e12;

/// Symmetry tolerance applied to posterior covariances supplied from outside.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

/// Flattened order of `ψ`: treatment-major (`g = 2..G`), then coefficient
/// class (`main`, then each encoded covariate). `ψ_1q ≡ 0` is not stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterLayout {
    treatments: TreatmentSet,
    covariates: Vec<String>,
}

impl ParameterLayout {
    pub fn new(treatments: TreatmentSet, covariates: Vec<String>) -> Self {
        ParameterLayout {
            treatments,
            covariates,
        }
    }

    /// Layout for a network, covariates in schema encoding order.
    pub fn for_network(network: &NetworkSpec) -> Self {
        ParameterLayout::new(network.treatments.clone(), network.schema.encoded_names())
    }

    /// Layout whose treatments are labelled `#1..#g`.
    pub fn unlabelled(n_treatments: usize, covariates: Vec<String>) -> Self {
        let labels = TreatmentSet::new((1..=n_treatments).map(|i| format!("#{i}")))
            .expect("generated labels are unique");
        ParameterLayout::new(labels, covariates)
    }

    pub fn treatments(&self) -> &TreatmentSet {
        &self.treatments
    }

    pub fn n_treatments(&self) -> usize {
        self.treatments.len()
    }

    /// Encoded covariate column names (length Q*).
    pub fn covariates(&self) -> &[String] {
        &self.covariates
    }

    /// Coefficients per treatment, `Q* + 1`.
    pub fn block(&self) -> usize {
        self.covariates.len() + 1
    }

    pub fn len(&self) -> usize {
        self.n_treatments().saturating_sub(1) * self.block()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Column of `ψ_{t,class}`; `None` for the reference treatment.
    pub fn index(&self, treatment: TreatmentId, class: CoefficientClass) -> Option<usize> {
        if treatment.is_reference() || treatment.index() > self.n_treatments() {
            return None;
        }
        Some((treatment.index() - 2) * self.block() + class.offset())
    }

    pub fn entry(&self, column: usize) -> (TreatmentId, CoefficientClass) {
        let block = self.block();
        (
            TreatmentId::new(column / block + 2),
            CoefficientClass::from_offset(column % block),
        )
    }

    pub fn class_name(&self, class: CoefficientClass) -> &str {
        match class {
            CoefficientClass::Main => "main",
            CoefficientClass::Covariate(q) => &self.covariates[q],
        }
    }

    pub fn parameter_name(&self, column: usize) -> String {
        let (t, class) = self.entry(column);
        format!("psi[{}, {}]", self.treatments.label(t), self.class_name(class))
    }
}

/// Maps one study's contrast entries onto `ψ` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyDesign {
    pub study: String,
    pub matrix: DMatrix<f64>,
}

/// Row for contrast (k vs study reference h), class q: `+1` at `ψ_kq` unless
/// k is treatment 1, `−1` at `ψ_hq` unless h is treatment 1.
pub fn build_consistency_design(fit: &Stage1Fit, layout: &ParameterLayout) -> Result<ConsistencyDesign> {
    for t in fit.arms() {
        if t.index() > layout.n_treatments() {
            return Err(Error::UnknownTreatment(format!(
                "{t} in study `{}` (network has {} treatments)",
                fit.study,
                layout.n_treatments()
            )));
        }
    }
    if fit.layout.len() != fit.contrasts.len() * layout.block() {
        return Err(Error::InvalidArgument(format!(
            "study `{}`: contrast layout has {} entries, expected {} contrasts × {} classes",
            fit.study,
            fit.layout.len(),
            fit.contrasts.len(),
            layout.block()
        )));
    }
    let mut matrix = DMatrix::zeros(fit.layout.len(), layout.len());
    for (row, entry) in fit.layout.iter().enumerate() {
        if let Some(col) = layout.index(entry.treatment, entry.class) {
            matrix[(row, col)] += 1.0;
        }
        if let Some(col) = layout.index(fit.reference, entry.class) {
            matrix[(row, col)] -= 1.0;
        }
    }
    Ok(ConsistencyDesign {
        study: fit.study.clone(),
        matrix,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianPrior {
    /// Independent zero-mean normals with a common standard deviation.
    pub fn vague(dim: usize, sd: f64) -> Result<Self> {
        if !(sd.is_finite() && sd > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "prior standard deviation must be a positive finite number, got {sd}"
            )));
        }
        Ok(GaussianPrior {
            mean: DVector::zeros(dim),
            covariance: DMatrix::from_diagonal_element(dim, dim, sd * sd),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    layout: ParameterLayout,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    prior: GaussianPrior,
    /// Lower Cholesky factor of `covariance` (plus jitter, if any was needed).
    factor: DMatrix<f64>,
}

impl PartialEq for GaussianPosterior {
    fn eq(&self, other: &Self) -> bool {
        self.layout == other.layout
            && self.mean == other.mean
            && self.covariance == other.covariance
            && self.prior == other.prior
    }
}

impl GaussianPosterior {
    /// Validates dimensions, symmetry and positive definiteness.
    pub fn new(
        layout: ParameterLayout,
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
        prior: GaussianPrior,
    ) -> Result<Self> {
        let p = layout.len();
        if mean.len() != p || covariance.shape() != (p, p) || prior.dim() != p {
            return Err(Error::InvalidArgument(format!(
                "posterior dimensions do not match the {p}-parameter layout"
            )));
        }
        if mean.iter().chain(covariance.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Numeric("posterior contains non-finite values".into()));
        }
        let asym = max_asymmetry(&covariance);
        if asym > SYMMETRY_TOLERANCE {
            return Err(Error::Numeric(format!(
                "posterior covariance is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let (chol, _) = cholesky_with_jitter(&covariance).ok_or_else(|| {
            Error::Numeric("posterior covariance is not positive definite".into())
        })?;
        Ok(GaussianPosterior {
            layout,
            mean,
            covariance,
            prior,
            factor: chol.unpack(),
        })
    }

    pub fn layout(&self) -> &ParameterLayout {
        &self.layout
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn prior(&self) -> &GaussianPrior {
        &self.prior
    }

    pub fn sd(&self, column: usize) -> f64 {
        self.covariance[(column, column)].sqrt()
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<PosteriorSamples> {
        sample(self, n, seed)
    }
}

/// Pools stage-1 fits into the conjugate posterior.
pub fn combine(
    fits: &[Stage1Fit],
    designs: &[ConsistencyDesign],
    prior: &GaussianPrior,
    layout: &ParameterLayout,
) -> Result<GaussianPosterior> {
    combine_with(fits, designs, prior, layout, Execution::default())
}

pub fn combine_with(
    fits: &[Stage1Fit],
    designs: &[ConsistencyDesign],
    prior: &GaussianPrior,
    layout: &ParameterLayout,
    exec: Execution,
) -> Result<GaussianPosterior> {
    let p = layout.len();
    if fits.len() != designs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} fits but {} designs",
            fits.len(),
            designs.len()
        )));
    }
    if prior.dim() != p || prior.covariance.shape() != (p, p) {
        return Err(Error::InvalidArgument(format!(
            "prior has dimension {}, layout needs {p}",
            prior.dim()
        )));
    }
    for (fit, design) in fits.iter().zip(designs) {
        let rows = fit.estimate.len();
        if design.matrix.shape() != (rows, p) || fit.covariance.shape() != (rows, rows) {
            return Err(Error::InvalidArgument(format!(
                "study `{}`: design is {:?}, expected ({rows}, {p})",
                fit.study,
                design.matrix.shape()
            )));
        }
    }

    for col in 0..p {
        let touched = designs
            .iter()
            .any(|d| d.matrix.column(col).iter().any(|v| *v != 0.0));
        if !touched {
            return Err(Error::Estimability {
                parameter: layout.parameter_name(col),
                reason: "no study informs this parameter".into(),
            });
        }
    }

    let pairs: Vec<(&Stage1Fit, &ConsistencyDesign)> = fits.iter().zip(designs).collect();
    let contributions = map_ordered(exec, &pairs, |_, (fit, design)| {
        study_information(fit, design)
    });

    // Fixed study order keeps the reduction bit-reproducible.
    let mut precision = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    for contribution in contributions {
        let (info, score) = contribution?;
        precision += info;
        rhs += score;
    }

    let prior_chol = cholesky_with_jitter(&prior.covariance)
        .filter(|(_, jitter)| *jitter == 0.0)
        .ok_or_else(|| Error::InvalidArgument("prior covariance is not positive definite".into()))?
        .0;
    let prior_precision = prior_chol.inverse();
    rhs += &prior_precision * &prior.mean;
    precision += prior_precision;
    symmetrize(&mut precision);

    check_conditioning(&precision, layout)?;

    let (chol, jitter) = cholesky_with_jitter(&precision)
        .ok_or_else(|| Error::Numeric("posterior precision is not positive definite".into()))?;
    if jitter > 0.0 {
        log::warn!("added jitter {jitter:e} to the posterior precision");
    }
    let mean = chol.solve(&rhs);
    let mut covariance = chol.inverse();
    symmetrize(&mut covariance);
    GaussianPosterior::new(layout.clone(), mean, covariance, prior.clone())
}

/// `(A_iᵀ S_i⁻¹ A_i, A_iᵀ S_i⁻¹ δ̂_i)` for one study.
fn study_information(
    fit: &Stage1Fit,
    design: &ConsistencyDesign,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (chol, _) = cholesky_with_jitter(&fit.covariance).ok_or_else(|| {
        Error::Numeric(format!(
            "study `{}`: contrast covariance is not positive definite",
            fit.study
        ))
    })?;
    let weighted = chol.solve(&design.matrix);
    let info = design.matrix.transpose() * &weighted;
    let score = weighted.transpose() * &fit.estimate;
    Ok((info, score))
}

fn check_conditioning(precision: &DMatrix<f64>, layout: &ParameterLayout) -> Result<()> {
    let eig = SymmetricEigen::new(precision.clone());
    let (mut lo, mut hi, mut lo_idx) = (f64::INFINITY, 0.0f64, 0);
    for (i, v) in eig.eigenvalues.iter().enumerate() {
        if *v < lo {
            lo = *v;
            lo_idx = i;
        }
        hi = hi.max(v.abs());
    }
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > MAX_PRECISION_CONDITION {
        // the parameter loading most on the weakest direction
        let worst = eig
            .eigenvectors
            .column(lo_idx)
            .iamax();
        return Err(Error::Estimability {
            parameter: layout.parameter_name(worst),
            reason: format!(
                "posterior precision condition number {condition:.3e} exceeds {MAX_PRECISION_CONDITION:e}"
            ),
        });
    }
    Ok(())
}

/// Posterior draws of `ψ`, one row per draw in [`ParameterLayout`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    layout: ParameterLayout,
    seed: u64,
    n_samples: usize,
    values: Vec<f64>,
}

impl PosteriorSamples {
    /// Wraps externally produced draws (row-major, `n × layout.len()`).
    pub fn from_rows(layout: ParameterLayout, seed: u64, values: Vec<f64>) -> Result<Self> {
        let width = layout.len();
        if width == 0 || values.is_empty() || values.len() % width != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values do not form rows of width {width}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("posterior samples must be finite".into()));
        }
        Ok(PosteriorSamples {
            n_samples: values.len() / width,
            layout,
            seed,
            values,
        })
    }

    pub fn layout(&self) -> &ParameterLayout {
        &self.layout
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn width(&self) -> usize {
        self.layout.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column_mean(&self, column: usize) -> f64 {
        let w = self.width();
        self.values[column..].iter().step_by(w).sum::<f64>() / self.n_samples as f64
    }
}

/// Draws `n` independent samples `μ + L z`, `z ~ N(0, I)`.
pub fn sample(posterior: &GaussianPosterior, n: usize, seed: u64) -> Result<PosteriorSamples> {
    sample_with(posterior, n, seed, Execution::default())
}

pub fn sample_with(
    posterior: &GaussianPosterior,
    n: usize,
    seed: u64,
    exec: Execution,
) -> Result<PosteriorSamples> {
    if n == 0 {
        return Err(Error::InvalidArgument("at least one sample is required".into()));
    }
    let p = posterior.layout.len();
    let mut values = vec![0.0; n * p];
    let factor = &posterior.factor;
    let mean = &posterior.mean;
    for_each_row_chunk(exec, &mut values, p, |chunk, rows, block| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chunk as u64);
        let z = DMatrix::<f64>::from_fn(p, rows.len(), |_, _| rng.sample(StandardNormal));
        let draws = factor * z;
        for (j, row) in block.chunks_mut(p).enumerate() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = mean[k] + draws[(k, j)];
            }
        }
    });
    Ok(PosteriorSamples {
        layout: posterior.layout.clone(),
        seed,
        n_samples: n,
        values,
    })
}
