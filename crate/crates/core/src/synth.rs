//! Synthetic IPD networks with known basic parameters.
//!
//! Used for the bundled fixtures, the benchmarks and end-to-end tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::domain::{
    CovariateDescriptor, CovariateKind, CovariateProfile, CovariateSchema, CovariateValue,
    Direction, IpdDataset, IpdRecord, NetworkSpec, TreatmentId, TreatmentSet,
};
use crate::stage2::ParameterLayout;

#[derive(Debug, Clone, PartialEq)]
pub enum CovariateGenerator {
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
    /// Uniform over the declared levels of a categorical covariate.
    UniformLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyDesign {
    pub id: String,
    pub arms: Vec<TreatmentId>,
    pub per_arm: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub network: NetworkSpec,
    /// True `ψ` in [`ParameterLayout`] order.
    pub truth: Vec<f64>,
    /// Prognostic coefficients on the encoded covariates.
    pub prognostic: Vec<f64>,
    /// One per schema covariate.
    pub generators: Vec<CovariateGenerator>,
    pub studies: Vec<StudyDesign>,
    pub noise_sd: f64,
}

impl Scenario {
    pub fn layout(&self) -> ParameterLayout {
        ParameterLayout::for_network(&self.network)
    }

    /// True relative effect of `treatment` vs treatment 1 at encoded `x`.
    pub fn true_effect(&self, treatment: TreatmentId, x: &[f64]) -> f64 {
        if treatment.is_reference() {
            return 0.0;
        }
        let block = x.len() + 1;
        let coefs = &self.truth[(treatment.index() - 2) * block..][..block];
        coefs[0] + coefs[1..].iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    pub fn simulate(&self, seed: u64) -> IpdDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, self.noise_sd).expect("noise sd must be positive");
        let schema = &self.network.schema;
        let mut records = Vec::new();
        for (s, study) in self.studies.iter().enumerate() {
            let intercept = 10.0 + 2.5 * s as f64;
            for &arm in &study.arms {
                for _ in 0..study.per_arm {
                    let covariates: Vec<CovariateValue> = schema
                        .covariates()
                        .iter()
                        .zip(&self.generators)
                        .map(|(d, gen)| draw_covariate(d, gen, &mut rng))
                        .collect();
                    let x = schema.encode(&covariates).expect("generated values conform");
                    let prognostic: f64 = self.prognostic.iter().zip(&x).map(|(b, v)| b * v).sum();
                    let outcome =
                        intercept + prognostic + self.true_effect(arm, &x) + noise.sample(&mut rng);
                    records.push(IpdRecord {
                        study: study.id.clone(),
                        treatment: arm,
                        outcome,
                        covariates,
                    });
                }
            }
        }
        IpdDataset::new(self.network.clone(), records)
    }

    /// Three treatments, one binary effect modifier. Treatment 2 is best at
    /// `x = 0`, treatment 3 at `x = 1`:
    /// `d_2 = 2 − 4x`, `d_3 = 1 + 2x`.
    pub fn sign_flip() -> Self {
        let network = NetworkSpec::new(
            TreatmentSet::new(["Control", "Drug A", "Drug B"]).unwrap(),
            CovariateSchema::new(vec![CovariateDescriptor::binary("biomarker")]).unwrap(),
            Direction::HigherBetter,
        );
        let t = TreatmentId::new;
        Scenario {
            network,
            truth: vec![2.0, -4.0, 1.0, 2.0],
            prognostic: vec![1.0],
            generators: vec![CovariateGenerator::Bernoulli { p: 0.5 }],
            studies: vec![
                StudyDesign { id: "S1".into(), arms: vec![t(1), t(2), t(3)], per_arm: 80 },
                StudyDesign { id: "S2".into(), arms: vec![t(1), t(2)], per_arm: 80 },
                StudyDesign { id: "S3".into(), arms: vec![t(2), t(3)], per_arm: 80 },
            ],
            noise_sd: 1.5,
        }
    }

    /// Six-arm depression-like network with mixed covariate kinds. The outcome
    /// is a negated symptom score, so higher is better.
    pub fn depression_demo() -> Self {
        let treatments = TreatmentSet::new([
            "Sertraline",
            "Bupropion",
            "Citalopram + Bupropion",
            "Citalopram + Buspirone",
            "Escitalopram",
            "Venlafaxine",
        ])
        .unwrap();
        let schema = CovariateSchema::new(vec![
            CovariateDescriptor::continuous("age").with_unit("years minus 40, per decade"),
            CovariateDescriptor::binary("male"),
            CovariateDescriptor::binary("employed"),
            CovariateDescriptor::binary("episodes_gt3"),
            CovariateDescriptor::continuous("household_size").with_unit("members minus 3"),
            CovariateDescriptor::categorical("marital", ["single", "married", "separated"], "single"),
        ])
        .unwrap();
        let network = NetworkSpec::new(treatments, schema, Direction::HigherBetter);
        // per treatment: main, age, male, employed, episodes_gt3, household, married, separated
        #[rustfmt::skip]
        let truth = vec![
            -0.4,  0.1, -0.6, -0.5,  1.2, -0.3,  0.1,  0.0, // Bupropion
             1.4,  0.0,  0.9,  0.8, -1.6,  0.4,  0.0,  0.2, // Citalopram + Bupropion
             0.6, -0.1,  0.2,  0.1,  0.3,  0.1,  0.1, -0.1, // Citalopram + Buspirone
            -0.2,  0.2, -0.1, -0.4, -0.9, -0.2,  0.0,  0.1, // Escitalopram
             0.3,  0.1, -0.5, -0.7,  1.4, -0.4, -0.1,  0.0, // Venlafaxine
        ];
        let t = TreatmentId::new;
        Scenario {
            network,
            truth,
            prognostic: vec![-0.3, 0.2, 1.0, -1.5, 0.1, 0.4, -0.2],
            generators: vec![
                CovariateGenerator::Normal { mean: 0.0, sd: 1.2 },
                CovariateGenerator::Bernoulli { p: 0.4 },
                CovariateGenerator::Bernoulli { p: 0.6 },
                CovariateGenerator::Bernoulli { p: 0.35 },
                CovariateGenerator::Normal { mean: 0.0, sd: 1.3 },
                CovariateGenerator::UniformLevel,
            ],
            studies: vec![
                StudyDesign { id: "STUDY-1".into(), arms: vec![t(1), t(3), t(4), t(6)], per_arm: 250 },
                StudyDesign { id: "STUDY-2".into(), arms: vec![t(1), t(2), t(5), t(6)], per_arm: 250 },
                StudyDesign { id: "STUDY-3".into(), arms: vec![t(2), t(3), t(5)], per_arm: 250 },
            ],
            noise_sd: 4.0,
        }
    }

    /// Two contrasting patients for [`Scenario::depression_demo`].
    pub fn depression_patients() -> (CovariateProfile, CovariateProfile) {
        let a = CovariateProfile::new()
            .with("age", 0.0)
            .with("male", 1.0)
            .with("employed", 1.0)
            .with("episodes_gt3", 0.0)
            .with("household_size", 1.0)
            .with("marital", "married");
        let b = CovariateProfile::new()
            .with("age", 0.0)
            .with("male", 0.0)
            .with("employed", 0.0)
            .with("episodes_gt3", 1.0)
            .with("household_size", -1.0)
            .with("marital", "married");
        (a, b)
    }
}

fn draw_covariate<R: Rng>(
    descriptor: &CovariateDescriptor,
    generator: &CovariateGenerator,
    rng: &mut R,
) -> CovariateValue {
    match (&descriptor.kind, generator) {
        (CovariateKind::Categorical { levels, .. }, _) => {
            CovariateValue::Level(levels[rng.random_range(0..levels.len())].clone())
        }
        (CovariateKind::Binary, CovariateGenerator::Bernoulli { p }) => {
            CovariateValue::Number(if rng.random_bool(*p) { 1.0 } else { 0.0 })
        }
        (_, CovariateGenerator::Normal { mean, sd }) => {
            CovariateValue::Number(Normal::new(*mean, *sd).unwrap().sample(rng))
        }
        (_, CovariateGenerator::Bernoulli { p }) => {
            CovariateValue::Number(if rng.random_bool(*p) { 1.0 } else { 0.0 })
        }
        (_, CovariateGenerator::UniformLevel) => CovariateValue::Number(rng.random_range(0.0..1.0)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenarios_are_valid_and_reproducible() {
        for scenario in [Scenario::sign_flip(), Scenario::depression_demo()] {
            assert_eq!(scenario.truth.len(), scenario.layout().len());
            assert_eq!(scenario.prognostic.len(), scenario.network.schema.encoded_width());
            let a = scenario.simulate(3);
            assert!(a.validate().is_ok(), "{}", a.validate());
            assert_eq!(a, scenario.simulate(3));
        }
    }

    #[test]
    fn sign_flip_truth() {
        let s = Scenario::sign_flip();
        let t = TreatmentId::new;
        assert_eq!(s.true_effect(t(2), &[0.0]), 2.0);
        assert_eq!(s.true_effect(t(2), &[1.0]), -2.0);
        assert_eq!(s.true_effect(t(3), &[1.0]), 3.0);
    }
}
