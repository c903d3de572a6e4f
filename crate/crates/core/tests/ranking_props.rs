//! Laws every rank summary must satisfy, checked on random inputs.

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use rankforge_core::ranking::{
    mean_rank, pairwise_beat_probabilities, rank_per_sample, rank_probabilities, sucra,
    sucra_from_mean_rank, EffectSamples, RankSamples,
};
use rankforge_core::{CovariateProfile, Direction};

fn random_ranks(g: usize, n: usize, seed: u64) -> RankSamples {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<u32> = (1..=g as u32).collect();
    let mut values = Vec::with_capacity(g * n);
    for _ in 0..n {
        perm.shuffle(&mut rng);
        values.extend_from_slice(&perm);
    }
    RankSamples::from_rows(g, values).unwrap()
}

/// Effects with a treatment-specific mean, column 1 fixed at zero.
fn random_effects(g: usize, n: usize, seed: u64) -> EffectSamples {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    let mut values = Vec::with_capacity(g * n);
    for _ in 0..n {
        values.extend(std::iter::once(0.0).chain((1..g).map(|t| 0.3 * t as f64 + z.sample(&mut rng))));
    }
    EffectSamples::from_rows(g, values, Direction::HigherBetter, CovariateProfile::new()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sucra_dual_form_and_sum_law(g in 2usize..=10, n in 1usize..2000, seed in any::<u64>()) {
        let ranks = random_ranks(g, n, seed);
        let matrix = rank_probabilities(&ranks);
        let s = sucra(&matrix).unwrap();
        let dual = sucra_from_mean_rank(&mean_rank(&ranks)).unwrap();
        for (a, b) in s.iter().zip(&dual) {
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(a));
        }
        prop_assert!((s.iter().sum::<f64>() - g as f64 / 2.0).abs() <= 1e-10);
    }

    #[test]
    fn rank_matrix_is_doubly_stochastic(g in 2usize..=10, n in 1usize..2000, seed in any::<u64>()) {
        let m = rank_probabilities(&random_ranks(g, n, seed)).probabilities;
        for i in 0..g {
            prop_assert!((m.row(i).sum() - 1.0).abs() <= 1e-12);
            prop_assert!((m.column(i).sum() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn strictly_increasing_transform_keeps_ranks(g in 2usize..8, seed in any::<u64>()) {
        let effects = random_effects(g, 500, seed);
        let warped: Vec<f64> = effects.values().iter().map(|x| x * x * x + 2.0 * x).collect();
        let warped = EffectSamples::from_rows(g, warped, Direction::HigherBetter, CovariateProfile::new()).unwrap();
        let (a, b) = (rank_per_sample(&effects, seed), rank_per_sample(&warped, seed));
        prop_assert_eq!(a.ranks(), b.ranks());
    }

    #[test]
    fn relabelling_permutes_sucra(g in 3usize..8, seed in any::<u64>()) {
        let effects = random_effects(g, 800, seed);
        // keep treatment 1 in place (its column is the zero reference), permute the rest
        let mut perm: Vec<usize> = (1..g).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        perm.insert(0, 0);
        let permuted: Vec<f64> = (0..effects.n_samples())
            .flat_map(|i| { let row = effects.row(i); perm.iter().map(|&p| row[p]).collect::<Vec<_>>() })
            .collect();
        let permuted = EffectSamples::from_rows(g, permuted, Direction::HigherBetter, CovariateProfile::new()).unwrap();
        let a = sucra(&rank_probabilities(&rank_per_sample(&effects, 1))).unwrap();
        let b = sucra(&rank_probabilities(&rank_per_sample(&permuted, 1))).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            prop_assert!((b[new] - a[old]).abs() <= 1e-12);
        }
    }

    #[test]
    fn beat_matrix_is_complementary(g in 2usize..8, seed in any::<u64>()) {
        let m = pairwise_beat_probabilities(&random_effects(g, 300, seed));
        for i in 0..g {
            prop_assert_eq!(m[(i, i)], 0.5);
            for j in 0..g {
                prop_assert!((m[(i, j)] + m[(j, i)] - 1.0).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn two_treatment_probability_matches_normal_cdf() {
    let n = 200_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let z = Normal::new(1.0, 1.0).unwrap();
    let values: Vec<f64> = (0..n).flat_map(|_| [0.0, z.sample(&mut rng)]).collect();
    let effects = EffectSamples::from_rows(2, values, Direction::HigherBetter, CovariateProfile::new()).unwrap();
    let s = sucra(&rank_probabilities(&rank_per_sample(&effects, 0))).unwrap();
    let phi1 = StatNormal::new(0.0, 1.0).unwrap().cdf(1.0);
    assert!((s[1] - phi1).abs() <= 0.004, "{} vs {phi1}", s[1]);
    assert!((s[0] - (1.0 - phi1)).abs() <= 0.004);
}

#[test]
fn lower_better_mirrors_higher_better() {
    let effects = random_effects(5, 3000, 8);
    let flipped = EffectSamples::from_rows(5, effects.values().to_vec(), Direction::LowerBetter, CovariateProfile::new()).unwrap();
    let up = sucra(&rank_probabilities(&rank_per_sample(&effects, 3))).unwrap();
    let down = sucra(&rank_probabilities(&rank_per_sample(&flipped, 3))).unwrap();
    for (a, b) in up.iter().zip(&down) {
        assert!((a + b - 1.0).abs() <= 1e-12);
    }
}
