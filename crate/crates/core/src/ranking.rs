//! Personalized treatment hierarchies from posterior draws.
//!
//! For a covariate profile `x`, each draw of `ψ` gives the expected relative
//! effect of every treatment against treatment 1,
//! `d_g(x) = ψ_g0 + Σ_q ψ_gq x_q` (`d_1 ≡ 0`). Each draw is ranked (rank 1 =
//! most favorable), the ranks are tallied into `p_gr`, and SUCRA follows from
//! either of its two equivalent forms:
//!
//! ```text
//! SUCRA(g) = Σ_{s=1}^{G-1} Σ_{r=1}^{s} p_gr / (G - 1) = (G - E[rank g]) / (G - 1)
//! ```

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{encode_profile, CovariateProfile, CovariateSchema, Direction, NetworkSpec, TreatmentId};
use crate::error::{Error, Result};
use crate::parallel::{chunk_ranges, for_each_row_chunk, map_ordered, Execution};
use crate::stage2::PosteriorSamples;

/// Mixed into the report seed so tie-breaking never shares a stream with
/// posterior sampling.
const TIE_STREAM_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// SUCRA values closer than this share a hierarchy position tie flag.
pub const SUCRA_TIE_TOLERANCE: f64 = 1e-12;

pub const DEFAULT_CREDIBLE_LEVEL: f64 = 0.95;

/// Per-draw relative effects `d_g(x)` against treatment 1, `n × G` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectSamples {
    n_samples: usize,
    n_treatments: usize,
    values: Vec<f64>,
    direction: Direction,
    profile: CovariateProfile,
}

impl EffectSamples {
    /// Wraps precomputed effects. Column 1 must be identically zero.
    pub fn from_rows(
        n_treatments: usize,
        values: Vec<f64>,
        direction: Direction,
        profile: CovariateProfile,
    ) -> Result<Self> {
        if n_treatments == 0 || values.is_empty() || values.len() % n_treatments != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values do not form rows of width {n_treatments}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("effect samples must be finite".into()));
        }
        if values.iter().step_by(n_treatments).any(|v| *v != 0.0) {
            return Err(Error::InvalidArgument(
                "the reference treatment's effect must be zero in every draw".into(),
            ));
        }
        Ok(EffectSamples {
            n_samples: values.len() / n_treatments,
            n_treatments,
            values,
            direction,
            profile,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_treatments(&self) -> usize {
        self.n_treatments
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn profile(&self) -> &CovariateProfile {
        &self.profile
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let g = self.n_treatments;
        &self.values[i * g..(i + 1) * g]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, treatment: TreatmentId) -> Vec<f64> {
        self.values[treatment.position()..]
            .iter()
            .step_by(self.n_treatments)
            .copied()
            .collect()
    }
}

/// Evaluates `d_g(x)` for every draw.
pub fn effects_for_profile(
    samples: &PosteriorSamples,
    profile: &CovariateProfile,
    schema: &CovariateSchema,
    direction: Direction,
) -> Result<EffectSamples> {
    effects_for_profile_with(samples, profile, schema, direction, Execution::default())
}

pub fn effects_for_profile_with(
    samples: &PosteriorSamples,
    profile: &CovariateProfile,
    schema: &CovariateSchema,
    direction: Direction,
    exec: Execution,
) -> Result<EffectSamples> {
    let layout = samples.layout();
    let names = schema.encoded_names();
    if names != layout.covariates() {
        return Err(Error::InvalidArgument(format!(
            "schema encodes covariates [{}] but the samples were drawn for [{}]",
            names.join(", "),
            layout.covariates().join(", ")
        )));
    }
    let x = encode_profile(profile, schema)?;
    let g = layout.n_treatments();
    let block = layout.block();
    let width = samples.width();
    let psi = samples.values();

    let mut values = vec![0.0; samples.n_samples() * g];
    for_each_row_chunk(exec, &mut values, g, |_, rows, out| {
        for (i, d) in rows.zip(out.chunks_mut(g)) {
            let draw = &psi[i * width..(i + 1) * width];
            for (t, coefs) in draw.chunks(block).enumerate() {
                d[t + 1] = coefs[0] + coefs[1..].iter().zip(&x).map(|(c, v)| c * v).sum::<f64>();
            }
        }
    });
    EffectSamples::from_rows(g, values, direction, profile.clone())
}

/// Integer ranks, one permutation of `1..=G` per draw, `n × G` row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankSamples {
    n_samples: usize,
    n_treatments: usize,
    ranks: Vec<u32>,
    seed: u64,
    tie_samples: usize,
}

impl RankSamples {
    /// Wraps externally produced ranks; every row must be a permutation.
    pub fn from_rows(n_treatments: usize, ranks: Vec<u32>) -> Result<Self> {
        if n_treatments == 0 || ranks.is_empty() || ranks.len() % n_treatments != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} ranks do not form rows of width {n_treatments}",
                ranks.len()
            )));
        }
        let mut seen = vec![false; n_treatments];
        for row in ranks.chunks(n_treatments) {
            seen.fill(false);
            for r in row {
                let r = *r as usize;
                if r == 0 || r > n_treatments || std::mem::replace(&mut seen[r - 1], true) {
                    return Err(Error::InvalidArgument(format!(
                        "rank row {row:?} is not a permutation of 1..={n_treatments}"
                    )));
                }
            }
        }
        Ok(RankSamples {
            n_samples: ranks.len() / n_treatments,
            n_treatments,
            ranks,
            seed: 0,
            tie_samples: 0,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_treatments(&self) -> usize {
        self.n_treatments
    }

    pub fn row(&self, i: usize) -> &[u32] {
        let g = self.n_treatments;
        &self.ranks[i * g..(i + 1) * g]
    }

    pub fn ranks(&self) -> &[u32] {
        &self.ranks
    }

    /// Draws in which at least two treatments had exactly equal effects.
    pub fn tie_samples(&self) -> usize {
        self.tie_samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Ranks each draw; exact ties are broken uniformly at random from `seed`.
pub fn rank_per_sample(effects: &EffectSamples, seed: u64) -> RankSamples {
    rank_per_sample_with(effects, seed, Execution::default())
}

pub fn rank_per_sample_with(effects: &EffectSamples, seed: u64, exec: Execution) -> RankSamples {
    let g = effects.n_treatments;
    let direction = effects.direction;
    let mut ranks = vec![0u32; effects.n_samples * g];
    let ties = AtomicUsize::new(0);

    for_each_row_chunk(exec, &mut ranks, g, |chunk, rows, out| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ TIE_STREAM_SALT);
        rng.set_stream(chunk as u64);
        let mut order: Vec<usize> = Vec::with_capacity(g);
        let mut key = vec![0.0; g];
        let mut local_ties = 0;
        for (i, rank_row) in rows.zip(out.chunks_mut(g)) {
            for (k, d) in key.iter_mut().zip(effects.row(i)) {
                *k = direction.orient(*d);
            }
            order.clear();
            order.extend(0..g);
            // finite by construction, so partial_cmp is total here
            order.sort_unstable_by(|&a, &b| key[b].partial_cmp(&key[a]).unwrap().then(a.cmp(&b)));

            let mut tied = false;
            let mut start = 0;
            while start < g {
                let mut end = start + 1;
                while end < g && key[order[end]] == key[order[start]] {
                    end += 1;
                }
                if end - start > 1 {
                    tied = true;
                    order[start..end].shuffle(&mut rng);
                }
                start = end;
            }
            local_ties += usize::from(tied);
            for (pos, t) in order.iter().enumerate() {
                rank_row[*t] = pos as u32 + 1;
            }
        }
        ties.fetch_add(local_ties, Ordering::Relaxed);
    });

    RankSamples {
        n_samples: effects.n_samples,
        n_treatments: g,
        ranks,
        seed,
        tie_samples: ties.into_inner(),
    }
}

/// `p_gr`: rows are treatments (network order), columns ranks `1..=G`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankMatrix {
    pub probabilities: DMatrix<f64>,
    pub n_samples: usize,
    pub seed: u64,
    pub tie_samples: usize,
}

impl RankMatrix {
    pub fn n_treatments(&self) -> usize {
        self.probabilities.nrows()
    }

    pub fn p(&self, treatment: TreatmentId, rank: usize) -> f64 {
        self.probabilities[(treatment.position(), rank - 1)]
    }
}

pub fn rank_probabilities(ranks: &RankSamples) -> RankMatrix {
    rank_probabilities_with(ranks, Execution::default())
}

pub fn rank_probabilities_with(ranks: &RankSamples, exec: Execution) -> RankMatrix {
    let g = ranks.n_treatments;
    let chunks = chunk_ranges(ranks.n_samples);
    let partial = map_ordered(exec, &chunks, |_, range| {
        let mut counts = vec![0u64; g * g];
        for i in range.clone() {
            for (t, r) in ranks.row(i).iter().enumerate() {
                counts[t * g + (*r as usize - 1)] += 1;
            }
        }
        counts
    });
    let mut counts = vec![0u64; g * g];
    for part in partial {
        for (c, p) in counts.iter_mut().zip(part) {
            *c += p;
        }
    }
    let n = ranks.n_samples as f64;
    RankMatrix {
        probabilities: DMatrix::from_row_iterator(g, g, counts.into_iter().map(|c| c as f64 / n)),
        n_samples: ranks.n_samples,
        seed: ranks.seed,
        tie_samples: ranks.tie_samples,
    }
}

/// SUCRA from cumulative rank probabilities.
pub fn sucra(rank_matrix: &RankMatrix) -> Result<Vec<f64>> {
    let g = rank_matrix.n_treatments();
    if g < 2 {
        return Err(Error::InvalidArgument(
            "SUCRA is undefined for fewer than two treatments".into(),
        ));
    }
    let denom = (g - 1) as f64;
    Ok(rank_matrix
        .probabilities
        .row_iter()
        .map(|row| {
            let mut cumulative = 0.0;
            let mut surface = 0.0;
            for s in 0..g - 1 {
                cumulative += row[s];
                surface += cumulative;
            }
            surface / denom
        })
        .collect())
}

/// `E[rank(g)]` averaged directly over the per-draw ranks.
pub fn mean_rank(ranks: &RankSamples) -> Vec<f64> {
    let g = ranks.n_treatments;
    let mut sums = vec![0u64; g];
    for row in ranks.ranks.chunks(g) {
        for (s, r) in sums.iter_mut().zip(row) {
            *s += u64::from(*r);
        }
    }
    let n = ranks.n_samples as f64;
    sums.into_iter().map(|s| s as f64 / n).collect()
}

/// SUCRA from mean ranks, `(G − E[rank]) / (G − 1)`.
pub fn sucra_from_mean_rank(mean_ranks: &[f64]) -> Result<Vec<f64>> {
    let g = mean_ranks.len();
    if g < 2 {
        return Err(Error::InvalidArgument(
            "SUCRA is undefined for fewer than two treatments".into(),
        ));
    }
    let g = g as f64;
    Ok(mean_ranks.iter().map(|m| (g - m) / (g - 1.0)).collect())
}

/// Inverse of [`sucra_from_mean_rank`]: `E[rank] = G − (G − 1)·SUCRA`.
pub fn mean_rank_from_sucra(sucra: &[f64]) -> Result<Vec<f64>> {
    let g = sucra.len();
    if g < 2 {
        return Err(Error::InvalidArgument(
            "SUCRA is undefined for fewer than two treatments".into(),
        ));
    }
    let g = g as f64;
    Ok(sucra.iter().map(|s| g - (g - 1.0) * s).collect())
}

/// `M[g][h]`: fraction of draws where `g` is strictly more favorable than
/// `h`, exact ties counted half. Diagonal is 0.5.
pub fn pairwise_beat_probabilities(effects: &EffectSamples) -> DMatrix<f64> {
    pairwise_beat_probabilities_with(effects, Execution::default())
}

pub fn pairwise_beat_probabilities_with(effects: &EffectSamples, exec: Execution) -> DMatrix<f64> {
    let g = effects.n_treatments;
    let direction = effects.direction;
    let chunks = chunk_ranges(effects.n_samples);
    // doubled counts: 2 per win, 1 per tie
    let partial = map_ordered(exec, &chunks, |_, range| {
        let mut counts = vec![0u64; g * g];
        for i in range.clone() {
            let d = effects.row(i);
            for a in 0..g {
                let ka = direction.orient(d[a]);
                for b in 0..g {
                    if a == b {
                        continue;
                    }
                    let kb = direction.orient(d[b]);
                    if ka > kb {
                        counts[a * g + b] += 2;
                    } else if ka == kb {
                        counts[a * g + b] += 1;
                    }
                }
            }
        }
        counts
    });
    let mut counts = vec![0u64; g * g];
    for part in partial {
        for (c, p) in counts.iter_mut().zip(part) {
            *c += p;
        }
    }
    let denom = 2.0 * effects.n_samples as f64;
    DMatrix::from_fn(g, g, |a, b| {
        if a == b {
            0.5
        } else {
            counts[a * g + b] as f64 / denom
        }
    })
}

/// Equal-tail quantile with linear interpolation between order statistics
/// (R's type 7). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HierarchyOptions {
    /// Treatment the relative-effect summaries are expressed against.
    pub comparator: TreatmentId,
    pub credible_level: f64,
    /// Seeds tie-breaking.
    pub seed: u64,
    pub execution: Execution,
}

impl Default for HierarchyOptions {
    fn default() -> Self {
        HierarchyOptions {
            comparator: TreatmentId::REFERENCE,
            credible_level: DEFAULT_CREDIBLE_LEVEL,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentSummary {
    pub treatment: TreatmentId,
    pub label: String,
    pub sucra: f64,
    pub mean_rank: f64,
    /// 1 = best, by descending SUCRA.
    pub position: usize,
    /// Posterior mean of `d_g(x) − d_comparator(x)`.
    pub effect_mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyReport {
    /// One entry per treatment, network order.
    pub treatments: Vec<TreatmentSummary>,
    pub rank_matrix: RankMatrix,
    pub beat_probabilities: DMatrix<f64>,
    pub profile: CovariateProfile,
    pub comparator: TreatmentId,
    pub credible_level: f64,
    pub direction: Direction,
    pub seed: u64,
    pub n_samples: usize,
    /// Groups of treatments whose SUCRA values are equal within tolerance;
    /// their relative positions follow network index only.
    pub sucra_ties: Vec<Vec<TreatmentId>>,
}

impl HierarchyReport {
    /// Treatments sorted by hierarchy position.
    pub fn by_position(&self) -> Vec<&TreatmentSummary> {
        let mut v: Vec<_> = self.treatments.iter().collect();
        v.sort_by_key(|s| s.position);
        v
    }

    pub fn top(&self) -> &TreatmentSummary {
        self.by_position()[0]
    }

    pub fn summary(&self, treatment: TreatmentId) -> &TreatmentSummary {
        &self.treatments[treatment.position()]
    }
}

/// Positions by descending SUCRA; near-equal values keep network order and
/// are reported as tie groups.
pub fn hierarchy_positions(sucra: &[f64]) -> (Vec<usize>, Vec<Vec<TreatmentId>>) {
    let mut order: Vec<usize> = (0..sucra.len()).collect();
    order.sort_by(|&a, &b| sucra[b].total_cmp(&sucra[a]).then(a.cmp(&b)));

    let mut groups: Vec<Vec<usize>> = Vec::new();
    for t in order {
        match groups.last_mut() {
            Some(group)
                if (sucra[*group.last().unwrap()] - sucra[t]).abs() <= SUCRA_TIE_TOLERANCE =>
            {
                group.push(t)
            }
            _ => groups.push(vec![t]),
        }
    }
    let mut positions = vec![0; sucra.len()];
    let mut next = 1;
    let mut ties = Vec::new();
    for mut group in groups {
        group.sort_unstable();
        if group.len() > 1 {
            ties.push(group.iter().map(|t| TreatmentId::new(t + 1)).collect());
        }
        for t in group {
            positions[t] = next;
            next += 1;
        }
    }
    (positions, ties)
}

/// Full hierarchy for one covariate profile.
pub fn personalized_hierarchy(
    samples: &PosteriorSamples,
    profile: &CovariateProfile,
    network: &NetworkSpec,
    options: &HierarchyOptions,
) -> Result<HierarchyReport> {
    let g = network.n_treatments();
    if samples.layout().n_treatments() != g {
        return Err(Error::InvalidArgument(format!(
            "samples cover {} treatments, network has {g}",
            samples.layout().n_treatments()
        )));
    }
    if !network.treatments.contains(options.comparator) {
        return Err(Error::UnknownTreatment(options.comparator.to_string()));
    }
    if !(options.credible_level > 0.0 && options.credible_level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "credible level must lie in (0, 1), got {}",
            options.credible_level
        )));
    }
    let exec = options.execution;
    let effects =
        effects_for_profile_with(samples, profile, &network.schema, network.direction, exec)?;
    let ranks = rank_per_sample_with(&effects, options.seed, exec);
    let rank_matrix = rank_probabilities_with(&ranks, exec);
    let sucra = sucra(&rank_matrix)?;
    let mean_ranks = mean_rank(&ranks);
    debug_assert!(sucra_from_mean_rank(&mean_ranks)
        .unwrap()
        .iter()
        .zip(&sucra)
        .all(|(a, b)| (a - b).abs() < 1e-9));
    let beat_probabilities = pairwise_beat_probabilities_with(&effects, exec);
    let (positions, sucra_ties) = hierarchy_positions(&sucra);

    let comparator = effects.column(options.comparator);
    let tail = (1.0 - options.credible_level) / 2.0;
    let ids: Vec<TreatmentId> = network.treatments.ids().collect();
    let intervals = map_ordered(exec, &ids, |_, t| {
        let mut diff: Vec<f64> = effects
            .column(*t)
            .iter()
            .zip(&comparator)
            .map(|(d, c)| d - c)
            .collect();
        let mean = diff.iter().sum::<f64>() / diff.len() as f64;
        diff.sort_unstable_by(f64::total_cmp);
        (mean, quantile_sorted(&diff, tail), quantile_sorted(&diff, 1.0 - tail))
    });

    let treatments = ids
        .iter()
        .zip(intervals)
        .map(|(t, (effect_mean, ci_low, ci_high))| TreatmentSummary {
            treatment: *t,
            label: network.treatments.label(*t).to_owned(),
            sucra: sucra[t.position()],
            mean_rank: mean_ranks[t.position()],
            position: positions[t.position()],
            effect_mean,
            ci_low,
            ci_high,
        })
        .collect();

    Ok(HierarchyReport {
        treatments,
        rank_matrix,
        beat_probabilities,
        profile: profile.clone(),
        comparator: options.comparator,
        credible_level: options.credible_level,
        direction: network.direction,
        seed: options.seed,
        n_samples: samples.n_samples(),
        sucra_ties,
    })
}
