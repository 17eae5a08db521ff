//! Synthetic data: an age population with the published per-bin speaker
//! counts, and embedding corpora with a planted linear age signal and a
//! linearly separable gender signal.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::ids::{Gender, SpeakerId};
use crate::ingest::{EmbeddingRecord, EmbeddingSet, EMBEDDING_DIM};
use crate::seeding;

/// Speakers per age interval `(lower, upper]` in the labeled corpus.
pub const AGE_DISTRIBUTION: [(u32, u32, usize); 9] = [
    (0, 10, 1),
    (10, 20, 112),
    (20, 30, 1204),
    (30, 40, 1287),
    (40, 50, 926),
    (50, 60, 702),
    (60, 70, 457),
    (70, 80, 122),
    (80, 92, 10),
];

pub fn population_size() -> usize {
    AGE_DISTRIBUTION.iter().map(|b| b.2).sum()
}

/// One age per speaker, uniform over the whole years `lower+1 ..= upper` of
/// each interval, with exactly the tabulated counts. Ordered by interval.
pub fn age_population(seed: u64) -> Vec<u32> {
    let mut rng = seeding::substream(seed, "age-population", "");
    let mut ages = Vec::with_capacity(population_size());
    for &(lo, hi, count) in &AGE_DISTRIBUTION {
        ages.extend((0..count).map(|_| rng.random_range(lo + 1..=hi)));
    }
    ages
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnableSpec {
    pub speakers: usize,
    pub min_utterances: usize,
    pub max_utterances: usize,
    pub dimension: usize,
    /// Standard deviation of the per-utterance age noise, in years.
    pub age_noise: f64,
    /// Minimum distance of any utterance from the gender hyperplane, in
    /// units of the per-feature noise.
    pub gender_margin: f64,
    pub seed: u64,
}

impl Default for LearnableSpec {
    fn default() -> Self {
        LearnableSpec {
            speakers: 600,
            min_utterances: 3,
            max_utterances: 6,
            dimension: EMBEDDING_DIM,
            age_noise: 3.0,
            gender_margin: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpeaker {
    pub speaker_id: SpeakerId,
    pub age: u32,
    pub gender: Gender,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnableCorpus {
    pub embeddings: EmbeddingSet,
    pub speakers: Vec<SyntheticSpeaker>,
    /// Noise-free age is `age_intercept + age_weights · x`.
    pub age_weights: Vec<f64>,
    pub age_intercept: f64,
    /// Unit normal of the gender hyperplane through the origin; males lie on
    /// the positive side.
    pub gender_direction: Vec<f64>,
}

const AGE_CENTER: f64 = 40.0;
const AGE_SCALE: f64 = 15.0;

fn random_unit(rng: &mut impl Rng, d: usize, orthogonal_to: Option<&[f64]>) -> Vec<f64> {
    let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    if let Some(u) = orthogonal_to {
        let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
        v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
    }
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= norm);
    v
}

/// Generates embeddings in which age is linear in the features plus noise
/// and gender is separable with a margin. Speaker ages follow
/// [`AGE_DISTRIBUTION`]; genders are balanced up to one speaker.
pub fn learnable_embeddings(spec: &LearnableSpec) -> Result<LearnableCorpus> {
    if spec.dimension < 2 {
        return Err(Error::validation("synthetic embeddings need at least 2 dimensions"));
    }
    if spec.speakers < 2 || spec.min_utterances == 0 || spec.min_utterances > spec.max_utterances {
        return Err(Error::validation("invalid synthetic speaker or utterance counts"));
    }
    if !(spec.age_noise >= 0.0 && spec.gender_margin >= 0.0) {
        return Err(Error::validation("noise and margin must be non-negative"));
    }
    let d = spec.dimension;
    let mut rng = seeding::substream(spec.seed, "synthetic-directions", "");
    let u_age = random_unit(&mut rng, d, None);
    let u_gender = random_unit(&mut rng, d, Some(&u_age));

    let bins =
        WeightedIndex::new(AGE_DISTRIBUTION.iter().map(|b| b.2)).map_err(|e| Error::validation(e.to_string()))?;
    let mut speakers = Vec::with_capacity(spec.speakers);
    let mut records = Vec::new();
    for s in 0..spec.speakers {
        let speaker_id = SpeakerId::new(format!("id{:05}", 10001 + s));
        let mut rng = seeding::substream(spec.seed, "synthetic-speaker", speaker_id.as_str());
        let (lo, hi, _) = AGE_DISTRIBUTION[bins.sample(&mut rng)];
        let age = rng.random_range(lo + 1..=hi);
        let gender = if s % 2 == 0 { Gender::Male } else { Gender::Female };
        let sign = if gender == Gender::Male { 1.0 } else { -1.0 };
        let n_utt = rng.random_range(spec.min_utterances..=spec.max_utterances);
        for u in 0..n_utt {
            let mut x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let pa: f64 = x.iter().zip(&u_age).map(|(a, b)| a * b).sum();
            let pg: f64 = x.iter().zip(&u_gender).map(|(a, b)| a * b).sum();
            let noise: f64 = rng.sample(StandardNormal);
            let a = (age as f64 - AGE_CENTER + spec.age_noise * noise) / AGE_SCALE;
            let extra: f64 = rng.sample(StandardNormal);
            let g = sign * (spec.gender_margin + 0.5 * extra.abs());
            for j in 0..d {
                x[j] += (a - pa) * u_age[j] + (g - pg) * u_gender[j];
            }
            records.push(EmbeddingRecord {
                speaker_id: speaker_id.clone(),
                utterance_id: format!("{speaker_id}/u{u:03}"),
                vector: x,
                age: Some(age),
                gender: Some(gender),
            });
        }
        speakers.push(SyntheticSpeaker {
            speaker_id,
            age,
            gender,
        });
    }
    Ok(LearnableCorpus {
        embeddings: EmbeddingSet { dimension: d, records },
        speakers,
        age_weights: u_age.iter().map(|v| v * AGE_SCALE).collect(),
        age_intercept: AGE_CENTER,
        gender_direction: u_gender,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::age::{age_histogram, ReliabilityTier, SpeakerAgePair};

    #[test]
    fn population_reproduces_the_table() {
        let ages = age_population(4821);
        assert_eq!(ages.len(), 4821);
        let pairs: Vec<SpeakerAgePair> = ages
            .iter()
            .enumerate()
            .map(|(i, &age)| SpeakerAgePair {
                speaker_id: SpeakerId::new(format!("s{i}")),
                age,
                source_triplet: format!("v{i}"),
                tier: ReliabilityTier::Strict,
            })
            .collect();
        let h = age_histogram(&pairs, &crate::age::DEFAULT_BIN_EDGES).unwrap();
        let expected: Vec<usize> = AGE_DISTRIBUTION.iter().map(|b| b.2).collect();
        assert_eq!(h.counts, expected);
        assert_eq!(age_population(4821), ages);
    }

    #[test]
    fn planted_signals_hold() {
        let spec = LearnableSpec {
            speakers: 40,
            dimension: 16,
            age_noise: 0.0,
            seed: 3,
            ..Default::default()
        };
        let c = learnable_embeddings(&spec).unwrap();
        assert_eq!(c.speakers.len(), 40);
        for r in &c.embeddings.records {
            let pred = c.age_intercept + r.vector.iter().zip(&c.age_weights).map(|(a, b)| a * b).sum::<f64>();
            assert!((pred - r.age.unwrap() as f64).abs() < 1e-9);
            let side: f64 = r.vector.iter().zip(&c.gender_direction).map(|(a, b)| a * b).sum();
            assert!(side.abs() >= spec.gender_margin - 1e-12);
            assert_eq!(side > 0.0, r.gender == Some(Gender::Male));
        }
        assert_eq!(learnable_embeddings(&spec).unwrap(), c);
    }
}
