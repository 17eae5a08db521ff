//! Speaker-disjoint holdout and cross-validation splits, gender balancing and
//! per-speaker utterance equalization.
//!
//! Everything here works on speakers, never on individual utterances, and is
//! a pure function of its inputs and the seed.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{Gender, SpeakerId};
use crate::ingest::EmbeddingRecord;
use crate::seeding;

pub const DEFAULT_TRAIN_RATIO: f64 = 0.6;
pub const DEFAULT_FOLDS: usize = 5;

/// Speakers available for splitting. `train_only` speakers (labels derived
/// from title-only evidence) are never placed on the test side.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpeakerPool {
    pub eligible: BTreeSet<SpeakerId>,
    pub train_only: BTreeSet<SpeakerId>,
}

impl SpeakerPool {
    pub fn from_speakers<I: IntoIterator<Item = SpeakerId>>(speakers: I) -> Self {
        SpeakerPool {
            eligible: speakers.into_iter().collect(),
            train_only: BTreeSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.eligible.len() + self.train_only.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Split manifest, archived with every experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub ratio: f64,
    pub k: usize,
    pub train: Vec<SpeakerId>,
    pub test: Vec<SpeakerId>,
    pub folds: BTreeMap<SpeakerId, usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub train_only: Vec<SpeakerId>,
}

impl Split {
    pub fn train_set(&self) -> BTreeSet<&SpeakerId> {
        self.train.iter().collect()
    }

    pub fn test_set(&self) -> BTreeSet<&SpeakerId> {
        self.test.iter().collect()
    }

    /// Checks the structural invariants of a manifest read from disk.
    pub fn validate(&self) -> Result<()> {
        let train = self.train_set();
        if let Some(s) = self.test.iter().find(|s| train.contains(s)) {
            return Err(Error::validation(format!("speaker {s} is on both sides of the split")));
        }
        if let Some(s) = self.train_only.iter().find(|s| self.test.contains(s)) {
            return Err(Error::validation(format!("train-only speaker {s} is in the test set")));
        }
        if !self.folds.is_empty() {
            if self.folds.keys().collect::<BTreeSet<_>>() != train {
                return Err(Error::validation(
                    "fold assignment must cover exactly the training speakers",
                ));
            }
            if self.folds.values().any(|f| *f >= self.k) {
                return Err(Error::validation("fold index out of range"));
            }
        }
        Ok(())
    }
}

fn shuffled<T: Clone + Ord>(items: &BTreeSet<T>, seed: u64, label: &str) -> Vec<T> {
    let mut v: Vec<T> = items.iter().cloned().collect();
    v.shuffle(&mut seeding::substream(seed, label, ""));
    v
}

/// Holdout split of the test-eligible speakers; train-only speakers are added
/// to the training side. With no train-only speakers,
/// `|train| = round(ratio * N)`, clamped so both sides are non-empty.
pub fn holdout_split(pool: &SpeakerPool, ratio: f64, seed: u64) -> Result<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::validation(format!(
            "train ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let n = pool.eligible.len();
    if n < 2 {
        return Err(Error::validation(format!(
            "holdout split needs at least 2 test-eligible speakers, got {n}"
        )));
    }
    let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    let order = shuffled(&pool.eligible, seed, "holdout");
    let mut train: Vec<SpeakerId> = order[..n_train].to_vec();
    let mut test: Vec<SpeakerId> = order[n_train..].to_vec();
    train.extend(pool.train_only.iter().filter(|s| !pool.eligible.contains(*s)).cloned());
    train.sort();
    train.dedup();
    test.sort();
    Ok(Split {
        seed,
        ratio,
        k: 0,
        train,
        test,
        folds: BTreeMap::new(),
        train_only: pool.train_only.iter().cloned().collect(),
    })
}

/// Assigns training speakers to `k` folds whose sizes differ by at most one.
pub fn make_cv_folds(train: &[SpeakerId], k: usize, seed: u64) -> Result<BTreeMap<SpeakerId, usize>> {
    make_stratified_folds(&[train.to_vec()], k, seed)
}

/// Like [`make_cv_folds`], but deals each group (e.g. male and female
/// speakers) round-robin so every fold gets a near-equal share of each group.
pub fn make_stratified_folds(groups: &[Vec<SpeakerId>], k: usize, seed: u64) -> Result<BTreeMap<SpeakerId, usize>> {
    if k < 2 {
        return Err(Error::validation(format!("cross-validation needs k >= 2, got {k}")));
    }
    let total: usize = groups.iter().map(Vec::len).sum();
    if total < k {
        return Err(Error::validation(format!(
            "{total} training speakers cannot fill {k} folds"
        )));
    }
    let mut folds = BTreeMap::new();
    let mut slot = 0usize;
    for (g, group) in groups.iter().enumerate() {
        let set: BTreeSet<SpeakerId> = group.iter().cloned().collect();
        for speaker in shuffled(&set, seed, &format!("folds-{g}")) {
            if folds.insert(speaker.clone(), slot % k).is_some() {
                return Err(Error::validation(format!("speaker {speaker} listed twice")));
            }
            slot += 1;
        }
    }
    Ok(folds)
}

/// Holdout split plus fold assignment over the training side.
pub fn split_with_folds(pool: &SpeakerPool, ratio: f64, k: usize, seed: u64) -> Result<Split> {
    let mut split = holdout_split(pool, ratio, seed)?;
    split.folds = make_cv_folds(&split.train, k, seed)?;
    split.k = k;
    Ok(split)
}

fn speaker_genders(records: &[EmbeddingRecord]) -> Result<BTreeMap<&SpeakerId, Gender>> {
    let mut genders = BTreeMap::new();
    for r in records {
        let g = match r.gender {
            Some(g) if g.is_binary() => g,
            _ => {
                return Err(Error::validation(format!(
                    "utterance {} lacks a binary gender label",
                    r.utterance_id
                )))
            }
        };
        if *genders.entry(&r.speaker_id).or_insert(g) != g {
            return Err(Error::validation(format!(
                "speaker {} has conflicting gender labels",
                r.speaker_id
            )));
        }
    }
    Ok(genders)
}

/// Keeps an equal number of male and female speakers by downsampling the
/// majority class. All records of a retained speaker are kept.
pub fn balance_gender(records: &[EmbeddingRecord], seed: u64) -> Result<Vec<EmbeddingRecord>> {
    let genders = speaker_genders(records)?;
    let by_class = |g: Gender| -> BTreeSet<SpeakerId> {
        genders
            .iter()
            .filter(|(_, v)| **v == g)
            .map(|(s, _)| (*s).clone())
            .collect()
    };
    let male = by_class(Gender::Male);
    let female = by_class(Gender::Female);
    if male.is_empty() || female.is_empty() {
        return Err(Error::validation("gender balancing needs both classes present"));
    }
    let n = male.len().min(female.len());
    let keep_class = |class: &BTreeSet<SpeakerId>, label: &str| -> Vec<SpeakerId> {
        if class.len() == n {
            class.iter().cloned().collect()
        } else {
            shuffled(class, seed, label).into_iter().take(n).collect()
        }
    };
    let kept: BTreeSet<SpeakerId> = keep_class(&male, "balance-male")
        .into_iter()
        .chain(keep_class(&female, "balance-female"))
        .collect();
    Ok(records
        .iter()
        .filter(|r| kept.contains(&r.speaker_id))
        .cloned()
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Equalized {
    pub records: Vec<EmbeddingRecord>,
    /// Speakers with fewer than the requested number of utterances.
    pub dropped: Vec<SpeakerId>,
}

/// Keeps exactly `n_per_speaker` utterances per speaker, sampled without
/// replacement; speakers with fewer are dropped and reported. Output is
/// sorted by (speaker, utterance).
pub fn equalize_utterances(records: &[EmbeddingRecord], n_per_speaker: usize, seed: u64) -> Result<Equalized> {
    if n_per_speaker == 0 {
        return Err(Error::validation("n_per_speaker must be at least 1"));
    }
    let mut by_speaker: BTreeMap<&SpeakerId, Vec<&EmbeddingRecord>> = BTreeMap::new();
    for r in records {
        by_speaker.entry(&r.speaker_id).or_default().push(r);
    }
    let mut out = Equalized::default();
    for (speaker, mut group) in by_speaker {
        if group.len() < n_per_speaker {
            out.dropped.push(speaker.clone());
            continue;
        }
        group.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
        let mut rng = seeding::substream(seed, "equalize", speaker.as_str());
        let mut picked = index::sample(&mut rng, group.len(), n_per_speaker).into_vec();
        picked.sort_unstable();
        out.records.extend(picked.into_iter().map(|i| group[i].clone()));
    }
    Ok(out)
}

/// Utterance count per speaker.
pub fn utterance_counts(records: &[EmbeddingRecord]) -> BTreeMap<&SpeakerId, usize> {
    let mut counts = BTreeMap::new();
    for r in records {
        *counts.entry(&r.speaker_id).or_insert(0) += 1;
    }
    counts
}
