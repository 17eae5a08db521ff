//! Recording-year confirmation, per-video age derivation, one-age-per-speaker
//! selection and the age histogram.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::PersonConsensus;
use crate::error::{Error, Result};
use crate::ids::SpeakerId;
use crate::ingest::VideoMeta;
use crate::seeding;

pub const MIN_AGE: i32 = 1;
pub const MAX_AGE: i32 = 110;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReliabilityTier {
    /// Upload year found in both title and description.
    Strict,
    /// Upload year found in the title only: usable for training, never for testing.
    TitleOnly,
    None,
}

impl ReliabilityTier {
    pub fn token(self) -> &'static str {
        match self {
            ReliabilityTier::Strict => "strict",
            ReliabilityTier::TitleOnly => "title_only",
            ReliabilityTier::None => "none",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        Some(match s {
            "strict" => ReliabilityTier::Strict,
            "title_only" => ReliabilityTier::TitleOnly,
            "none" => ReliabilityTier::None,
            _ => return None,
        })
    }

    pub fn test_eligible(self) -> bool {
        self == ReliabilityTier::Strict
    }
}

impl fmt::Display for ReliabilityTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// True if `year` occurs in `text` as a standalone token: the four ASCII
/// digits are not adjacent to another letter, digit or underscore.
pub fn contains_year_token(text: &str, year: i32) -> bool {
    let needle = format!("{year:04}");
    text.match_indices(&needle).any(|(start, _)| {
        let before = text[..start].chars().next_back();
        let after = text[start + needle.len()..].chars().next();
        !before.is_some_and(is_word_char) && !after.is_some_and(is_word_char)
    })
}

/// Looks for the upload year in the title and description. The returned
/// year, when present, is always the upload year.
pub fn confirm_recording_year(video: &VideoMeta) -> (Option<i32>, ReliabilityTier) {
    let year = video.upload_year();
    let in_title = contains_year_token(&video.title, year);
    let in_description = contains_year_token(&video.description, year);
    match (in_title, in_description) {
        (true, true) => (Some(year), ReliabilityTier::Strict),
        (true, false) => (Some(year), ReliabilityTier::TitleOnly),
        _ => (None, ReliabilityTier::None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum AgeError {
    #[error("implausible chronology: age {0}")]
    ImplausibleChronology(i32),
    #[error("implausible age: {0}")]
    ImplausibleAge(i32),
}

pub fn derive_age(birth_year: i32, recording_year: i32) -> Result<u32, AgeError> {
    let age = recording_year - birth_year;
    if age < MIN_AGE {
        Err(AgeError::ImplausibleChronology(age))
    } else if age > MAX_AGE {
        Err(AgeError::ImplausibleAge(age))
    } else {
        Ok(age as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgeTriplet {
    pub youtube_id: String,
    pub speaker_id: SpeakerId,
    pub age: u32,
    pub tier: ReliabilityTier,
}

/// Where (video, speaker) candidates went.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletSummary {
    pub videos: usize,
    pub videos_strict: usize,
    pub videos_title_only: usize,
    pub videos_unconfirmed: usize,
    pub candidates: usize,
    pub unknown_speaker: usize,
    pub missing_birth_year: usize,
    pub implausible_chronology: usize,
    pub implausible_age: usize,
    pub duplicates_collapsed: usize,
    pub triplets: usize,
}

/// One triplet per (video, speaker) with a confirmed recording year, a
/// consensus birth year and a plausible age. Sorted by (speaker, video).
pub fn build_triplets(
    consensus: &[PersonConsensus],
    videos: &[VideoMeta],
) -> Result<(Vec<AgeTriplet>, TripletSummary)> {
    let birth_years: HashMap<&SpeakerId, Option<i32>> =
        consensus.iter().map(|p| (&p.speaker_id, p.birth_year)).collect();
    let mut summary = TripletSummary {
        videos: videos.len(),
        ..Default::default()
    };
    let mut triplets: BTreeMap<(SpeakerId, String), AgeTriplet> = BTreeMap::new();
    for video in videos {
        let (recording_year, tier) = confirm_recording_year(video);
        match tier {
            ReliabilityTier::Strict => summary.videos_strict += 1,
            ReliabilityTier::TitleOnly => summary.videos_title_only += 1,
            ReliabilityTier::None => summary.videos_unconfirmed += 1,
        }
        summary.candidates += video.speaker_ids.len();
        let Some(recording_year) = recording_year else { continue };
        for speaker in &video.speaker_ids {
            let birth_year = match birth_years.get(speaker) {
                None => {
                    summary.unknown_speaker += 1;
                    continue;
                }
                Some(None) => {
                    summary.missing_birth_year += 1;
                    continue;
                }
                Some(Some(y)) => *y,
            };
            let age = match derive_age(birth_year, recording_year) {
                Ok(age) => age,
                Err(AgeError::ImplausibleChronology(_)) => {
                    summary.implausible_chronology += 1;
                    continue;
                }
                Err(AgeError::ImplausibleAge(_)) => {
                    summary.implausible_age += 1;
                    continue;
                }
            };
            let key = (speaker.clone(), video.youtube_id.clone());
            if let Some(existing) = triplets.get(&key) {
                if existing.age != age {
                    return Err(Error::validation(format!(
                        "conflicting ages {} and {age} for speaker {speaker} in video {}",
                        existing.age, video.youtube_id
                    )));
                }
                summary.duplicates_collapsed += 1;
                continue;
            }
            triplets.insert(
                key,
                AgeTriplet {
                    youtube_id: video.youtube_id.clone(),
                    speaker_id: speaker.clone(),
                    age,
                    tier,
                },
            );
        }
    }
    let triplets: Vec<AgeTriplet> = triplets.into_values().collect();
    summary.triplets = triplets.len();
    Ok((triplets, summary))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerAgePair {
    pub speaker_id: SpeakerId,
    pub age: u32,
    pub source_triplet: String,
    pub tier: ReliabilityTier,
}

/// Picks one of a speaker's triplets uniformly at random. The generator is
/// keyed by `(seed, speaker_id)`, so the choice does not depend on which
/// other speakers are present or on input order.
pub fn select_single_age(triplets: &[AgeTriplet], seed: u64) -> Result<SpeakerAgePair> {
    let first = triplets
        .first()
        .ok_or_else(|| Error::validation("select_single_age needs at least one triplet"))?;
    if triplets.iter().any(|t| t.speaker_id != first.speaker_id) {
        return Err(Error::validation(
            "select_single_age needs triplets of a single speaker",
        ));
    }
    if triplets.iter().any(|t| t.tier == ReliabilityTier::None) {
        return Err(Error::validation("triplets must carry a confirmed tier"));
    }
    let mut distinct: Vec<&AgeTriplet> = triplets.iter().collect();
    distinct.sort();
    distinct.dedup();
    let mut rng = seeding::substream(seed, "select-age", first.speaker_id.as_str());
    let chosen = distinct[rng.random_range(0..distinct.len())];
    Ok(SpeakerAgePair {
        speaker_id: chosen.speaker_id.clone(),
        age: chosen.age,
        source_triplet: chosen.youtube_id.clone(),
        tier: chosen.tier,
    })
}

/// One age per speaker, sorted by speaker id.
pub fn select_ages(triplets: &[AgeTriplet], seed: u64) -> Result<Vec<SpeakerAgePair>> {
    let mut groups: BTreeMap<&SpeakerId, Vec<AgeTriplet>> = BTreeMap::new();
    for t in triplets {
        groups.entry(&t.speaker_id).or_default().push(t.clone());
    }
    let groups: Vec<Vec<AgeTriplet>> = groups.into_values().collect();
    groups.par_iter().map(|g| select_single_age(g, seed)).collect()
}

fn lf_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

/// Writes the released metadata file `youtube_id,voxceleb_id,age,tier`,
/// sorted by (speaker, video).
pub fn write_triplets_csv<W: Write>(out: W, triplets: &[AgeTriplet]) -> Result<()> {
    let mut sorted: Vec<&AgeTriplet> = triplets.iter().collect();
    sorted.sort_by(|a, b| (&a.speaker_id, &a.youtube_id).cmp(&(&b.speaker_id, &b.youtube_id)));
    let mut csv = lf_writer(out);
    csv.write_record(["youtube_id", "voxceleb_id", "age", "tier"])?;
    for t in sorted {
        csv.write_record([
            t.youtube_id.as_str(),
            t.speaker_id.as_str(),
            &t.age.to_string(),
            t.tier.token(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_triplets_csv<R: Read>(reader: R) -> Result<Vec<AgeTriplet>> {
    let mut csv = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in csv.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::validation(format!("triplets line {}: {what}", i + 2));
        if rec.len() != 4 {
            return Err(bad("expected 4 columns"));
        }
        out.push(AgeTriplet {
            youtube_id: rec[0].to_owned(),
            speaker_id: SpeakerId::new(&rec[1]),
            age: rec[2].parse().map_err(|_| bad("invalid age"))?,
            tier: ReliabilityTier::from_token(&rec[3]).ok_or_else(|| bad("invalid tier"))?,
        });
    }
    Ok(out)
}

/// Writes `voxceleb_id,age,youtube_id,tier`, one row per speaker.
pub fn write_pairs_csv<W: Write>(out: W, pairs: &[SpeakerAgePair]) -> Result<()> {
    let mut sorted: Vec<&SpeakerAgePair> = pairs.iter().collect();
    sorted.sort_by(|a, b| a.speaker_id.cmp(&b.speaker_id));
    let mut csv = lf_writer(out);
    csv.write_record(["voxceleb_id", "age", "youtube_id", "tier"])?;
    for p in sorted {
        csv.write_record([
            p.speaker_id.as_str(),
            &p.age.to_string(),
            p.source_triplet.as_str(),
            p.tier.token(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_pairs_csv<R: Read>(reader: R) -> Result<Vec<SpeakerAgePair>> {
    let mut csv = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in csv.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::validation(format!("speaker ages line {}: {what}", i + 2));
        if rec.len() != 4 {
            return Err(bad("expected 4 columns"));
        }
        out.push(SpeakerAgePair {
            speaker_id: SpeakerId::new(&rec[0]),
            age: rec[1].parse().map_err(|_| bad("invalid age"))?,
            source_triplet: rec[2].to_owned(),
            tier: ReliabilityTier::from_token(&rec[3]).ok_or_else(|| bad("invalid tier"))?,
        });
    }
    Ok(out)
}

/// Bin edges of the published age table: (0,10], (10,20], ..., (70,80], (80,92].
pub const DEFAULT_BIN_EDGES: [u32; 10] = [0, 10, 20, 30, 40, 50, 60, 70, 80, 92];

/// Counts over left-open, right-closed bins `(edges[i], edges[i+1]]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Histogram {
    pub edges: Vec<u32>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn labels(&self) -> Vec<String> {
        self.edges.windows(2).map(|w| format!("({}, {}]", w[0], w[1])).collect()
    }

    pub fn count_for(&self, lower: u32, upper: u32) -> Option<usize> {
        self.edges
            .windows(2)
            .position(|w| w[0] == lower && w[1] == upper)
            .map(|i| self.counts[i])
    }

    pub fn render_table(&self) -> String {
        let labels = self.labels();
        let head = ("Age interval", "Number of speakers");
        let w0 = labels.iter().map(String::len).chain([head.0.len()]).max().unwrap_or(0);
        let w1 = head.1.len();
        let mut s = format!("{:<w0$} | {:>w1$}\n", head.0, head.1);
        s.push_str(&format!("{}-+-{}\n", "-".repeat(w0), "-".repeat(w1)));
        for (label, count) in labels.iter().zip(&self.counts) {
            s.push_str(&format!("{label:<w0$} | {count:>w1$}\n"));
        }
        s.push_str(&format!("{:<w0$} | {:>w1$}\n", "total", self.total()));
        s
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut csv = lf_writer(out);
        csv.write_record(["interval", "lower", "upper", "count"])?;
        for ((label, w), count) in self.labels().iter().zip(self.edges.windows(2)).zip(&self.counts) {
            csv.write_record([label.as_str(), &w[0].to_string(), &w[1].to_string(), &count.to_string()])?;
        }
        csv.flush()?;
        Ok(())
    }
}

pub fn age_histogram(pairs: &[SpeakerAgePair], edges: &[u32]) -> Result<Histogram> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::validation(
            "bin edges must be strictly increasing with at least two entries",
        ));
    }
    let mut counts = vec![0usize; edges.len() - 1];
    for p in pairs {
        // first edge >= age closes the bin
        let upper = edges.partition_point(|&e| e < p.age);
        if upper == 0 || upper == edges.len() {
            return Err(Error::validation(format!(
                "age {} of speaker {} lies outside ({}, {}]",
                p.age,
                p.speaker_id,
                edges[0],
                edges[edges.len() - 1]
            )));
        }
        counts[upper - 1] += 1;
    }
    Ok(Histogram {
        edges: edges.to_vec(),
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn video(id: &str, title: &str, description: &str, year: i32, speakers: &[&str]) -> VideoMeta {
        VideoMeta {
            youtube_id: id.into(),
            title: title.into(),
            description: description.into(),
            upload_date: NaiveDate::from_ymd_opt(year, 6, 1).unwrap(),
            speaker_ids: speakers.iter().map(|s| SpeakerId::from(*s)).collect(),
        }
    }

    #[test]
    fn recording_year_tiers() {
        let v = video("a", "Interview 2014", "uploaded in 2014", 2014, &[]);
        assert_eq!(confirm_recording_year(&v), (Some(2014), ReliabilityTier::Strict));
        let v = video("b", "Best of 2014 tour", "great show", 2014, &[]);
        assert_eq!(confirm_recording_year(&v), (Some(2014), ReliabilityTier::TitleOnly));
        let v = video("c", "ID 20149 clip", "-", 2014, &[]);
        assert_eq!(confirm_recording_year(&v), (None, ReliabilityTier::None));
        let v = video("d", "clip", "recorded 2014", 2014, &[]);
        assert_eq!(confirm_recording_year(&v), (None, ReliabilityTier::None));
        // a different year in the text never counts
        let v = video("e", "Interview 2013", "2013", 2014, &[]);
        assert_eq!(confirm_recording_year(&v), (None, ReliabilityTier::None));
    }

    #[test]
    fn year_token_boundaries() {
        assert!(contains_year_token("(2014)", 2014));
        assert!(contains_year_token("2014", 2014));
        assert!(contains_year_token("Oscars 2014!", 2014));
        assert!(contains_year_token("12/03/2014", 2014));
        assert!(!contains_year_token("120149", 2014));
        assert!(!contains_year_token("x2014", 2014));
        assert!(!contains_year_token("2014s", 2014));
        assert!(!contains_year_token("é2014", 2014));
        assert!(contains_year_token("20149 and 2014", 2014));
    }

    #[test]
    fn ages_from_years() {
        assert_eq!(derive_age(1981, 2005), Ok(24));
        assert_eq!(derive_age(1981, 2008), Ok(27));
        assert_eq!(derive_age(1981, 2014), Ok(33));
        assert_eq!(derive_age(2005, 2005), Err(AgeError::ImplausibleChronology(0)));
        assert_eq!(derive_age(1765, 2014), Err(AgeError::ImplausibleAge(249)));
        assert_eq!(derive_age(1904, 2014), Ok(110));
        assert_eq!(derive_age(1903, 2014), Err(AgeError::ImplausibleAge(111)));
    }

    fn person(id: &str, year: Option<i32>) -> PersonConsensus {
        PersonConsensus {
            speaker_id: id.into(),
            person_key: crate::ingest::PersonKey::normalize(id),
            gender: None,
            gender_reason: None,
            birth_year: year,
            birth_year_reason: None,
            sources_seen: Default::default(),
        }
    }

    #[test]
    fn triplets_from_three_interviews() {
        let consensus = vec![person("tom", Some(1981)), person("anon", None)];
        let videos = vec![
            video("v1", "Interview 2005", "from 2005", 2005, &["tom", "anon"]),
            video("v2", "Interview 2008", "in 2008", 2008, &["tom"]),
            video("v3", "Interview 2014", "promo", 2014, &["tom", "ghost"]),
            video("v4", "untitled", "", 2014, &["tom"]),
        ];
        let (triplets, summary) = build_triplets(&consensus, &videos).unwrap();
        let ages: Vec<_> = triplets
            .iter()
            .map(|t| (t.youtube_id.as_str(), t.age, t.tier))
            .collect();
        assert_eq!(
            ages,
            vec![
                ("v1", 24, ReliabilityTier::Strict),
                ("v2", 27, ReliabilityTier::Strict),
                ("v3", 33, ReliabilityTier::TitleOnly)
            ]
        );
        assert_eq!(summary.missing_birth_year, 1);
        assert_eq!(summary.unknown_speaker, 1);
        assert_eq!(summary.videos_unconfirmed, 1);
        assert_eq!(summary.candidates, 6);
        assert!(summary.triplets <= summary.candidates);
    }

    #[test]
    fn repeated_speaker_in_video_collapses() {
        let consensus = vec![person("tom", Some(1981))];
        let videos = vec![video("v1", "2005", "2005", 2005, &["tom", "tom"])];
        let (triplets, summary) = build_triplets(&consensus, &videos).unwrap();
        assert_eq!(triplets.len(), 1);
        assert_eq!(summary.duplicates_collapsed, 1);
    }

    fn triplet(video: &str, speaker: &str, age: u32) -> AgeTriplet {
        AgeTriplet {
            youtube_id: video.into(),
            speaker_id: speaker.into(),
            age,
            tier: ReliabilityTier::Strict,
        }
    }

    #[test]
    fn single_triplet_is_always_chosen() {
        let t = [triplet("v", "s", 41)];
        for seed in 0..20 {
            assert_eq!(select_single_age(&t, seed).unwrap().age, 41);
        }
        assert!(select_single_age(&[], 0).is_err());
    }

    #[test]
    fn selection_is_seeded_and_order_free() {
        let t = vec![
            triplet("a", "tom", 24),
            triplet("b", "tom", 27),
            triplet("c", "tom", 33),
        ];
        let pick = select_single_age(&t, 99).unwrap();
        assert!([24, 27, 33].contains(&pick.age));
        let mut reversed = t.clone();
        reversed.reverse();
        assert_eq!(select_single_age(&reversed, 99).unwrap(), pick);
    }

    #[test]
    fn selection_is_uniform() {
        let draws = 30_000;
        let mut counts = HashMap::new();
        for i in 0..draws {
            let spk = format!("spk-{i}");
            let t = vec![triplet("a", &spk, 24), triplet("b", &spk, 27), triplet("c", &spk, 33)];
            *counts.entry(select_single_age(&t, 7).unwrap().age).or_insert(0usize) += 1;
        }
        for age in [24, 27, 33] {
            let freq = counts[&age] as f64 / draws as f64;
            assert!((freq - 1.0 / 3.0).abs() < 0.01, "age {age}: {freq}");
        }
    }

    #[test]
    fn adding_a_speaker_does_not_change_others() {
        let base = vec![
            triplet("a", "x", 20),
            triplet("b", "x", 30),
            triplet("c", "y", 40),
            triplet("d", "y", 50),
        ];
        let mut more = base.clone();
        more.push(triplet("e", "z", 60));
        more.push(triplet("f", "z", 61));
        let a = select_ages(&base, 3).unwrap();
        let b = select_ages(&more, 3).unwrap();
        assert_eq!(a[..], b[..2]);
    }

    fn pair(age: u32) -> SpeakerAgePair {
        SpeakerAgePair {
            speaker_id: "s".into(),
            age,
            source_triplet: "v".into(),
            tier: ReliabilityTier::Strict,
        }
    }

    #[test]
    fn histogram_is_right_closed() {
        let h = age_histogram(&[pair(25), pair(25), pair(35)], &DEFAULT_BIN_EDGES).unwrap();
        assert_eq!(h.count_for(20, 30), Some(2));
        assert_eq!(h.count_for(30, 40), Some(1));
        let h = age_histogram(&[pair(30)], &DEFAULT_BIN_EDGES).unwrap();
        assert_eq!(h.count_for(20, 30), Some(1));
        assert_eq!(h.count_for(30, 40), Some(0));
        assert!(age_histogram(&[pair(93)], &DEFAULT_BIN_EDGES).is_err());
        assert!(age_histogram(&[pair(0)], &DEFAULT_BIN_EDGES).is_err());
    }

    #[test]
    fn histogram_reproduces_published_counts() {
        let table = [
            (10, 1),
            (20, 112),
            (30, 1204),
            (40, 1287),
            (50, 926),
            (60, 702),
            (70, 457),
            (80, 122),
            (92, 10),
        ];
        let pairs: Vec<_> = table
            .iter()
            .flat_map(|&(upper, n)| (0..n).map(move |_| pair(upper)))
            .collect();
        let h = age_histogram(&pairs, &DEFAULT_BIN_EDGES).unwrap();
        assert_eq!(h.count_for(20, 30), Some(1204));
        assert_eq!(h.count_for(30, 40), Some(1287));
        assert_eq!(h.count_for(80, 92), Some(10));
        assert_eq!(h.total(), 4821);
    }

    #[test]
    fn histogram_table_layout() {
        let h = age_histogram(&[pair(5), pair(30)], &[0, 10, 30]).unwrap();
        assert_eq!(
            h.render_table(),
            "Age interval | Number of speakers\n\
             -------------+-------------------\n\
             (0, 10]      |                  1\n\
             (10, 30]     |                  1\n\
             total        |                  2\n"
        );
        let mut csv = Vec::new();
        h.write_csv(&mut csv).unwrap();
        assert_eq!(
            String::from_utf8(csv).unwrap(),
            "interval,lower,upper,count\n\"(0, 10]\",0,10,1\n\"(10, 30]\",10,30,1\n"
        );
    }

    proptest! {
        #[test]
        fn histogram_is_sum_preserving_and_order_free(mut ages in proptest::collection::vec(1u32..=92, 0..200)) {
            let pairs: Vec<_> = ages.iter().map(|a| pair(*a)).collect();
            let h = age_histogram(&pairs, &DEFAULT_BIN_EDGES).unwrap();
            prop_assert_eq!(h.total(), ages.len());
            ages.reverse();
            let pairs: Vec<_> = ages.iter().map(|a| pair(*a)).collect();
            prop_assert_eq!(age_histogram(&pairs, &DEFAULT_BIN_EDGES).unwrap(), h);
        }
    }
}
