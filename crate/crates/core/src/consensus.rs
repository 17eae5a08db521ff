//! Unanimous three-source consensus for gender and birth year, and the
//! comparison of consensus gender against the corpus's original labels.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{Gender, SpeakerId};
use crate::ingest::{OriginalLabel, PersonKey, SourceId, SourceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    MissingSource,
    Disagreement,
    UnknownValue,
    AmbiguousName,
}

impl RejectReason {
    pub fn token(self) -> &'static str {
        match self {
            RejectReason::MissingSource => "missing_source",
            RejectReason::Disagreement => "disagreement",
            RejectReason::UnknownValue => "unknown_value",
            RejectReason::AmbiguousName => "ambiguous_name",
        }
    }

    fn from_token(s: &str) -> Option<Self> {
        Some(match s {
            "missing_source" => RejectReason::MissingSource,
            "disagreement" => RejectReason::Disagreement,
            "unknown_value" => RejectReason::UnknownValue,
            "ambiguous_name" => RejectReason::AmbiguousName,
            _ => return None,
        })
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// A source reporting the same key more than once with different content
/// means the name covers distinct people.
fn has_homonym(records: &[SourceRecord]) -> bool {
    let mut first: HashMap<SourceId, (Gender, Option<i32>)> = HashMap::new();
    records.iter().any(|r| {
        let claim = (r.gender, r.birth_year());
        *first.entry(r.source_id).or_insert(claim) != claim
    })
}

/// Shared rule: every one of the three sources must report a known value and
/// all values must agree.
fn unanimous<T, F>(records: &[SourceRecord], value: F) -> Result<T, RejectReason>
where
    T: PartialEq + Copy,
    F: Fn(&SourceRecord) -> Option<T>,
{
    debug_assert!(
        records.windows(2).all(|w| w[0].person_key == w[1].person_key),
        "consensus input must share one person_key"
    );
    if has_homonym(records) {
        return Err(RejectReason::AmbiguousName);
    }
    let mut per_source: BTreeMap<SourceId, &SourceRecord> = BTreeMap::new();
    for r in records {
        per_source.entry(r.source_id).or_insert(r);
    }
    if per_source.len() < SourceId::ALL.len() {
        return Err(RejectReason::MissingSource);
    }
    let values: Vec<T> = per_source
        .values()
        .map(|r| value(r))
        .collect::<Option<Vec<T>>>()
        .ok_or(RejectReason::UnknownValue)?;
    if values.iter().all(|v| *v == values[0]) {
        Ok(values[0])
    } else {
        Err(RejectReason::Disagreement)
    }
}

/// Consensus gender over one person's records.
pub fn gender_consensus(records: &[SourceRecord]) -> Result<Gender, RejectReason> {
    unanimous(records, |r| (r.gender != Gender::Unknown).then_some(r.gender))
}

/// Consensus birth year; month and day are ignored.
pub fn birth_year_consensus(records: &[SourceRecord]) -> Result<i32, RejectReason> {
    unanimous(records, SourceRecord::birth_year)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonConsensus {
    pub speaker_id: SpeakerId,
    pub person_key: PersonKey,
    pub gender: Option<Gender>,
    pub gender_reason: Option<RejectReason>,
    pub birth_year: Option<i32>,
    pub birth_year_reason: Option<RejectReason>,
    pub sources_seen: BTreeSet<SourceId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsensusStatus {
    Accepted,
    GenderOnly,
    BirthYearOnly,
    Rejected,
}

impl ConsensusStatus {
    pub fn token(self) -> &'static str {
        match self {
            ConsensusStatus::Accepted => "accepted",
            ConsensusStatus::GenderOnly => "gender_only",
            ConsensusStatus::BirthYearOnly => "birth_year_only",
            ConsensusStatus::Rejected => "rejected",
        }
    }
}

impl PersonConsensus {
    pub fn status(&self) -> ConsensusStatus {
        match (self.gender.is_some(), self.birth_year.is_some()) {
            (true, true) => ConsensusStatus::Accepted,
            (true, false) => ConsensusStatus::GenderOnly,
            (false, true) => ConsensusStatus::BirthYearOnly,
            (false, false) => ConsensusStatus::Rejected,
        }
    }

    /// `gender:<reason>;birth_year:<reason>`, omitting accepted fields.
    pub fn reason_string(&self) -> String {
        let mut parts = Vec::new();
        if let Some(r) = self.gender_reason {
            parts.push(format!("gender:{r}"));
        }
        if let Some(r) = self.birth_year_reason {
            parts.push(format!("birth_year:{r}"));
        }
        parts.join(";")
    }
}

/// Runs consensus for every roster speaker. Output is sorted by speaker id.
///
/// Speakers whose names normalize to the same key cannot be told apart and are
/// rejected as ambiguous, as are keys with homonyms inside one source.
pub fn build_consensus(roster: &[OriginalLabel], records: &[SourceRecord]) -> Vec<PersonConsensus> {
    let mut by_key: HashMap<&PersonKey, Vec<SourceRecord>> = HashMap::new();
    for r in records {
        by_key.entry(&r.person_key).or_default().push(r.clone());
    }
    let keys: Vec<PersonKey> = roster.iter().map(|o| PersonKey::normalize(&o.name)).collect();
    let mut roster_count: HashMap<&PersonKey, usize> = HashMap::new();
    for k in &keys {
        *roster_count.entry(k).or_default() += 1;
    }

    let mut out: Vec<PersonConsensus> = roster
        .iter()
        .zip(&keys)
        .map(|(label, key)| {
            let person_records = by_key.get(key).map(Vec::as_slice).unwrap_or(&[]);
            let sources_seen = person_records.iter().map(|r| r.source_id).collect();
            let (gender, birth_year) = if roster_count[key] > 1 {
                (Err(RejectReason::AmbiguousName), Err(RejectReason::AmbiguousName))
            } else {
                (gender_consensus(person_records), birth_year_consensus(person_records))
            };
            PersonConsensus {
                speaker_id: label.speaker_id.clone(),
                person_key: key.clone(),
                gender: gender.ok(),
                gender_reason: gender.err(),
                birth_year: birth_year.ok(),
                birth_year_reason: birth_year.err(),
                sources_seen,
            }
        })
        .collect();
    out.sort_by(|a, b| a.speaker_id.cmp(&b.speaker_id));
    out
}

const CONSENSUS_HEADER: [&str; 6] = ["speaker_id", "person_key", "gender", "birth_year", "status", "reason"];

/// Writes `speaker_id,person_key,gender,birth_year,status,reason`.
pub fn write_consensus_csv<W: Write>(out: W, rows: &[PersonConsensus]) -> Result<()> {
    let mut csv = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    csv.write_record(CONSENSUS_HEADER)?;
    for p in rows {
        csv.write_record([
            p.speaker_id.as_str(),
            p.person_key.as_str(),
            p.gender.map(Gender::token).unwrap_or(""),
            &p.birth_year.map(|y| y.to_string()).unwrap_or_default(),
            p.status().token(),
            &p.reason_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// Reads a consensus CSV back. `sources_seen` is not part of the file and
/// comes back empty.
pub fn read_consensus_csv<R: Read>(reader: R) -> Result<Vec<PersonConsensus>> {
    let mut csv = csv::Reader::from_reader(reader);
    if csv.headers()?.iter().ne(CONSENSUS_HEADER) {
        return Err(Error::validation(format!(
            "consensus header must be {}",
            CONSENSUS_HEADER.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in csv.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |what: &str| Error::validation(format!("consensus line {line}: {what}"));
        let gender = match &rec[2] {
            "" => None,
            g => Some(Gender::from_token(g).ok_or_else(|| bad("unknown gender token"))?),
        };
        let birth_year = match &rec[3] {
            "" => None,
            y => Some(y.parse::<i32>().map_err(|_| bad("invalid birth_year"))?),
        };
        let mut gender_reason = None;
        let mut birth_year_reason = None;
        for part in rec[5].split(';').filter(|p| !p.is_empty()) {
            let (field, reason) = part.split_once(':').ok_or_else(|| bad("malformed reason"))?;
            let reason = RejectReason::from_token(reason).ok_or_else(|| bad("unknown reason"))?;
            match field {
                "gender" => gender_reason = Some(reason),
                "birth_year" => birth_year_reason = Some(reason),
                _ => return Err(bad("unknown reason field")),
            }
        }
        rows.push(PersonConsensus {
            speaker_id: SpeakerId::new(&rec[0]),
            person_key: PersonKey::normalize(&rec[1]),
            gender,
            gender_reason,
            birth_year,
            birth_year_reason,
            sources_seen: BTreeSet::new(),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceCategory {
    MaleToFemale,
    FemaleToMale,
    TransVsBinary,
}

impl DivergenceCategory {
    pub fn token(self) -> &'static str {
        match self {
            DivergenceCategory::MaleToFemale => "male_to_female",
            DivergenceCategory::FemaleToMale => "female_to_male",
            DivergenceCategory::TransVsBinary => "trans_vs_binary",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Relabel {
    pub speaker_id: SpeakerId,
    pub original: Gender,
    pub consensus: Gender,
    pub category: DivergenceCategory,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct DivergenceReport {
    pub agreed_count: usize,
    pub relabeled: Vec<Relabel>,
    pub by_category: BTreeMap<DivergenceCategory, usize>,
    /// Speakers with a consensus gender but no original label.
    pub missing_original: Vec<SpeakerId>,
}

impl DivergenceReport {
    pub fn compared(&self) -> usize {
        self.agreed_count + self.relabeled.len()
    }

    pub fn render_text(&self) -> String {
        let compared = self.compared();
        let pct = if compared == 0 {
            0.0
        } else {
            100.0 * self.agreed_count as f64 / compared as f64
        };
        let mut s = String::new();
        s.push_str(&format!("speakers with both labels: {compared}\n"));
        s.push_str(&format!("agreed: {} ({pct:.1}%)\n", self.agreed_count));
        s.push_str(&format!("relabeled: {}\n", self.relabeled.len()));
        for category in [
            DivergenceCategory::MaleToFemale,
            DivergenceCategory::FemaleToMale,
            DivergenceCategory::TransVsBinary,
        ] {
            let n = self.by_category.get(&category).copied().unwrap_or(0);
            s.push_str(&format!("  {}: {n}\n", category.token()));
        }
        s.push_str(&format!(
            "consensus without original label: {}\n",
            self.missing_original.len()
        ));
        for id in &self.missing_original {
            s.push_str(&format!("  {id}\n"));
        }
        s
    }

    /// `speaker_id,original_gender,consensus_gender,category`, one row per
    /// relabeled speaker.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut csv = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        csv.write_record(["speaker_id", "original_gender", "consensus_gender", "category"])?;
        for r in &self.relabeled {
            csv.write_record([
                r.speaker_id.as_str(),
                r.original.token(),
                r.consensus.token(),
                r.category.token(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }
}

fn categorize(original: Gender, consensus: Gender) -> Option<DivergenceCategory> {
    match (original, consensus) {
        (a, b) if a == b => None,
        (Gender::Male, Gender::Female) => Some(DivergenceCategory::MaleToFemale),
        (Gender::Female, Gender::Male) => Some(DivergenceCategory::FemaleToMale),
        _ => Some(DivergenceCategory::TransVsBinary),
    }
}

pub fn compare_with_original(consensus: &[PersonConsensus], originals: &[OriginalLabel]) -> DivergenceReport {
    let original_by_id: HashMap<&SpeakerId, Gender> = originals.iter().map(|o| (&o.speaker_id, o.gender)).collect();
    let mut report = DivergenceReport::default();
    let mut sorted: Vec<&PersonConsensus> = consensus.iter().collect();
    sorted.sort_by(|a, b| a.speaker_id.cmp(&b.speaker_id));
    for p in sorted {
        let Some(consensus_gender) = p.gender else { continue };
        let Some(&original) = original_by_id.get(&p.speaker_id) else {
            report.missing_original.push(p.speaker_id.clone());
            continue;
        };
        match categorize(original, consensus_gender) {
            None => report.agreed_count += 1,
            Some(category) => {
                *report.by_category.entry(category).or_default() += 1;
                report.relabeled.push(Relabel {
                    speaker_id: p.speaker_id.clone(),
                    original,
                    consensus: consensus_gender,
                    category,
                });
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::BirthDate;
    use proptest::prelude::*;

    fn rec(source: SourceId, gender: Gender, year: Option<i32>) -> SourceRecord {
        SourceRecord {
            person_key: PersonKey::normalize("paolo ruffini"),
            source_id: source,
            gender,
            birth_date: year.map(|year| BirthDate {
                year,
                month: None,
                day: None,
            }),
        }
    }

    fn triple(g: [Gender; 3]) -> Vec<SourceRecord> {
        SourceId::ALL
            .iter()
            .zip(g)
            .map(|(s, g)| rec(*s, g, Some(1978)))
            .collect()
    }

    #[test]
    fn unanimous_gender_is_accepted() {
        use Gender::*;
        assert_eq!(gender_consensus(&triple([Male, Male, Male])), Ok(Male));
        assert_eq!(
            gender_consensus(&triple([Male, Female, Male])),
            Err(RejectReason::Disagreement)
        );
        assert_eq!(gender_consensus(&triple([TransFemale; 3])), Ok(TransFemale));
        assert_eq!(
            gender_consensus(&triple([Male, Unknown, Male])),
            Err(RejectReason::UnknownValue)
        );
    }

    #[test]
    fn birth_year_rules() {
        use SourceId::*;
        let years = |ys: [i32; 3]| -> Vec<SourceRecord> {
            SourceId::ALL
                .iter()
                .zip(ys)
                .map(|(s, y)| rec(*s, Gender::Male, Some(y)))
                .collect()
        };
        assert_eq!(birth_year_consensus(&years([1978; 3])), Ok(1978));
        assert_eq!(
            birth_year_consensus(&years([1978, 1765, 1978])),
            Err(RejectReason::Disagreement)
        );
        let two = vec![
            rec(Gkg, Gender::Male, Some(1978)),
            rec(Wikidata, Gender::Male, Some(1978)),
        ];
        assert_eq!(birth_year_consensus(&two), Err(RejectReason::MissingSource));
        let null_year = vec![
            rec(Gkg, Gender::Male, Some(1978)),
            rec(DbPedia, Gender::Male, None),
            rec(Wikidata, Gender::Male, Some(1978)),
        ];
        assert_eq!(birth_year_consensus(&null_year), Err(RejectReason::UnknownValue));
        assert_eq!(gender_consensus(&null_year), Ok(Gender::Male));
    }

    #[test]
    fn month_and_day_are_ignored() {
        let mut records = triple([Gender::Female; 3]);
        records[0].birth_date = Some(BirthDate {
            year: 1978,
            month: Some(1),
            day: Some(2),
        });
        records[1].birth_date = Some(BirthDate {
            year: 1978,
            month: Some(11),
            day: Some(26),
        });
        assert_eq!(birth_year_consensus(&records), Ok(1978));
    }

    #[test]
    fn conflicting_duplicate_within_source_is_ambiguous() {
        let mut records = triple([Gender::Male; 3]);
        records.push(rec(SourceId::DbPedia, Gender::Male, Some(1765)));
        assert_eq!(gender_consensus(&records), Err(RejectReason::AmbiguousName));
        assert_eq!(birth_year_consensus(&records), Err(RejectReason::AmbiguousName));
        // an exact duplicate is harmless
        let mut records = triple([Gender::Male; 3]);
        records.push(records[1].clone());
        assert_eq!(gender_consensus(&records), Ok(Gender::Male));
    }

    fn label(id: &str, name: &str, gender: Gender) -> OriginalLabel {
        OriginalLabel {
            speaker_id: id.into(),
            name: name.into(),
            gender,
        }
    }

    fn consensus_of(id: &str, gender: Option<Gender>) -> PersonConsensus {
        PersonConsensus {
            speaker_id: id.into(),
            person_key: PersonKey::normalize(id),
            gender,
            gender_reason: None,
            birth_year: None,
            birth_year_reason: None,
            sources_seen: BTreeSet::new(),
        }
    }

    #[test]
    fn divergence_categories() {
        use Gender::*;
        let originals = vec![label("a", "A", Female), label("b", "B", Female), label("c", "C", Male)];
        let consensus = vec![
            consensus_of("a", Some(Male)),
            consensus_of("b", Some(TransFemale)),
            consensus_of("c", Some(Male)),
            consensus_of("d", Some(Female)),
            consensus_of("e", None),
        ];
        let report = compare_with_original(&consensus, &originals);
        assert_eq!(report.agreed_count, 1);
        assert_eq!(report.relabeled.len(), 2);
        assert_eq!(report.relabeled[0].category, DivergenceCategory::FemaleToMale);
        assert_eq!(report.relabeled[1].category, DivergenceCategory::TransVsBinary);
        assert_eq!(report.missing_original, vec![SpeakerId::from("d")]);
        assert_eq!(report.compared(), 3);
    }

    #[test]
    fn identical_labels_everywhere() {
        let originals: Vec<_> = (0..5).map(|i| label(&format!("s{i}"), "x", Gender::Male)).collect();
        let consensus: Vec<_> = (0..5)
            .map(|i| consensus_of(&format!("s{i}"), Some(Gender::Male)))
            .collect();
        let report = compare_with_original(&consensus, &originals);
        assert!(report.relabeled.is_empty());
        assert_eq!(report.agreed_count, 5);
    }

    #[test]
    fn roster_homonyms_are_ambiguous() {
        let roster = vec![
            label("id1", "Paolo Ruffini", Gender::Male),
            label("id2", "PAOLO  RUFFINI", Gender::Male),
        ];
        let records = triple([Gender::Male; 3]);
        let out = build_consensus(&roster, &records);
        assert!(out.iter().all(|p| p.gender_reason == Some(RejectReason::AmbiguousName)));
    }

    #[test]
    fn csv_round_trip() {
        let roster = vec![
            label("id1", "Paolo Ruffini", Gender::Male),
            label("id0", "Nobody", Gender::Female),
        ];
        let out = build_consensus(&roster, &triple([Gender::Male; 3]));
        let mut buf = Vec::new();
        write_consensus_csv(&mut buf, &out).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "speaker_id,person_key,gender,birth_year,status,reason\n\
             id0,nobody,,,rejected,gender:missing_source;birth_year:missing_source\n\
             id1,paolo ruffini,male,1978,accepted,\n"
        );
        let back = read_consensus_csv(buf.as_slice()).unwrap();
        let strip = |mut p: PersonConsensus| {
            p.sources_seen.clear();
            p
        };
        assert_eq!(back, out.into_iter().map(strip).collect::<Vec<_>>());
    }

    fn gender_strategy() -> impl Strategy<Value = Gender> {
        prop_oneof![
            Just(Gender::Male),
            Just(Gender::Female),
            Just(Gender::TransFemale),
            Just(Gender::Unknown)
        ]
    }

    proptest! {
        #[test]
        fn consensus_is_order_invariant_and_never_invents(
            genders in proptest::collection::vec(gender_strategy(), 3),
            years in proptest::collection::vec(proptest::option::of(1950i32..1955), 3),
            extra in proptest::option::of((0usize..3, gender_strategy())),
            rotation in 0usize..4,
        ) {
            let mut records: Vec<SourceRecord> = SourceId::ALL
                .iter()
                .zip(genders.iter().zip(&years))
                .map(|(s, (g, y))| rec(*s, *g, *y))
                .collect();
            if let Some((i, g)) = extra {
                records.push(rec(SourceId::ALL[i], g, years[i]));
            }
            let g = gender_consensus(&records);
            let y = birth_year_consensus(&records);
            let mut shuffled = records.clone();
            shuffled.rotate_left(rotation % records.len());
            shuffled.reverse();
            prop_assert_eq!(gender_consensus(&shuffled), g);
            prop_assert_eq!(birth_year_consensus(&shuffled), y);
            if let Ok(v) = g {
                prop_assert!(records.iter().any(|r| r.gender == v));
            }
            if let Ok(v) = y {
                prop_assert!(records.iter().any(|r| r.birth_year() == Some(v)));
            }
        }

        #[test]
        fn dropping_a_source_from_an_accepted_triple_rejects(
            g in prop_oneof![Just(Gender::Male), Just(Gender::Female), Just(Gender::TransFemale)],
            drop in 0usize..3,
        ) {
            let mut records = triple([g; 3]);
            prop_assert_eq!(gender_consensus(&records), Ok(g));
            records.remove(drop);
            prop_assert_eq!(gender_consensus(&records), Err(RejectReason::MissingSource));
            prop_assert_eq!(birth_year_consensus(&records), Err(RejectReason::MissingSource));
        }
    }
}
