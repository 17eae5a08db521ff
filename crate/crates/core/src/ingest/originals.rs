use std::collections::HashSet;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{Gender, SpeakerId};

/// Gender label shipped with the corpus, together with the speaker's display
/// name used to query knowledge sources.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OriginalLabel {
    pub speaker_id: SpeakerId,
    pub name: String,
    pub gender: Gender,
}

#[derive(Deserialize)]
struct Row {
    speaker_id: String,
    name: String,
    gender: String,
}

/// Reads the corpus roster CSV `speaker_id,name,gender` (`m`/`f` accepted).
pub fn parse_original_labels<R: Read>(reader: R) -> Result<Vec<OriginalLabel>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut seen = HashSet::new();
    let mut labels = Vec::new();
    for (i, row) in csv.deserialize::<Row>().enumerate() {
        let row = row?;
        let line = i + 2;
        let gender = match row.gender.to_ascii_lowercase().as_str() {
            "m" | "male" => Gender::Male,
            "f" | "female" => Gender::Female,
            other => {
                return Err(Error::validation(format!(
                    "original labels line {line}: gender must be male or female, got \"{other}\""
                )))
            }
        };
        if row.speaker_id.is_empty() {
            return Err(Error::validation(format!(
                "original labels line {line}: empty speaker_id"
            )));
        }
        if !seen.insert(row.speaker_id.clone()) {
            return Err(Error::validation(format!(
                "original labels line {line}: duplicate speaker_id {}",
                row.speaker_id
            )));
        }
        labels.push(OriginalLabel {
            speaker_id: SpeakerId::new(row.speaker_id),
            name: row.name,
            gender,
        });
    }
    Ok(labels)
}
