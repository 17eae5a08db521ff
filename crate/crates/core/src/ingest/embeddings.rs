use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::ids::{Gender, SpeakerId};

/// Embedding dimension of the i-vector/x-vector front-ends.
pub const EMBEDDING_DIM: usize = 512;

const LEADING_COLUMNS: [&str; 4] = ["speaker_id", "utterance_id", "age", "gender"];

/// One utterance-level embedding with its optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub speaker_id: SpeakerId,
    pub utterance_id: String,
    pub vector: Vec<f64>,
    pub age: Option<u32>,
    pub gender: Option<Gender>,
}

/// Records from one embedding file; all vectors share `dimension`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub dimension: usize,
    pub records: Vec<EmbeddingRecord>,
}

fn check_header(header: &csv::StringRecord, expected_dim: Option<usize>) -> Result<usize> {
    let fields: Vec<&str> = header.iter().collect();
    if fields.len() < LEADING_COLUMNS.len() || fields[..4] != LEADING_COLUMNS {
        return Err(Error::validation(
            "embedding header must start with speaker_id,utterance_id,age,gender",
        ));
    }
    let dim = fields.len() - LEADING_COLUMNS.len();
    for (i, name) in fields[4..].iter().enumerate() {
        if *name != format!("f{i}") {
            return Err(Error::validation(format!(
                "embedding header column {} must be f{i}, got \"{name}\"",
                i + 4
            )));
        }
    }
    if dim == 0 {
        return Err(Error::validation("embedding header has no feature columns"));
    }
    if let Some(expected) = expected_dim {
        if dim != expected {
            return Err(Error::DimensionMismatch(format!(
                "header declares {dim} features, expected {expected}"
            )));
        }
    }
    Ok(dim)
}

/// Parses the embeddings CSV `speaker_id,utterance_id,age,gender,f0,...`.
///
/// Unlike the JSON Lines parsers every defect here is fatal: a single bad
/// row would silently change the feature matrix.
pub fn parse_embeddings<R: Read>(reader: R, expected_dim: Option<usize>) -> Result<EmbeddingSet> {
    let mut csv = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let dimension = check_header(csv.headers()?, expected_dim)?;
    let width = dimension + LEADING_COLUMNS.len();
    let mut records = Vec::new();
    let mut row = csv::StringRecord::new();
    let mut line = 1;
    while csv.read_record(&mut row)? {
        line += 1;
        if row.len() != width {
            return Err(Error::DimensionMismatch(format!(
                "line {line}: row has {} features, expected {dimension}",
                row.len().saturating_sub(LEADING_COLUMNS.len())
            )));
        }
        let speaker_id = row[0].trim();
        let utterance_id = row[1].trim();
        if speaker_id.is_empty() || utterance_id.is_empty() {
            return Err(Error::validation(format!(
                "line {line}: empty speaker_id or utterance_id"
            )));
        }
        let age = match row[2].trim() {
            "" => None,
            s => Some(s.parse::<u32>().map_err(|_| {
                Error::validation(format!("line {line}: age must be a non-negative integer, got \"{s}\""))
            })?),
        };
        let gender = match row[3].trim() {
            "" => None,
            s => Some(
                Gender::from_token(s)
                    .ok_or_else(|| Error::validation(format!("line {line}: unknown gender token \"{s}\"")))?,
            ),
        };
        let vector = row
            .iter()
            .skip(LEADING_COLUMNS.len())
            .map(|s| {
                let v: f64 = s.trim().parse().map_err(|_| {
                    Error::validation(format!("utterance {utterance_id}: unparsable component \"{s}\""))
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::validation(format!(
                        "utterance {utterance_id}: non-finite component {s}"
                    )))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        records.push(EmbeddingRecord {
            speaker_id: SpeakerId::new(speaker_id),
            utterance_id: utterance_id.to_owned(),
            vector,
            age,
            gender,
        });
    }
    Ok(EmbeddingSet { dimension, records })
}

pub fn write_embeddings<W: Write>(out: W, set: &EmbeddingSet) -> Result<()> {
    let mut csv = csv::Writer::from_writer(out);
    let mut header: Vec<String> = LEADING_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..set.dimension).map(|i| format!("f{i}")));
    csv.write_record(&header)?;
    for record in &set.records {
        if record.vector.len() != set.dimension {
            return Err(Error::DimensionMismatch(format!(
                "utterance {} has {} features, expected {}",
                record.utterance_id,
                record.vector.len(),
                set.dimension
            )));
        }
        let mut fields = vec![
            record.speaker_id.to_string(),
            record.utterance_id.clone(),
            record.age.map(|a| a.to_string()).unwrap_or_default(),
            record.gender.map(|g| g.token().to_string()).unwrap_or_default(),
        ];
        fields.extend(record.vector.iter().map(|v| v.to_string()));
        csv.write_record(&fields)?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(dim: usize) -> String {
        let mut h = "speaker_id,utterance_id,age,gender".to_string();
        for i in 0..dim {
            h.push_str(&format!(",f{i}"));
        }
        h.push('\n');
        h
    }

    fn row(spk: &str, utt: &str, age: &str, gender: &str, dim: usize, value: &str) -> String {
        let mut r = format!("{spk},{utt},{age},{gender}");
        for _ in 0..dim {
            r.push(',');
            r.push_str(value);
        }
        r.push('\n');
        r
    }

    #[test]
    fn labeled_row_parses() {
        let input = header(512) + &row("id1", "u1", "33", "male", 512, "0.25");
        let set = parse_embeddings(input.as_bytes(), Some(EMBEDDING_DIM)).unwrap();
        assert_eq!(set.dimension, 512);
        let r = &set.records[0];
        assert_eq!(r.age, Some(33));
        assert_eq!(r.gender, Some(Gender::Male));
        assert_eq!(r.vector.len(), 512);
        assert!(r.vector.iter().all(|v| *v == 0.25));
    }

    #[test]
    fn short_row_is_dimension_mismatch() {
        let input = header(512) + &row("id1", "u1", "", "", 512, "1") + &row("id1", "u2", "", "", 511, "1");
        let err = parse_embeddings(input.as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
        assert!(err.to_string().contains("dimension mismatch"));
    }

    #[test]
    fn header_only_is_empty() {
        let set = parse_embeddings(header(512).as_bytes(), Some(512)).unwrap();
        assert!(set.records.is_empty());
    }

    #[test]
    fn nan_is_fatal_and_names_the_utterance() {
        let input = header(3) + "id1,utt-42,,,1,NaN,2\n";
        let err = parse_embeddings(input.as_bytes(), None).unwrap_err();
        assert!(err.to_string().contains("utt-42"));
    }

    #[test]
    fn declared_dimension_is_enforced() {
        let err = parse_embeddings(header(4).as_bytes(), Some(512)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn write_then_parse_preserves_records() {
        let set = EmbeddingSet {
            dimension: 3,
            records: vec![EmbeddingRecord {
                speaker_id: "id9".into(),
                utterance_id: "u".into(),
                vector: vec![0.1, -2.5e-7, 3.0],
                age: None,
                gender: Some(Gender::TransFemale),
            }],
        };
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &set).unwrap();
        assert_eq!(parse_embeddings(buf.as_slice(), Some(3)).unwrap(), set);
    }
}
