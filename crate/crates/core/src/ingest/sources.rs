use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{for_each_line, object_with_keys, ParseOptions, Parsed, PersonKey, Reject};
use crate::error::{Error, Result};
use crate::ids::Gender;

pub const MIN_BIRTH_YEAR: i32 = 1850;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SourceId {
    #[serde(rename = "gkg")]
    Gkg,
    #[serde(rename = "dbpedia")]
    DbPedia,
    #[serde(rename = "wikidata")]
    Wikidata,
}

impl SourceId {
    pub const ALL: [SourceId; 3] = [SourceId::Gkg, SourceId::DbPedia, SourceId::Wikidata];

    pub fn token(self) -> &'static str {
        match self {
            SourceId::Gkg => "gkg",
            SourceId::DbPedia => "dbpedia",
            SourceId::Wikidata => "wikidata",
        }
    }
}

impl fmt::Display for SourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for SourceId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gkg" => Ok(SourceId::Gkg),
            "dbpedia" => Ok(SourceId::DbPedia),
            "wikidata" => Ok(SourceId::Wikidata),
            other => Err(Error::validation(format!("unknown source \"{other}\""))),
        }
    }
}

/// Birth date at whatever precision the source provides. Only the year is
/// used downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BirthDate {
    pub year: i32,
    pub month: Option<u32>,
    pub day: Option<u32>,
}

impl BirthDate {
    /// Accepts `YYYY`, `YYYY-MM` or `YYYY-MM-DD`.
    pub fn parse(s: &str) -> std::result::Result<BirthDate, String> {
        let bad = || format!("invalid birth_date \"{s}\"");
        let parts: Vec<&str> = s.split('-').collect();
        let year_part = parts[0];
        if year_part.len() != 4 || !year_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let year: i32 = year_part.parse().map_err(|_| bad())?;
        match parts.len() {
            1 => Ok(BirthDate {
                year,
                month: None,
                day: None,
            }),
            2 => {
                let month: u32 = parts[1].parse().map_err(|_| bad())?;
                if parts[1].len() != 2 || !(1..=12).contains(&month) {
                    return Err(bad());
                }
                Ok(BirthDate {
                    year,
                    month: Some(month),
                    day: None,
                })
            }
            3 => {
                let date = NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| bad())?;
                use chrono::Datelike;
                Ok(BirthDate {
                    year,
                    month: Some(date.month()),
                    day: Some(date.day()),
                })
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for BirthDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}", self.year)?;
        if let Some(m) = self.month {
            write!(f, "-{m:02}")?;
            if let Some(d) = self.day {
                write!(f, "-{d:02}")?;
            }
        }
        Ok(())
    }
}

impl Serialize for BirthDate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BirthDate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        BirthDate::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// One knowledge source's claim about a person.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub person_key: PersonKey,
    pub source_id: SourceId,
    pub gender: Gender,
    pub birth_date: Option<BirthDate>,
}

impl SourceRecord {
    pub fn birth_year(&self) -> Option<i32> {
        self.birth_date.map(|d| d.year)
    }
}

const SOURCE_KEYS: [&str; 3] = ["name", "gender", "birth_date"];

/// Validates one `{name, gender, birth_date}` object.
fn source_record_from_line(
    line: &str,
    source_id: SourceId,
    opts: &ParseOptions,
) -> std::result::Result<SourceRecord, String> {
    let map = object_with_keys(line, &SOURCE_KEYS)?;
    let name = map["name"]
        .as_str()
        .ok_or_else(|| "name must be a string".to_string())?;
    let person_key = PersonKey::normalize(name);
    if person_key.is_empty() {
        return Err("empty name".into());
    }
    let gender = match &map["gender"] {
        serde_json::Value::Null => Gender::Unknown,
        serde_json::Value::String(token) => {
            Gender::from_token(token).ok_or_else(|| "unknown gender token".to_string())?
        }
        _ => return Err("unknown gender token".into()),
    };
    let birth_date = match &map["birth_date"] {
        serde_json::Value::Null => None,
        serde_json::Value::String(s) => {
            let date = BirthDate::parse(s)?;
            if !(MIN_BIRTH_YEAR..=opts.current_year).contains(&date.year) {
                return Err("birth year out of range".into());
            }
            Some(date)
        }
        _ => return Err("birth_date must be a string or null".into()),
    };
    Ok(SourceRecord {
        person_key,
        source_id,
        gender,
        birth_date,
    })
}

/// Parses a JSON Lines knowledge-source dump.
pub fn parse_source_dump<R: BufRead>(
    reader: R,
    source_id: SourceId,
    input_file: &str,
    opts: &ParseOptions,
) -> Result<Parsed<SourceRecord>> {
    let mut parsed = Parsed::default();
    for_each_line(reader, |line, text| {
        match text.and_then(|t| source_record_from_line(t, source_id, opts)) {
            Ok(record) => parsed.records.push(record),
            Err(reason) => parsed.rejects.push(Reject {
                input_file: input_file.to_owned(),
                line,
                reason,
            }),
        }
    })?;
    Ok(parsed)
}

/// Parses a single connector payload (same schema as a dump line).
pub fn parse_source_payload(
    bytes: &[u8],
    source_id: SourceId,
    opts: &ParseOptions,
) -> std::result::Result<SourceRecord, String> {
    let text = std::str::from_utf8(bytes).map_err(|e| format!("invalid UTF-8: {e}"))?;
    source_record_from_line(text.trim(), source_id, opts)
}
