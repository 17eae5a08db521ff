use std::fmt;

use serde::{Deserialize, Serialize};

/// Corpus speaker identifier (e.g. `id10001`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpeakerId(String);

impl SpeakerId {
    pub fn new(id: impl Into<String>) -> Self {
        SpeakerId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SpeakerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SpeakerId {
    fn from(s: &str) -> Self {
        SpeakerId(s.to_owned())
    }
}

impl From<String> for SpeakerId {
    fn from(s: String) -> Self {
        SpeakerId(s)
    }
}

/// Gender label as reported by a knowledge source or the corpus metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    #[serde(rename = "male")]
    Male,
    #[serde(rename = "female")]
    Female,
    #[serde(rename = "transgender female")]
    TransFemale,
    #[serde(rename = "unknown")]
    Unknown,
}

impl Gender {
    /// Parses the interchange tokens `male`, `female` and `transgender female`
    /// (case-insensitive, surrounding whitespace ignored).
    pub fn from_token(token: &str) -> Option<Gender> {
        match token.trim().to_ascii_lowercase().as_str() {
            "male" => Some(Gender::Male),
            "female" => Some(Gender::Female),
            "transgender female" => Some(Gender::TransFemale),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::TransFemale => "transgender female",
            Gender::Unknown => "unknown",
        }
    }

    pub fn is_binary(self) -> bool {
        matches!(self, Gender::Male | Gender::Female)
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}
