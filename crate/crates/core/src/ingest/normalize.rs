use std::fmt;

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Normalized person name used to match corpus speakers against
/// knowledge-source entries.
///
/// Lowercase, NFC, diacritics folded, internal whitespace collapsed, trimmed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PersonKey(String);

impl PersonKey {
    pub fn normalize(name: &str) -> PersonKey {
        // Lowercase before folding: some lowercase mappings emit combining marks.
        let lowered: String = name.nfc().flat_map(char::to_lowercase).collect();
        let folded: String = lowered.nfd().filter(|c| !is_combining_mark(*c)).nfc().collect();
        let collapsed = folded.split_whitespace().collect::<Vec<_>>().join(" ");
        PersonKey(collapsed)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for PersonKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn folds_case_accents_and_spacing() {
        assert_eq!(PersonKey::normalize("Paolo Ruffini").as_str(), "paolo ruffini");
        assert_eq!(PersonKey::normalize("  Zoë   SALDAÑA\t").as_str(), "zoe saldana");
        assert_eq!(PersonKey::normalize("Conan O'Brien").as_str(), "conan o'brien");
        // decomposed input folds the same as precomposed
        assert_eq!(PersonKey::normalize("Bjo\u{308}rk"), PersonKey::normalize("Bj\u{f6}rk"));
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(s in "\\PC{0,40}") {
            let once = PersonKey::normalize(&s);
            let twice = PersonKey::normalize(once.as_str());
            prop_assert_eq!(once, twice);
        }
    }
}
