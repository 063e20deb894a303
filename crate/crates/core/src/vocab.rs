use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Lexicographically sorted token list; a token's index is its rank.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vocabulary(Vec<String>);

impl Vocabulary {
    pub fn from_tokens<'a, I: IntoIterator<Item = &'a String>>(tokens: I) -> Self {
        Vocabulary(
            tokens
                .into_iter()
                .cloned()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
        )
    }

    /// Panics unless `tokens` is strictly increasing.
    pub fn from_sorted(tokens: Vec<String>) -> Self {
        assert!(
            tokens.windows(2).all(|w| w[0] < w[1]),
            "vocabulary must be sorted and unique"
        );
        Vocabulary(tokens)
    }

    pub fn index(&self, token: &str) -> Option<usize> {
        self.0.binary_search_by(|t| t.as_str().cmp(token)).ok()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.0[index]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn is_sorted_unique(&self) -> bool {
        self.0.windows(2).all(|w| w[0] < w[1])
    }
}
