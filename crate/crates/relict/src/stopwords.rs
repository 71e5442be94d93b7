//! Stop word lists.
//!
//! The bundled list is the classic SMART English stop word list. Results are
//! only comparable across runs when the list is pinned, so every set exposes
//! a content hash (SHA-256 over the sorted, deduplicated terms) that output
//! artifacts can record.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

const BUNDLED: &str = include_str!("../data/stopwords-smart.txt");

#[derive(Debug, Error)]
pub enum StopwordError {
    #[error("cannot read stopword list {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("stopword list {path} is empty")]
    EmptyList { path: String },
}

/// A pinned set of stop words.
#[derive(Debug, Clone)]
pub struct StopwordSet {
    words: BTreeSet<String>,
    hash: String,
}

impl StopwordSet {
    /// The bundled SMART list.
    pub fn bundled() -> Self {
        Self::from_text(BUNDLED)
    }

    /// Parse list text: one lowercase term per line, `#` starts a comment,
    /// blank lines ignored.
    pub fn from_text(text: &str) -> Self {
        let words: BTreeSet<String> = text
            .lines()
            .map(|line| match line.find('#') {
                Some(i) => &line[..i],
                None => line,
            })
            .map(str::trim)
            .filter(|line| !line.is_empty())
            .map(str::to_lowercase)
            .collect();
        let mut hasher = Sha256::new();
        for word in &words {
            hasher.update(word.as_bytes());
            hasher.update(b"\n");
        }
        let hash = hex_digest(hasher);
        Self { words, hash }
    }

    pub fn from_file(path: &Path) -> Result<Self, StopwordError> {
        let text = fs::read_to_string(path).map_err(|source| StopwordError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let set = Self::from_text(&text);
        if set.is_empty() {
            return Err(StopwordError::EmptyList {
                path: path.display().to_string(),
            });
        }
        Ok(set)
    }

    /// Case-insensitive membership test.
    pub fn contains(&self, term: &str) -> bool {
        if term.chars().any(|c| c.is_uppercase()) {
            self.words.contains(&term.to_lowercase())
        } else {
            self.words.contains(term)
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Hex SHA-256 of the canonical (sorted, deduplicated) list content.
    pub fn content_hash(&self) -> &str {
        &self.hash
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}

fn hex_digest(hasher: Sha256) -> String {
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_list_has_the_classics() {
        let set = StopwordSet::bundled();
        for word in ["the", "of", "and", "a", "is", "was", "with"] {
            assert!(set.contains(word), "{word} missing from bundled list");
        }
        assert!(!set.contains("home"));
        assert!(!set.contains("photography"));
        assert!(set.len() > 500, "bundled list unexpectedly small: {}", set.len());
    }

    #[test]
    fn membership_is_case_insensitive() {
        let set = StopwordSet::bundled();
        assert!(set.contains("The"));
        assert!(set.contains("OF"));
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let set = StopwordSet::from_text("# header\nfoo\n\nbar # trailing\n");
        assert!(set.contains("foo"));
        assert!(set.contains("bar"));
        assert_eq!(set.len(), 2);
    }

    #[test]
    fn hash_depends_on_content_not_formatting() {
        let a = StopwordSet::from_text("foo\nbar\n");
        let b = StopwordSet::from_text("bar\n# comment\nfoo");
        let c = StopwordSet::from_text("foo\nbaz\n");
        assert_eq!(a.content_hash(), b.content_hash());
        assert_ne!(a.content_hash(), c.content_hash());
    }
}
