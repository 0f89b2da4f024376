//! Shared tokenization.
//!
//! Two configurations are used across the pipeline. The bag-of-words and
//! topic-model featurizers use [`Tokenizer::features`], which drops
//! single-character tokens and a small English stopword list. Sentiment
//! scoring and phrase windows use [`Tokenizer::plain`], which keeps every
//! token so that negators such as "not" and "no" survive.

use std::collections::HashSet;

const STOPWORDS: &[&str] = &[
    "a", "about", "am", "an", "and", "any", "are", "as", "at", "be", "been", "but", "by", "can",
    "could", "did", "do", "does", "for", "from", "had", "has", "have", "he", "her", "hi", "him",
    "his", "how", "if", "in", "into", "is", "it", "its", "just", "me", "my", "of", "ok", "on",
    "or", "our", "she", "so", "than", "that", "the", "their", "them", "then", "there", "these",
    "they", "this", "to", "up", "us", "was", "we", "were", "what", "when", "which", "who",
    "will", "with", "would", "you", "your",
];

/// The built-in stopword list used by [`Tokenizer::features`].
pub fn default_stopwords() -> HashSet<String> {
    STOPWORDS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    /// Tokens shorter than this (in chars) are dropped.
    pub min_len: usize,
    pub stopwords: HashSet<String>,
}

impl Tokenizer {
    /// Lowercase, split on non-alphanumerics, drop length-1 tokens and stopwords.
    pub fn features() -> Self {
        Self { min_len: 2, stopwords: default_stopwords() }
    }

    /// Lowercase and split on non-alphanumerics; nothing is dropped.
    pub fn plain() -> Self {
        Self { min_len: 1, stopwords: HashSet::new() }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        split_lowercase(text)
            .filter(|t| t.chars().count() >= self.min_len && !self.stopwords.contains(t))
            .collect()
    }
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self::features()
    }
}

fn split_lowercase(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_tokenizer_drops_short_and_stopwords() {
        let t = Tokenizer::features();
        assert_eq!(t.tokenize("I need a Refill, please!"), vec!["need", "refill", "please"]);
    }

    #[test]
    fn plain_tokenizer_keeps_negators() {
        let t = Tokenizer::plain();
        assert_eq!(t.tokenize("Not good. I'm OK"), vec!["not", "good", "i", "m", "ok"]);
    }

    #[test]
    fn unicode_lowercasing() {
        let t = Tokenizer::plain();
        assert_eq!(t.tokenize("DÉJÀ-vu"), vec!["déjà", "vu"]);
    }
}
