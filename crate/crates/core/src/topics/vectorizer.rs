use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::TopicError;
use crate::corpus::Conversation;
use crate::text::Tokenizer;

/// Sparse feature vector with sorted, unique column indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    /// Builds from arbitrary `(index, value)` pairs; duplicates are summed.
    pub fn new(dim: usize, pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, v) in pairs {
            assert!(i < dim, "index {i} out of range for dimension {dim}");
            *acc.entry(i).or_default() += v;
        }
        Self { dim, entries: acc.into_iter().filter(|(_, v)| *v != 0.0).collect() }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        Self::new(values.len(), values.iter().copied().enumerate())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * dense[i]).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { dim: self.dim, entries: self.entries.iter().map(|&(i, v)| (i, v * c)).collect() }
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }
}

/// Bag-of-words featurizer producing raw token counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BowVectorizer {
    vocabulary: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    min_token_len: usize,
    stopwords: BTreeSet<String>,
}

impl BowVectorizer {
    /// Keeps tokens that occur in at least `min_doc_freq` documents. Columns
    /// are assigned in lexicographic token order.
    pub fn fit<'a>(
        docs: impl IntoIterator<Item = &'a str>,
        tokenizer: &Tokenizer,
        min_doc_freq: usize,
    ) -> Result<Self, TopicError> {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in docs {
            let unique: BTreeSet<String> = tokenizer.tokenize(doc).into_iter().collect();
            for t in unique {
                *df.entry(t).or_default() += 1;
            }
        }
        let vocabulary: Vec<String> =
            df.into_iter().filter(|(_, n)| *n >= min_doc_freq.max(1)).map(|(t, _)| t).collect();
        if vocabulary.is_empty() {
            return Err(TopicError::TrainingData("empty vocabulary".into()));
        }
        Ok(Self::from_parts(vocabulary, tokenizer))
    }

    /// Fits over each conversation's concatenated message text.
    pub fn fit_conversations(conversations: &[Conversation], min_doc_freq: usize) -> Result<Self, TopicError> {
        let texts: Vec<String> = conversations.iter().map(Conversation::text).collect();
        Self::fit(texts.iter().map(String::as_str), &Tokenizer::features(), min_doc_freq)
    }

    fn from_parts(vocabulary: Vec<String>, tokenizer: &Tokenizer) -> Self {
        let index = vocabulary.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            vocabulary,
            index,
            min_token_len: tokenizer.min_len,
            stopwords: tokenizer.stopwords.iter().cloned().collect(),
        }
    }

    /// Restores the lookup index after deserialization.
    pub(crate) fn reindex(&mut self) {
        self.index = self.vocabulary.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn tokenizer(&self) -> Tokenizer {
        Tokenizer { min_len: self.min_token_len, stopwords: self.stopwords.iter().cloned().collect() }
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn column(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn transform(&self, text: &str) -> SparseVector {
        let pairs = self.tokenizer().tokenize(text).into_iter().filter_map(|t| self.column(&t)).map(|i| (i, 1.0));
        SparseVector::new(self.dim(), pairs)
    }

    pub fn transform_conversation(&self, conversation: &Conversation) -> SparseVector {
        self.transform(&conversation.text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain_fit(docs: &[&str], min_df: usize) -> Result<BowVectorizer, TopicError> {
        let tok = Tokenizer { min_len: 1, stopwords: Default::default() };
        BowVectorizer::fit(docs.iter().copied(), &tok, min_df)
    }

    #[test]
    fn document_frequency_cutoff() {
        let v = plain_fit(&["a b", "b c"], 2).unwrap();
        assert_eq!(v.vocabulary(), ["b"]);
        let v = plain_fit(&["a b", "b c"], 1).unwrap();
        assert_eq!(v.vocabulary(), ["a", "b", "c"]);
    }

    #[test]
    fn raw_counts() {
        let v = plain_fit(&["x x x x x y"], 1).unwrap();
        let f = v.transform("x x x x x y z");
        assert_eq!(f.get(v.column("x").unwrap()), 5.0);
        assert_eq!(f.get(v.column("y").unwrap()), 1.0);
        assert_eq!(f.entries().len(), 2);
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        assert!(matches!(plain_fit(&["a", "b"], 2), Err(TopicError::TrainingData(_))));
    }

    #[test]
    fn serde_round_trip_keeps_lookup() {
        let v = plain_fit(&["alpha beta", "beta gamma"], 1).unwrap();
        let mut back: BowVectorizer = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        back.reindex();
        assert_eq!(back, v);
        assert_eq!(back.transform("gamma"), v.transform("gamma"));
    }
}
