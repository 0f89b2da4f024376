//! User-defined topics: exact phrase matches plus embedding-similar token windows.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::text::Tokenizer;

pub const DEFAULT_TAU: f64 = 0.6;

#[derive(Debug, Error)]
pub enum PhraseError {
    #[error("cannot read embeddings {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("embedding line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("no query token is in the embedding vocabulary: {0:?}")]
    OutOfVocabulary(Vec<String>),
    #[error("cosine similarity undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    /// Builds a table from `(word, vector)` pairs; the first occurrence of a
    /// word wins.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self, PhraseError> {
        let mut table = Self::default();
        for (i, (word, v)) in pairs.into_iter().enumerate() {
            table.insert(word, v).map_err(|reason| PhraseError::Format { line: i + 1, reason })?;
        }
        Ok(table)
    }

    fn insert(&mut self, word: String, v: Vec<f64>) -> Result<bool, String> {
        if v.is_empty() {
            return Err("empty vector".into());
        }
        if self.vectors.is_empty() {
            self.dimension = v.len();
        } else if v.len() != self.dimension {
            return Err(format!("expected {} values, found {}", self.dimension, v.len()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err("non-finite value".into());
        }
        if self.vectors.contains_key(&word) {
            return Ok(false);
        }
        self.vectors.insert(word, v);
        Ok(true)
    }

    /// Reads `word v1 v2 ... vd` lines.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PhraseError> {
        let path = path.as_ref();
        let io_err = |source| PhraseError::Io { path: path.display().to_string(), source };
        let file = std::fs::File::open(path).map_err(io_err)?;
        Self::read(BufReader::new(file)).map_err(|e| match e {
            PhraseError::Io { source, .. } => io_err(source),
            other => other,
        })
    }

    pub fn read(reader: impl BufRead) -> Result<Self, PhraseError> {
        let mut table = Self::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| PhraseError::Io { path: String::new(), source })?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let values = parts
                .map(str::parse::<f64>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| PhraseError::Format { line: i + 1, reason: e.to_string() })?;
            let fresh = table
                .insert(word.to_lowercase(), values)
                .map_err(|reason| PhraseError::Format { line: i + 1, reason })?;
            if !fresh {
                log::warn!("embedding line {}: duplicate word {word} ignored", i + 1);
            }
        }
        Ok(table)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    /// Same table with every vector multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dimension: self.dimension,
            vectors: self.vectors.iter().map(|(w, v)| (w.clone(), v.iter().map(|x| x * c).collect())).collect(),
        }
    }

    /// The table in file format, words sorted. Values use the shortest
    /// round-tripping representation, so `read(to_text())` is exact.
    pub fn to_text(&self) -> String {
        let mut words: Vec<&String> = self.vectors.keys().collect();
        words.sort();
        let mut out = String::new();
        for w in words {
            out.push_str(w);
            for x in &self.vectors[w] {
                out.push(' ');
                out.push_str(&x.to_string());
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseVector {
    pub vector: Vec<f64>,
    /// Query tokens without an embedding.
    pub skipped: Vec<String>,
}

/// Mean of the in-vocabulary token vectors.
pub fn phrase_vector<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable) -> Result<PhraseVector, PhraseError> {
    let mut sum = vec![0.0; table.dimension()];
    let mut used = 0usize;
    let mut skipped = Vec::new();
    for t in tokens {
        match table.get(t.as_ref()) {
            Some(v) => {
                sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                used += 1;
            }
            None => skipped.push(t.as_ref().to_string()),
        }
    }
    if used == 0 {
        return Err(PhraseError::OutOfVocabulary(skipped));
    }
    sum.iter_mut().for_each(|s| *s /= used as f64);
    Ok(PhraseVector { vector: sum, skipped })
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, PhraseError> {
    if u.len() != v.len() {
        return Err(PhraseError::LengthMismatch(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(PhraseError::ZeroNorm);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseQuery {
    pub phrase: String,
    pub tokens: Vec<String>,
    pub tau: f64,
}

impl PhraseQuery {
    pub fn new(phrase: &str, tau: f64) -> Result<Self, PhraseError> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(PhraseError::InvalidQuery(format!("tau {tau} outside (0, 1]")));
        }
        let tokens = Tokenizer::plain().tokenize(phrase);
        if tokens.is_empty() {
            return Err(PhraseError::InvalidQuery("phrase has no tokens".into()));
        }
        Ok(Self { phrase: phrase.trim().to_string(), tokens, tau })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchKind {
    Exact,
    Similar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedSpan {
    pub message_id: String,
    pub text: String,
    pub kind: MatchKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub conversation_id: String,
    pub best_score: f64,
    pub matched_span: MatchedSpan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub hits: Vec<SearchHit>,
    /// Set when the query had no embedding; only exact matches are possible then.
    pub out_of_vocabulary: bool,
    pub skipped_tokens: Vec<String>,
}

/// Finds conversations containing the phrase verbatim (score 1) or a window
/// of query length whose mean embedding has cosine ≥ tau with the query's.
///
/// Hits are sorted by score descending, then conversation id.
pub fn search(query: &PhraseQuery, corpus: &Corpus, table: &EmbeddingTable) -> SearchResult {
    let needle = query.phrase.to_lowercase();
    let (query_vec, out_of_vocabulary, skipped_tokens) = match phrase_vector(&query.tokens, table) {
        Ok(pv) => (Some(pv.vector), false, pv.skipped),
        Err(_) => (None, true, query.tokens.clone()),
    };
    let tokenizer = Tokenizer::plain();
    let width = query.tokens.len();

    let mut hits = Vec::new();
    for conv in corpus.conversations() {
        let mut best: Option<(f64, MatchedSpan)> = None;
        for m in conv.messages() {
            if m.text.to_lowercase().contains(&needle) {
                best = Some((1.0, MatchedSpan { message_id: m.id.clone(), text: query.phrase.clone(), kind: MatchKind::Exact }));
                break;
            }
            let Some(qv) = &query_vec else { continue };
            let tokens = tokenizer.tokenize(&m.text);
            if tokens.len() < width {
                continue;
            }
            for window in tokens.windows(width) {
                let Ok(wv) = phrase_vector(window, table) else { continue };
                let Ok(score) = cosine(qv, &wv.vector) else { continue };
                if score >= query.tau && best.as_ref().is_none_or(|(b, _)| score > *b) {
                    let span = MatchedSpan { message_id: m.id.clone(), text: window.join(" "), kind: MatchKind::Similar };
                    best = Some((score, span));
                }
            }
        }
        if let Some((best_score, matched_span)) = best {
            hits.push(SearchHit { conversation_id: conv.id().to_string(), best_score, matched_span });
        }
    }
    hits.sort_by(|a, b| {
        b.best_score.partial_cmp(&a.best_score).unwrap_or(Ordering::Equal).then_with(|| a.conversation_id.cmp(&b.conversation_id))
    });
    SearchResult { hits, out_of_vocabulary, skipped_tokens }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(entries: &[(&str, &[f64])]) -> EmbeddingTable {
        EmbeddingTable::from_pairs(entries.iter().map(|(w, v)| (w.to_string(), v.to_vec()))).unwrap()
    }

    #[test]
    fn reads_and_validates_files() {
        let t = EmbeddingTable::read("a 1 2 3\nb 4 5 6\n".as_bytes()).unwrap();
        assert_eq!((t.dimension(), t.len()), (3, 2));
        assert_eq!(t.get("b"), Some(&[4.0, 5.0, 6.0][..]));
        let err = EmbeddingTable::read("a 1 2 3\nb 4 5\n".as_bytes()).unwrap_err();
        assert!(matches!(err, PhraseError::Format { line: 2, .. }), "{err:?}");
        let dup = EmbeddingTable::read("a 1 0\na 0 1\n".as_bytes()).unwrap();
        assert_eq!(dup.get("a"), Some(&[1.0, 0.0][..]));
    }

    #[test]
    fn phrase_vector_is_mean() {
        let t = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        assert_eq!(phrase_vector(&["a"], &t).unwrap().vector, vec![1.0, 0.0]);
        let pv = phrase_vector(&["a", "zz", "b"], &t).unwrap();
        assert_eq!(pv.vector, vec![0.5, 0.5]);
        assert_eq!(pv.skipped, vec!["zz"]);
        assert!(matches!(phrase_vector(&["zz"], &t), Err(PhraseError::OutOfVocabulary(_))));
    }

    #[test]
    fn cosine_cases() {
        assert!((cosine(&[3.0, 4.0], &[3.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-4);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(PhraseError::ZeroNorm)));
        assert!(cosine(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn query_validation() {
        assert!(PhraseQuery::new("pain", 0.0).is_err());
        assert!(PhraseQuery::new("pain", 1.5).is_err());
        assert!(PhraseQuery::new("  ,, ", 0.5).is_err());
        assert_eq!(PhraseQuery::new("Chest Pain", 1.0).unwrap().tokens, vec!["chest", "pain"]);
    }
}
