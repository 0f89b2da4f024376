//! Lexicon-based message sentiment on a [-2, +2] scale.
//!
//! Each polarity-bearing token contributes its lexicon value, scaled by any
//! intensifiers among the two preceding tokens and sign-flipped when a negator
//! appears in that same window. A message scores the mean contribution,
//! clamped to [-2, +2], or 0 when nothing matches.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Conversation, Sender};
use crate::text::Tokenizer;

/// Tokens before a polarity word that can negate or intensify it.
pub const CONTEXT_WINDOW: usize = 2;

/// Text of the bundled lexicon file.
pub const DEFAULT_LEXICON: &str = include_str!("../data/lexicon.tsv");

#[derive(Debug, Error)]
pub enum SentimentError {
    #[error("cannot read lexicon {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("conversation {0} has no messages")]
    EmptyConversation(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SentimentLexicon {
    polarity: HashMap<String, f64>,
    negators: HashSet<String>,
    intensifiers: HashMap<String, f64>,
}

impl SentimentLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// The lexicon bundled with the crate.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SentimentError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| SentimentError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    /// Parses `word<TAB>score`, `word<TAB>NEG` and `word<TAB>INTx1.5` lines.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self, SentimentError> {
        let mut lex = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| SentimentError::Format { line: line_no, reason };
            let (word, value) = line.split_once('\t').ok_or_else(|| err("expected word<TAB>value".into()))?;
            let word = word.trim().to_lowercase();
            let value = value.trim();
            if word.is_empty() {
                return Err(err("empty word".into()));
            }
            let result = if value == "NEG" {
                lex.add_negator(&word)
            } else if let Some(mult) = value.strip_prefix("INTx") {
                let mult = mult.parse::<f64>().map_err(|e| err(format!("bad multiplier: {e}")))?;
                lex.add_intensifier(&word, mult)
            } else {
                let score = value.parse::<f64>().map_err(|e| err(format!("bad score: {e}")))?;
                lex.add_polarity(&word, score)
            };
            result.map_err(err)?;
        }
        Ok(lex)
    }

    pub fn add_polarity(&mut self, word: &str, score: f64) -> Result<(), String> {
        if !(-2.0..=2.0).contains(&score) {
            return Err(format!("polarity {score} for {word} outside [-2, 2]"));
        }
        if self.negators.contains(word) {
            return Err(format!("{word} is already a negator"));
        }
        self.polarity.insert(word.to_string(), score);
        Ok(())
    }

    pub fn add_negator(&mut self, word: &str) -> Result<(), String> {
        if self.polarity.contains_key(word) {
            return Err(format!("{word} already carries polarity"));
        }
        self.negators.insert(word.to_string());
        Ok(())
    }

    pub fn add_intensifier(&mut self, word: &str, multiplier: f64) -> Result<(), String> {
        if !(multiplier > 0.0 && multiplier <= 3.0) {
            return Err(format!("intensifier {multiplier} for {word} outside (0, 3]"));
        }
        self.intensifiers.insert(word.to_string(), multiplier);
        Ok(())
    }

    pub fn polarity(&self, word: &str) -> Option<f64> {
        self.polarity.get(word).copied()
    }

    pub fn is_negator(&self, word: &str) -> bool {
        self.negators.contains(word)
    }

    pub fn intensifier(&self, word: &str) -> Option<f64> {
        self.intensifiers.get(word).copied()
    }

    /// Same lexicon with every polarity value negated.
    pub fn negated(&self) -> Self {
        let mut out = self.clone();
        out.polarity.values_mut().for_each(|v| *v = -*v);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SentimentScore(f64);

impl SentimentScore {
    pub const NEUTRAL: Self = Self(0.0);

    /// Clamps into [-2, +2]. NaN maps to neutral.
    pub fn new(value: f64) -> Self {
        if value.is_nan() {
            Self::NEUTRAL
        } else {
            Self(value.clamp(-2.0, 2.0))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Discrete sentiment level used for stacked bars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum SentimentBin {
    VeryNegative,
    Negative,
    Neutral,
    Positive,
    VeryPositive,
}

impl SentimentBin {
    pub const ALL: [SentimentBin; 5] =
        [Self::VeryNegative, Self::Negative, Self::Neutral, Self::Positive, Self::VeryPositive];

    pub fn level(self) -> i8 {
        self as i8 - 2
    }

    pub fn from_level(level: i8) -> Option<Self> {
        Self::ALL.get(usize::try_from(level + 2).ok()?).copied()
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl From<SentimentBin> for i8 {
    fn from(b: SentimentBin) -> i8 {
        b.level()
    }
}

impl TryFrom<i8> for SentimentBin {
    type Error = String;
    fn try_from(level: i8) -> Result<Self, String> {
        Self::from_level(level).ok_or_else(|| format!("sentiment bin {level} outside [-2, 2]"))
    }
}

impl fmt::Display for SentimentBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.level())
    }
}

/// Scores a tokenized, lowercased message.
pub fn score_message<S: AsRef<str>>(tokens: &[S], lexicon: &SentimentLexicon) -> SentimentScore {
    let mut sum = 0.0;
    let mut hits = 0usize;
    for (i, token) in tokens.iter().enumerate() {
        let Some(mut value) = lexicon.polarity(token.as_ref()) else {
            continue;
        };
        let mut negated = false;
        for prev in &tokens[i.saturating_sub(CONTEXT_WINDOW)..i] {
            let prev = prev.as_ref();
            if let Some(m) = lexicon.intensifier(prev) {
                value *= m;
            }
            negated |= lexicon.is_negator(prev);
        }
        sum += if negated { -value } else { value };
        hits += 1;
    }
    if hits == 0 {
        SentimentScore::NEUTRAL
    } else {
        SentimentScore::new(sum / hits as f64)
    }
}

/// Tokenizes raw text with the plain tokenizer and scores it.
pub fn score_text(text: &str, lexicon: &SentimentLexicon) -> SentimentScore {
    score_message(&Tokenizer::plain().tokenize(text), lexicon)
}

/// Rounds half away from zero.
pub fn bin_score(score: SentimentScore) -> SentimentBin {
    SentimentBin::from_level(score.value().round() as i8).expect("clamped score rounds into [-2, 2]")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentDistribution {
    /// Indexed from -2 to +2.
    proportions: [f64; 5],
}

impl SentimentDistribution {
    pub fn from_bins(bins: &[SentimentBin]) -> Option<Self> {
        if bins.is_empty() {
            return None;
        }
        let mut counts = [0usize; 5];
        for b in bins {
            counts[b.index()] += 1;
        }
        let n = bins.len() as f64;
        Some(Self { proportions: counts.map(|c| c as f64 / n) })
    }

    pub fn get(&self, bin: SentimentBin) -> f64 {
        self.proportions[bin.index()]
    }

    pub fn proportions(&self) -> [f64; 5] {
        self.proportions
    }

    /// `{"-2": p, "-1": p, "0": p, "+1": p, "+2": p}` for JSON payloads.
    pub fn to_map(&self) -> BTreeMap<i8, f64> {
        SentimentBin::ALL.iter().map(|b| (b.level(), self.get(*b))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SenderFilter {
    #[default]
    All,
    Patient,
    Provider,
}

impl SenderFilter {
    pub fn accepts(self, sender: Sender) -> bool {
        match self {
            Self::All => true,
            Self::Patient => sender == Sender::Patient,
            Self::Provider => sender == Sender::Provider,
        }
    }
}

/// Per-message bins for a conversation, in message order.
pub fn message_bins(conversation: &Conversation, lexicon: &SentimentLexicon) -> Vec<SentimentBin> {
    let tokenizer = Tokenizer::plain();
    conversation
        .messages()
        .iter()
        .map(|m| bin_score(score_message(&tokenizer.tokenize(&m.text), lexicon)))
        .collect()
}

pub fn conversation_distribution(
    conversation: &Conversation,
    lexicon: &SentimentLexicon,
) -> Result<SentimentDistribution, SentimentError> {
    conversation_distribution_for(conversation, lexicon, SenderFilter::All)
}

/// Distribution over the messages whose sender passes `filter`.
pub fn conversation_distribution_for(
    conversation: &Conversation,
    lexicon: &SentimentLexicon,
    filter: SenderFilter,
) -> Result<SentimentDistribution, SentimentError> {
    let tokenizer = Tokenizer::plain();
    let bins: Vec<_> = conversation
        .messages()
        .iter()
        .filter(|m| filter.accepts(m.sender))
        .map(|m| bin_score(score_message(&tokenizer.tokenize(&m.text), lexicon)))
        .collect();
    SentimentDistribution::from_bins(&bins)
        .ok_or_else(|| SentimentError::EmptyConversation(conversation.id().to_string()))
}
