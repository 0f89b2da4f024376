//! Latent Dirichlet allocation fitted by collapsed Gibbs sampling.
//!
//! Documents are put in canonical order (sorted by id) before the sampler's
//! RNG is seeded, so a fit depends on the set of documents and the seed, not
//! on the order the caller passed them in.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default minimum margin over uniform for a conversation to "contain" a topic.
pub const DEFAULT_PRESENCE_MARGIN: f64 = 0.1;
pub const LABEL_WORDS: usize = 5;
pub const DEFAULT_INFERENCE_SWEEPS: usize = 100;

#[derive(Debug, Error)]
pub enum LdaError {
    #[error("training data: {0}")]
    TrainingData(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("model dump line {line}: {reason}")]
    Format { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    /// Symmetric document-topic prior.
    pub alpha: f64,
    /// Symmetric topic-word prior.
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Record the corpus log-likelihood every this many sweeps; 0 disables.
    pub likelihood_every: usize,
}

impl LdaConfig {
    /// `alpha = 50 / k`, `beta = 0.01`, 1000 sweeps.
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, alpha: 50.0 / k.max(1) as f64, beta: 0.01, iterations: 1000, seed, likelihood_every: 0 }
    }

    fn validate(&self) -> Result<(), LdaError> {
        if self.k == 0 {
            return Err(LdaError::InvalidInput("k must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(LdaError::InvalidInput("alpha and beta must be positive".into()));
        }
        Ok(())
    }
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self::new(3, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LdaDocument {
    pub id: String,
    pub tokens: Vec<String>,
}

impl LdaDocument {
    pub fn new(id: impl Into<String>, tokens: Vec<String>) -> Self {
        Self { id: id.into(), tokens }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub vocabulary: Vec<String>,
    /// Document ids in canonical (sorted) order; rows of `theta` follow it.
    pub doc_ids: Vec<String>,
    /// k × V topic-word probabilities.
    pub phi: Vec<Vec<f64>>,
    /// D × k document-topic probabilities.
    pub theta: Vec<Vec<f64>>,
    /// Final topic of every token, per canonical document. Empty for models read from a dump.
    pub token_assignments: Vec<Vec<usize>>,
    /// `(sweep, log-likelihood)` checkpoints.
    pub log_likelihood: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveredTopic {
    pub topic_index: usize,
    /// Most probable words, most probable first.
    pub label: Vec<String>,
    /// Mean document share of the topic.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferredMixture {
    pub mixture: Vec<f64>,
    /// No token of the document was in the model vocabulary.
    pub out_of_vocabulary: bool,
}

fn normalize(row: &mut [f64]) {
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= s);
}

/// Inverse-CDF draw from unnormalized weights.
fn sample(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

struct Sampler {
    k: usize,
    v: usize,
    alpha: f64,
    beta: f64,
    docs: Vec<Vec<usize>>,
    z: Vec<Vec<usize>>,
    doc_topic: Vec<Vec<u32>>,
    topic_word: Vec<Vec<u32>>,
    topic_total: Vec<u32>,
}

impl Sampler {
    fn sweep(&mut self, rng: &mut ChaCha8Rng, weights: &mut [f64]) {
        let vbeta = self.v as f64 * self.beta;
        for d in 0..self.docs.len() {
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i];
                let old = self.z[d][i];
                self.doc_topic[d][old] -= 1;
                self.topic_word[old][w] -= 1;
                self.topic_total[old] -= 1;
                for (t, slot) in weights.iter_mut().enumerate() {
                    *slot = (self.doc_topic[d][t] as f64 + self.alpha) * (self.topic_word[t][w] as f64 + self.beta)
                        / (self.topic_total[t] as f64 + vbeta);
                }
                let new = sample(rng, weights);
                self.z[d][i] = new;
                self.doc_topic[d][new] += 1;
                self.topic_word[new][w] += 1;
                self.topic_total[new] += 1;
            }
        }
    }

    fn phi(&self) -> Vec<Vec<f64>> {
        (0..self.k)
            .map(|t| {
                let mut row: Vec<f64> = self.topic_word[t].iter().map(|&c| c as f64 + self.beta).collect();
                normalize(&mut row);
                row
            })
            .collect()
    }

    fn theta(&self) -> Vec<Vec<f64>> {
        self.doc_topic
            .iter()
            .map(|counts| {
                let mut row: Vec<f64> = counts.iter().map(|&c| c as f64 + self.alpha).collect();
                normalize(&mut row);
                row
            })
            .collect()
    }

    /// `sum_d sum_i log sum_t theta[d][t] * phi[t][w_di]`.
    fn log_likelihood(&self) -> f64 {
        let (phi, theta) = (self.phi(), self.theta());
        self.docs
            .iter()
            .zip(&theta)
            .map(|(doc, th)| doc.iter().map(|&w| (0..self.k).map(|t| th[t] * phi[t][w]).sum::<f64>().ln()).sum::<f64>())
            .sum()
    }
}

/// Fits LDA on tokenized documents.
pub fn fit_lda(docs: &[LdaDocument], config: &LdaConfig) -> Result<LdaModel, LdaError> {
    config.validate()?;
    if docs.len() < config.k {
        return Err(LdaError::InvalidInput(format!("{} documents for {} topics", docs.len(), config.k)));
    }
    let mut ordered: Vec<&LdaDocument> = docs.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    if ordered.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(LdaError::InvalidInput("duplicate document ids".into()));
    }

    let vocab_index: BTreeMap<&str, usize> = {
        let mut words: Vec<&str> = ordered.iter().flat_map(|d| d.tokens.iter().map(String::as_str)).collect();
        words.sort_unstable();
        words.dedup();
        words.into_iter().enumerate().map(|(i, w)| (w, i)).collect()
    };
    if vocab_index.is_empty() {
        return Err(LdaError::TrainingData("empty vocabulary".into()));
    }
    let vocabulary: Vec<String> = vocab_index.keys().map(|w| w.to_string()).collect();
    let (k, v) = (config.k, vocabulary.len());

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut s = Sampler {
        k,
        v,
        alpha: config.alpha,
        beta: config.beta,
        docs: ordered.iter().map(|d| d.tokens.iter().map(|t| vocab_index[t.as_str()]).collect()).collect(),
        z: Vec::with_capacity(ordered.len()),
        doc_topic: vec![vec![0; k]; ordered.len()],
        topic_word: vec![vec![0; v]; k],
        topic_total: vec![0; k],
    };
    for (d, doc) in s.docs.iter().enumerate() {
        let mut zs = Vec::with_capacity(doc.len());
        for &w in doc {
            let t = rng.gen_range(0..k);
            zs.push(t);
            s.doc_topic[d][t] += 1;
            s.topic_word[t][w] += 1;
            s.topic_total[t] += 1;
        }
        s.z.push(zs);
    }

    let mut weights = vec![0.0; k];
    let mut log_likelihood = Vec::new();
    for sweep in 1..=config.iterations {
        s.sweep(&mut rng, &mut weights);
        if config.likelihood_every > 0 && sweep % config.likelihood_every == 0 {
            log_likelihood.push((sweep, s.log_likelihood()));
        }
    }

    Ok(LdaModel {
        k,
        alpha: config.alpha,
        beta: config.beta,
        seed: config.seed,
        vocabulary,
        doc_ids: ordered.iter().map(|d| d.id.clone()).collect(),
        phi: s.phi(),
        theta: s.theta(),
        token_assignments: s.z,
        log_likelihood,
    })
}

impl LdaModel {
    pub fn vocabulary_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn theta_for(&self, doc_id: &str) -> Option<&[f64]> {
        self.doc_ids.binary_search_by(|id| id.as_str().cmp(doc_id)).ok().map(|i| self.theta[i].as_slice())
    }

    /// Top words of a topic by probability, ties broken lexicographically.
    pub fn topic_label(&self, topic_index: usize) -> Result<DiscoveredTopic, LdaError> {
        let row = self
            .phi
            .get(topic_index)
            .ok_or_else(|| LdaError::InvalidInput(format!("topic {topic_index} out of range 0..{}", self.k)))?;
        let mut ranked: Vec<usize> = (0..row.len()).collect();
        ranked.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then_with(|| self.vocabulary[a].cmp(&self.vocabulary[b])));
        let label = ranked.into_iter().take(LABEL_WORDS).map(|i| self.vocabulary[i].clone()).collect();
        let weight = if self.theta.is_empty() {
            0.0
        } else {
            self.theta.iter().map(|r| r[topic_index]).sum::<f64>() / self.theta.len() as f64
        };
        Ok(DiscoveredTopic { topic_index, label, weight })
    }

    pub fn topics(&self) -> Vec<DiscoveredTopic> {
        (0..self.k).map(|t| self.topic_label(t).expect("index in range")).collect()
    }

    /// Topic mixture of an unseen document with `phi` held fixed.
    ///
    /// Runs `sweeps` Gibbs sweeps and averages the smoothed mixture over the
    /// second half of them.
    pub fn infer_doc_topics<S: AsRef<str>>(&self, tokens: &[S], sweeps: usize) -> InferredMixture {
        let index: BTreeMap<&str, usize> = self.vocabulary.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
        let words: Vec<usize> = tokens.iter().filter_map(|t| index.get(t.as_ref()).copied()).collect();
        if words.is_empty() {
            return InferredMixture { mixture: vec![1.0 / self.k as f64; self.k], out_of_vocabulary: true };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut counts = vec![0u32; self.k];
        let mut z: Vec<usize> = words
            .iter()
            .map(|_| {
                let t = rng.gen_range(0..self.k);
                counts[t] += 1;
                t
            })
            .collect();
        let sweeps = sweeps.max(1);
        let burn_in = sweeps / 2;
        let mut acc = vec![0.0; self.k];
        let mut weights = vec![0.0; self.k];
        for sweep in 0..sweeps {
            for (i, &w) in words.iter().enumerate() {
                counts[z[i]] -= 1;
                for (t, slot) in weights.iter_mut().enumerate() {
                    *slot = (counts[t] as f64 + self.alpha) * self.phi[t][w];
                }
                z[i] = sample(&mut rng, &weights);
                counts[z[i]] += 1;
            }
            if sweep >= burn_in {
                let denom = words.len() as f64 + self.k as f64 * self.alpha;
                for t in 0..self.k {
                    acc[t] += (counts[t] as f64 + self.alpha) / denom;
                }
            }
        }
        normalize(&mut acc);
        InferredMixture { mixture: acc, out_of_vocabulary: false }
    }

    /// Writes the text dump: a header line with k, V, D and seed, then the
    /// vocabulary, the document ids, `phi` rows and `theta` rows.
    pub fn to_dump(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# lda-dump v1").unwrap();
        writeln!(
            out,
            "k {} V {} D {} seed {} alpha {} beta {}",
            self.k,
            self.vocabulary.len(),
            self.doc_ids.len(),
            self.seed,
            self.alpha,
            self.beta
        )
        .unwrap();
        writeln!(out, "vocab {}", self.vocabulary.join(" ")).unwrap();
        writeln!(out, "docs {}", self.doc_ids.join(" ")).unwrap();
        writeln!(out, "phi").unwrap();
        for row in &self.phi {
            writeln!(out, "{}", join_floats(row)).unwrap();
        }
        writeln!(out, "theta").unwrap();
        for row in &self.theta {
            writeln!(out, "{}", join_floats(row)).unwrap();
        }
        out
    }

    pub fn from_dump(text: &str) -> Result<Self, LdaError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#'));
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| LdaError::Format { line: 0, reason: format!("missing {what}") })
        };
        let (ln, header) = next("header")?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let get = |key: &str| -> Result<&str, LdaError> {
            fields
                .chunks(2)
                .find(|c| c.len() == 2 && c[0] == key)
                .map(|c| c[1])
                .ok_or_else(|| LdaError::Format { line: ln + 1, reason: format!("header lacks {key}") })
        };
        let parse_err = |line: usize| move |e: std::num::ParseIntError| LdaError::Format { line: line + 1, reason: e.to_string() };
        let k: usize = get("k")?.parse().map_err(parse_err(ln))?;
        let v: usize = get("V")?.parse().map_err(parse_err(ln))?;
        let d: usize = get("D")?.parse().map_err(parse_err(ln))?;
        let seed: u64 = get("seed")?.parse().map_err(parse_err(ln))?;
        let alpha = parse_float(get("alpha")?, ln)?;
        let beta = parse_float(get("beta")?, ln)?;

        let mut words = |tag: &str, n: usize| -> Result<Vec<String>, LdaError> {
            let (ln, line) = next(tag)?;
            let rest = line.strip_prefix(tag).ok_or_else(|| LdaError::Format { line: ln + 1, reason: format!("expected {tag}") })?;
            let items: Vec<String> = rest.split_whitespace().map(String::from).collect();
            if items.len() != n {
                return Err(LdaError::Format { line: ln + 1, reason: format!("expected {n} {tag} entries, found {}", items.len()) });
            }
            Ok(items)
        };
        let vocabulary = words("vocab", v)?;
        let doc_ids = words("docs", d)?;

        let mut matrix = |tag: &str, rows: usize, cols: usize| -> Result<Vec<Vec<f64>>, LdaError> {
            let (ln, line) = next(tag)?;
            if line.trim() != tag {
                return Err(LdaError::Format { line: ln + 1, reason: format!("expected {tag}") });
            }
            (0..rows)
                .map(|_| {
                    let (ln, line) = next(tag)?;
                    let row = line.split_whitespace().map(|x| parse_float(x, ln)).collect::<Result<Vec<_>, _>>()?;
                    if row.len() != cols {
                        return Err(LdaError::Format { line: ln + 1, reason: format!("expected {cols} values") });
                    }
                    Ok(row)
                })
                .collect()
        };
        let phi = matrix("phi", k, v)?;
        let theta = matrix("theta", d, k)?;
        Ok(Self { k, alpha, beta, seed, vocabulary, doc_ids, phi, theta, token_assignments: vec![], log_likelihood: vec![] })
    }
}

fn join_floats(row: &[f64]) -> String {
    row.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn parse_float(s: &str, line: usize) -> Result<f64, LdaError> {
    s.parse().map_err(|e: std::num::ParseFloatError| LdaError::Format { line: line + 1, reason: e.to_string() })
}

/// Whether a mixture component clears `1/k + margin`.
pub fn topic_present(mixture: &[f64], topic_index: usize, margin: f64) -> bool {
    let k = mixture.len() as f64;
    mixture.get(topic_index).is_some_and(|&p| p >= 1.0 / k + margin)
}
