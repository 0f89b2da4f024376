//! One-vs-rest L2-regularized logistic regression over bag-of-words counts.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SparseVector, TopicError, TopicHierarchy};
use super::vectorizer::BowVectorizer;

pub const MODEL_FORMAT_VERSION: u32 = 1;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// L2 strength on the weights (the bias is not penalized).
    pub lambda: f64,
    pub learning_rate: f64,
    /// Step size at epoch `e` is `learning_rate / (1 + decay * e)`.
    pub decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub threshold: f64,
    /// Step-halvings allowed after a loss increase before training stops.
    pub max_backtracks: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-2,
            learning_rate: 0.5,
            decay: 0.05,
            epochs: 60,
            batch_size: 16,
            seed: 0,
            threshold: 0.5,
            max_backtracks: 8,
        }
    }
}

/// Weights and bias for one leaf topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicWeights {
    pub topic_id: String,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl TopicWeights {
    pub fn zeros(topic_id: &str, dim: usize) -> Self {
        Self { topic_id: topic_id.to_string(), weights: vec![0.0; dim], bias: 0.0 }
    }

    pub fn probability(&self, x: &SparseVector) -> f64 {
        sigmoid(x.dot(&self.weights) + self.bias)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicClassifier {
    pub dim: usize,
    pub topics: Vec<TopicWeights>,
    pub threshold: f64,
    pub lambda: f64,
}

/// Mean logistic loss over `batch` plus `lambda/2 * |w|^2`, with its gradient
/// `(d/dw, d/db)`.
pub fn loss_and_gradient(
    weights: &[f64],
    bias: f64,
    batch: &[(&SparseVector, bool)],
    lambda: f64,
) -> (f64, Vec<f64>, f64) {
    let n = batch.len().max(1) as f64;
    let mut grad = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    let mut loss = 0.0;
    for &(x, y) in batch {
        let z = x.dot(weights) + bias;
        let y = if y { 1.0 } else { 0.0 };
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        for &(i, v) in x.entries() {
            grad[i] += r * v;
        }
        grad_b += r;
    }
    let mut reg = 0.0;
    for (g, w) in grad.iter_mut().zip(weights) {
        *g = *g / n + lambda * w;
        reg += w * w;
    }
    (loss / n + 0.5 * lambda * reg, grad, grad_b / n)
}

/// Per-topic training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicTrainingLog {
    pub topic_id: String,
    /// Full-data loss after initialization and after each accepted epoch.
    pub losses: Vec<f64>,
    pub backtracks: usize,
    /// Set when training stopped before the configured epoch count.
    pub halted: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub topics: Vec<TopicTrainingLog>,
    /// Topics without both a positive and a negative example.
    pub skipped: Vec<String>,
}

/// Per-topic binary targets aligned with the feature rows.
pub type TopicTargets = IndexMap<String, Vec<bool>>;

/// Builds targets for every hierarchy leaf from per-document topic sets.
pub fn targets_from_sets(hierarchy: &TopicHierarchy, labels: &[BTreeSet<String>]) -> TopicTargets {
    hierarchy
        .leaves()
        .map(|leaf| (leaf.id.clone(), labels.iter().map(|s| s.contains(&leaf.id)).collect()))
        .collect()
}

fn topic_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn train_topic(
    topic_id: &str,
    index: usize,
    features: &[SparseVector],
    targets: &[bool],
    dim: usize,
    config: &TrainConfig,
) -> Result<(TopicWeights, TopicTrainingLog), TopicError> {
    let data: Vec<(&SparseVector, bool)> = features.iter().zip(targets.iter().copied()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(topic_seed(config.seed, index));
    let mut order: Vec<usize> = (0..data.len()).collect();

    let mut model = TopicWeights::zeros(topic_id, dim);
    let (mut loss, _, _) = loss_and_gradient(&model.weights, model.bias, &data, config.lambda);
    let mut log = TopicTrainingLog { topic_id: topic_id.to_string(), losses: vec![loss], backtracks: 0, halted: None };
    let mut scale = 1.0;

    let mut epoch = 0;
    while epoch < config.epochs {
        let rate = scale * config.learning_rate / (1.0 + config.decay * epoch as f64);
        let mut candidate = model.clone();
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size.max(1)) {
            let batch: Vec<_> = chunk.iter().map(|&i| data[i]).collect();
            let (_, gw, gb) = loss_and_gradient(&candidate.weights, candidate.bias, &batch, config.lambda);
            for (w, g) in candidate.weights.iter_mut().zip(&gw) {
                *w -= rate * g;
            }
            candidate.bias -= rate * gb;
        }
        let (next, _, _) = loss_and_gradient(&candidate.weights, candidate.bias, &data, config.lambda);
        if !next.is_finite() {
            return Err(TopicError::Divergence { topic: topic_id.to_string(), epoch: epoch + 1 });
        }
        if next > loss {
            // Reject the epoch and retry it with half the step.
            log.backtracks += 1;
            if log.backtracks > config.max_backtracks {
                log.halted = Some(format!(
                    "loss rose from {loss:.6e} to {next:.6e} at epoch {} after {} step halvings",
                    epoch + 1,
                    config.max_backtracks
                ));
                break;
            }
            scale *= 0.5;
            continue;
        }
        model = candidate;
        loss = next;
        log.losses.push(loss);
        epoch += 1;
    }
    Ok((model, log))
}

/// Trains one binary model per target topic. Topics train independently and
/// in parallel; each derives its own RNG stream from `config.seed`, so results
/// do not depend on scheduling.
pub fn train(
    features: &[SparseVector],
    targets: &TopicTargets,
    config: &TrainConfig,
) -> Result<(TopicClassifier, TrainReport), TopicError> {
    let dim = features.first().map(SparseVector::dim).ok_or_else(|| TopicError::TrainingData("no documents".into()))?;
    if let Some(x) = features.iter().find(|x| x.dim() != dim) {
        return Err(TopicError::FeatureMismatch { expected: dim, found: x.dim() });
    }
    let mut report = TrainReport::default();
    let mut jobs = Vec::new();
    for (index, (topic, ys)) in targets.iter().enumerate() {
        if ys.len() != features.len() {
            return Err(TopicError::TrainingData(format!(
                "topic {topic} has {} targets for {} documents",
                ys.len(),
                features.len()
            )));
        }
        let positives = ys.iter().filter(|y| **y).count();
        if positives == 0 || positives == ys.len() {
            log::warn!("skipping topic {topic}: needs both positive and negative examples");
            report.skipped.push(topic.clone());
            continue;
        }
        jobs.push((index, topic.as_str(), ys.as_slice()));
    }

    let trained: Vec<_> = jobs
        .into_par_iter()
        .map(|(index, topic, ys)| train_topic(topic, index, features, ys, dim, config))
        .collect::<Result<_, _>>()?;

    let mut topics = Vec::with_capacity(trained.len());
    for (weights, log) in trained {
        if let Some(reason) = &log.halted {
            log::warn!("topic {}: {reason}", log.topic_id);
        }
        topics.push(weights);
        report.topics.push(log);
    }
    let classifier = TopicClassifier { dim, topics, threshold: config.threshold, lambda: config.lambda };
    Ok((classifier, report))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Probability per classified leaf topic.
    pub probabilities: BTreeMap<String, f64>,
    pub leaves: BTreeSet<String>,
    /// Parents with at least one present child.
    pub parents: BTreeSet<String>,
}

impl Prediction {
    /// Leaves and parents together.
    pub fn topics(&self) -> BTreeSet<String> {
        self.leaves.union(&self.parents).cloned().collect()
    }
}

impl TopicClassifier {
    /// A topic is present iff its probability is at least the threshold.
    pub fn predict(&self, hierarchy: &TopicHierarchy, x: &SparseVector) -> Result<Prediction, TopicError> {
        if x.dim() != self.dim {
            return Err(TopicError::FeatureMismatch { expected: self.dim, found: x.dim() });
        }
        let mut out = Prediction::default();
        for t in &self.topics {
            let p = t.probability(x);
            if p >= self.threshold {
                out.leaves.insert(t.topic_id.clone());
                if let Some(parent) = hierarchy.parent_of(&t.topic_id) {
                    out.parents.insert(parent.to_string());
                }
            }
            out.probabilities.insert(t.topic_id.clone(), p);
        }
        Ok(out)
    }

    pub fn topic(&self, id: &str) -> Option<&TopicWeights> {
        self.topics.iter().find(|t| t.topic_id == id)
    }
}

/// Vectorizer plus classifier, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub format_version: u32,
    pub vectorizer: BowVectorizer,
    pub classifier: TopicClassifier,
}

impl TopicModel {
    pub fn new(vectorizer: BowVectorizer, classifier: TopicClassifier) -> Self {
        Self { format_version: MODEL_FORMAT_VERSION, vectorizer, classifier }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TopicError> {
        let mut model: Self = serde_json::from_str(text).map_err(|e| TopicError::ModelFormat(e.to_string()))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(TopicError::ModelFormat(format!("unsupported model version {}", model.format_version)));
        }
        if model.vectorizer.dim() != model.classifier.dim {
            return Err(TopicError::FeatureMismatch { expected: model.classifier.dim, found: model.vectorizer.dim() });
        }
        model.vectorizer.reindex();
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TopicError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| TopicError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TopicError> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| TopicError::io(path, e))?)
    }
}
