use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{SparseVector, TopicClassifier, TopicError, TopicHierarchy};

/// Confusion counts and the metrics derived from them. A metric whose
/// denominator is zero is `None`, never 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        Self {
            tp,
            fp,
            fn_,
            tn,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub per_topic: BTreeMap<String, Metrics>,
    /// Metrics over the pooled confusion counts.
    pub micro: Metrics,
    /// Unweighted mean over topics where each metric is defined.
    pub macro_avg: MacroMetrics,
    pub n_items: usize,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Scores leaf-topic predictions against gold topic sets.
pub fn evaluate(
    classifier: &TopicClassifier,
    hierarchy: &TopicHierarchy,
    held_out: &[(SparseVector, BTreeSet<String>)],
) -> Result<EvaluationReport, TopicError> {
    if held_out.is_empty() {
        return Err(TopicError::InvalidInput("empty evaluation set".into()));
    }
    let mut counts: BTreeMap<String, [usize; 4]> =
        classifier.topics.iter().map(|t| (t.topic_id.clone(), [0; 4])).collect();
    for (x, gold) in held_out {
        let predicted = classifier.predict(hierarchy, x)?;
        for (topic, c) in counts.iter_mut() {
            let slot = match (predicted.leaves.contains(topic), gold.contains(topic)) {
                (true, true) => 0,
                (true, false) => 1,
                (false, true) => 2,
                (false, false) => 3,
            };
            c[slot] += 1;
        }
    }
    let per_topic: BTreeMap<_, _> =
        counts.into_iter().map(|(t, [tp, fp, fn_, tn])| (t, Metrics::from_counts(tp, fp, fn_, tn))).collect();
    let sum = |f: fn(&Metrics) -> usize| per_topic.values().map(f).sum::<usize>();
    let micro = Metrics::from_counts(sum(|m| m.tp), sum(|m| m.fp), sum(|m| m.fn_), sum(|m| m.tn));
    let macro_avg = MacroMetrics {
        precision: mean_defined(per_topic.values().map(|m| m.precision)),
        recall: mean_defined(per_topic.values().map(|m| m.recall)),
        f1: mean_defined(per_topic.values().map(|m| m.f1)),
    };
    Ok(EvaluationReport { per_topic, micro, macro_avg, n_items: held_out.len() })
}
