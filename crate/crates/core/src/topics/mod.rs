//! Pre-defined topics: the label hierarchy, bag-of-words features, one-vs-rest
//! logistic regression, evaluation and annotator agreement.

mod agreement;
mod annotations;
mod classifier;
mod eval;
mod hierarchy;
mod vectorizer;

use std::path::Path;

use thiserror::Error;

pub use agreement::{cohens_kappa, mean_pairwise_kappa, AgreementReport, PairwiseAgreement};
pub use annotations::{AnnotationRecord, AnnotationSet, ANNOTATION_HEADER};
pub use classifier::{
    loss_and_gradient, sigmoid, targets_from_sets, train, Prediction, TopicClassifier, TopicModel, TopicTargets,
    TopicTrainingLog, TopicWeights, TrainConfig, TrainReport, MODEL_FORMAT_VERSION,
};
pub use eval::{evaluate, EvaluationReport, MacroMetrics, Metrics};
pub use hierarchy::{TopicHierarchy, TopicNode, DISCOVERED_PARENT};
pub use vectorizer::{BowVectorizer, SparseVector};

#[derive(Debug, Error)]
pub enum TopicError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid topic hierarchy: {0}")]
    Hierarchy(String),
    #[error("training data: {0}")]
    TrainingData(String),
    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    FeatureMismatch { expected: usize, found: usize },
    #[error("training diverged for topic {topic} at epoch {epoch}")]
    Divergence { topic: String, epoch: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("annotation file: {0}")]
    Annotation(String),
    #[error("model file: {0}")]
    ModelFormat(String),
}

impl TopicError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }
}
