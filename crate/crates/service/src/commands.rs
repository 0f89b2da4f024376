//! Operator commands behind the CLI. Each returns a serializable summary.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use convoscope::corpus::synth::{generate_synthetic_corpus, synthetic_embeddings, SynthSpec};
use convoscope::corpus::{corpus_stats, filter_short, load_corpus, write_corpus, CorpusStats, IngestReport};
use convoscope::lda::{fit_lda, DiscoveredTopic, LdaConfig, LdaModel};
use convoscope::phrase::EmbeddingTable;
use convoscope::sentiment::{SentimentLexicon, DEFAULT_LEXICON};
use convoscope::topics::{
    evaluate, mean_pairwise_kappa, targets_from_sets, train as train_classifier, AnnotationRecord, AnnotationSet, BowVectorizer,
    EvaluationReport, TopicHierarchy, TopicModel, TrainConfig,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::labels::{export_csv, read_annotations, LabelStore};
use crate::snapshot::lda_documents;
use crate::{io_error, DataLayout, Resources, ServiceError};

pub const SYNTH_EMBEDDING_DIM: usize = 50;

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), ServiceError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_error(dir))?;
    }
    std::fs::write(path, contents).map_err(io_error(path))
}

fn read(path: &Path) -> Result<String, ServiceError> {
    std::fs::read_to_string(path).map_err(io_error(path))
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthSummary {
    pub root: PathBuf,
    pub conversations: usize,
    pub short: usize,
    pub annotation_records: usize,
    pub embedding_words: usize,
}

/// Simulated annotators: each copies the planted topics and flips every
/// (conversation, leaf) label with probability `flip_rate`.
pub fn simulated_annotations(
    planted: &BTreeMap<String, BTreeSet<String>>,
    hierarchy: &TopicHierarchy,
    annotators: usize,
    flip_rate: f64,
    seed: u64,
) -> AnnotationSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for (conv, topics) in planted {
        for a in 1..=annotators {
            for leaf in hierarchy.leaves() {
                let flip = rng.gen_bool(flip_rate);
                records.push(AnnotationRecord {
                    conversation_id: conv.clone(),
                    annotator_id: format!("annotator{a}"),
                    topic_id: leaf.id.clone(),
                    label: topics.contains(&leaf.id) != flip,
                });
            }
        }
    }
    AnnotationSet::new(records)
}

/// Writes a complete synthetic data directory: corpus, ledger, annotations
/// from two simulated annotators, hierarchy, lexicon and embeddings.
pub fn synth(layout: &DataLayout, spec: &SynthSpec) -> Result<SynthSummary, ServiceError> {
    let (corpus, ledger) = generate_synthetic_corpus(spec)?;
    write_corpus(&corpus, layout.corpus())?;
    write(&layout.ledger(), serde_json::to_string_pretty(&ledger).expect("ledger serializes"))?;
    let hierarchy = TopicHierarchy::builtin();
    let planted = ledger.entries.iter().map(|e| (e.conversation_id.clone(), e.planted_topics.clone())).collect();
    let annotations = simulated_annotations(&planted, &hierarchy, 2, 0.05, spec.seed);
    let mut buf = Vec::new();
    annotations.write_csv(&mut buf)?;
    write(&layout.annotations(), buf)?;
    write(&layout.hierarchy(), hierarchy.to_tsv())?;
    write(&layout.lexicon(), DEFAULT_LEXICON)?;
    let embeddings = EmbeddingTable::from_pairs(synthetic_embeddings(spec, SYNTH_EMBEDDING_DIM))?;
    write(&layout.embeddings(), embeddings.to_text())?;
    Ok(SynthSummary {
        root: layout.root.clone(),
        conversations: corpus.len(),
        short: ledger.short_count,
        annotation_records: annotations.records.len(),
        embedding_words: embeddings.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub loaded: usize,
    pub retained: usize,
    pub report: IngestReport,
    pub stats: CorpusStats,
}

/// Loads raw records, drops conversations under `min_messages` and writes the
/// result to the layout's corpus directory.
pub fn ingest(source: &Path, layout: &DataLayout, min_messages: usize) -> Result<IngestSummary, ServiceError> {
    let (corpus, report) = load_corpus(source)?;
    let kept = filter_short(&corpus, min_messages);
    let stats = corpus_stats(&kept)?;
    write_corpus(&kept, layout.corpus())?;
    Ok(IngestSummary { loaded: corpus.len(), retained: kept.len(), report, stats })
}

pub fn load_hierarchy(path: &Path) -> Result<TopicHierarchy, ServiceError> {
    if path.exists() {
        Ok(TopicHierarchy::load(path)?)
    } else {
        Ok(TopicHierarchy::builtin())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub labeled_conversations: usize,
    pub train_size: usize,
    pub holdout_size: usize,
    /// Mean pairwise kappa per leaf topic; absent when no pair overlaps.
    pub kappa: BTreeMap<String, Option<f64>>,
    pub skipped_topics: Vec<String>,
    pub evaluation: Option<EvaluationReport>,
    pub model: PathBuf,
}

/// Trains the topic classifier on consensus labels from one or more
/// annotation files or verdict exports, holding out `holdout` of them.
pub fn train(
    layout: &DataLayout,
    annotation_files: &[PathBuf],
    holdout: f64,
    config: &TrainConfig,
) -> Result<TrainSummary, ServiceError> {
    if !(0.0..1.0).contains(&holdout) {
        return Err(ServiceError::Invalid("holdout must lie in [0, 1)".into()));
    }
    let (corpus, _) = load_corpus(layout.corpus())?;
    let hierarchy = load_hierarchy(&layout.hierarchy())?;
    let mut records = Vec::new();
    for path in annotation_files {
        records.extend(read_annotations(&read(path)?)?.records);
    }
    let annotations = AnnotationSet::new(records);
    annotations.validate(&hierarchy)?;
    let kappa = hierarchy.leaves().map(|l| (l.id.clone(), mean_pairwise_kappa(&annotations, &l.id).mean_kappa)).collect();

    let consensus = annotations.consensus();
    let mut labeled: Vec<(&convoscope::corpus::Conversation, &BTreeSet<String>)> =
        corpus.conversations().iter().filter_map(|c| consensus.get(c.id()).map(|t| (c, t))).collect();
    if labeled.is_empty() {
        return Err(ServiceError::Invalid("no annotated conversation is in the corpus".into()));
    }
    labeled.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let n_holdout = (labeled.len() as f64 * holdout).round() as usize;
    let (held, fit) = labeled.split_at(n_holdout);

    let fit_convs: Vec<_> = fit.iter().map(|(c, _)| (*c).clone()).collect();
    let vectorizer = BowVectorizer::fit_conversations(&fit_convs, 2)?;
    let features: Vec<_> = fit_convs.iter().map(|c| vectorizer.transform_conversation(c)).collect();
    let sets: Vec<BTreeSet<String>> = fit.iter().map(|(_, t)| (*t).clone()).collect();
    let (classifier, report) = train_classifier(&features, &targets_from_sets(&hierarchy, &sets), config)?;
    let evaluation = if held.is_empty() {
        None
    } else {
        let rows: Vec<_> = held.iter().map(|(c, t)| (vectorizer.transform_conversation(c), (*t).clone())).collect();
        Some(evaluate(&classifier, &hierarchy, &rows)?)
    };
    TopicModel::new(vectorizer, classifier).save(layout.model())?;
    Ok(TrainSummary {
        labeled_conversations: labeled.len(),
        train_size: fit.len(),
        holdout_size: held.len(),
        kappa,
        skipped_topics: report.skipped,
        evaluation,
        model: layout.model(),
    })
}

/// Fits the discovered-topic model and writes its dump.
pub fn lda(layout: &DataLayout, config: &LdaConfig) -> Result<Vec<DiscoveredTopic>, ServiceError> {
    let (corpus, _) = load_corpus(layout.corpus())?;
    let model = fit_lda(&lda_documents(&corpus), config)?;
    write(&layout.lda(), model.to_dump())?;
    Ok(model.topics())
}

/// The verdict export as CSV text.
pub fn export_labels(layout: &DataLayout) -> Result<String, ServiceError> {
    Ok(export_csv(&LabelStore::open(layout.labels())?.verdicts()))
}

/// Paths a server loads from; unset entries fall back to the data layout.
#[derive(Debug, Clone, Default)]
pub struct ResourcePaths {
    pub corpus: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub hierarchy: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub lda: Option<PathBuf>,
}

/// Loads everything a snapshot needs. The corpus is required. A missing
/// lexicon or hierarchy falls back to the built-in one; missing embeddings,
/// model or LDA dump leave that feature off. Explicitly given paths must exist.
pub fn load_resources(layout: &DataLayout, paths: &ResourcePaths) -> Result<Resources, ServiceError> {
    fn pick(given: &Option<PathBuf>, default: PathBuf) -> Result<Option<PathBuf>, ServiceError> {
        match given {
            Some(p) if !p.exists() => Err(ServiceError::Invalid(format!("{} does not exist", p.display()))),
            Some(p) => Ok(Some(p.clone())),
            None => Ok(default.exists().then_some(default)),
        }
    }
    let corpus_path = paths.corpus.clone().unwrap_or_else(|| layout.corpus());
    let (corpus, report) = load_corpus(&corpus_path)?;
    if !report.malformed.is_empty() {
        log::warn!("{}: skipped {} malformed lines", corpus_path.display(), report.malformed.len());
    }
    let lexicon = match pick(&paths.lexicon, layout.lexicon())? {
        Some(p) => SentimentLexicon::load(p)?,
        None => SentimentLexicon::builtin(),
    };
    let hierarchy = match pick(&paths.hierarchy, layout.hierarchy())? {
        Some(p) => TopicHierarchy::load(p)?,
        None => TopicHierarchy::builtin(),
    };
    let embeddings = match pick(&paths.embeddings, layout.embeddings())? {
        Some(p) => EmbeddingTable::load(p)?,
        None => EmbeddingTable::default(),
    };
    let model = pick(&paths.model, layout.model())?.map(TopicModel::load).transpose()?;
    let lda = match pick(&paths.lda, layout.lda())? {
        Some(p) => Some(LdaModel::from_dump(&read(&p)?)?),
        None => None,
    };
    Ok(Resources { corpus, hierarchy, lexicon, embeddings, model, lda })
}

