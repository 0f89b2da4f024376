//! An immutable, fully enriched view of one corpus.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use convoscope::analytics::{build_index, ConversationAnnotation, CrossFilterIndex, FilterSelection, ResolvedSelection, SelectionError};
use convoscope::corpus::{Conversation, Corpus};
use convoscope::lda::{topic_present, LdaDocument, LdaModel, DEFAULT_INFERENCE_SWEEPS, DEFAULT_PRESENCE_MARGIN};
use convoscope::phrase::{search, EmbeddingTable, PhraseQuery, SearchResult};
use convoscope::sentiment::{bin_score, score_text, SentimentBin, SentimentDistribution, SentimentLexicon};
use convoscope::text::Tokenizer;
use convoscope::topics::{TopicHierarchy, TopicModel, TopicNode, DISCOVERED_PARENT};
use serde::Serialize;

use crate::ServiceError;

/// Per-conversation enrichment computed once at build time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Enrichment {
    /// Classifier probability per leaf topic; empty without a model.
    pub probabilities: BTreeMap<String, f64>,
    /// Present topics: predicted leaves, discovered topics and their parents.
    pub topics: BTreeSet<String>,
    pub message_scores: Vec<f64>,
    pub message_bins: Vec<SentimentBin>,
    pub distribution: SentimentDistribution,
}

/// Inputs a snapshot is built from.
#[derive(Debug, Clone)]
pub struct Resources {
    pub corpus: Corpus,
    pub hierarchy: TopicHierarchy,
    pub lexicon: SentimentLexicon,
    pub embeddings: EmbeddingTable,
    pub model: Option<TopicModel>,
    pub lda: Option<LdaModel>,
}

#[derive(Debug)]
pub struct Snapshot {
    resources: Resources,
    hierarchy: TopicHierarchy,
    enrichment: HashMap<String, Enrichment>,
    index: CrossFilterIndex,
}

pub fn discovered_id(topic_index: usize) -> String {
    format!("{DISCOVERED_PARENT}_{topic_index}")
}

/// LDA input: each conversation's concatenated text through the feature tokenizer.
pub fn lda_documents(corpus: &Corpus) -> Vec<LdaDocument> {
    let tokenizer = Tokenizer::features();
    corpus.conversations().iter().map(|c| LdaDocument::new(c.id(), tokenizer.tokenize(&c.text()))).collect()
}

fn with_discovered(hierarchy: &TopicHierarchy, lda: &LdaModel) -> Result<TopicHierarchy, ServiceError> {
    let parent = TopicNode { id: DISCOVERED_PARENT.into(), label: "Discovered".into(), parent_id: None };
    let children = lda
        .topics()
        .into_iter()
        .map(|t| TopicNode { id: discovered_id(t.topic_index), label: t.label.join(" "), parent_id: Some(DISCOVERED_PARENT.into()) })
        .collect();
    Ok(hierarchy.clone().with_group(parent, children)?)
}

fn enrich(conv: &Conversation, res: &Resources, hierarchy: &TopicHierarchy) -> Result<Enrichment, ServiceError> {
    let mut probabilities = BTreeMap::new();
    let mut topics = BTreeSet::new();
    if let Some(model) = &res.model {
        let x = model.vectorizer.transform_conversation(conv);
        let prediction = model.classifier.predict(hierarchy, &x)?;
        topics.extend(prediction.topics());
        probabilities = prediction.probabilities;
    }
    if let Some(lda) = &res.lda {
        let inferred;
        let mixture = match lda.theta_for(conv.id()) {
            Some(theta) => theta,
            None => {
                let tokens = Tokenizer::features().tokenize(&conv.text());
                inferred = lda.infer_doc_topics(&tokens, DEFAULT_INFERENCE_SWEEPS);
                &inferred.mixture
            }
        };
        for t in 0..lda.k {
            if topic_present(mixture, t, DEFAULT_PRESENCE_MARGIN) {
                topics.insert(discovered_id(t));
                topics.insert(DISCOVERED_PARENT.to_string());
            }
        }
    }
    let scored: Vec<_> = conv.messages().iter().map(|m| score_text(&m.text, &res.lexicon)).collect();
    let scores = scored.iter().map(|s| s.value()).collect();
    let bins: Vec<SentimentBin> = scored.into_iter().map(bin_score).collect();
    let distribution = SentimentDistribution::from_bins(&bins)
        .ok_or_else(|| ServiceError::Invalid(format!("conversation {} has no messages", conv.id())))?;
    Ok(Enrichment { probabilities, topics, message_scores: scores, message_bins: bins, distribution })
}

impl Snapshot {
    pub fn build(resources: Resources) -> Result<Self, ServiceError> {
        if let Some(model) = &resources.model {
            if let Some(t) = model.classifier.topics.iter().find(|t| resources.hierarchy.get(&t.topic_id).is_none()) {
                return Err(ServiceError::Invalid(format!("model topic {} is not in the hierarchy", t.topic_id)));
            }
        }
        let hierarchy = match &resources.lda {
            Some(lda) => with_discovered(&resources.hierarchy, lda)?,
            None => resources.hierarchy.clone(),
        };
        let mut enrichment = HashMap::with_capacity(resources.corpus.len());
        for conv in resources.corpus.conversations() {
            enrichment.insert(conv.id().to_string(), enrich(conv, &resources, &hierarchy)?);
        }
        let annotations: HashMap<String, ConversationAnnotation> = enrichment
            .iter()
            .map(|(id, e)| {
                let leaves = e.topics.iter().filter(|t| hierarchy.parent_of(t).is_some()).cloned().collect();
                (id.clone(), ConversationAnnotation { topics: leaves, message_bins: e.message_bins.clone() })
            })
            .collect();
        let index = build_index(&resources.corpus, &hierarchy, &annotations)?;
        Ok(Self { resources, hierarchy, enrichment, index })
    }

    pub fn resources(&self) -> &Resources {
        &self.resources
    }

    pub fn corpus(&self) -> &Corpus {
        &self.resources.corpus
    }

    /// The configured hierarchy plus any discovered group.
    pub fn hierarchy(&self) -> &TopicHierarchy {
        &self.hierarchy
    }

    pub fn index(&self) -> &CrossFilterIndex {
        &self.index
    }

    pub fn enrichment(&self, id: &str) -> Option<&Enrichment> {
        self.enrichment.get(id)
    }

    pub fn search(&self, query: &PhraseQuery) -> SearchResult {
        search(query, &self.resources.corpus, &self.resources.embeddings)
    }

    /// The single selection validator shared by every endpoint.
    pub fn resolve(&self, selection: &FilterSelection) -> Result<ResolvedSelection, SelectionError> {
        let query = selection.phrase.as_ref().map(|p| PhraseQuery::new(&p.text, p.tau));
        match query {
            None => self.index.resolve(selection, None),
            Some(Ok(q)) => {
                let hits: BTreeSet<String> = self.search(&q).hits.into_iter().map(|h| h.conversation_id).collect();
                self.index.resolve(selection, Some(&hits))
            }
            // Collect the index's own diagnostics first so every issue is reported.
            Some(Err(e)) => match self.index.resolve(selection, Some(&BTreeSet::new())) {
                Err(issues) => Err(issues),
                Ok(_) => Err(SelectionError::single("phrase.text", e.to_string())),
            },
        }
    }

    /// Rebuilds with a new discovered-topic model.
    pub fn with_lda(&self, lda: Option<LdaModel>) -> Result<Self, ServiceError> {
        Self::build(Resources { lda, ..self.resources.clone() })
    }
}
