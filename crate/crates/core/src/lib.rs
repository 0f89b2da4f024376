//! Enrichment and analytics for corpora of patient-provider text conversations.
//!
//! The pipeline ingests conversations ([`corpus`]), scores message sentiment
//! ([`sentiment`]), assigns pre-defined topics with one-vs-rest logistic
//! regression ([`topics`]), discovers topics with LDA ([`lda`]), matches
//! user phrases through word embeddings ([`phrase`]), and answers
//! cross-filtered selections over all of it ([`analytics`]).

pub mod analytics;
pub mod corpus;
pub mod lda;
pub mod phrase;
pub mod sentiment;
pub mod text;
pub mod topics;
