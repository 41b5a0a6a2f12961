//! Contextual compositionality detection for multi-word phrases.
//!
//! A phrase is scored under a usage scenario by comparing its context,
//! localized to the scenario and enriched with knowledge-base entries,
//! against the contexts of its single-word synonym substitutions. High
//! similarity means the phrase behaves compositionally in that scenario.
//!
//! The pipeline, bottom up:
//!
//! - [`corpus`]: tokenization, phrase occurrences, context windows and the
//!   persisted [`WindowIndex`].
//! - [`representation`]: TF-IDF ranked lists, averaged embeddings and their
//!   linear combination.
//! - [`similarity`]: cosine and Pearson over vectors and representations.
//! - [`localization`]: top-K window selection and the global/local blend.
//! - [`kb`]: knowledge-base snapshot, candidate matching and KB adjustment.
//! - [`perturbation`]: synonym substitutions and frequency pruning.
//! - [`scoring`]: the end-to-end score and batch scoring.
//! - [`evaluation`]: graded datasets, correlation and grid search.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default); see [`exec`].

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod kb;
pub mod localization;
pub mod perturbation;
pub mod representation;
pub mod scoring;
pub mod similarity;
pub mod synthetic;

pub use corpus::{tokenize, ContextWindow, Corpus, Document, Phrase, WindowIndex};
pub use error::{CrmError, Result};
pub use evaluation::{correlate, CorrelationMethod, Dataset, Grade, GridResult, LabeledInstance};
pub use exec::Execution;
pub use kb::{KbEntry, KnowledgeBase};
pub use localization::{compute_k, LocalizationConfig, UsageScenario};
pub use perturbation::{PerturbedPhrase, SynonymLexicon};
pub use representation::{EmbeddingLexicon, RankedList, ReprKind, SemanticRepr};
pub use scoring::{CompositionalityResult, Scorer, ScoringConfig};
pub use similarity::SimilarityMeasure;
