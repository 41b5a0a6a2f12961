//! End-to-end compositionality scoring.
//!
//! Scoring a phrase runs in two stages. [`Scorer::prepare`] does everything
//! that does not depend on `alpha`, `lambda` or the KB threshold: window
//! ranking, global and local representations, KB candidate representations
//! and perturbation contexts. [`PreparedInstance::evaluate`] then blends the
//! localized context, applies the KB adjustment and averages perturbation
//! similarities. Grid search reuses one preparation for every cell.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{ContextWindow, Phrase, WindowIndex, DEFAULT_RADIUS};
use crate::error::{CrmError, Result};
use crate::exec::{self, Execution};
use crate::kb::{
    kb_adjusted_context, match_candidates, represent_candidates, Candidate, KnowledgeBase,
    MatchedCandidate, DEFAULT_KB_THRESHOLD,
};
use crate::localization::{
    local_parts, LocalParts, LocalizationConfig, UsageScenario, DEFAULT_M_FLOOR,
    DEFAULT_SHRINK_BASE,
};
use crate::perturbation::{
    generate_perturbations, prune_by_frequency, PerturbedPhrase, SynonymLexicon,
    DEFAULT_TOP_K_PERTURBATIONS,
};
use crate::representation::{
    EmbeddingLexicon, ReprKind, Representer, SemanticRepr, DEFAULT_RANKED_LIST_CAP,
};
use crate::similarity::{score_similarity, SimilarityMeasure};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub m_floor: usize,
    pub shrink_base: usize,
    pub radius: usize,
    pub kb_threshold: f64,
    pub top_k_perturbations: usize,
    pub repr_kind: ReprKind,
    pub measure: SimilarityMeasure,
    pub ranked_list_cap: usize,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            alpha: 0.9,
            lambda: 0.1,
            m_floor: DEFAULT_M_FLOOR,
            shrink_base: DEFAULT_SHRINK_BASE,
            radius: DEFAULT_RADIUS,
            kb_threshold: DEFAULT_KB_THRESHOLD,
            top_k_perturbations: DEFAULT_TOP_K_PERTURBATIONS,
            repr_kind: ReprKind::Embedding,
            measure: SimilarityMeasure::Cosine,
            ranked_list_cap: DEFAULT_RANKED_LIST_CAP,
        }
    }
}

impl ScoringConfig {
    pub fn localization(&self) -> LocalizationConfig {
        LocalizationConfig {
            alpha: self.alpha,
            m_floor: self.m_floor,
            shrink_base: self.shrink_base,
            radius: self.radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.localization().validate()?;
        for (name, v) in [("lambda", self.lambda), ("kb_threshold", self.kb_threshold)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CrmError::InvalidArgument(format!("{name} {v} outside [0,1]")));
            }
        }
        if self.top_k_perturbations == 0 {
            return Err(CrmError::InvalidArgument("top_k_perturbations must be at least 1".into()));
        }
        if self.ranked_list_cap == 0 {
            return Err(CrmError::InvalidArgument("ranked_list_cap must be at least 1".into()));
        }
        Ok(())
    }

    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Content hashes of every input that determines a score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: String,
    pub corpus: String,
    pub kb: String,
    pub synonyms: String,
    pub embeddings: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationScore {
    pub phrase: String,
    pub substituted_index: usize,
    pub source_synonym: String,
    pub frequency: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KbMatchSummary {
    pub id: String,
    pub label: String,
    pub similarity: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub n_windows: usize,
    pub k: usize,
    pub scenario_len: usize,
    pub kb_candidates: usize,
    pub kb_matches: Vec<KbMatchSummary>,
    pub perturbations_generated: usize,
    pub config: ScoringConfig,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionalityResult {
    pub phrase: String,
    pub scenario: String,
    /// Mean clamped similarity between the KB-adjusted phrase context and
    /// each perturbation context. Higher means more compositional.
    pub score: f64,
    pub per_perturbation: Vec<PerturbationScore>,
    pub diagnostics: Diagnostics,
}

/// One line of batch output.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
#[allow(clippy::large_enum_variant)]
pub enum BatchRecord {
    Scored(CompositionalityResult),
    Failed {
        phrase: String,
        scenario: String,
        error: String,
    },
}

impl BatchRecord {
    pub fn new(phrase: &Phrase, scenario: &str, result: &Result<CompositionalityResult>) -> Self {
        match result {
            Ok(r) => BatchRecord::Scored(r.clone()),
            Err(e) => BatchRecord::Failed {
                phrase: phrase.to_string(),
                scenario: scenario.to_string(),
                error: e.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct PreparedPerturbation {
    pub perturbation: PerturbedPhrase,
    pub frequency: usize,
    /// `None` when the perturbation has no windows.
    pub context: Option<SemanticRepr>,
}

/// Everything about one (phrase, scenario) pair that is independent of
/// `alpha`, `lambda` and the KB threshold.
#[derive(Debug, Clone)]
pub struct PreparedInstance {
    pub phrase: Phrase,
    pub scenario: UsageScenario,
    pub parts: LocalParts,
    pub candidates: Vec<Candidate>,
    pub perturbations: Vec<PreparedPerturbation>,
    pub perturbations_generated: usize,
    measure: SimilarityMeasure,
    cap: usize,
}

/// Intermediate values of one evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub localized: SemanticRepr,
    pub adjusted: SemanticRepr,
    pub matches: Vec<MatchedCandidate>,
    pub similarities: Vec<f64>,
    pub score: f64,
}

impl PreparedInstance {
    pub fn evaluate(&self, alpha: f64, lambda: f64, threshold: f64) -> Result<Evaluation> {
        let localized = self.parts.blend(alpha)?;
        let matches = match_candidates(&self.candidates, &localized, threshold, self.measure, self.cap)?;
        let adjusted = kb_adjusted_context(&localized, &matches, lambda)?;
        let similarities = self.perturbation_similarities(&adjusted)?;
        let score = mean(&similarities);
        Ok(Evaluation {
            localized,
            adjusted,
            matches,
            similarities,
            score,
        })
    }

    /// Clamped similarity of `context` to each perturbation; perturbations
    /// without windows score 0.
    pub fn perturbation_similarities(&self, context: &SemanticRepr) -> Result<Vec<f64>> {
        let target = context.capped(self.cap);
        self.perturbations
            .iter()
            .map(|p| match &p.context {
                Some(c) => score_similarity(&target, &c.capped(self.cap), self.measure),
                None => Ok(0.0),
            })
            .collect()
    }

    /// Score of the context-free substitution baseline: the global context
    /// compared against each perturbation, with no scenario and no KB.
    pub fn baseline_score(&self) -> Result<f64> {
        Ok(mean(&self.perturbation_similarities(&self.parts.global)?))
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Read-only scoring inputs.
#[derive(Debug, Clone)]
pub struct Scorer<'a> {
    index: &'a WindowIndex,
    kb: &'a KnowledgeBase,
    synonyms: &'a SynonymLexicon,
    embeddings: Option<&'a EmbeddingLexicon>,
    exec: Execution,
    corpus_hash: String,
    kb_hash: String,
    synonyms_hash: String,
    embeddings_hash: Option<String>,
}

impl<'a> Scorer<'a> {
    pub fn new(
        index: &'a WindowIndex,
        kb: &'a KnowledgeBase,
        synonyms: &'a SynonymLexicon,
        embeddings: Option<&'a EmbeddingLexicon>,
    ) -> Self {
        Scorer {
            index,
            kb,
            synonyms,
            embeddings,
            exec: Execution::default(),
            corpus_hash: index.corpus_hash().to_string(),
            kb_hash: kb.content_hash(),
            synonyms_hash: synonyms.content_hash(),
            embeddings_hash: embeddings.map(EmbeddingLexicon::content_hash),
        }
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    pub fn index(&self) -> &WindowIndex {
        self.index
    }

    pub fn representer(&self, kind: ReprKind) -> Result<Representer<'a>> {
        match kind {
            ReprKind::RankedList => Ok(Representer::Ranked {
                doc_freq: self.index.doc_freq_table(),
                total_windows: self.index.total_windows(),
            }),
            ReprKind::Embedding => self
                .embeddings
                .map(|lexicon| Representer::Embedding { lexicon })
                .ok_or(CrmError::MissingLexicon),
        }
    }

    pub fn provenance(&self, config: &ScoringConfig) -> Provenance {
        Provenance {
            config: config.content_hash(),
            corpus: self.corpus_hash.clone(),
            kb: self.kb_hash.clone(),
            synonyms: self.synonyms_hash.clone(),
            embeddings: self.embeddings_hash.clone(),
        }
    }

    /// The frequency-pruned perturbation set of `phrase`, most frequent first.
    pub fn perturbations(&self, phrase: &Phrase, top_k: usize) -> Result<(usize, Vec<PerturbedPhrase>)> {
        let all = generate_perturbations(phrase, self.synonyms)?;
        let pruned = prune_by_frequency(&all, |p| self.index.frequency(p), top_k);
        Ok((all.len(), pruned))
    }

    /// Context of a perturbation: all of its windows, no scenario, no KB.
    fn perturbation_context(&self, windows: &[ContextWindow], representer: &Representer<'_>) -> Result<Option<SemanticRepr>> {
        if windows.is_empty() {
            return Ok(None);
        }
        let all: Vec<&ContextWindow> = windows.iter().collect();
        match representer.windows(&all) {
            Ok(r) => Ok(Some(r)),
            Err(CrmError::NoEmbeddableTokens) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn prepare(&self, phrase: &Phrase, scenario_text: &str, config: &ScoringConfig) -> Result<PreparedInstance> {
        config.validate()?;
        let windows = self.index.windows(phrase);
        if windows.is_empty() {
            return Err(CrmError::PhraseUnseen(phrase.to_string()));
        }
        let (generated, pruned) = self.perturbations(phrase, config.top_k_perturbations)?;
        let representer = self.representer(config.repr_kind)?;
        let scenario = UsageScenario::new(scenario_text, phrase);
        let parts = local_parts(
            windows,
            &scenario,
            &config.localization(),
            &representer,
            config.measure,
            config.ranked_list_cap,
            self.exec,
        )?;
        let candidates = represent_candidates(&self.kb.gather_candidates(phrase), &representer)?;
        let perturbations = pruned
            .into_iter()
            .map(|p| {
                let w = self.index.windows(&p.words);
                Ok(PreparedPerturbation {
                    frequency: w.len(),
                    context: self.perturbation_context(w, &representer)?,
                    perturbation: p,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedInstance {
            phrase: phrase.clone(),
            scenario,
            parts,
            candidates,
            perturbations,
            perturbations_generated: generated,
            measure: config.measure,
            cap: config.ranked_list_cap,
        })
    }

    pub fn result(&self, prepared: &PreparedInstance, eval: &Evaluation, config: &ScoringConfig) -> CompositionalityResult {
        CompositionalityResult {
            phrase: prepared.phrase.to_string(),
            scenario: prepared.scenario.raw_text.clone(),
            score: eval.score,
            per_perturbation: prepared
                .perturbations
                .iter()
                .zip(&eval.similarities)
                .map(|(p, s)| PerturbationScore {
                    phrase: p.perturbation.words.to_string(),
                    substituted_index: p.perturbation.substituted_index,
                    source_synonym: p.perturbation.source_synonym.clone(),
                    frequency: p.frequency,
                    similarity: *s,
                })
                .collect(),
            diagnostics: Diagnostics {
                n_windows: prepared.parts.n,
                k: prepared.parts.k,
                scenario_len: prepared.scenario.len(),
                kb_candidates: prepared.candidates.len(),
                kb_matches: eval
                    .matches
                    .iter()
                    .map(|m| KbMatchSummary {
                        id: m.entry.id.clone(),
                        label: m.entry.label.clone(),
                        similarity: m.similarity,
                        weight: m.weight,
                    })
                    .collect(),
                perturbations_generated: prepared.perturbations_generated,
                config: *config,
                provenance: self.provenance(config),
            },
        }
    }

    pub fn score_phrase(&self, phrase: &Phrase, scenario_text: &str, config: &ScoringConfig) -> Result<CompositionalityResult> {
        let prepared = self.prepare(phrase, scenario_text, config)?;
        let eval = prepared.evaluate(config.alpha, config.lambda, config.kb_threshold)?;
        Ok(self.result(&prepared, &eval, config))
    }

    /// Substitution baseline: global context against perturbation contexts.
    pub fn baseline_score(&self, phrase: &Phrase, config: &ScoringConfig) -> Result<f64> {
        self.prepare(phrase, "", config)?.baseline_score()
    }

    /// Scores every instance; failures are kept inline and never abort the batch.
    pub fn score_batch(&self, instances: &[(Phrase, String)], config: &ScoringConfig) -> Vec<Result<CompositionalityResult>> {
        exec::map(self.exec, instances, |(p, s)| self.score_phrase(p, s, config))
    }

    pub fn prepare_batch(&self, instances: &[(Phrase, String)], config: &ScoringConfig) -> Vec<Result<PreparedInstance>> {
        exec::map(self.exec, instances, |(p, s)| self.prepare(p, s, config))
    }
}
